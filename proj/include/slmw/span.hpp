#ifndef SLMW_SPAN_HPP
#define SLMW_SPAN_HPP

#include <compare>
#include <cstddef>
#include <string>

namespace slmw {

/// Entity mention over word positions [start, end).
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string entity_type;

  std::size_t width() const noexcept { return end - start; }

  friend auto operator<=>(const Span&, const Span&) = default;
};

}  // namespace slmw

#endif  // SLMW_SPAN_HPP
