#ifndef SLMW_UTF8_HPP
#define SLMW_UTF8_HPP

#include <string>
#include <string_view>
#include <vector>

namespace slmw::utf8 {

/// Decodes UTF-8 into code points. Malformed bytes decode to U+FFFD.
std::u32string decode(std::string_view text);
std::string encode(std::u32string_view code_points);
void append(std::string& out, char32_t cp);

/// Splits into one string per code point (each a valid UTF-8 sequence).
std::vector<std::string> characters(std::string_view text);
std::size_t length(std::string_view text);

bool is_whitespace(char32_t cp);
bool is_control(char32_t cp);  // Unicode general category Cc

/// Splits on runs of Unicode whitespace, dropping empty pieces.
std::vector<std::string> split_whitespace(std::string_view text);

}  // namespace slmw::utf8

#endif  // SLMW_UTF8_HPP
