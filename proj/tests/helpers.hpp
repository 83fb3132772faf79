#ifndef SLMW_TEST_HELPERS_HPP
#define SLMW_TEST_HELPERS_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "slmw/checkpoint.hpp"
#include "slmw/encoder.hpp"
#include "slmw/error.hpp"
#include "slmw/numeric.hpp"
#include "slmw/tokenizer.hpp"

namespace slmw::testing {

using numeric::Matrix;
using numeric::Tensor;

inline Tensor random_tensor(numeric::Index rows, numeric::Index cols, std::mt19937_64& rng,
                            double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (numeric::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  Tensor t(m);
  t.set_requires_grad(true);
  return t;
}

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

/// Central differences of `loss` with respect to every entry of `inputs`,
/// compared with the analytic gradients; error is |a - n| / max(1, |a|, |n|).
inline GradientCheck check_gradients(std::vector<Tensor> inputs,
                                     const std::function<Tensor()>& loss, double step = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  numeric::backward(loss());
  GradientCheck out;
  for (auto& t : inputs) {
    const Matrix analytic = t.grad();
    for (numeric::Index i = 0; i < t.value().size(); ++i) {
      double& x = t.mutable_value().data()[i];
      const double saved = x;
      x = saved + step;
      const double up = loss().item();
      x = saved - step;
      const double down = loss().item();
      x = saved;
      const double numeric_grad = (up - down) / (2.0 * step);
      const double a = analytic.data()[i];
      const double err = std::abs(a - numeric_grad) /
                         std::max({1.0, std::abs(a), std::abs(numeric_grad)});
      out.max_relative_error = std::max(out.max_relative_error, err);
      ++out.checked;
    }
  }
  return out;
}

/// Vocabulary of specials, single letters (both forms) and the given words.
inline tokenizer::SubwordVocabulary letter_vocab(const std::vector<std::string>& words) {
  std::vector<std::string> tokens = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  for (char c = 'a'; c <= 'z'; ++c) {
    tokens.emplace_back(1, c);
    tokens.push_back(std::string("##") + c);
  }
  for (const auto& w : words) tokens.push_back(w);
  return tokenizer::SubwordVocabulary::from_tokens(tokens);
}

inline encoder::Checkpoint tiny_checkpoint(const tokenizer::SubwordVocabulary& vocab, int hidden = 16,
                                           int layers = 1, int heads = 2, std::uint64_t seed = 7,
                                           double dropout = 0.0) {
  encoder::Checkpoint ckpt;
  ckpt.config.n_layers = layers;
  ckpt.config.hidden_size = hidden;
  ckpt.config.n_heads = heads;
  ckpt.config.ff_size = 2 * hidden;
  ckpt.config.vocab_size = static_cast<int>(vocab.size());
  ckpt.config.max_positions = 48;
  ckpt.config.dropout = dropout;
  ckpt.parameters = encoder::init_parameters(ckpt.config, seed);
  ckpt.vocab = vocab;
  return ckpt;
}

/// Code of the slmw::Error thrown by `f`, or nullopt when it returns.
inline std::optional<ErrorCode> error_code(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("slmw_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace slmw::testing

#endif  // SLMW_TEST_HELPERS_HPP
