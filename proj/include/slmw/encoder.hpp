#ifndef SLMW_ENCODER_HPP
#define SLMW_ENCODER_HPP

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "slmw/numeric.hpp"
#include "slmw/tokenizer.hpp"

namespace slmw::encoder {

using numeric::Index;
using numeric::Matrix;
using numeric::Tensor;

inline constexpr int kSegmentVocabSize = 2;
inline constexpr double kInitStddev = 0.02;
inline constexpr double kLayerNormEps = 1e-12;

struct EncoderConfig {
  int n_layers = 2;
  int hidden_size = 64;
  int n_heads = 4;
  int ff_size = 256;
  int vocab_size = 0;
  int max_positions = 512;
  double dropout = 0.1;
  /// MLM output projection shares the token embedding table.
  bool tie_mlm_head = true;

  void validate() const;
  int head_size() const { return hidden_size / n_heads; }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

nlohmann::ordered_json to_json(const EncoderConfig& config);
EncoderConfig config_from_json(const nlohmann::json& j);

/// Named tensors with unique names, iterated in name order.
class ModelParameters {
 public:
  using Map = std::map<std::string, Tensor>;

  void add(const std::string& name, Tensor tensor);
  bool contains(const std::string& name) const { return tensors_.contains(name); }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  void erase(const std::string& name) { tensors_.erase(name); }

  std::size_t size() const noexcept { return tensors_.size(); }
  /// Total number of scalar entries.
  std::size_t scalar_count() const;

  Map::iterator begin() { return tensors_.begin(); }
  Map::iterator end() { return tensors_.end(); }
  Map::const_iterator begin() const { return tensors_.begin(); }
  Map::const_iterator end() const { return tensors_.end(); }

  /// Deep copy; tensors in the copy share nothing with this set.
  ModelParameters clone() const;
  void zero_grad();

  /// Same names and bit-identical values.
  friend bool operator==(const ModelParameters& a, const ModelParameters& b);

 private:
  Map tensors_;
};

struct ParameterShape {
  std::string name;
  Index rows;
  Index cols;
};

/// Every encoder tensor, in initialization order, as determined by the config.
std::vector<ParameterShape> parameter_shapes(const EncoderConfig& config);

/// Truncated normal (stddev 0.02, cut at 2 stddev) weights, zero biases,
/// unit layer-norm gains. Deterministic per seed.
ModelParameters init_parameters(const EncoderConfig& config, std::uint64_t seed);

struct EncoderModel {
  EncoderConfig config;
  ModelParameters params;
};

struct ForwardOptions {
  /// Enables dropout; requires rng when config.dropout > 0.
  bool training = false;
  std::mt19937_64* rng = nullptr;
};

/// Hidden states of a batch packed row-wise: sequence b occupies rows
/// [offsets[b], offsets[b] + lengths[b]).
struct HiddenStates {
  Tensor packed;
  std::vector<Index> offsets;
  std::vector<Index> lengths;

  std::size_t batch_size() const { return offsets.size(); }
  Index row(std::size_t sequence, Index position) const { return offsets[sequence] + position; }
  /// (positions x hidden) view of one sequence.
  Tensor sequence(std::size_t b) const;
};

/// Post-layer-norm transformer encoder over token + position + segment
/// embeddings. Keys with attention_mask 0 receive no attention weight.
HiddenStates forward(const EncoderModel& model, std::span<const tokenizer::EncodedSequence> batch,
                     const ForwardOptions& options = {});

/// Vocabulary scores for each row of `hidden` (any subset of packed rows).
Tensor mlm_logits(const EncoderModel& model, const Tensor& hidden);
Tensor mlm_logits(const EncoderModel& model, const HiddenStates& hidden);

/// tanh(W h_cls + b) per sequence: (batch x hidden).
Tensor pooled(const EncoderModel& model, const HiddenStates& hidden);

}  // namespace slmw::encoder

#endif  // SLMW_ENCODER_HPP
