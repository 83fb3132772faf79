#include "slmw/encoder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "slmw/error.hpp"

namespace slmw::encoder {

namespace {

std::string layer_prefix(int layer) { return "layers." + std::to_string(layer) + "."; }

Tensor linear(const Tensor& x, const ModelParameters& p, const std::string& name) {
  return numeric::add_row(numeric::matmul(x, p.at(name + ".weight")), p.at(name + ".bias"));
}

Tensor norm(const Tensor& x, const ModelParameters& p, const std::string& name) {
  return numeric::layer_norm(x, p.at(name + ".gain"), p.at(name + ".bias"), kLayerNormEps);
}

Tensor maybe_dropout(const Tensor& x, const EncoderConfig& config, const ForwardOptions& options) {
  if (!options.training || config.dropout == 0.0) return x;
  if (options.rng == nullptr) {
    throw Error(ErrorCode::kInvalidArgument, "training forward with dropout needs an rng");
  }
  return numeric::dropout(x, config.dropout, *options.rng);
}

}  // namespace

void EncoderConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kConfig, "encoder config: " + what); };
  if (n_layers < 1) fail("n_layers must be >= 1");
  if (hidden_size < 1 || n_heads < 1 || ff_size < 1) fail("sizes must be positive");
  if (hidden_size % n_heads != 0) fail("hidden_size must be divisible by n_heads");
  if (vocab_size < tokenizer::kNumSpecialTokens) fail("vocab_size must cover the special tokens");
  if (max_positions < 3) fail("max_positions must be >= 3");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0,1)");
}

nlohmann::ordered_json to_json(const EncoderConfig& c) {
  return {{"n_layers", c.n_layers},     {"hidden_size", c.hidden_size},
          {"n_heads", c.n_heads},       {"ff_size", c.ff_size},
          {"vocab_size", c.vocab_size}, {"max_positions", c.max_positions},
          {"dropout", c.dropout},       {"tie_mlm_head", c.tie_mlm_head}};
}

EncoderConfig config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  try {
    c.n_layers = j.at("n_layers").get<int>();
    c.hidden_size = j.at("hidden_size").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.ff_size = j.at("ff_size").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_positions = j.at("max_positions").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.tie_mlm_head = j.at("tie_mlm_head").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("encoder config: ") + e.what());
  }
  c.validate();
  return c;
}

void ModelParameters::add(const std::string& name, Tensor tensor) {
  if (!tensors_.emplace(name, std::move(tensor)).second) {
    throw Error(ErrorCode::kInvalidArgument, "duplicate parameter name '" + name + "'");
  }
}

Tensor& ModelParameters::at(const std::string& name) {
  const auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error(ErrorCode::kInvalidArgument, "no parameter named '" + name + "'");
  return it->second;
}

const Tensor& ModelParameters::at(const std::string& name) const {
  const auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error(ErrorCode::kInvalidArgument, "no parameter named '" + name + "'");
  return it->second;
}

std::size_t ModelParameters::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += static_cast<std::size_t>(t.size());
  return n;
}

ModelParameters ModelParameters::clone() const {
  ModelParameters copy;
  for (const auto& [name, t] : tensors_) copy.tensors_.emplace(name, t.clone());
  return copy;
}

void ModelParameters::zero_grad() {
  for (auto& [name, t] : tensors_) t.zero_grad();
}

bool operator==(const ModelParameters& a, const ModelParameters& b) {
  if (a.size() != b.size()) return false;
  auto ia = a.begin();
  auto ib = b.begin();
  for (; ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first) return false;
    const auto& va = ia->second.value();
    const auto& vb = ib->second.value();
    if (va.rows() != vb.rows() || va.cols() != vb.cols()) return false;
    if (!std::equal(va.data(), va.data() + va.size(), vb.data(),
                    [](double x, double y) { return std::bit_cast<std::uint64_t>(x) ==
                                                    std::bit_cast<std::uint64_t>(y); })) {
      return false;
    }
  }
  return true;
}

std::vector<ParameterShape> parameter_shapes(const EncoderConfig& c) {
  c.validate();
  const Index h = c.hidden_size;
  const Index f = c.ff_size;
  const Index v = c.vocab_size;
  std::vector<ParameterShape> shapes = {
      {"embeddings.word", v, h},
      {"embeddings.position", c.max_positions, h},
      {"embeddings.segment", kSegmentVocabSize, h},
      {"embeddings.norm.gain", 1, h},
      {"embeddings.norm.bias", 1, h},
  };
  for (int l = 0; l < c.n_layers; ++l) {
    const std::string p = layer_prefix(l);
    for (const char* proj : {"query", "key", "value", "output"}) {
      shapes.push_back({p + "attention." + proj + ".weight", h, h});
      shapes.push_back({p + "attention." + proj + ".bias", 1, h});
    }
    shapes.push_back({p + "attention.norm.gain", 1, h});
    shapes.push_back({p + "attention.norm.bias", 1, h});
    shapes.push_back({p + "ffn.in.weight", h, f});
    shapes.push_back({p + "ffn.in.bias", 1, f});
    shapes.push_back({p + "ffn.out.weight", f, h});
    shapes.push_back({p + "ffn.out.bias", 1, h});
    shapes.push_back({p + "ffn.norm.gain", 1, h});
    shapes.push_back({p + "ffn.norm.bias", 1, h});
  }
  shapes.push_back({"mlm.transform.weight", h, h});
  shapes.push_back({"mlm.transform.bias", 1, h});
  shapes.push_back({"mlm.norm.gain", 1, h});
  shapes.push_back({"mlm.norm.bias", 1, h});
  if (!c.tie_mlm_head) shapes.push_back({"mlm.output.weight", h, v});
  shapes.push_back({"mlm.output.bias", 1, v});
  shapes.push_back({"pooler.weight", h, h});
  shapes.push_back({"pooler.bias", 1, h});
  return shapes;
}

ModelParameters init_parameters(const EncoderConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, kInitStddev);
  auto truncated = [&] {
    while (true) {
      const double x = normal(rng);
      if (std::abs(x) <= 2.0 * kInitStddev) return x;
    }
  };

  ModelParameters params;
  for (const auto& shape : parameter_shapes(config)) {
    Matrix value;
    if (shape.name.ends_with(".gain")) {
      value = Matrix::Ones(shape.rows, shape.cols);
    } else if (shape.name.ends_with(".bias")) {
      value = Matrix::Zero(shape.rows, shape.cols);
    } else {
      value.resize(shape.rows, shape.cols);
      for (Index i = 0; i < value.size(); ++i) value.data()[i] = truncated();
    }
    params.add(shape.name, Tensor(std::move(value), true));
  }
  return params;
}

Tensor HiddenStates::sequence(std::size_t b) const {
  return numeric::block(packed, offsets.at(b), 0, lengths.at(b), packed.cols());
}

HiddenStates forward(const EncoderModel& model, std::span<const tokenizer::EncodedSequence> batch,
                     const ForwardOptions& options) {
  const auto& config = model.config;
  const auto& p = model.params;
  if (batch.empty()) throw Error(ErrorCode::kEmptyInput, "forward: empty batch");

  HiddenStates out;
  std::vector<int> ids;
  std::vector<int> positions;
  std::vector<int> segments;
  std::vector<numeric::RowVector> key_masks;
  Index offset = 0;
  for (const auto& seq : batch) {
    const auto len = static_cast<Index>(seq.ids.size());
    if (len == 0) throw Error(ErrorCode::kInvalidArgument, "forward: empty sequence");
    if (len > config.max_positions) {
      throw Error(ErrorCode::kOutOfRange, "forward: sequence length " + std::to_string(len) +
                                              " exceeds max_positions " +
                                              std::to_string(config.max_positions));
    }
    if (seq.attention_mask.size() != seq.ids.size() || seq.segment_ids.size() != seq.ids.size()) {
      throw Error(ErrorCode::kLengthMismatch, "forward: ids/mask/segment lengths differ");
    }
    numeric::RowVector mask(len);
    for (Index i = 0; i < len; ++i) {
      const auto u = static_cast<std::size_t>(i);
      if (seq.ids[u] < 0 || seq.ids[u] >= config.vocab_size) {
        throw Error(ErrorCode::kOutOfRange, "forward: token id " + std::to_string(seq.ids[u]) +
                                                " outside vocabulary of " +
                                                std::to_string(config.vocab_size));
      }
      if (seq.segment_ids[u] < 0 || seq.segment_ids[u] >= kSegmentVocabSize) {
        throw Error(ErrorCode::kOutOfRange, "forward: segment id out of range");
      }
      ids.push_back(seq.ids[u]);
      positions.push_back(static_cast<int>(i));
      segments.push_back(seq.segment_ids[u]);
      mask(i) = seq.attention_mask[u] != 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    }
    key_masks.push_back(std::move(mask));
    out.offsets.push_back(offset);
    out.lengths.push_back(len);
    offset += len;
  }

  Tensor x = numeric::gather_rows(p.at("embeddings.word"), ids) +
             numeric::gather_rows(p.at("embeddings.position"), positions) +
             numeric::gather_rows(p.at("embeddings.segment"), segments);
  x = maybe_dropout(norm(x, p, "embeddings.norm"), config, options);

  const Index head = config.head_size();
  const double inv_sqrt_head = 1.0 / std::sqrt(static_cast<double>(head));
  for (int l = 0; l < config.n_layers; ++l) {
    const std::string prefix = layer_prefix(l);
    const Tensor q = linear(x, p, prefix + "attention.query");
    const Tensor k = linear(x, p, prefix + "attention.key");
    const Tensor v = linear(x, p, prefix + "attention.value");

    std::vector<Tensor> per_sequence;
    per_sequence.reserve(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const Index start = out.offsets[b];
      const Index len = out.lengths[b];
      std::vector<Tensor> heads;
      heads.reserve(static_cast<std::size_t>(config.n_heads));
      for (int h = 0; h < config.n_heads; ++h) {
        const Index col = h * head;
        const Tensor qh = numeric::block(q, start, col, len, head);
        const Tensor kh = numeric::block(k, start, col, len, head);
        const Tensor vh = numeric::block(v, start, col, len, head);
        Tensor scores = numeric::scale(numeric::matmul_transposed(qh, kh), inv_sqrt_head);
        scores = numeric::add_constant_row(scores, key_masks[b]);
        const Tensor weights = maybe_dropout(numeric::softmax(scores, 1), config, options);
        heads.push_back(numeric::matmul(weights, vh));
      }
      per_sequence.push_back(numeric::concat_cols<double>(heads));
    }
    const Tensor context = numeric::concat_rows<double>(per_sequence);
    const Tensor attended =
        maybe_dropout(linear(context, p, prefix + "attention.output"), config, options);
    x = norm(x + attended, p, prefix + "attention.norm");

    const Tensor inner = numeric::gelu(linear(x, p, prefix + "ffn.in"));
    const Tensor ffn = maybe_dropout(linear(inner, p, prefix + "ffn.out"), config, options);
    x = norm(x + ffn, p, prefix + "ffn.norm");
  }
  out.packed = x;
  return out;
}

Tensor mlm_logits(const EncoderModel& model, const Tensor& hidden) {
  const auto& p = model.params;
  Tensor t = numeric::gelu(linear(hidden, p, "mlm.transform"));
  t = norm(t, p, "mlm.norm");
  Tensor logits = model.config.tie_mlm_head
                      ? numeric::matmul_transposed(t, p.at("embeddings.word"))
                      : numeric::matmul(t, p.at("mlm.output.weight"));
  return numeric::add_row(logits, p.at("mlm.output.bias"));
}

Tensor mlm_logits(const EncoderModel& model, const HiddenStates& hidden) {
  return mlm_logits(model, hidden.packed);
}

Tensor pooled(const EncoderModel& model, const HiddenStates& hidden) {
  std::vector<int> first_rows;
  for (Index offset : hidden.offsets) first_rows.push_back(static_cast<int>(offset));
  const Tensor cls = numeric::gather_rows(hidden.packed, first_rows);
  return numeric::tanh(linear(cls, model.params, "pooler"));
}

}  // namespace slmw::encoder
