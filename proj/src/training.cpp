#include "slmw/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "slmw/error.hpp"
#include "slmw/utf8.hpp"

namespace slmw::training {

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

[[noreturn]] void config_error(const std::string& key, const std::string& value,
                               const std::string& expected) {
  throw Error(ErrorCode::kConfig,
              "config key '" + key + "': '" + value + "' is not " + expected);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (res.ec != std::errc() || res.ptr != end) {
    config_error(key, text, std::is_integral_v<T> ? "an integer" : "a number");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "True" || text == "1") return true;
  if (text == "false" || text == "False" || text == "0") return false;
  config_error(key, text, "a boolean");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

TrainConfig TrainConfig::pretraining() { return TrainConfig{}; }

TrainConfig TrainConfig::finetuning() {
  TrainConfig c;
  c.train_batch_size = 32;
  c.eval_batch_size = 128;
  c.gradient_accumulation_steps = 4;
  c.adam_epsilon = 1e-6;
  c.num_train_epochs = 3;
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kConfig, what); };
  if (max_seq_length < 3) fail("max_seq_length must be >= 3");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be > 0");
  if (train_batch_size < 1 || eval_batch_size < 1) fail("batch sizes must be >= 1");
  if (num_train_epochs < 0) fail("num_train_epochs must be >= 0");
  if (gradient_accumulation_steps < 1) fail("gradient_accumulation_steps must be >= 1");
  if (warmup_steps && *warmup_steps < 0) fail("warmup_steps must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    fail("adam betas must be in [0,1)");
  }
  if (!(adam_epsilon > 0.0)) fail("adam_epsilon must be > 0");
  if (!(mask_rate > 0.0 && mask_rate < 1.0)) fail("mask_rate must be in (0,1)");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (!(max_grad_norm >= 0.0)) fail("max_grad_norm must be >= 0");
}

std::int64_t TrainConfig::resolved_warmup(std::int64_t total_steps) const {
  if (warmup_steps) return *warmup_steps;
  const auto automatic =
      static_cast<std::int64_t>(std::ceil(kDefaultWarmupRatio * static_cast<double>(total_steps)));
  return std::max<std::int64_t>(0, std::min(automatic, total_steps - 1));
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> kKeys = {
      "max_seq_length", "learning_rate",   "train_batch_size", "eval_batch_size",
      "num_train_epochs", "gradient_accumulation_steps", "warmup_steps", "adam_beta1",
      "adam_beta2",     "adam_epsilon",    "mask_rate",        "seed",
      "line_by_line",   "weight_decay",    "max_grad_norm"};
  return kKeys;
}

std::vector<std::pair<std::string, std::string>> to_key_values(const TrainConfig& c) {
  return {
      {"max_seq_length", std::to_string(c.max_seq_length)},
      {"learning_rate", format_double(c.learning_rate)},
      {"train_batch_size", std::to_string(c.train_batch_size)},
      {"eval_batch_size", std::to_string(c.eval_batch_size)},
      {"num_train_epochs", std::to_string(c.num_train_epochs)},
      {"gradient_accumulation_steps", std::to_string(c.gradient_accumulation_steps)},
      {"warmup_steps", c.warmup_steps ? std::to_string(*c.warmup_steps) : "auto"},
      {"adam_beta1", format_double(c.adam_beta1)},
      {"adam_beta2", format_double(c.adam_beta2)},
      {"adam_epsilon", format_double(c.adam_epsilon)},
      {"mask_rate", format_double(c.mask_rate)},
      {"seed", std::to_string(c.seed)},
      {"line_by_line", c.line_by_line ? "true" : "false"},
      {"weight_decay", format_double(c.weight_decay)},
      {"max_grad_norm", format_double(c.max_grad_norm)},
  };
}

void set_config_value(TrainConfig& c, const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "max_seq_length") {
    c.max_seq_length = parse_number<int>(key, value);
  } else if (key == "learning_rate") {
    c.learning_rate = parse_number<double>(key, value);
  } else if (key == "train_batch_size") {
    c.train_batch_size = parse_number<int>(key, value);
  } else if (key == "eval_batch_size") {
    c.eval_batch_size = parse_number<int>(key, value);
  } else if (key == "num_train_epochs") {
    c.num_train_epochs = parse_number<int>(key, value);
  } else if (key == "gradient_accumulation_steps") {
    c.gradient_accumulation_steps = parse_number<int>(key, value);
  } else if (key == "warmup_steps") {
    if (value == "auto") {
      c.warmup_steps.reset();
    } else {
      c.warmup_steps = parse_number<std::int64_t>(key, value);
    }
  } else if (key == "adam_beta1") {
    c.adam_beta1 = parse_number<double>(key, value);
  } else if (key == "adam_beta2") {
    c.adam_beta2 = parse_number<double>(key, value);
  } else if (key == "adam_epsilon") {
    c.adam_epsilon = parse_number<double>(key, value);
  } else if (key == "mask_rate") {
    c.mask_rate = parse_number<double>(key, value);
  } else if (key == "seed") {
    c.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "line_by_line") {
    c.line_by_line = parse_bool(key, value);
  } else if (key == "weight_decay") {
    c.weight_decay = parse_number<double>(key, value);
  } else if (key == "max_grad_norm") {
    c.max_grad_norm = parse_number<double>(key, value);
  } else {
    throw Error(ErrorCode::kConfig, "unknown config key '" + key + "'");
  }
}

TrainConfig parse_config(std::istream& in, TrainConfig base) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kConfig,
                  "config line " + std::to_string(line_no) + ": expected key=value");
    }
    set_config_value(base, trim(text.substr(0, eq)), text.substr(eq + 1));
  }
  base.validate();
  return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot open config " + path.string());
  return parse_config(in, std::move(base));
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  auto splitmix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return splitmix(splitmix(splitmix(seed) ^ a) ^ b);
}

std::size_t MaskedBatch::selected_count() const {
  std::size_t n = 0;
  for (const auto& row : labels) {
    n += static_cast<std::size_t>(
        std::count_if(row.begin(), row.end(), [](int l) { return l != tokenizer::kIgnoreLabel; }));
  }
  return n;
}

MaskedBatch mask_tokens(std::span<const tokenizer::EncodedSequence> batch,
                        const MaskingOptions& options, std::uint64_t seed, int vocab_size) {
  if (!(options.mask_rate >= 0.0 && options.mask_rate <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "mask_rate must be in [0,1]");
  }
  if (options.mask_token_share < 0.0 || options.random_token_share < 0.0 ||
      options.mask_token_share + options.random_token_share > 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "mask/random replacement shares must sum to <= 1");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool can_randomize = vocab_size > tokenizer::kNumSpecialTokens;
  std::uniform_int_distribution<int> random_token(tokenizer::kNumSpecialTokens,
                                                  std::max(tokenizer::kNumSpecialTokens, vocab_size - 1));

  MaskedBatch out;
  out.inputs.assign(batch.begin(), batch.end());
  out.labels.reserve(batch.size());
  for (auto& seq : out.inputs) {
    std::vector<int> labels(seq.size(), tokenizer::kIgnoreLabel);
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (seq.attention_mask[i] == 0 || tokenizer::SubwordVocabulary::is_special(seq.ids[i])) {
        continue;
      }
      if (!(unit(rng) < options.mask_rate)) continue;
      labels[i] = seq.ids[i];
      const double r = unit(rng);
      if (r < options.mask_token_share) {
        seq.ids[i] = tokenizer::kMaskId;
      } else if (r < options.mask_token_share + options.random_token_share && can_randomize) {
        seq.ids[i] = random_token(rng);
      }
    }
    out.labels.push_back(std::move(labels));
  }
  return out;
}

double lr_at_step(const TrainConfig& config, std::int64_t step, std::int64_t total_steps) {
  if (total_steps <= 0 || step < 0 || step > total_steps) {
    throw Error(ErrorCode::kOutOfRange, "lr_at_step: step " + std::to_string(step) +
                                            " outside [0, " + std::to_string(total_steps) + "]");
  }
  const std::int64_t warmup = config.resolved_warmup(total_steps);
  if (warmup >= total_steps) {
    throw Error(ErrorCode::kConfig, "warmup_steps " + std::to_string(warmup) +
                                        " must be below the total step count " +
                                        std::to_string(total_steps));
  }
  if (step < warmup) {
    return config.learning_rate * static_cast<double>(step) / static_cast<double>(warmup);
  }
  return config.learning_rate * static_cast<double>(total_steps - step) /
         static_cast<double>(total_steps - warmup);
}

OptimizerState make_optimizer_state(const encoder::ModelParameters& params,
                                    std::int64_t total_updates) {
  OptimizerState state;
  state.total_updates = total_updates;
  for (const auto& [name, t] : params) {
    state.first_moment.emplace(name, Matrix::Zero(t.rows(), t.cols()));
    state.second_moment.emplace(name, Matrix::Zero(t.rows(), t.cols()));
  }
  return state;
}

double apply_update(encoder::ModelParameters& params, OptimizerState& state,
                    const TrainConfig& config) {
  if (state.pending_micro_batches == 0) return 0.0;
  const std::int64_t horizon = std::max<std::int64_t>(state.total_updates, state.updates + 1);
  const double lr = lr_at_step(config, std::min(state.updates, horizon - 1), horizon);

  const double rescale = static_cast<double>(config.gradient_accumulation_steps) /
                         static_cast<double>(state.pending_micro_batches);
  double clip = 1.0;
  if (config.max_grad_norm > 0.0) {
    double sq = 0.0;
    for (const auto& [name, t] : params) {
      if (t.has_grad()) sq += (t.grad() * rescale).squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (norm > config.max_grad_norm) clip = config.max_grad_norm / norm;
  }

  const auto t = static_cast<double>(state.updates + 1);
  const double bias1 = 1.0 - std::pow(config.adam_beta1, t);
  const double bias2 = 1.0 - std::pow(config.adam_beta2, t);
  for (auto& [name, tensor] : params) {
    if (!tensor.has_grad()) continue;
    const Matrix g = tensor.grad() * (rescale * clip);
    auto& m = state.first_moment.at(name);
    auto& v = state.second_moment.at(name);
    m = config.adam_beta1 * m + (1.0 - config.adam_beta1) * g;
    v = config.adam_beta2 * v + (1.0 - config.adam_beta2) * g.cwiseProduct(g);
    auto& value = tensor.mutable_value();
    const bool decays = !(name.ends_with(".bias") || name.ends_with(".gain"));
    if (config.weight_decay > 0.0 && decays) value *= (1.0 - lr * config.weight_decay);
    value.array() -= lr * (m.array() / bias1) / ((v.array() / bias2).sqrt() + config.adam_epsilon);
    tensor.zero_grad();
  }
  state.pending_micro_batches = 0;
  ++state.updates;
  return lr;
}

StepOutcome accumulate_loss(encoder::ModelParameters& params, const Tensor& loss,
                            OptimizerState& state, const TrainConfig& config) {
  StepOutcome outcome;
  outcome.loss = loss.item();
  if (!std::isfinite(outcome.loss)) {
    throw Error(ErrorCode::kDivergence, "non-finite loss " + format_double(outcome.loss) +
                                            " at optimizer update " +
                                            std::to_string(state.updates + 1));
  }
  numeric::backward(numeric::scale(loss, 1.0 / config.gradient_accumulation_steps));
  ++state.pending_micro_batches;
  if (state.pending_micro_batches >= config.gradient_accumulation_steps) {
    outcome.lr = apply_update(params, state, config);
    outcome.updated = true;
  }
  return outcome;
}

Tensor mlm_loss(const encoder::EncoderModel& model, const MaskedBatch& batch,
                const encoder::ForwardOptions& options) {
  const auto hidden = encoder::forward(model, batch.inputs, options);
  std::vector<int> rows;
  std::vector<int> targets;
  for (std::size_t b = 0; b < batch.labels.size(); ++b) {
    for (std::size_t i = 0; i < batch.labels[b].size(); ++i) {
      if (batch.labels[b][i] == tokenizer::kIgnoreLabel) continue;
      rows.push_back(static_cast<int>(hidden.row(b, static_cast<encoder::Index>(i))));
      targets.push_back(batch.labels[b][i]);
    }
  }
  if (rows.empty()) throw Error(ErrorCode::kEmptyInput, "masked batch has no selected positions");
  const Tensor logits = encoder::mlm_logits(model, numeric::gather_rows(hidden.packed, rows));
  return numeric::cross_entropy(logits, targets, tokenizer::kIgnoreLabel);
}

StepOutcome train_step(encoder::EncoderModel& model, const MaskedBatch& batch,
                       OptimizerState& state, const TrainConfig& config,
                       const encoder::ForwardOptions& options) {
  return accumulate_loss(model.params, mlm_loss(model, batch, options), state, config);
}

std::int64_t updates_per_epoch(std::size_t n_examples, const TrainConfig& config) {
  const auto batches = (static_cast<std::int64_t>(n_examples) + config.train_batch_size - 1) /
                       config.train_batch_size;
  return (batches + config.gradient_accumulation_steps - 1) / config.gradient_accumulation_steps;
}

std::vector<LossRecord> fit(encoder::ModelParameters& params, double dropout,
                            std::size_t n_examples, const TrainConfig& config,
                            const BatchLossFn& loss_fn, const FitProgress& progress) {
  config.validate();
  std::vector<LossRecord> records;
  if (config.num_train_epochs == 0 || n_examples == 0) return records;

  const std::int64_t total = updates_per_epoch(n_examples, config) * config.num_train_epochs;
  OptimizerState state = make_optimizer_state(params, total);
  params.zero_grad();

  std::mt19937_64 dropout_rng(mix_seed(config.seed, 0xD0));
  encoder::ForwardOptions options;
  options.training = dropout > 0.0;
  options.rng = &dropout_rng;

  const auto batch_size = static_cast<std::size_t>(config.train_batch_size);
  const auto accumulation = static_cast<std::size_t>(config.gradient_accumulation_steps);
  for (int epoch = 0; epoch < config.num_train_epochs; ++epoch) {
    std::vector<std::size_t> order(n_examples);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(mix_seed(config.seed, 0x5F, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    const std::size_t n_batches = (n_examples + batch_size - 1) / batch_size;
    double group_loss = 0.0;
    int group_count = 0;
    for (std::size_t b = 0; b < n_batches; ++b) {
      const std::size_t begin = b * batch_size;
      const std::size_t end = std::min(n_examples, begin + batch_size);
      const std::span<const std::size_t> indices(order.data() + begin, end - begin);
      const std::uint64_t batch_seed =
          mix_seed(config.seed, static_cast<std::uint64_t>(epoch) + 1, b);

      if (auto loss = loss_fn(indices, batch_seed, options)) {
        StepOutcome outcome;
        try {
          outcome = accumulate_loss(params, *loss, state, config);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kDivergence) throw;
          throw Error(ErrorCode::kDivergence, std::string(e.what()) + " (epoch " +
                                                  std::to_string(epoch + 1) + ", batch " +
                                                  std::to_string(b) + ")");
        }
        group_loss += outcome.loss;
        ++group_count;
        if (outcome.updated) {
          records.push_back({progress.step_offset + state.updates,
                             progress.epoch_offset + epoch + 1, outcome.lr,
                             group_loss / group_count});
          group_loss = 0.0;
          group_count = 0;
        }
      }
      const bool group_end = (b + 1) % accumulation == 0 || b + 1 == n_batches;
      if (group_end && state.pending_micro_batches > 0) {
        const double lr = apply_update(params, state, config);
        records.push_back({progress.step_offset + state.updates,
                           progress.epoch_offset + epoch + 1, lr, group_loss / group_count});
        group_loss = 0.0;
        group_count = 0;
      }
    }
  }
  params.zero_grad();
  return records;
}

std::vector<tokenizer::EncodedSequence> pretraining_examples(
    std::span<const std::string> corpus, const tokenizer::SubwordVocabulary& vocab,
    const TrainConfig& config, int max_positions) {
  const auto max_len =
      static_cast<std::size_t>(std::min(config.max_seq_length, max_positions));
  std::vector<tokenizer::EncodedSequence> examples;
  if (config.line_by_line) {
    for (const auto& line : corpus) {
      if (utf8::split_whitespace(line).empty()) continue;
      examples.push_back(
          tokenizer::encode(vocab, line, std::nullopt, max_len, tokenizer::Padding::kNone));
    }
    return examples;
  }

  std::vector<int> stream;
  for (const auto& line : corpus) {
    for (const auto& word : utf8::split_whitespace(line)) {
      for (int id : tokenizer::segment_word(vocab, word)) stream.push_back(id);
    }
  }
  const std::size_t block = max_len - 2;
  for (std::size_t start = 0; start < stream.size(); start += block) {
    const std::size_t end = std::min(stream.size(), start + block);
    tokenizer::EncodedSequence seq;
    seq.ids.push_back(tokenizer::kClsId);
    seq.ids.insert(seq.ids.end(), stream.begin() + static_cast<std::ptrdiff_t>(start),
                   stream.begin() + static_cast<std::ptrdiff_t>(end));
    seq.ids.push_back(tokenizer::kSepId);
    seq.attention_mask.assign(seq.ids.size(), 1);
    seq.segment_ids.assign(seq.ids.size(), 0);
    seq.word_alignment.assign(seq.ids.size(), std::nullopt);
    examples.push_back(std::move(seq));
  }
  return examples;
}

PretrainResult pretrain(std::span<const std::string> corpus, const encoder::Checkpoint& start,
                        const TrainConfig& config) {
  config.validate();
  if (corpus.empty()) throw Error(ErrorCode::kEmptyInput, "pre-training corpus is empty");
  if (!start.vocab) {
    throw Error(ErrorCode::kInvalidArgument, "starting checkpoint carries no vocabulary");
  }
  const auto examples =
      pretraining_examples(corpus, *start.vocab, config, start.config.max_positions);
  if (examples.empty()) throw Error(ErrorCode::kEmptyInput, "pre-training corpus has no tokens");

  PretrainResult result;
  result.checkpoint = start;
  result.checkpoint.parameters = start.parameters.clone();
  result.checkpoint.meta.source = encoder::checkpoint_id(start);

  encoder::EncoderModel model{start.config, result.checkpoint.parameters};
  const MaskingOptions masking{config.mask_rate};
  const int vocab_size = start.config.vocab_size;
  auto loss_fn = [&](std::span<const std::size_t> indices, std::uint64_t batch_seed,
                     const encoder::ForwardOptions& options) -> std::optional<Tensor> {
    std::vector<tokenizer::EncodedSequence> batch;
    batch.reserve(indices.size());
    for (std::size_t i : indices) batch.push_back(examples[i]);
    const MaskedBatch masked = mask_tokens(batch, masking, batch_seed, vocab_size);
    if (masked.selected_count() == 0) return std::nullopt;
    return mlm_loss(model, masked, options);
  };
  result.losses = fit(model.params, start.config.dropout, examples.size(), config, loss_fn,
                      {start.meta.step, start.meta.epoch});
  result.checkpoint.meta.step =
      start.meta.step + static_cast<std::int64_t>(result.losses.size());
  result.checkpoint.meta.epoch = start.meta.epoch + config.num_train_epochs;
  return result;
}

void write_loss_csv(std::ostream& out, std::span<const LossRecord> losses) {
  out << "step,epoch,lr,loss\n";
  for (const auto& r : losses) {
    out << r.step << ',' << r.epoch << ',' << format_double(r.lr) << ',' << format_double(r.loss)
        << '\n';
  }
}

void save_loss_csv(const std::filesystem::path& path, std::span<const LossRecord> losses) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kNotFound, "cannot write " + path.string());
  write_loss_csv(out, losses);
}

}  // namespace slmw::training
