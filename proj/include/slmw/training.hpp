#ifndef SLMW_TRAINING_HPP
#define SLMW_TRAINING_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "slmw/checkpoint.hpp"
#include "slmw/encoder.hpp"
#include "slmw/tokenizer.hpp"

namespace slmw::training {

using encoder::Matrix;
using encoder::Tensor;

/// Warmup length used when warmup_steps is left unset, as a share of all
/// optimizer updates.
inline constexpr double kDefaultWarmupRatio = 0.06;

/// Hyperparameters; field names double as config-file keys.
struct TrainConfig {
  int max_seq_length = 512;
  double learning_rate = 2e-5;
  int train_batch_size = 64;
  int eval_batch_size = 64;
  int num_train_epochs = 2;
  int gradient_accumulation_steps = 1;
  /// Unset means kDefaultWarmupRatio of the total update count.
  std::optional<std::int64_t> warmup_steps;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double mask_rate = 0.15;
  std::uint64_t seed = 42;
  bool line_by_line = true;
  double weight_decay = 0.0;
  /// Global gradient-norm clip; 0 disables clipping.
  double max_grad_norm = 0.0;

  /// Continued pre-training defaults (2 epochs, batch 64, lr 2e-5).
  static TrainConfig pretraining();
  /// Fine-tuning defaults (batch 32, accumulation 4, eval batch 128,
  /// lr 2e-5, adam epsilon 1e-6).
  static TrainConfig finetuning();

  void validate() const;
  std::int64_t resolved_warmup(std::int64_t total_steps) const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Config keys in canonical order.
const std::vector<std::string>& config_keys();
std::vector<std::pair<std::string, std::string>> to_key_values(const TrainConfig& config);
/// Sets one field from its text form; unknown keys and malformed values
/// throw kConfig.
void set_config_value(TrainConfig& config, const std::string& key, const std::string& value);
/// Flat `key=value` lines; blank lines and `#` comments are skipped.
TrainConfig parse_config(std::istream& in, TrainConfig base);
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base);

struct MaskingOptions {
  double mask_rate = 0.15;
  /// Shares of selected positions replaced by [MASK] and by a random
  /// non-special token; the remainder is left unchanged.
  double mask_token_share = 0.8;
  double random_token_share = 0.1;
};

struct MaskedBatch {
  /// Inputs after masking; attention masks and segments are unchanged.
  std::vector<tokenizer::EncodedSequence> inputs;
  /// Original token id at selected positions, kIgnoreLabel elsewhere.
  std::vector<std::vector<int>> labels;

  std::size_t selected_count() const;
};

/// Independently selects each attended non-special position with
/// probability mask_rate. Deterministic per seed.
MaskedBatch mask_tokens(std::span<const tokenizer::EncodedSequence> batch,
                        const MaskingOptions& options, std::uint64_t seed, int vocab_size);

/// Linear warmup from 0 to the peak over [0, warmup], then linear decay to 0
/// at total_steps.
double lr_at_step(const TrainConfig& config, std::int64_t step, std::int64_t total_steps);

struct OptimizerState {
  /// Schedule horizon in optimizer updates.
  std::int64_t total_updates = 0;
  std::int64_t updates = 0;
  int pending_micro_batches = 0;
  std::map<std::string, Matrix> first_moment;
  std::map<std::string, Matrix> second_moment;
};

OptimizerState make_optimizer_state(const encoder::ModelParameters& params,
                                    std::int64_t total_updates);

struct StepOutcome {
  double loss = 0.0;
  bool updated = false;
  double lr = 0.0;
};

/// Back-propagates loss / gradient_accumulation_steps into the parameter
/// gradients and applies an Adam update once enough micro-batches have
/// accumulated. Non-finite losses throw kDivergence.
StepOutcome accumulate_loss(encoder::ModelParameters& params, const Tensor& loss,
                            OptimizerState& state, const TrainConfig& config);

/// Adam with bias correction over the accumulated gradients (rescaled when
/// fewer than gradient_accumulation_steps micro-batches are pending), then
/// clears them. Returns the learning rate used.
double apply_update(encoder::ModelParameters& params, OptimizerState& state,
                    const TrainConfig& config);

/// Masked-LM loss over the selected positions of one micro-batch.
Tensor mlm_loss(const encoder::EncoderModel& model, const MaskedBatch& batch,
                const encoder::ForwardOptions& options = {});

/// One masked-LM micro-batch through accumulate_loss.
StepOutcome train_step(encoder::EncoderModel& model, const MaskedBatch& batch,
                       OptimizerState& state, const TrainConfig& config,
                       const encoder::ForwardOptions& options = {});

struct LossRecord {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;

  friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

/// Loss for the examples at `indices`, or nullopt when the batch carries no
/// training signal. `batch_seed` is fixed per (seed, epoch, batch).
using BatchLossFn = std::function<std::optional<Tensor>(
    std::span<const std::size_t> indices, std::uint64_t batch_seed,
    const encoder::ForwardOptions& options)>;

struct FitProgress {
  std::int64_t step_offset = 0;
  std::int64_t epoch_offset = 0;
};

/// Epoch loop shared by pre-training and fine-tuning: seeded per-epoch
/// shuffling, train_batch_size micro-batches, accumulation, the warmup/decay
/// schedule. One LossRecord per optimizer update (mean micro-batch loss).
std::vector<LossRecord> fit(encoder::ModelParameters& params, double dropout,
                            std::size_t n_examples, const TrainConfig& config,
                            const BatchLossFn& loss_fn, const FitProgress& progress = {});

std::int64_t updates_per_epoch(std::size_t n_examples, const TrainConfig& config);

/// Training examples for masked-LM: one per non-empty line when
/// line_by_line, otherwise all tokens concatenated and cut into
/// max_seq_length blocks.
std::vector<tokenizer::EncodedSequence> pretraining_examples(
    std::span<const std::string> corpus, const tokenizer::SubwordVocabulary& vocab,
    const TrainConfig& config, int max_positions);

struct PretrainResult {
  encoder::Checkpoint checkpoint;
  std::vector<LossRecord> losses;
};

/// Continued masked-LM training of `start` (which must embed its
/// vocabulary). The result records `start` as its source checkpoint.
PretrainResult pretrain(std::span<const std::string> corpus, const encoder::Checkpoint& start,
                        const TrainConfig& config);

/// `step,epoch,lr,loss` with a header row.
void write_loss_csv(std::ostream& out, std::span<const LossRecord> losses);
void save_loss_csv(const std::filesystem::path& path, std::span<const LossRecord> losses);

/// splitmix64 finalizer; derives independent seeds from (seed, a, b).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace slmw::training

#endif  // SLMW_TRAINING_HPP
