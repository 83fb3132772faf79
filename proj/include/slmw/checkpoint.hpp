#ifndef SLMW_CHECKPOINT_HPP
#define SLMW_CHECKPOINT_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "slmw/encoder.hpp"
#include "slmw/tokenizer.hpp"

namespace slmw::encoder {

inline constexpr std::string_view kCheckpointMagic = "SLMW";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainingMeta {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  /// Identifier of the checkpoint this one was trained from; empty for a
  /// fresh initialization.
  std::string source;

  friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

enum class HeadKind { kClassifier, kTagger };

/// Fine-tuning head stored alongside the encoder as head.weight
/// (hidden x labels) and head.bias (1 x labels).
struct TaskHead {
  HeadKind kind = HeadKind::kClassifier;
  std::vector<std::string> labels;

  friend bool operator==(const TaskHead&, const TaskHead&) = default;
};

struct Checkpoint {
  EncoderConfig config;
  ModelParameters parameters;
  TrainingMeta meta;
  std::optional<tokenizer::SubwordVocabulary> vocab;
  std::optional<TaskHead> head;

  EncoderModel model() const { return {config, parameters}; }
};

/// Throws kShapeMismatch unless the parameter names and shapes are exactly
/// those implied by the config (plus head tensors when a head is present).
void validate(const Checkpoint& checkpoint);

// Layout: "SLMW", u32 version, u64 header length, JSON header (config,
// meta, optional vocab and head), u32 tensor count, then per tensor
// u32 name length, name, u32 rank, u64 dims, little-endian f64 values.
std::string serialize(const Checkpoint& checkpoint);
Checkpoint deserialize(std::string_view bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Stable content identifier (FNV-1a 64 over the serialized form, hex).
std::string checkpoint_id(const Checkpoint& checkpoint);

}  // namespace slmw::encoder

#endif  // SLMW_CHECKPOINT_HPP
