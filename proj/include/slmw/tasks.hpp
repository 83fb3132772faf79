#ifndef SLMW_TASKS_HPP
#define SLMW_TASKS_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "slmw/checkpoint.hpp"
#include "slmw/corpus.hpp"
#include "slmw/span.hpp"
#include "slmw/training.hpp"

namespace slmw::tasks {

inline constexpr std::string_view kOutsideTag = "O";
inline constexpr std::string_view kSoftwareType = "software";
inline constexpr std::size_t kSentenceMaxChars = 512;

class LabelSet {
 public:
  /// Throws kInvalidArgument on an empty or duplicate class name.
  LabelSet(std::string name, std::vector<std::string> classes);

  const std::string& name() const noexcept { return name_; }
  const std::vector<std::string>& classes() const noexcept { return classes_; }
  std::size_t size() const noexcept { return classes_.size(); }
  bool contains(const std::string& label) const;
  /// Throws kInvalidArgument for a label outside the set.
  std::size_t index_of(const std::string& label) const;

 private:
  std::string name_;
  std::vector<std::string> classes_;
};

/// The 46 JCR social-science disciplines.
const LabelSet& jcr46();
/// Background, Purpose, Methods, Results, Conclusions.
const LabelSet& bpmrc();
/// B-software, M-software, E-software, S-software, O.
const LabelSet& bmes_tags();

struct LabeledText {
  std::string text;
  std::string label;

  friend bool operator==(const LabeledText&, const LabeledText&) = default;
};

struct TaggedSentence {
  std::vector<std::string> tokens;
  std::vector<std::string> tags;

  friend bool operator==(const TaggedSentence&, const TaggedSentence&) = default;
};

enum class TextField { kTitle, kAbstract, kTitleAndAbstract };
enum class MultiCategory { kFirst, kEach };

/// ISSN -> categories, in file order.
using IssnMap = std::map<std::string, std::vector<std::string>>;

struct BalanceOptions {
  std::size_t per_class = 500;
  std::uint64_t seed = 42;
  TextField field = TextField::kAbstract;
  MultiCategory multi_category = MultiCategory::kFirst;
  /// Throw kInsufficientData instead of skipping short classes.
  bool strict = false;
  /// Classes to sample, in output order; all observed classes (sorted) when unset.
  std::optional<std::vector<std::string>> classes;
  /// When a record's ISSN is listed here, these categories replace its own.
  IssnMap issn_categories;
};

struct BalancedDataset {
  std::vector<LabeledText> items;
  /// Classes left out, with the number of records available.
  std::vector<std::pair<std::string, std::size_t>> skipped;
};

/// Exactly per_class seeded samples from each class with enough records,
/// grouped by class and kept in record order within a class.
BalancedDataset build_balanced_dataset(std::span<const corpus::BibliographicRecord> records,
                                       const BalanceOptions& options);

/// Splits after . ! ? when followed by whitespace and an uppercase letter,
/// except after common abbreviations; longer pieces are wrapped at the last
/// whitespace within max_chars code points (hard cut when there is none).
std::vector<std::string> sentence_split(std::string_view text,
                                        std::size_t max_chars = kSentenceMaxChars);

enum class TagMode { kStrict, kLenient };

struct SpanDecoding {
  std::vector<Span> spans;
  /// One note per repair made in lenient mode.
  std::vector<std::string> repairs;
};

/// Throws kInvalidArgument for a malformed tag and, in strict mode, kFormat
/// naming the first position where the sequence is invalid.
SpanDecoding tags_to_spans(std::span<const std::string> tags, TagMode mode = TagMode::kStrict);
SpanDecoding tags_to_spans(const TaggedSentence& sentence, TagMode mode = TagMode::kStrict);

/// S for width 1, B M* E otherwise, O elsewhere. Throws kInvalidArgument on
/// overlapping or out-of-range spans.
TaggedSentence spans_to_tags(std::vector<std::string> tokens, std::span<const Span> spans);

/// `token<TAB>tag` per line, blank line between sentences. Tags must be in
/// the BMES alphabet; errors are kParse with the line number.
std::vector<TaggedSentence> read_tagged(std::istream& in);
std::vector<TaggedSentence> load_tagged(const std::filesystem::path& path);
void write_tagged(std::ostream& out, std::span<const TaggedSentence> sentences);
void save_tagged(const std::filesystem::path& path, std::span<const TaggedSentence> sentences);

/// `label<TAB>text` per line.
std::vector<LabeledText> read_labeled(std::istream& in);
std::vector<LabeledText> load_labeled(const std::filesystem::path& path);
void write_labeled(std::ostream& out, std::span<const LabeledText> items);
void save_labeled(const std::filesystem::path& path, std::span<const LabeledText> items);

/// `issn<TAB>category` per line.
IssnMap read_issn_map(std::istream& in);
IssnMap load_issn_map(const std::filesystem::path& path);

struct FinetuneResult {
  encoder::Checkpoint checkpoint;
  std::vector<training::LossRecord> losses;
};

/// Dense softmax head over the pooled [CLS] state, trained end-to-end.
/// `start` must carry its vocabulary.
FinetuneResult finetune_classifier(const encoder::Checkpoint& start,
                                   std::span<const LabeledText> train,
                                   const training::TrainConfig& config, const LabelSet& labels);

/// Per-position softmax over the BMES alphabet, trained on first subwords.
FinetuneResult finetune_tagger(const encoder::Checkpoint& start,
                               std::span<const TaggedSentence> train,
                               const training::TrainConfig& config);

/// Label per text; requires a classifier head.
std::vector<std::string> predict_labels(const encoder::Checkpoint& model,
                                        std::span<const std::string> texts,
                                        std::size_t max_seq_length = 512,
                                        std::size_t batch_size = 128);

/// Tag per word from the first-subword prediction; words lost to truncation
/// are tagged O. Requires a tagger head.
std::vector<std::vector<std::string>> predict_tags(
    const encoder::Checkpoint& model, std::span<const std::vector<std::string>> sentences,
    std::size_t max_seq_length = 512, std::size_t batch_size = 128);

}  // namespace slmw::tasks

#endif  // SLMW_TASKS_HPP
