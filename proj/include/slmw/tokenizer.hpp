#ifndef SLMW_TOKENIZER_HPP
#define SLMW_TOKENIZER_HPP

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace slmw::tokenizer {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;
inline constexpr int kSepId = 3;
inline constexpr int kMaskId = 4;
inline constexpr int kNumSpecialTokens = 5;

/// Label value for positions excluded from token-level losses and metrics.
inline constexpr int kIgnoreLabel = -100;

inline constexpr std::string_view kContinuationPrefix = "##";

/// Case-preserving token <-> id mapping. Ids 0-4 are [PAD] [UNK] [CLS] [SEP]
/// [MASK]; the line number of the vocabulary file is the id.
class SubwordVocabulary {
 public:
  /// Special tokens only.
  SubwordVocabulary();

  /// Validates the bijection, the reserved special ids, and that no token
  /// contains whitespace.
  static SubwordVocabulary from_tokens(std::vector<std::string> tokens);
  static SubwordVocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::optional<int> find(const std::string& token) const;
  const std::string& token(int id) const;
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  static bool is_special(int id) noexcept { return id >= 0 && id < kNumSpecialTokens; }

  friend bool operator==(const SubwordVocabulary& a, const SubwordVocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  SubwordVocabulary(std::vector<std::string> tokens, int);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Model input for one example: [CLS] A [SEP] (B [SEP]) then padding.
struct EncodedSequence {
  std::vector<int> ids;
  std::vector<int> attention_mask;
  std::vector<int> segment_ids;
  /// Source word index per position; empty for special tokens and padding.
  std::vector<std::optional<int>> word_alignment;
  /// Number of whitespace-separated words in the source text(s).
  std::size_t word_count = 0;

  std::size_t size() const noexcept { return ids.size(); }
  /// Number of attended positions (specials included).
  std::size_t attended_length() const noexcept;

  friend bool operator==(const EncodedSequence&, const EncodedSequence&) = default;
};

enum class Padding { kMaxLength, kNone };

/// Special tokens, every character seen (word-initial and "##" forms,
/// frequency-ranked), then whole words by frequency (ties lexicographic)
/// until target_size.
SubwordVocabulary build_vocab(std::span<const std::string> corpus, std::size_t target_size,
                              std::size_t min_frequency = 1);

/// Greedy longest-match segmentation of one word; a word with no complete
/// segmentation becomes a single [UNK].
std::vector<int> segment_word(const SubwordVocabulary& vocab, std::string_view word);

EncodedSequence encode(const SubwordVocabulary& vocab, std::string_view text_a,
                       std::optional<std::string_view> text_b, std::size_t max_len,
                       Padding padding = Padding::kMaxLength);

/// Encodes pre-split words; word i of the result aligns to words[i].
EncodedSequence encode_words(const SubwordVocabulary& vocab, std::span<const std::string> words,
                             std::size_t max_len, Padding padding = Padding::kMaxLength);

std::string decode(const SubwordVocabulary& vocab, std::span<const int> ids);

/// First-subword labeling: the first piece of each word carries that word's
/// label, every other position carries kIgnoreLabel.
std::vector<int> align_word_labels(const EncodedSequence& encoded, std::span<const int> word_labels);

}  // namespace slmw::tokenizer

#endif  // SLMW_TOKENIZER_HPP
