#include "slmw/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "slmw/error.hpp"
#include "slmw/utf8.hpp"

namespace slmw::tokenizer {

namespace {

const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> kTokens = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  return kTokens;
}

bool has_whitespace(std::string_view token) {
  for (char32_t cp : utf8::decode(token)) {
    if (utf8::is_whitespace(cp)) return true;
  }
  return false;
}

struct Piece {
  int id;
  int word;
};

std::vector<Piece> segment_words(const SubwordVocabulary& vocab,
                                 std::span<const std::string> words, int word_offset) {
  std::vector<Piece> pieces;
  for (std::size_t w = 0; w < words.size(); ++w) {
    for (int id : segment_word(vocab, words[w])) {
      pieces.push_back({id, word_offset + static_cast<int>(w)});
    }
  }
  return pieces;
}

EncodedSequence assemble(std::vector<Piece> a, std::optional<std::vector<Piece>> b,
                         std::size_t word_count, std::size_t max_len, Padding padding) {
  if (max_len < 3) {
    throw Error(ErrorCode::kInvalidArgument, "max_len must be at least 3");
  }
  const std::size_t specials = b ? 3 : 2;
  const std::size_t budget = max_len >= specials ? max_len - specials : 0;
  if (b) {
    // longest-first: trim the tail of whichever segment is currently longer
    while (a.size() + b->size() > budget) {
      if (a.size() > b->size()) {
        a.pop_back();
      } else {
        b->pop_back();
      }
    }
  } else if (a.size() > budget) {
    a.resize(budget);
  }

  EncodedSequence seq;
  seq.word_count = word_count;
  auto push = [&seq](int id, int segment, std::optional<int> word) {
    seq.ids.push_back(id);
    seq.attention_mask.push_back(1);
    seq.segment_ids.push_back(segment);
    seq.word_alignment.push_back(word);
  };
  push(kClsId, 0, std::nullopt);
  for (const auto& p : a) push(p.id, 0, p.word);
  push(kSepId, 0, std::nullopt);
  if (b) {
    for (const auto& p : *b) push(p.id, 1, p.word);
    push(kSepId, 1, std::nullopt);
  }
  if (padding == Padding::kMaxLength) {
    while (seq.ids.size() < max_len) {
      seq.ids.push_back(kPadId);
      seq.attention_mask.push_back(0);
      seq.segment_ids.push_back(0);
      seq.word_alignment.push_back(std::nullopt);
    }
  }
  return seq;
}

}  // namespace

std::size_t EncodedSequence::attended_length() const noexcept {
  return static_cast<std::size_t>(std::count(attention_mask.begin(), attention_mask.end(), 1));
}

SubwordVocabulary::SubwordVocabulary() : SubwordVocabulary(from_tokens(special_tokens())) {}

SubwordVocabulary SubwordVocabulary::from_tokens(std::vector<std::string> tokens) {
  const auto& specials = special_tokens();
  if (tokens.size() < specials.size() ||
      !std::equal(specials.begin(), specials.end(), tokens.begin())) {
    throw Error(ErrorCode::kFormat,
                "vocabulary must start with [PAD] [UNK] [CLS] [SEP] [MASK] at ids 0-4");
  }
  SubwordVocabulary vocab(std::move(tokens), 0);
  return vocab;
}

SubwordVocabulary::SubwordVocabulary(std::vector<std::string> tokens, int)
    : tokens_(std::move(tokens)) {
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto& t = tokens_[i];
    if (t.empty() || has_whitespace(t)) {
      throw Error(ErrorCode::kFormat,
                  "vocabulary token at id " + std::to_string(i) + " is empty or has whitespace");
    }
    if (!index_.emplace(t, static_cast<int>(i)).second) {
      throw Error(ErrorCode::kFormat, "duplicate vocabulary token '" + t + "'");
    }
  }
}

SubwordVocabulary SubwordVocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return from_tokens(std::move(tokens));
}

void SubwordVocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kNotFound, "cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

std::optional<int> SubwordVocabulary::find(const std::string& token) const {
  const auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& SubwordVocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw Error(ErrorCode::kOutOfRange, "token id " + std::to_string(id) + " not in vocabulary");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

SubwordVocabulary build_vocab(std::span<const std::string> corpus, std::size_t target_size,
                              std::size_t min_frequency) {
  std::map<std::string, std::size_t> word_freq;
  std::map<std::string, std::size_t> char_freq;
  for (const auto& line : corpus) {
    for (auto& word : utf8::split_whitespace(line)) {
      for (auto& c : utf8::characters(word)) ++char_freq[c];
      ++word_freq[std::move(word)];
    }
  }

  const std::size_t required = kNumSpecialTokens + 2 * char_freq.size();
  if (target_size < required) {
    throw Error(ErrorCode::kInvalidArgument,
                "target vocabulary size " + std::to_string(target_size) + " is below the " +
                    std::to_string(required) + " entries needed for specials and characters");
  }

  using Entry = std::pair<std::string, std::size_t>;
  auto ranked = [](const std::map<std::string, std::size_t>& freq) {
    std::vector<Entry> entries(freq.begin(), freq.end());
    // map order is lexicographic, so a stable sort on frequency breaks ties by text
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry& a, const Entry& b) { return a.second > b.second; });
    return entries;
  };

  std::vector<std::string> tokens = special_tokens();
  for (const auto& [c, freq] : ranked(char_freq)) {
    tokens.push_back(c);
    tokens.push_back(std::string(kContinuationPrefix) + c);
  }
  for (const auto& [word, freq] : ranked(word_freq)) {
    if (tokens.size() >= target_size) break;
    if (freq < min_frequency || utf8::length(word) < 2) continue;
    tokens.push_back(word);
  }
  return SubwordVocabulary::from_tokens(std::move(tokens));
}

std::vector<int> segment_word(const SubwordVocabulary& vocab, std::string_view word) {
  const auto chars = utf8::characters(word);
  std::vector<int> ids;
  std::size_t start = 0;
  while (start < chars.size()) {
    std::optional<int> match;
    std::size_t match_end = start;
    for (std::size_t end = chars.size(); end > start; --end) {
      std::string candidate = start > 0 ? std::string(kContinuationPrefix) : std::string();
      for (std::size_t k = start; k < end; ++k) candidate += chars[k];
      if (auto id = vocab.find(candidate)) {
        match = id;
        match_end = end;
        break;
      }
    }
    if (!match) return {kUnkId};
    ids.push_back(*match);
    start = match_end;
  }
  return ids;
}

EncodedSequence encode(const SubwordVocabulary& vocab, std::string_view text_a,
                       std::optional<std::string_view> text_b, std::size_t max_len,
                       Padding padding) {
  const auto words_a = utf8::split_whitespace(text_a);
  auto pieces_a = segment_words(vocab, words_a, 0);
  std::size_t word_count = words_a.size();
  std::optional<std::vector<Piece>> pieces_b;
  if (text_b) {
    const auto words_b = utf8::split_whitespace(*text_b);
    pieces_b = segment_words(vocab, words_b, static_cast<int>(words_a.size()));
    word_count += words_b.size();
  }
  return assemble(std::move(pieces_a), std::move(pieces_b), word_count, max_len, padding);
}

EncodedSequence encode_words(const SubwordVocabulary& vocab, std::span<const std::string> words,
                             std::size_t max_len, Padding padding) {
  return assemble(segment_words(vocab, words, 0), std::nullopt, words.size(), max_len, padding);
}

std::string decode(const SubwordVocabulary& vocab, std::span<const int> ids) {
  std::string text;
  for (int id : ids) {
    const std::string& tok = vocab.token(id);
    if (SubwordVocabulary::is_special(id)) continue;
    if (tok.starts_with(kContinuationPrefix) && tok.size() > kContinuationPrefix.size()) {
      text += tok.substr(kContinuationPrefix.size());
    } else {
      if (!text.empty()) text.push_back(' ');
      text += tok;
    }
  }
  return text;
}

std::vector<int> align_word_labels(const EncodedSequence& encoded,
                                   std::span<const int> word_labels) {
  if (word_labels.size() != encoded.word_count) {
    throw Error(ErrorCode::kLengthMismatch,
                "expected " + std::to_string(encoded.word_count) + " word labels, got " +
                    std::to_string(word_labels.size()));
  }
  std::vector<int> labels(encoded.size(), kIgnoreLabel);
  std::optional<int> previous;
  for (std::size_t p = 0; p < encoded.size(); ++p) {
    const auto& word = encoded.word_alignment[p];
    if (word && word != previous) labels[p] = word_labels[static_cast<std::size_t>(*word)];
    previous = word;
  }
  return labels;
}

}  // namespace slmw::tokenizer
