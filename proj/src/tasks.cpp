#include "slmw/tasks.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "slmw/error.hpp"
#include "slmw/utf8.hpp"

namespace slmw::tasks {

namespace {

using encoder::Checkpoint;
using encoder::Index;
using encoder::Matrix;
using encoder::Tensor;

const std::set<std::string>& abbreviations() {
  static const std::set<std::string> kList = {
      "e.g.", "i.e.", "al.", "etc.", "vs.",  "cf.", "Fig.", "Figs.", "Eq.",  "Eqs.",
      "Dr.",  "Mr.",  "Mrs.", "Ms.", "Prof.", "No.", "Nos.", "St.",  "Jr.", "approx.",
      "Vol.", "pp.",  "Ref.", "Refs.", "Inc.", "Ltd.", "Co.", "Corp.", "viz."};
  return kList;
}

bool is_upper(char32_t cp) {
  return (cp >= U'A' && cp <= U'Z') || (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) ||
         (cp >= 0x391 && cp <= 0x3A9) || (cp >= 0x410 && cp <= 0x42F);
}

std::u32string_view trim(std::u32string_view s) {
  std::size_t b = 0;
  while (b < s.size() && utf8::is_whitespace(s[b])) ++b;
  std::size_t e = s.size();
  while (e > b && utf8::is_whitespace(s[e - 1])) --e;
  return s.substr(b, e - b);
}

bool ends_with_abbreviation(std::u32string_view text, std::size_t period) {
  std::size_t b = period;
  while (b > 0 && !utf8::is_whitespace(text[b - 1])) --b;
  std::string word = utf8::encode(text.substr(b, period - b + 1));
  const auto first = word.find_first_not_of("([{\"'");
  if (first == std::string::npos) return false;
  return abbreviations().contains(word.substr(first));
}

void wrap(std::u32string_view sentence, std::size_t max_chars, std::vector<std::string>& out) {
  while (sentence.size() > max_chars) {
    std::size_t cut = 0;
    for (std::size_t i = max_chars; i > 0; --i) {
      if (utf8::is_whitespace(sentence[i])) {
        cut = i;
        break;
      }
    }
    if (cut == 0) cut = max_chars;
    const auto head = trim(sentence.substr(0, cut));
    if (!head.empty()) out.push_back(utf8::encode(head));
    sentence = trim(sentence.substr(cut));
  }
  if (!sentence.empty()) out.push_back(utf8::encode(sentence));
}

struct ParsedTag {
  char prefix = 'O';
  std::string type;
};

ParsedTag parse_tag(const std::string& tag) {
  if (tag == kOutsideTag) return {};
  if (tag.size() < 3 || tag[1] != '-' || std::string_view("BMES").find(tag[0]) == std::string_view::npos) {
    throw Error(ErrorCode::kInvalidArgument, "malformed tag '" + tag + "'");
  }
  return {tag[0], tag.substr(2)};
}

[[noreturn]] void parse_error(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::kParse, "line " + std::to_string(line) + ": " + what);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kNotFound, "cannot write " + path.string());
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

void require_vocab(const Checkpoint& start) {
  if (!start.vocab) throw Error(ErrorCode::kInvalidArgument, "checkpoint carries no vocabulary");
}

std::size_t effective_max_len(const Checkpoint& model, std::size_t max_seq_length) {
  return std::min(max_seq_length, static_cast<std::size_t>(model.config.max_positions));
}

/// Copy of `start` with a freshly initialized head and no other head tensors.
Checkpoint with_head(const Checkpoint& start, encoder::HeadKind kind,
                     const std::vector<std::string>& labels, std::uint64_t seed) {
  Checkpoint out = start;
  out.parameters = start.parameters.clone();
  out.parameters.erase("head.weight");
  out.parameters.erase("head.bias");
  const auto n = static_cast<Index>(labels.size());
  const Index h = start.config.hidden_size;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, encoder::kInitStddev);
  Matrix w(h, n);
  for (Index i = 0; i < w.size(); ++i) {
    double v;
    do {
      v = normal(rng);
    } while (std::abs(v) > 2.0 * encoder::kInitStddev);
    w.data()[i] = v;
  }
  Tensor weight(w);
  weight.set_requires_grad(true);
  Tensor bias = Tensor::zeros(1, n);
  bias.set_requires_grad(true);
  out.parameters.add("head.weight", weight);
  out.parameters.add("head.bias", bias);
  out.head = encoder::TaskHead{kind, labels};
  out.meta.source = encoder::checkpoint_id(start);
  return out;
}

Tensor head_logits(const encoder::EncoderModel& model, Tensor features,
                   const encoder::ForwardOptions& options) {
  if (options.training && model.config.dropout > 0.0) {
    if (options.rng == nullptr) throw Error(ErrorCode::kInvalidArgument, "dropout needs an rng");
    features = numeric::dropout(features, model.config.dropout, *options.rng);
  }
  return numeric::add_row(numeric::matmul(features, model.params.at("head.weight")),
                          model.params.at("head.bias"));
}

void require_head(const Checkpoint& model, encoder::HeadKind kind) {
  if (!model.head || model.head->kind != kind) {
    throw Error(ErrorCode::kInvalidArgument,
                kind == encoder::HeadKind::kClassifier ? "checkpoint has no classifier head"
                                                       : "checkpoint has no tagger head");
  }
}

std::size_t argmax(const Matrix& m, Index row) {
  Index best = 0;
  m.row(row).maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

FinetuneResult finish(Checkpoint checkpoint, const Checkpoint& start,
                      std::vector<training::LossRecord> losses, const training::TrainConfig& config) {
  checkpoint.meta.step = start.meta.step + static_cast<std::int64_t>(losses.size());
  checkpoint.meta.epoch = start.meta.epoch + config.num_train_epochs;
  return {std::move(checkpoint), std::move(losses)};
}

}  // namespace

LabelSet::LabelSet(std::string name, std::vector<std::string> classes)
    : name_(std::move(name)), classes_(std::move(classes)) {
  std::set<std::string> seen;
  for (const auto& c : classes_) {
    if (c.empty()) throw Error(ErrorCode::kInvalidArgument, "label set '" + name_ + "': empty class");
    if (!seen.insert(c).second) {
      throw Error(ErrorCode::kInvalidArgument, "label set '" + name_ + "': duplicate class '" + c + "'");
    }
  }
}

bool LabelSet::contains(const std::string& label) const {
  return std::find(classes_.begin(), classes_.end(), label) != classes_.end();
}

std::size_t LabelSet::index_of(const std::string& label) const {
  const auto it = std::find(classes_.begin(), classes_.end(), label);
  if (it == classes_.end()) {
    throw Error(ErrorCode::kInvalidArgument, "label '" + label + "' is not in label set '" + name_ + "'");
  }
  return static_cast<std::size_t>(it - classes_.begin());
}

const LabelSet& jcr46() {
  static const LabelSet kSet("JCR46", {"Anthropology",
                                       "Area Studies",
                                       "Business",
                                       "Business, Finance",
                                       "Cultural Studies",
                                       "Communication",
                                       "Criminology & Penology",
                                       "Demography",
                                       "Development Studies",
                                       "Economics",
                                       "Education & Educational Research",
                                       "Education, Special",
                                       "Environmental Studies",
                                       "Ethics",
                                       "Ethnic Studies",
                                       "Family Studies",
                                       "Geography",
                                       "Gerontology",
                                       "Health Policy & Services",
                                       "History",
                                       "History & Philosophy of Science",
                                       "History Of Social Sciences",
                                       "Hospitality, Leisure, Sport & Tourism",
                                       "Industrial Relations & Labor",
                                       "Information Science & Library Science",
                                       "International Relations",
                                       "Law",
                                       "Linguistics",
                                       "Management",
                                       "Nursing",
                                       "Political Science",
                                       "Psychology, Multidisciplinary",
                                       "Public Administration",
                                       "Public, Environmental & Occupational Health",
                                       "Regional & Urban Planning",
                                       "Rehabilitation",
                                       "Social Issues",
                                       "Social Sciences, Biomedical",
                                       "Social Sciences, Interdisciplinary",
                                       "Social Sciences, Mathematical Methods",
                                       "Social Work",
                                       "Sociology",
                                       "Substance Abuse",
                                       "Transportation",
                                       "Urban Studies",
                                       "Women's Studies"});
  return kSet;
}

const LabelSet& bpmrc() {
  static const LabelSet kSet("BPMRC", {"Background", "Purpose", "Methods", "Results", "Conclusions"});
  return kSet;
}

const LabelSet& bmes_tags() {
  static const LabelSet kSet("BMES", {"B-software", "M-software", "E-software", "S-software", "O"});
  return kSet;
}

BalancedDataset build_balanced_dataset(std::span<const corpus::BibliographicRecord> records,
                                       const BalanceOptions& options) {
  std::map<std::string, std::vector<std::string>> pools;
  for (const auto& record : records) {
    std::string text;
    switch (options.field) {
      case TextField::kTitle:
        text = record.title;
        break;
      case TextField::kAbstract:
        if (!record.abstract) continue;
        text = *record.abstract;
        break;
      case TextField::kTitleAndAbstract:
        text = record.title;
        if (record.abstract) text += (text.empty() ? "" : " ") + *record.abstract;
        break;
    }
    if (utf8::split_whitespace(text).empty()) continue;

    const std::vector<std::string>* categories = &record.categories;
    if (record.issn) {
      const auto it = options.issn_categories.find(*record.issn);
      if (it != options.issn_categories.end()) categories = &it->second;
    }
    if (categories->empty()) continue;
    if (options.multi_category == MultiCategory::kFirst) {
      pools[categories->front()].push_back(text);
    } else {
      std::set<std::string> seen;
      for (const auto& c : *categories) {
        if (seen.insert(c).second) pools[c].push_back(text);
      }
    }
  }

  std::vector<std::string> classes;
  if (options.classes) {
    classes = *options.classes;
  } else {
    for (const auto& [name, pool] : pools) classes.push_back(name);
  }

  BalancedDataset out;
  std::mt19937_64 rng(options.seed);
  for (const auto& name : classes) {
    const auto it = pools.find(name);
    const std::size_t available = it == pools.end() ? 0 : it->second.size();
    if (available < options.per_class) {
      if (options.strict) {
        throw Error(ErrorCode::kInsufficientData,
                    "class '" + name + "' has " + std::to_string(available) + " records, " +
                        std::to_string(options.per_class) + " required");
      }
      out.skipped.emplace_back(name, available);
      continue;
    }
    if (options.per_class == 0) continue;
    std::vector<std::size_t> order(available);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(options.per_class);
    std::sort(order.begin(), order.end());
    for (std::size_t i : order) out.items.push_back({it->second[i], name});
  }
  return out;
}

std::vector<std::string> sentence_split(std::string_view text, std::size_t max_chars) {
  if (max_chars == 0) throw Error(ErrorCode::kInvalidArgument, "max_chars must be >= 1");
  const std::u32string cps = utf8::decode(text);
  const std::u32string_view view(cps);
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < cps.size(); ++i) {
    const char32_t c = cps[i];
    if (c != U'.' && c != U'!' && c != U'?') continue;
    std::size_t j = i + 1;
    while (j < cps.size() && utf8::is_whitespace(cps[j])) ++j;
    if (j == i + 1 || j >= cps.size() || !is_upper(cps[j])) continue;
    if (c == U'.' && ends_with_abbreviation(view, i)) continue;
    wrap(trim(view.substr(start, i + 1 - start)), max_chars, out);
    start = j;
    i = j - 1;
  }
  wrap(trim(view.substr(start)), max_chars, out);
  return out;
}

SpanDecoding tags_to_spans(std::span<const std::string> tags, TagMode mode) {
  SpanDecoding out;
  std::optional<std::size_t> open_start;
  std::string open_type;
  std::size_t middles = 0;

  auto violation = [&](std::size_t index, const std::string& what) {
    if (mode == TagMode::kStrict) {
      throw Error(ErrorCode::kFormat, "invalid tag sequence at index " + std::to_string(index) + ": " + what);
    }
  };
  // Lenient handling of an entity left open at `index`.
  auto close_open = [&](std::size_t index) {
    if (middles > 0) {
      out.spans.push_back({*open_start, *open_start + 1 + middles, open_type});
      out.repairs.push_back("index " + std::to_string(index) + ": closed unterminated " + open_type +
                            " entity at its last M tag");
    } else {
      out.repairs.push_back("index " + std::to_string(index) + ": dropped lone B-" + open_type);
    }
    open_start.reset();
    middles = 0;
  };

  for (std::size_t i = 0; i < tags.size(); ++i) {
    const ParsedTag tag = parse_tag(tags[i]);
    if (open_start) {
      if ((tag.prefix == 'M' || tag.prefix == 'E') && tag.type == open_type) {
        if (tag.prefix == 'M') {
          ++middles;
        } else {
          out.spans.push_back({*open_start, i + 1, open_type});
          open_start.reset();
          middles = 0;
        }
        continue;
      }
      violation(i, "expected M-" + open_type + " or E-" + open_type + ", found " + tags[i]);
      close_open(i);
    }
    switch (tag.prefix) {
      case 'O':
        break;
      case 'S':
        out.spans.push_back({i, i + 1, tag.type});
        break;
      case 'B':
        open_start = i;
        open_type = tag.type;
        middles = 0;
        break;
      default:
        violation(i, tags[i] + " without a preceding B-" + tag.type);
        out.repairs.push_back("index " + std::to_string(i) + ": dropped orphan " + tags[i]);
        break;
    }
  }
  if (open_start) {
    violation(tags.size(), "B-" + open_type + " entity is never closed");
    close_open(tags.size());
  }
  return out;
}

SpanDecoding tags_to_spans(const TaggedSentence& sentence, TagMode mode) {
  if (sentence.tokens.size() != sentence.tags.size()) {
    throw Error(ErrorCode::kLengthMismatch, "tokens and tags differ in length");
  }
  return tags_to_spans(sentence.tags, mode);
}

TaggedSentence spans_to_tags(std::vector<std::string> tokens, std::span<const Span> spans) {
  TaggedSentence out;
  out.tags.assign(tokens.size(), std::string(kOutsideTag));
  std::vector<bool> used(tokens.size(), false);
  for (const auto& s : spans) {
    if (s.start >= s.end || s.end > tokens.size()) {
      throw Error(ErrorCode::kInvalidArgument, "span [" + std::to_string(s.start) + ", " +
                                                   std::to_string(s.end) + ") out of range for " +
                                                   std::to_string(tokens.size()) + " tokens");
    }
    if (s.entity_type.empty()) throw Error(ErrorCode::kInvalidArgument, "span without entity type");
    for (std::size_t i = s.start; i < s.end; ++i) {
      if (used[i]) {
        throw Error(ErrorCode::kInvalidArgument, "overlapping spans at token " + std::to_string(i));
      }
      used[i] = true;
    }
    if (s.width() == 1) {
      out.tags[s.start] = "S-" + s.entity_type;
      continue;
    }
    out.tags[s.start] = "B-" + s.entity_type;
    for (std::size_t i = s.start + 1; i + 1 < s.end; ++i) out.tags[i] = "M-" + s.entity_type;
    out.tags[s.end - 1] = "E-" + s.entity_type;
  }
  out.tokens = std::move(tokens);
  return out;
}

std::vector<TaggedSentence> read_tagged(std::istream& in) {
  std::vector<TaggedSentence> out;
  TaggedSentence current;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) {
      if (!current.tokens.empty()) out.push_back(std::move(current));
      current = {};
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      parse_error(line_no, "expected token<TAB>tag");
    }
    std::string token = line.substr(0, tab);
    std::string tag = line.substr(tab + 1);
    if (token.empty()) parse_error(line_no, "empty token");
    if (!bmes_tags().contains(tag)) parse_error(line_no, "unknown tag '" + tag + "'");
    current.tokens.push_back(std::move(token));
    current.tags.push_back(std::move(tag));
  }
  if (!current.tokens.empty()) out.push_back(std::move(current));
  return out;
}

std::vector<TaggedSentence> load_tagged(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_tagged(in);
}

void write_tagged(std::ostream& out, std::span<const TaggedSentence> sentences) {
  bool first = true;
  for (const auto& s : sentences) {
    if (s.tokens.size() != s.tags.size()) {
      throw Error(ErrorCode::kLengthMismatch, "tokens and tags differ in length");
    }
    if (s.tokens.empty()) continue;
    if (!first) out << '\n';
    first = false;
    for (std::size_t i = 0; i < s.tokens.size(); ++i) out << s.tokens[i] << '\t' << s.tags[i] << '\n';
  }
}

void save_tagged(const std::filesystem::path& path, std::span<const TaggedSentence> sentences) {
  auto out = open_output(path);
  write_tagged(out, sentences);
}

std::vector<LabeledText> read_labeled(std::istream& in) {
  std::vector<LabeledText> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) parse_error(line_no, "expected label<TAB>text");
    out.push_back({line.substr(tab + 1), line.substr(0, tab)});
  }
  return out;
}

std::vector<LabeledText> load_labeled(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_labeled(in);
}

void write_labeled(std::ostream& out, std::span<const LabeledText> items) {
  for (const auto& item : items) {
    if (item.label.find_first_of("\t\n") != std::string::npos ||
        item.text.find('\n') != std::string::npos) {
      throw Error(ErrorCode::kInvalidArgument, "label or text contains a tab or line break");
    }
    out << item.label << '\t' << item.text << '\n';
  }
}

void save_labeled(const std::filesystem::path& path, std::span<const LabeledText> items) {
  auto out = open_output(path);
  write_labeled(out, items);
}

IssnMap read_issn_map(std::istream& in) {
  IssnMap out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size()) {
      parse_error(line_no, "expected issn<TAB>category");
    }
    auto& categories = out[line.substr(0, tab)];
    std::string category = line.substr(tab + 1);
    if (std::find(categories.begin(), categories.end(), category) == categories.end()) {
      categories.push_back(std::move(category));
    }
  }
  return out;
}

IssnMap load_issn_map(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_issn_map(in);
}

FinetuneResult finetune_classifier(const Checkpoint& start, std::span<const LabeledText> train,
                                   const training::TrainConfig& config, const LabelSet& labels) {
  config.validate();
  require_vocab(start);
  if (train.empty()) throw Error(ErrorCode::kEmptyInput, "classifier training set is empty");
  const std::size_t max_len = effective_max_len(start, static_cast<std::size_t>(config.max_seq_length));
  std::vector<tokenizer::EncodedSequence> examples;
  std::vector<int> targets;
  for (const auto& item : train) {
    targets.push_back(static_cast<int>(labels.index_of(item.label)));
    examples.push_back(
        tokenizer::encode(*start.vocab, item.text, std::nullopt, max_len, tokenizer::Padding::kNone));
  }

  Checkpoint out = with_head(start, encoder::HeadKind::kClassifier, labels.classes(),
                             training::mix_seed(config.seed, 0xC1A55));
  const encoder::EncoderModel model = out.model();
  auto loss_fn = [&](std::span<const std::size_t> indices, std::uint64_t,
                     const encoder::ForwardOptions& options) -> std::optional<Tensor> {
    std::vector<tokenizer::EncodedSequence> batch;
    std::vector<int> batch_targets;
    for (std::size_t i : indices) {
      batch.push_back(examples[i]);
      batch_targets.push_back(targets[i]);
    }
    const auto hidden = encoder::forward(model, batch, options);
    const Tensor logits = head_logits(model, encoder::pooled(model, hidden), options);
    return numeric::cross_entropy(logits, batch_targets, tokenizer::kIgnoreLabel);
  };
  auto losses = training::fit(out.parameters, start.config.dropout, examples.size(), config, loss_fn,
                              {start.meta.step, start.meta.epoch});
  return finish(std::move(out), start, std::move(losses), config);
}

FinetuneResult finetune_tagger(const Checkpoint& start, std::span<const TaggedSentence> train,
                               const training::TrainConfig& config) {
  config.validate();
  require_vocab(start);
  if (train.empty()) throw Error(ErrorCode::kEmptyInput, "tagger training set is empty");
  const LabelSet& tags = bmes_tags();
  const std::size_t max_len = effective_max_len(start, static_cast<std::size_t>(config.max_seq_length));
  std::vector<tokenizer::EncodedSequence> examples;
  std::vector<std::vector<int>> labels;
  for (const auto& sentence : train) {
    if (sentence.tokens.size() != sentence.tags.size()) {
      throw Error(ErrorCode::kLengthMismatch, "tokens and tags differ in length");
    }
    std::vector<int> word_labels;
    for (const auto& tag : sentence.tags) word_labels.push_back(static_cast<int>(tags.index_of(tag)));
    auto encoded = tokenizer::encode_words(*start.vocab, sentence.tokens, max_len, tokenizer::Padding::kNone);
    labels.push_back(tokenizer::align_word_labels(encoded, word_labels));
    examples.push_back(std::move(encoded));
  }

  Checkpoint out = with_head(start, encoder::HeadKind::kTagger, tags.classes(),
                             training::mix_seed(config.seed, 0x7A6));
  const encoder::EncoderModel model = out.model();
  auto loss_fn = [&](std::span<const std::size_t> indices, std::uint64_t,
                     const encoder::ForwardOptions& options) -> std::optional<Tensor> {
    std::vector<tokenizer::EncodedSequence> batch;
    std::vector<int> row_labels;
    for (std::size_t i : indices) {
      batch.push_back(examples[i]);
      row_labels.insert(row_labels.end(), labels[i].begin(), labels[i].end());
    }
    if (std::all_of(row_labels.begin(), row_labels.end(),
                    [](int l) { return l == tokenizer::kIgnoreLabel; })) {
      return std::nullopt;
    }
    const auto hidden = encoder::forward(model, batch, options);
    const Tensor logits = head_logits(model, hidden.packed, options);
    return numeric::cross_entropy(logits, row_labels, tokenizer::kIgnoreLabel);
  };
  auto losses = training::fit(out.parameters, start.config.dropout, examples.size(), config, loss_fn,
                              {start.meta.step, start.meta.epoch});
  return finish(std::move(out), start, std::move(losses), config);
}

std::vector<std::string> predict_labels(const Checkpoint& model, std::span<const std::string> texts,
                                        std::size_t max_seq_length, std::size_t batch_size) {
  require_head(model, encoder::HeadKind::kClassifier);
  require_vocab(model);
  if (batch_size == 0) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  const std::size_t max_len = effective_max_len(model, max_seq_length);
  const encoder::EncoderModel m = model.model();
  numeric::NoGradGuard no_grad;
  std::vector<std::string> out;
  for (std::size_t begin = 0; begin < texts.size(); begin += batch_size) {
    std::vector<tokenizer::EncodedSequence> batch;
    for (std::size_t i = begin; i < std::min(texts.size(), begin + batch_size); ++i) {
      batch.push_back(tokenizer::encode(*model.vocab, texts[i], std::nullopt, max_len,
                                        tokenizer::Padding::kNone));
    }
    const auto hidden = encoder::forward(m, batch);
    const Matrix logits = head_logits(m, encoder::pooled(m, hidden), {}).value();
    for (Index r = 0; r < logits.rows(); ++r) out.push_back(model.head->labels[argmax(logits, r)]);
  }
  return out;
}

std::vector<std::vector<std::string>> predict_tags(const Checkpoint& model,
                                                   std::span<const std::vector<std::string>> sentences,
                                                   std::size_t max_seq_length, std::size_t batch_size) {
  require_head(model, encoder::HeadKind::kTagger);
  require_vocab(model);
  if (batch_size == 0) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  const std::size_t max_len = effective_max_len(model, max_seq_length);
  const encoder::EncoderModel m = model.model();
  numeric::NoGradGuard no_grad;
  std::vector<std::vector<std::string>> out;
  for (std::size_t begin = 0; begin < sentences.size(); begin += batch_size) {
    const std::size_t end = std::min(sentences.size(), begin + batch_size);
    std::vector<tokenizer::EncodedSequence> batch;
    for (std::size_t i = begin; i < end; ++i) {
      batch.push_back(tokenizer::encode_words(*model.vocab, sentences[i], max_len, tokenizer::Padding::kNone));
    }
    std::vector<std::vector<std::string>> predicted(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      predicted[b].assign(sentences[begin + b].size(), std::string(kOutsideTag));
    }
    const auto hidden = encoder::forward(m, batch);
    const Matrix logits = head_logits(m, hidden.packed, {}).value();
    for (std::size_t b = 0; b < batch.size(); ++b) {
      std::optional<int> previous;
      for (std::size_t p = 0; p < batch[b].size(); ++p) {
        const auto& word = batch[b].word_alignment[p];
        if (word && word != previous) {
          const Index row = hidden.row(b, static_cast<Index>(p));
          predicted[b][static_cast<std::size_t>(*word)] = model.head->labels[argmax(logits, row)];
        }
        previous = word;
      }
    }
    for (auto& p : predicted) out.push_back(std::move(p));
  }
  return out;
}

}  // namespace slmw::tasks
