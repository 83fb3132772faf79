#include "slmw/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

#include "slmw/error.hpp"
#include "slmw/utf8.hpp"

namespace slmw::corpus {

namespace {

bool is_line_break(char32_t cp) {
  return cp == 0x0A || cp == 0x0B || cp == 0x0C || cp == 0x0D || cp == 0x85 || cp == 0x2028 ||
         cp == 0x2029;
}

std::u32string trim(std::u32string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && utf8::is_whitespace(s[b])) ++b;
  while (e > b && utf8::is_whitespace(s[e - 1])) --e;
  return std::u32string(s.substr(b, e - b));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string unescape_field(std::string_view field, std::size_t line_no) {
  std::string out;
  out.reserve(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) {
    if (field[i] != '\\') {
      out.push_back(field[i]);
      continue;
    }
    if (i + 1 == field.size()) {
      throw Error(ErrorCode::kParse,
                  "line " + std::to_string(line_no) + ": dangling escape at end of field");
    }
    switch (field[++i]) {
      case 't': out.push_back('\t'); break;
      case 'n': out.push_back('\n'); break;
      case 'r': out.push_back('\r'); break;
      case '\\': out.push_back('\\'); break;
      default:
        throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": unknown escape \\" +
                                           std::string(1, field[i]));
    }
  }
  return out;
}

std::string escape_field(std::string_view field) {
  std::string out;
  out.reserve(field.size());
  for (char c : field) {
    switch (c) {
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\\': out += "\\\\"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string trim_ascii(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string clean_text(std::string_view text) {
  const std::u32string cps = utf8::decode(text);
  std::u32string out;
  std::u32string line;
  auto flush = [&] {
    std::u32string t = trim(line);
    if (!t.empty()) {
      if (!out.empty()) out.push_back(U' ');
      out += t;
    }
    line.clear();
  };
  for (char32_t cp : cps) {
    if (is_line_break(cp)) {
      flush();
    } else if ((utf8::is_control(cp) && cp != U'\t') || cp == 0xFFFD) {
      continue;
    } else {
      line.push_back(cp);
    }
  }
  flush();
  return utf8::encode(out);
}

std::string dedup_key(std::string_view abstract) {
  std::string key;
  for (const auto& word : utf8::split_whitespace(abstract)) {
    if (!key.empty()) key.push_back(' ');
    for (char c : word) {
      key.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c);
    }
  }
  return key;
}

std::vector<BibliographicRecord> clean_records(std::span<const BibliographicRecord> records) {
  std::vector<BibliographicRecord> out;
  std::unordered_set<std::string> seen_ids;
  std::unordered_set<std::string> seen_keys;
  for (const auto& record : records) {
    if (!record.abstract) continue;
    std::string abstract = clean_text(*record.abstract);
    if (abstract.empty()) continue;
    if (record.record_id.empty() || seen_ids.contains(record.record_id)) continue;
    std::string key = dedup_key(abstract);
    if (!seen_keys.insert(std::move(key)).second) continue;
    seen_ids.insert(record.record_id);

    BibliographicRecord cleaned = record;
    cleaned.abstract = std::move(abstract);
    cleaned.title = clean_text(record.title);
    out.push_back(std::move(cleaned));
  }
  return out;
}

std::size_t histogram_bucket(std::size_t word_count) {
  return std::min(word_count / kHistogramWidth, kHistogramBuckets - 1);
}

std::string histogram_label(std::size_t bucket) {
  const std::size_t lo = bucket * kHistogramWidth;
  if (bucket + 1 >= kHistogramBuckets) return "[" + std::to_string(lo) + ",inf)";
  return "[" + std::to_string(lo) + "," + std::to_string(lo + kHistogramWidth) + ")";
}

CorpusStats compute_stats(std::span<const std::string> lines) {
  CorpusStats stats;
  std::vector<std::size_t> buckets(kHistogramBuckets, 0);
  std::unordered_set<std::string> vocabulary;
  for (const auto& line : lines) {
    const auto words = utf8::split_whitespace(line);
    stats.total_words += words.size();
    ++buckets[histogram_bucket(words.size())];
    vocabulary.insert(words.begin(), words.end());
  }
  stats.n_documents = lines.size();
  stats.unique_words = vocabulary.size();
  stats.avg_words_per_document =
      stats.n_documents == 0 ? 0.0
                             : static_cast<double>(stats.total_words) /
                                   static_cast<double>(stats.n_documents);
  for (std::size_t b = 0; b < kHistogramBuckets; ++b) {
    stats.length_histogram.emplace_back(histogram_label(b), buckets[b]);
  }
  return stats;
}

std::vector<CategoryShare> category_distribution(std::span<const BibliographicRecord> records) {
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& record : records) {
    std::unordered_set<std::string> seen;
    for (const auto& category : record.categories) {
      if (category.empty() || !seen.insert(category).second) continue;
      ++counts[category];
      ++total;
    }
  }
  std::vector<CategoryShare> shares;
  shares.reserve(counts.size());
  for (const auto& [category, count] : counts) {
    shares.push_back({category, count,
                      100.0 * static_cast<double>(count) / static_cast<double>(total)});
  }
  std::stable_sort(shares.begin(), shares.end(),
                   [](const CategoryShare& a, const CategoryShare& b) { return a.count > b.count; });
  return shares;
}

CorpusSplit split_corpus(std::span<const std::string> lines, const SplitSpec& spec) {
  if (lines.empty()) throw Error(ErrorCode::kEmptyInput, "cannot split an empty corpus");
  const std::uint64_t weight_sum =
      static_cast<std::uint64_t>(spec.train_weight) + spec.test_weight;
  if (spec.train_weight == 0 || spec.test_weight == 0) {
    throw Error(ErrorCode::kInvalidArgument, "split weights must be positive");
  }
  const std::uint64_t n = lines.size();
  // round half up of n * test / (train + test), in integers
  const std::uint64_t n_test = (2 * n * spec.test_weight + weight_sum) / (2 * weight_sum);

  std::vector<std::size_t> order(lines.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<bool> is_test(lines.size(), false);
  for (std::size_t i = 0; i < n_test; ++i) is_test[order[i]] = true;

  CorpusSplit split;
  split.test.reserve(n_test);
  split.train.reserve(n - n_test);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    (is_test[i] ? split.test : split.train).push_back(lines[i]);
  }
  return split;
}

std::vector<std::string> corpus_lines(std::span<const BibliographicRecord> records,
                                      bool include_titles) {
  std::vector<std::string> lines;
  for (const auto& record : records) {
    if (include_titles) {
      std::string title = clean_text(record.title);
      if (!title.empty()) lines.push_back(std::move(title));
    }
    if (record.abstract) {
      std::string abstract = clean_text(*record.abstract);
      if (!abstract.empty()) lines.push_back(std::move(abstract));
    }
  }
  return lines;
}

std::vector<BibliographicRecord> read_records(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) return {};
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const auto header = split(line, '\t');
  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column[trim_ascii(header[i])] = i;
  for (const char* required : {"record_id", "title", "abstract"}) {
    if (!column.contains(required)) {
      throw Error(ErrorCode::kParse, std::string("record header lacks column '") + required + "'");
    }
  }
  auto field = [&](const std::vector<std::string>& fields, const char* name) -> const std::string* {
    const auto it = column.find(name);
    return it == column.end() ? nullptr : &fields[it->second];
  };

  std::vector<BibliographicRecord> records;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": expected " +
                                         std::to_string(header.size()) + " fields, found " +
                                         std::to_string(fields.size()));
    }
    BibliographicRecord record;
    record.record_id = trim_ascii(unescape_field(*field(fields, "record_id"), line_no));
    record.title = unescape_field(*field(fields, "title"), line_no);
    if (auto abstract = unescape_field(*field(fields, "abstract"), line_no); !abstract.empty()) {
      record.abstract = std::move(abstract);
    }
    if (const auto* issn = field(fields, "issn")) {
      if (auto value = trim_ascii(unescape_field(*issn, line_no)); !value.empty()) {
        record.issn = std::move(value);
      }
    }
    if (const auto* year = field(fields, "year")) {
      const auto value = trim_ascii(*year);
      if (!value.empty()) {
        try {
          std::size_t used = 0;
          record.year = std::stoi(value, &used);
          if (used != value.size()) throw std::invalid_argument(value);
        } catch (const std::exception&) {
          throw Error(ErrorCode::kParse,
                      "line " + std::to_string(line_no) + ": year '" + value + "' is not an integer");
        }
      }
    }
    if (const auto* categories = field(fields, "categories")) {
      for (auto& c : split(unescape_field(*categories, line_no), ';')) {
        if (auto name = trim_ascii(c); !name.empty()) record.categories.push_back(std::move(name));
      }
    }
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<BibliographicRecord> load_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot open records file " + path.string());
  return read_records(in);
}

void write_records(std::ostream& out, std::span<const BibliographicRecord> records) {
  out << "record_id\ttitle\tabstract\tissn\tyear\tcategories\n";
  for (const auto& r : records) {
    std::string categories;
    for (const auto& c : r.categories) {
      if (!categories.empty()) categories.push_back(';');
      categories += c;
    }
    out << escape_field(r.record_id) << '\t' << escape_field(r.title) << '\t'
        << escape_field(r.abstract.value_or("")) << '\t' << escape_field(r.issn.value_or(""))
        << '\t' << (r.year == 0 ? std::string() : std::to_string(r.year)) << '\t'
        << escape_field(categories) << '\n';
  }
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(std::move(line));
  }
  return lines;
}

void write_lines(const std::filesystem::path& path, std::span<const std::string> lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kNotFound, "cannot write " + path.string());
  for (const auto& line : lines) out << line << '\n';
}

nlohmann::ordered_json to_json(const CorpusStats& stats) {
  nlohmann::ordered_json histogram = nlohmann::ordered_json::object();
  for (const auto& [label, count] : stats.length_histogram) histogram[label] = count;
  return {{"n_documents", stats.n_documents},
          {"total_words", stats.total_words},
          {"unique_words", stats.unique_words},
          {"avg_words_per_document", stats.avg_words_per_document},
          {"length_histogram", histogram}};
}

nlohmann::ordered_json to_json(std::span<const CategoryShare> shares) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& s : shares) {
    out.push_back({{"category", s.category}, {"count", s.count}, {"percentage", s.percentage}});
  }
  return out;
}

}  // namespace slmw::corpus
