#ifndef SLMW_CORPUS_HPP
#define SLMW_CORPUS_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace slmw::corpus {

/// One exported bibliographic entry. The raw ingestion unit.
struct BibliographicRecord {
  std::string record_id;
  std::string title;
  std::optional<std::string> abstract;
  std::optional<std::string> issn;
  int year = 0;
  std::vector<std::string> categories;

  friend bool operator==(const BibliographicRecord&, const BibliographicRecord&) = default;
};

struct CorpusStats {
  std::size_t n_documents = 0;
  std::size_t total_words = 0;
  std::size_t unique_words = 0;
  double avg_words_per_document = 0.0;
  /// Width-50 word-count buckets, [0,50) ... [450,500), then [500,inf).
  std::vector<std::pair<std::string, std::size_t>> length_histogram;
};

struct CategoryShare {
  std::string category;
  std::size_t count = 0;
  double percentage = 0.0;  // in percent, sums to 100 over the list
};

struct SplitSpec {
  std::uint32_t train_weight = 99;
  std::uint32_t test_weight = 1;
  std::uint64_t seed = 42;
};

struct CorpusSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

inline constexpr std::size_t kHistogramWidth = 50;
inline constexpr std::size_t kHistogramBuckets = 11;

/// Collapses line breaks (and blank lines) to single spaces and strips
/// control characters other than tab plus U+FFFD. Idempotent.
std::string clean_text(std::string_view text);

/// Lowercased, whitespace-collapsed text used to detect duplicate abstracts.
std::string dedup_key(std::string_view abstract);

/// Drops records with a blank/missing abstract, an empty or repeated
/// record_id, or an abstract duplicating an earlier survivor. Survivors keep
/// their relative order and carry cleaned title/abstract text.
std::vector<BibliographicRecord> clean_records(std::span<const BibliographicRecord> records);

CorpusStats compute_stats(std::span<const std::string> lines);
std::size_t histogram_bucket(std::size_t word_count);
std::string histogram_label(std::size_t bucket);

/// Per-category record counts, each category counted at most once per
/// record. Sorted by count descending, then name.
std::vector<CategoryShare> category_distribution(std::span<const BibliographicRecord> records);

/// Seeded partition; test receives round(n * test/(train+test)) lines.
/// Both halves keep the input order.
CorpusSplit split_corpus(std::span<const std::string> lines, const SplitSpec& spec);

/// Abstract lines (and optionally title lines) ready for the corpus file.
std::vector<std::string> corpus_lines(std::span<const BibliographicRecord> records,
                                      bool include_titles = false);

// Tab-separated record files: header row naming the columns record_id,
// title, abstract, issn, year, categories (semicolon-joined). Fields use
// backslash escapes for tab, newline, carriage return and backslash.
std::vector<BibliographicRecord> read_records(std::istream& in);
std::vector<BibliographicRecord> load_records(const std::filesystem::path& path);
void write_records(std::ostream& out, std::span<const BibliographicRecord> records);

std::vector<std::string> read_lines(const std::filesystem::path& path);
void write_lines(const std::filesystem::path& path, std::span<const std::string> lines);

nlohmann::ordered_json to_json(const CorpusStats& stats);
nlohmann::ordered_json to_json(std::span<const CategoryShare> shares);

}  // namespace slmw::corpus

#endif  // SLMW_CORPUS_HPP
