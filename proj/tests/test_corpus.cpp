#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "slmw/corpus.hpp"
#include "slmw/error.hpp"
#include "slmw/utf8.hpp"

using namespace slmw;
using namespace slmw::corpus;

namespace {

BibliographicRecord record(std::string id, std::optional<std::string> abstract,
                           std::vector<std::string> categories = {}) {
  BibliographicRecord r;
  r.record_id = std::move(id);
  r.title = "Title " + r.record_id;
  r.abstract = std::move(abstract);
  r.year = 2015;
  r.categories = std::move(categories);
  return r;
}

std::vector<std::string> numbered(std::size_t n) {
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < n; ++i) lines.push_back("line " + std::to_string(i));
  return lines;
}

}  // namespace

TEST_CASE("utf8 decoding replaces malformed bytes") {
  CHECK(utf8::decode("a\xC3\xA9") == U"aé");
  CHECK(utf8::decode("\xFF") == U"�");
  CHECK(utf8::encode(U"é\U0001F600") == "\xC3\xA9\xF0\x9F\x98\x80");
  CHECK(utf8::length("h\xC3\xA9llo") == 5);
  CHECK(utf8::split_whitespace(" a b\tc ") == std::vector<std::string>{"a", "b", "c"});
  CHECK(utf8::split_whitespace("a\xC2\xA0" "b") == std::vector<std::string>{"a", "b"});
}

TEST_CASE("clean_text joins lines and strips control characters") {
  CHECK(clean_text("First line.\n\n  Second line.\r\n") == "First line. Second line.");
  CHECK(clean_text("a\x01" "b\tc\xEF\xBF\xBD") == "ab\tc");
  const std::string once = clean_text(" x \n\n y \x7F");
  CHECK(clean_text(once) == once);
}

TEST_CASE("clean_records drops duplicates and missing abstracts") {
  SUBCASE("identical abstracts keep the first") {
    const std::vector<BibliographicRecord> in = {record("1", "Same text."), record("2", "Same text.")};
    const auto out = clean_records(in);
    REQUIRE(out.size() == 1);
    CHECK(out[0].record_id == "1");
  }
  SUBCASE("empty abstract is dropped") {
    const std::vector<BibliographicRecord> in = {record("1", ""), record("2", "   "), record("3", std::nullopt)};
    CHECK(clean_records(in).empty());
  }
  SUBCASE("five records, one duplicate pair and one missing abstract") {
    const std::vector<BibliographicRecord> in = {record("1", "Alpha beta."), record("2", "Gamma."),
                                                 record("3", "alpha   BETA."), record("4", std::nullopt),
                                                 record("5", "Delta.")};
    const auto out = clean_records(in);
    REQUIRE(out.size() == 3);
    CHECK(out[0].record_id == "1");
    CHECK(out[1].record_id == "2");
    CHECK(out[2].record_id == "5");
  }
  SUBCASE("repeated record ids are dropped") {
    const std::vector<BibliographicRecord> in = {record("1", "One."), record("1", "Two."), record("", "Three.")};
    CHECK(clean_records(in).size() == 1);
  }
  SUBCASE("idempotent") {
    const std::vector<BibliographicRecord> in = {record("1", "A\n\nb"), record("2", "a b"), record("3", "c\x02")};
    const auto once = clean_records(in);
    CHECK(clean_records(once) == once);
  }
}

TEST_CASE("compute_stats counts words") {
  const std::vector<std::string> lines = {"a b c", "a b"};
  const auto s = compute_stats(lines);
  CHECK(s.n_documents == 2);
  CHECK(s.total_words == 5);
  CHECK(s.unique_words == 3);
  CHECK(s.avg_words_per_document == 2.5);

  const auto empty = compute_stats({});
  CHECK(empty.n_documents == 0);
  CHECK(empty.avg_words_per_document == 0.0);

  std::string doc;
  for (int i = 0; i < 170; ++i) doc += "w" + std::to_string(i) + " ";
  const std::vector<std::string> one = {doc};
  const auto s170 = compute_stats(one);
  CHECK(s170.avg_words_per_document == 170.0);
  CHECK(histogram_label(histogram_bucket(170)) == "[150,200)");
  std::size_t total = 0;
  for (const auto& [label, count] : s170.length_histogram) {
    total += count;
    if (label == "[150,200)") CHECK(count == 1);
  }
  CHECK(total == 1);
  CHECK(histogram_label(histogram_bucket(900)) == "[500,inf)");
}

TEST_CASE("unique words are case sensitive") {
  const std::vector<std::string> lines = {"Word word WORD"};
  CHECK(compute_stats(lines).unique_words == 3);
}

TEST_CASE("category_distribution counts once per record") {
  const std::vector<BibliographicRecord> one = {record("1", "x", {"Economics", "History"})};
  const auto shares = category_distribution(one);
  REQUIRE(shares.size() == 2);
  CHECK(shares[0].count == 1);
  CHECK(shares[0].percentage == doctest::Approx(50.0));
  CHECK(category_distribution({}).empty());

  const std::vector<BibliographicRecord> three = {record("A", "a", {"x"}), record("B", "b", {"x", "y", "x"}),
                                                  record("C", "c", {"y"})};
  const auto s = category_distribution(three);
  REQUIRE(s.size() == 2);
  CHECK(s[0].category == "x");
  CHECK(s[0].count == 2);
  CHECK(s[1].count == 2);
  CHECK(s[0].percentage + s[1].percentage == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("split sizes follow the weights") {
  const auto big = numbered(1000);
  const auto a = split_corpus(big, {99, 1, 42});
  CHECK(a.train.size() == 990);
  CHECK(a.test.size() == 10);
  const auto small = numbered(10);
  const auto b = split_corpus(small, {9, 1, 42});
  CHECK(b.train.size() == 9);
  CHECK(b.test.size() == 1);
  CHECK(split_corpus(big, {99, 1, 42}).test == a.test);
  CHECK_THROWS_AS(split_corpus({}, {99, 1, 42}), Error);
  CHECK_THROWS_AS(split_corpus(small, {0, 0, 42}), Error);
}

TEST_CASE("splits are partitions for any weights") {
  for (std::size_t n : {1u, 2u, 7u, 100u, 333u}) {
    for (std::uint32_t tw : {1u, 3u, 9u, 99u}) {
      const auto lines = numbered(n);
      const auto s = split_corpus(lines, {tw, 1, n * 31 + tw});
      CHECK(s.train.size() + s.test.size() == n);
      std::set<std::string> all(s.train.begin(), s.train.end());
      for (const auto& t : s.test) CHECK(all.insert(t).second);
      CHECK(all.size() == n);
    }
  }
}

TEST_CASE("record TSV round-trips with escapes") {
  BibliographicRecord r = record("7", std::string("tab\there\nnew line \\ slash"), {"A", "B"});
  r.issn = "1234-5678";
  const std::vector<BibliographicRecord> in = {r, record("8", std::nullopt)};
  std::stringstream buf;
  write_records(buf, in);
  CHECK(read_records(buf) == in);

  std::stringstream missing("record_id\ttitle\n1\tx\n");
  CHECK_THROWS_AS(read_records(missing), Error);
  std::stringstream ragged("record_id\ttitle\tabstract\n1\tx\n");
  try {
    read_records(ragged);
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("line files skip blanks and report missing paths") {
  slmw::testing::TempDir dir;
  const std::vector<std::string> lines = {"one", "two"};
  write_lines(dir / "x.txt", lines);
  slmw::testing::write_file(dir / "y.txt", "one\n\n two \n");
  CHECK(read_lines(dir / "x.txt") == lines);
  CHECK(read_lines(dir / "y.txt").size() == 2);
  try {
    read_lines(dir / "absent.txt");
    FAIL("expected not found");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNotFound);
  }
}

TEST_CASE("corpus_lines emits abstracts and optional titles") {
  const std::vector<BibliographicRecord> in = {record("1", "Abstract one.")};
  CHECK(corpus_lines(in) == std::vector<std::string>{"Abstract one."});
  CHECK(corpus_lines(in, true).size() == 2);
}
