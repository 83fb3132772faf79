#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "metrics_oracle.hpp"
#include "slmw/error.hpp"
#include "slmw/evaluation.hpp"

using namespace slmw;
using namespace slmw::evaluation;
using slmw::testing::error_code;
using numeric::Index;
using numeric::Matrix;

namespace {

using Labels = std::vector<std::string>;

encoder::Checkpoint uniform_model(const tokenizer::SubwordVocabulary& vocab) {
  auto ckpt = slmw::testing::tiny_checkpoint(vocab);
  ckpt.parameters.at("mlm.norm.gain").mutable_value().setZero();
  ckpt.parameters.at("mlm.norm.bias").mutable_value().setZero();
  ckpt.parameters.at("mlm.output.bias").mutable_value().setZero();
  return ckpt;
}

}  // namespace

TEST_CASE("perplexity closed forms") {
  const auto vocab = slmw::testing::letter_vocab({"alpha", "beta"});
  const std::vector<std::string> sentences = {"alpha beta", "beta"};

  const auto certain = pseudo_perplexity(sentences, vocab, 16, [](const auto&, std::size_t, int) { return 0.0; });
  CHECK(certain.perplexity == 1.0);
  CHECK(certain.n_tokens == 3);

  const std::vector<double> halves = {std::log(0.5), std::log(0.25)};
  CHECK(perplexity_from_log_probs(halves).perplexity == doctest::Approx(2.8284271247461903).epsilon(1e-12));

  const auto ckpt = uniform_model(vocab);
  const auto uniform = pseudo_perplexity(ckpt.model(), vocab, sentences);
  CHECK(uniform.perplexity == doctest::Approx(static_cast<double>(vocab.size())).epsilon(1e-9));
  CHECK(uniform.n_tokens == 3);
}

TEST_CASE("perplexity scorer sees exactly one mask per query") {
  const auto vocab = slmw::testing::letter_vocab({"alpha", "beta"});
  const std::vector<std::string> sentences = {"alpha beta gamma"};
  std::size_t calls = 0;
  pseudo_perplexity(sentences, vocab, 16, [&](const tokenizer::EncodedSequence& s, std::size_t pos, int truth) {
    ++calls;
    CHECK(s.ids[pos] == tokenizer::kMaskId);
    CHECK(std::count(s.ids.begin(), s.ids.end(), tokenizer::kMaskId) == 1);
    CHECK(truth >= tokenizer::kNumSpecialTokens);
    return std::log(0.5);
  });
  CHECK(calls == 2 + 5);
}

TEST_CASE("perplexity skips empty sentences and rejects all-empty input") {
  const auto vocab = slmw::testing::letter_vocab({});
  const auto ckpt = slmw::testing::tiny_checkpoint(vocab);
  const std::vector<std::string> mixed = {"   ", "ab"};
  const auto r = pseudo_perplexity(ckpt.model(), vocab, mixed);
  CHECK(r.sentences_skipped == 1);
  CHECK(r.perplexity >= 1.0);
  const std::vector<std::string> blank = {"", " "};
  CHECK(error_code([&] { pseudo_perplexity(ckpt.model(), vocab, blank); }) == ErrorCode::kEmptyInput);
}

TEST_CASE("model perplexity matches the generic scorer and batching") {
  const auto vocab = slmw::testing::letter_vocab({"alpha"});
  const auto ckpt = slmw::testing::tiny_checkpoint(vocab);
  const std::vector<std::string> sentences = {"alpha bc", "abc alpha d"};
  const auto model = ckpt.model();
  const auto generic = pseudo_perplexity(sentences, vocab, 48, [&](const tokenizer::EncodedSequence& s, std::size_t pos, int truth) {
    const std::vector<tokenizer::EncodedSequence> one = {s};
    const auto hidden = encoder::forward(model, one);
    const Matrix logits = encoder::mlm_logits(model, hidden).value();
    const auto row = logits.row(static_cast<Index>(pos));
    return row(truth) - std::log(row.array().exp().sum());
  });
  const auto batched = pseudo_perplexity(model, vocab, sentences, {48, 3});
  const auto whole = pseudo_perplexity(model, vocab, sentences, {48, 64});
  CHECK(batched.perplexity == doctest::Approx(generic.perplexity).epsilon(1e-12));
  CHECK(batched.total_log_prob == whole.total_log_prob);
}

TEST_CASE("classification report worked example") {
  const Labels gold = {"A", "A", "B", "B", "C"};
  const Labels pred = {"A", "B", "B", "B", "C"};
  const auto r = classification_report(gold, pred, {"A", "B", "C"});
  CHECK(r.accuracy == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(r.per_class[1].precision == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(r.per_class[0].recall == 0.5);
  CHECK(r.macro.precision == doctest::Approx(8.0 / 9.0).epsilon(1e-15));
  CHECK(r.macro.recall == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(r.macro.f1 == doctest::Approx(0.8602).epsilon(1e-4));
  CHECK(r.weighted.precision == doctest::Approx(0.8667).epsilon(1e-4));
  CHECK(r.weighted.recall == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(r.weighted.f1 == doctest::Approx(0.8320).epsilon(1e-4));
  CHECK(r.flags.empty());
}

TEST_CASE("perfect and single-class reports") {
  const Labels gold = {"x", "y", "y", "z"};
  const auto perfect = classification_report(gold, gold, {"x", "y", "z"});
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.macro.f1 == 1.0);
  CHECK(perfect.weighted.f1 == 1.0);
  for (const auto& c : perfect.per_class) CHECK(c.f1 == 1.0);

  const Labels only = {"a", "a", "a"};
  const auto single = classification_report(only, only, {"a"});
  CHECK(single.macro.precision == single.per_class[0].precision);
  CHECK(single.weighted.f1 == single.per_class[0].f1);
  CHECK(single.macro.f1 == single.weighted.f1);
}

TEST_CASE("zero denominators are reported as zero with a flag") {
  const Labels gold = {"A", "A"};
  const Labels pred = {"A", "A"};
  const auto r = classification_report(gold, pred, {"A", "B"});
  CHECK(r.per_class[1].precision == 0.0);
  CHECK(r.per_class[1].recall == 0.0);
  CHECK(r.flags == Labels{"precision_undefined:B", "recall_undefined:B"});
}

TEST_CASE("report errors") {
  const Labels two = {"A", "B"};
  const Labels one = {"A"};
  CHECK(error_code([&] { classification_report(two, one, {"A", "B"}); }) == ErrorCode::kLengthMismatch);
  CHECK(error_code([&] { classification_report({}, {}, {"A"}); }) == ErrorCode::kEmptyInput);
  CHECK(error_code([&] { classification_report(two, two, {"A"}); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("reports match the brute-force oracle on random instances") {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto inst = slmw::testing::random_labels(rng);
    const auto r = classification_report(inst.gold, inst.pred, inst.classes);
    worst = std::max(worst, slmw::testing::report_distance(r, slmw::testing::brute_force_report(inst.gold, inst.pred, inst.classes)));

    double weights = 0.0, tp = 0.0, tp_fn = 0.0;
    const ConfusionMatrix m(inst.gold, inst.pred, inst.classes);
    for (std::size_t c = 0; c < inst.classes.size(); ++c) {
      weights += r.class_weights[c];
      tp += static_cast<double>(m.true_positives(c));
      tp_fn += static_cast<double>(m.true_positives(c) + m.false_negatives(c));
      CHECK(m.true_positives(c) + m.false_positives(c) + m.false_negatives(c) + m.true_negatives(c) == m.total());
    }
    CHECK(weights == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.accuracy == doctest::Approx(tp / tp_fn).epsilon(1e-15));
    CHECK(r.macro.f1 == harmonic_mean(r.macro.precision, r.macro.recall));
    CHECK(r.weighted.f1 == harmonic_mean(r.weighted.precision, r.weighted.recall));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("report json layout") {
  const Labels gold = {"A", "B"};
  const auto j = to_json(classification_report(gold, gold, {"A", "B"}));
  for (const char* key : {"accuracy", "per_class", "macro_avg", "weighted_avg", "flags"}) CHECK(j.contains(key));
  CHECK(j["per_class"]["A"].contains("support"));
}

TEST_CASE("entity matching is exact") {
  const std::vector<std::vector<Span>> gold = {{{0, 1, "software"}, {5, 8, "software"}}};
  CHECK(entity_prf(gold, gold).f1 == 1.0);
  const std::vector<std::vector<Span>> pred = {{{0, 1, "software"}, {5, 7, "software"}}};
  const auto r = entity_prf(gold, pred);
  CHECK(r.true_positives == 1);
  CHECK(r.false_positives == 1);
  CHECK(r.false_negatives == 1);
  CHECK(r.precision == 0.5);
  CHECK(r.recall == 0.5);
  CHECK(r.f1 == 0.5);
  const std::vector<std::vector<Span>> none = {{}};
  const auto empty = entity_prf(gold, none);
  CHECK(empty.precision == 0.0);
  CHECK(empty.recall == 0.0);
  CHECK(empty.f1 == 0.0);
  const std::vector<std::vector<Span>> typed = {{{0, 1, "tool"}, {5, 8, "software"}}};
  CHECK(entity_prf(gold, typed).true_positives == 1);
  const std::vector<std::vector<Span>> bad = {{{3, 3, "software"}}};
  CHECK(error_code([&] { entity_prf(bad, bad); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("token-level scoring") {
  const std::vector<Labels> gold = {{"B-software", "E-software", "O", "S-software"}};
  const std::vector<Labels> pred = {{"B-software", "O", "S-software", "S-software"}};
  const auto r = token_prf(gold, pred);
  CHECK(r.true_positives == 2);
  CHECK(r.false_positives == 1);
  CHECK(r.false_negatives == 1);
}

TEST_CASE("kappa closed forms") {
  const Labels a = {"x", "x", "y", "y"};
  CHECK(cohen_kappa(a, a) == 1.0);
  const Labels independent = {"x", "y", "x", "y"};
  CHECK(std::abs(cohen_kappa(a, independent)) <= 1e-12);
  // p_o = 3/4; marginals a = (1/2, 1/2), b = (3/4, 1/4) give p_e = 1/2.
  const Labels third = {"x", "x", "y", "x"};
  CHECK(std::abs(cohen_kappa(a, third) - 0.5) <= 1e-12);
  // p_o = 2/3 with balanced marginals (p_e = 1/2).
  const Labels six_a = {"x", "x", "x", "y", "y", "y"};
  const Labels six_b = {"x", "x", "y", "y", "y", "x"};
  CHECK(std::abs(cohen_kappa(six_a, six_b) - 1.0 / 3.0) <= 1e-12);
  const Labels short_one = {"x"};
  CHECK(error_code([&] { cohen_kappa(a, short_one); }) == ErrorCode::kLengthMismatch);
  CHECK(error_code([&] { cohen_kappa({}, {}); }) == ErrorCode::kEmptyInput);
  const Labels same = {"x", "x"};
  CHECK(error_code([&] { cohen_kappa(same, same); }) == ErrorCode::kDegenerate);
}
