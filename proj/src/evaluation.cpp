#include "slmw/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "slmw/error.hpp"

namespace slmw::evaluation {

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error(ErrorCode::kLengthMismatch, std::string(what) + ": lengths differ (" +
                                                std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

struct Query {
  std::size_t sentence;
  std::size_t position;
};

}  // namespace

nlohmann::ordered_json to_json(const PerplexityResult& r) {
  nlohmann::ordered_json j;
  j["perplexity"] = r.perplexity;
  j["n_tokens"] = r.n_tokens;
  j["total_log_prob"] = r.total_log_prob;
  j["sentences_scored"] = r.sentences_scored;
  j["sentences_skipped"] = r.sentences_skipped;
  return j;
}

PerplexityResult perplexity_from_log_probs(std::span<const double> log_probs) {
  if (log_probs.empty()) throw Error(ErrorCode::kEmptyInput, "no tokens to score");
  PerplexityResult r;
  r.n_tokens = log_probs.size();
  for (double lp : log_probs) r.total_log_prob += lp;
  r.perplexity = std::exp(-r.total_log_prob / static_cast<double>(r.n_tokens));
  return r;
}

PerplexityResult pseudo_perplexity(std::span<const std::string> sentences,
                                   const tokenizer::SubwordVocabulary& vocab, std::size_t max_len,
                                   const ConditionalScorer& scorer) {
  std::vector<double> log_probs;
  std::size_t scored = 0;
  std::size_t skipped = 0;
  for (const auto& sentence : sentences) {
    const auto encoded = tokenizer::encode(vocab, sentence, std::nullopt, max_len, tokenizer::Padding::kNone);
    bool any = false;
    for (std::size_t i = 0; i < encoded.size(); ++i) {
      if (!encoded.word_alignment[i]) continue;
      auto masked = encoded;
      masked.ids[i] = tokenizer::kMaskId;
      log_probs.push_back(scorer(masked, i, encoded.ids[i]));
      any = true;
    }
    any ? ++scored : ++skipped;
  }
  if (log_probs.empty()) throw Error(ErrorCode::kEmptyInput, "every sentence encoded to zero tokens");
  auto r = perplexity_from_log_probs(log_probs);
  r.sentences_scored = scored;
  r.sentences_skipped = skipped;
  return r;
}

PerplexityResult pseudo_perplexity(const encoder::EncoderModel& model,
                                   const tokenizer::SubwordVocabulary& vocab,
                                   std::span<const std::string> sentences,
                                   const PerplexityOptions& options) {
  if (static_cast<int>(vocab.size()) != model.config.vocab_size) {
    throw Error(ErrorCode::kShapeMismatch, "vocabulary size " + std::to_string(vocab.size()) +
                                               " does not match model vocab_size " +
                                               std::to_string(model.config.vocab_size));
  }
  if (options.batch_size == 0) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  const std::size_t max_len =
      std::min(options.max_seq_length, static_cast<std::size_t>(model.config.max_positions));

  std::vector<tokenizer::EncodedSequence> encoded;
  std::vector<Query> queries;
  std::size_t skipped = 0;
  for (const auto& sentence : sentences) {
    auto seq = tokenizer::encode(vocab, sentence, std::nullopt, max_len, tokenizer::Padding::kNone);
    const std::size_t before = queries.size();
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (seq.word_alignment[i]) queries.push_back({encoded.size(), i});
    }
    if (queries.size() == before) {
      ++skipped;
      continue;
    }
    encoded.push_back(std::move(seq));
  }
  if (queries.empty()) throw Error(ErrorCode::kEmptyInput, "every sentence encoded to zero tokens");

  numeric::NoGradGuard no_grad;
  std::vector<double> log_probs;
  log_probs.reserve(queries.size());
  for (std::size_t begin = 0; begin < queries.size(); begin += options.batch_size) {
    const std::size_t end = std::min(queries.size(), begin + options.batch_size);
    std::vector<tokenizer::EncodedSequence> batch;
    std::vector<int> truth;
    for (std::size_t q = begin; q < end; ++q) {
      auto masked = encoded[queries[q].sentence];
      truth.push_back(masked.ids[queries[q].position]);
      masked.ids[queries[q].position] = tokenizer::kMaskId;
      batch.push_back(std::move(masked));
    }
    const auto hidden = encoder::forward(model, batch);
    std::vector<int> rows;
    for (std::size_t k = 0; k < batch.size(); ++k) {
      rows.push_back(static_cast<int>(
          hidden.row(k, static_cast<encoder::Index>(queries[begin + k].position))));
    }
    const auto logits =
        encoder::mlm_logits(model, numeric::gather_rows(hidden.packed, rows)).value();
    for (encoder::Index k = 0; k < logits.rows(); ++k) {
      const double peak = logits.row(k).maxCoeff();
      const double lse = peak + std::log((logits.row(k).array() - peak).exp().sum());
      log_probs.push_back(logits(k, truth[static_cast<std::size_t>(k)]) - lse);
    }
  }
  auto r = perplexity_from_log_probs(log_probs);
  r.sentences_scored = encoded.size();
  r.sentences_skipped = skipped;
  return r;
}

ConfusionMatrix::ConfusionMatrix(std::span<const std::string> gold,
                                 std::span<const std::string> pred,
                                 std::vector<std::string> classes)
    : classes_(std::move(classes)) {
  require_same_length(gold.size(), pred.size(), "confusion matrix");
  if (gold.empty()) throw Error(ErrorCode::kEmptyInput, "confusion matrix: no samples");
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (!index.emplace(classes_[i], i).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate class '" + classes_[i] + "'");
    }
  }
  auto lookup = [&](const std::string& label) {
    const auto it = index.find(label);
    if (it == index.end()) {
      throw Error(ErrorCode::kInvalidArgument, "label '" + label + "' is not among the classes");
    }
    return it->second;
  };
  counts_.assign(classes_.size(), std::vector<std::size_t>(classes_.size(), 0));
  for (std::size_t i = 0; i < gold.size(); ++i) ++counts_[lookup(gold[i])][lookup(pred[i])];
  total_ = gold.size();
}

std::size_t ConfusionMatrix::true_positives(std::size_t c) const { return counts_[c][c]; }

std::size_t ConfusionMatrix::false_positives(std::size_t c) const {
  std::size_t n = 0;
  for (std::size_t g = 0; g < n_classes(); ++g) {
    if (g != c) n += counts_[g][c];
  }
  return n;
}

std::size_t ConfusionMatrix::false_negatives(std::size_t c) const {
  std::size_t n = 0;
  for (std::size_t p = 0; p < n_classes(); ++p) {
    if (p != c) n += counts_[c][p];
  }
  return n;
}

std::size_t ConfusionMatrix::true_negatives(std::size_t c) const {
  return total_ - true_positives(c) - false_positives(c) - false_negatives(c);
}

std::size_t ConfusionMatrix::support(std::size_t c) const {
  return true_positives(c) + false_negatives(c);
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t n = 0;
  for (std::size_t c = 0; c < n_classes(); ++c) n += counts_[c][c];
  return n;
}

double harmonic_mean(double precision, double recall) {
  const double den = precision + recall;
  return den == 0.0 ? 0.0 : 2.0 * precision * recall / den;
}

ClassificationReport classification_report(std::span<const std::string> gold,
                                           std::span<const std::string> pred,
                                           std::vector<std::string> classes) {
  return classification_report(ConfusionMatrix(gold, pred, std::move(classes)));
}

ClassificationReport classification_report(const ConfusionMatrix& m) {
  ClassificationReport r;
  r.classes = m.classes();
  r.total = m.total();
  r.accuracy = ratio(m.trace(), m.total());
  const std::size_t n = m.n_classes();
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t tp = m.true_positives(c);
    const std::size_t fp = m.false_positives(c);
    const std::size_t fn = m.false_negatives(c);
    if (tp + fp == 0) r.flags.push_back("precision_undefined:" + r.classes[c]);
    if (tp + fn == 0) r.flags.push_back("recall_undefined:" + r.classes[c]);
    ClassMetrics cm;
    cm.precision = ratio(tp, tp + fp);
    cm.recall = ratio(tp, tp + fn);
    cm.f1 = harmonic_mean(cm.precision, cm.recall);
    cm.support = m.support(c);
    r.per_class.push_back(cm);
    r.class_weights.push_back(ratio(cm.support, m.total()));
  }
  if (n == 0) return r;
  for (std::size_t c = 0; c < n; ++c) {
    const auto& cm = r.per_class[c];
    r.macro.precision += cm.precision;
    r.macro.recall += cm.recall;
    r.macro.f1_of_classes += cm.f1;
    const double w = r.class_weights[c];
    r.weighted.precision += w * cm.precision;
    r.weighted.recall += w * cm.recall;
    r.weighted.f1_of_classes += w * cm.f1;
  }
  const auto dn = static_cast<double>(n);
  r.macro.precision /= dn;
  r.macro.recall /= dn;
  r.macro.f1_of_classes /= dn;
  r.macro.f1 = harmonic_mean(r.macro.precision, r.macro.recall);
  r.weighted.f1 = harmonic_mean(r.weighted.precision, r.weighted.recall);
  return r;
}

nlohmann::ordered_json to_json(const ClassificationReport& r) {
  auto averaged = [](const AveragedMetrics& a) {
    nlohmann::ordered_json j;
    j["precision"] = a.precision;
    j["recall"] = a.recall;
    j["f1"] = a.f1;
    j["f1_of_classes"] = a.f1_of_classes;
    return j;
  };
  nlohmann::ordered_json j;
  j["accuracy"] = r.accuracy;
  nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
  for (std::size_t c = 0; c < r.classes.size(); ++c) {
    const auto& cm = r.per_class[c];
    per_class[r.classes[c]] = {{"precision", cm.precision},
                               {"recall", cm.recall},
                               {"f1", cm.f1},
                               {"support", cm.support}};
  }
  j["per_class"] = std::move(per_class);
  j["macro_avg"] = averaged(r.macro);
  j["weighted_avg"] = averaged(r.weighted);
  j["total"] = r.total;
  j["flags"] = r.flags;
  return j;
}

nlohmann::ordered_json to_json(const PrfResult& r) {
  nlohmann::ordered_json j;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["true_positives"] = r.true_positives;
  j["false_positives"] = r.false_positives;
  j["false_negatives"] = r.false_negatives;
  return j;
}

PrfResult prf_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  PrfResult r{tp, fp, fn};
  r.precision = ratio(tp, tp + fp);
  r.recall = ratio(tp, tp + fn);
  r.f1 = harmonic_mean(r.precision, r.recall);
  return r;
}

PrfResult entity_prf(std::span<const std::vector<Span>> gold,
                     std::span<const std::vector<Span>> pred) {
  require_same_length(gold.size(), pred.size(), "entity_prf");
  auto as_set = [](const std::vector<Span>& spans) {
    for (const auto& s : spans) {
      if (s.start >= s.end) {
        throw Error(ErrorCode::kInvalidArgument, "malformed span [" + std::to_string(s.start) +
                                                     ", " + std::to_string(s.end) + ")");
      }
    }
    return std::set<Span>(spans.begin(), spans.end());
  };
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto g = as_set(gold[i]);
    const auto p = as_set(pred[i]);
    for (const auto& s : p) g.contains(s) ? ++tp : ++fp;
    for (const auto& s : g) {
      if (!p.contains(s)) ++fn;
    }
  }
  return prf_from_counts(tp, fp, fn);
}

PrfResult token_prf(std::span<const std::vector<std::string>> gold,
                    std::span<const std::vector<std::string>> pred, const std::string& outside_tag) {
  require_same_length(gold.size(), pred.size(), "token_prf");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    require_same_length(gold[i].size(), pred[i].size(), "token_prf sentence");
    for (std::size_t t = 0; t < gold[i].size(); ++t) {
      const bool g = gold[i][t] != outside_tag;
      const bool p = pred[i][t] != outside_tag;
      if (g && p && gold[i][t] == pred[i][t]) {
        ++tp;
        continue;
      }
      if (p) ++fp;
      if (g) ++fn;
    }
  }
  return prf_from_counts(tp, fp, fn);
}

double cohen_kappa(std::span<const std::string> a, std::span<const std::string> b) {
  require_same_length(a.size(), b.size(), "cohen_kappa");
  if (a.empty()) throw Error(ErrorCode::kEmptyInput, "cohen_kappa: no annotations");
  std::map<std::string, std::pair<std::size_t, std::size_t>> marginals;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) ++agree;
    ++marginals[a[i]].first;
    ++marginals[b[i]].second;
  }
  const auto n = static_cast<double>(a.size());
  const double observed = static_cast<double>(agree) / n;
  double chance = 0.0;
  for (const auto& [label, counts] : marginals) {
    chance += (static_cast<double>(counts.first) / n) * (static_cast<double>(counts.second) / n);
  }
  if (chance >= 1.0) {
    throw Error(ErrorCode::kDegenerate, "cohen_kappa: chance agreement is 1, kappa undefined");
  }
  return (observed - chance) / (1.0 - chance);
}

}  // namespace slmw::evaluation
