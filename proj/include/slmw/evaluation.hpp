#ifndef SLMW_EVALUATION_HPP
#define SLMW_EVALUATION_HPP

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "slmw/encoder.hpp"
#include "slmw/span.hpp"
#include "slmw/tokenizer.hpp"

namespace slmw::evaluation {

struct PerplexityResult {
  std::size_t n_tokens = 0;
  /// Sum of natural-log conditional probabilities.
  double total_log_prob = 0.0;
  double perplexity = 0.0;
  std::size_t sentences_scored = 0;
  std::size_t sentences_skipped = 0;
};

nlohmann::ordered_json to_json(const PerplexityResult& result);

/// exp(-total / N) over the given log probabilities.
PerplexityResult perplexity_from_log_probs(std::span<const double> log_probs);

/// ln P(true token at `position` | `masked`), where `masked` has [MASK] at
/// `position`.
using ConditionalScorer =
    std::function<double(const tokenizer::EncodedSequence& masked, std::size_t position, int true_id)>;

/// Mask-one-at-a-time scoring of every non-special token. Sentences with no
/// real tokens are skipped; all skipped throws kEmptyInput.
PerplexityResult pseudo_perplexity(std::span<const std::string> sentences,
                                   const tokenizer::SubwordVocabulary& vocab, std::size_t max_len,
                                   const ConditionalScorer& scorer);

struct PerplexityOptions {
  std::size_t max_seq_length = 512;
  /// Masked copies scored per forward pass.
  std::size_t batch_size = 64;
};

PerplexityResult pseudo_perplexity(const encoder::EncoderModel& model,
                                   const tokenizer::SubwordVocabulary& vocab,
                                   std::span<const std::string> sentences,
                                   const PerplexityOptions& options = {});

class ConfusionMatrix {
 public:
  /// Throws kLengthMismatch, kEmptyInput, or kInvalidArgument for a label
  /// outside `classes`.
  ConfusionMatrix(std::span<const std::string> gold, std::span<const std::string> pred,
                  std::vector<std::string> classes);

  const std::vector<std::string>& classes() const noexcept { return classes_; }
  std::size_t n_classes() const noexcept { return classes_.size(); }
  std::size_t total() const noexcept { return total_; }
  /// Count of samples with gold class g predicted as p.
  std::size_t count(std::size_t gold, std::size_t pred) const { return counts_[gold][pred]; }

  std::size_t true_positives(std::size_t c) const;
  std::size_t false_positives(std::size_t c) const;
  std::size_t false_negatives(std::size_t c) const;
  std::size_t true_negatives(std::size_t c) const;
  std::size_t support(std::size_t c) const;
  std::size_t trace() const;

 private:
  std::vector<std::string> classes_;
  std::vector<std::vector<std::size_t>> counts_;
  std::size_t total_ = 0;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct AveragedMetrics {
  double precision = 0.0;
  double recall = 0.0;
  /// Harmonic mean of the averaged precision and recall.
  double f1 = 0.0;
  /// Same averaging applied to the per-class F1 values.
  double f1_of_classes = 0.0;
};

struct ClassificationReport {
  std::vector<std::string> classes;
  std::vector<ClassMetrics> per_class;
  /// support / total per class.
  std::vector<double> class_weights;
  std::size_t total = 0;
  double accuracy = 0.0;
  AveragedMetrics macro;
  AveragedMetrics weighted;
  /// Zero-denominator cases reported as 0, e.g. "precision_undefined:B".
  std::vector<std::string> flags;
};

/// Metrics over every class in `classes`, including those with no support.
ClassificationReport classification_report(std::span<const std::string> gold,
                                           std::span<const std::string> pred,
                                           std::vector<std::string> classes);
ClassificationReport classification_report(const ConfusionMatrix& matrix);

nlohmann::ordered_json to_json(const ClassificationReport& report);

/// Harmonic mean; 0 when both inputs are 0.
double harmonic_mean(double precision, double recall);

struct PrfResult {
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

nlohmann::ordered_json to_json(const PrfResult& result);

PrfResult prf_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

/// Exact (start, end, type) matching per sentence. Throws kLengthMismatch on
/// differing sentence counts and kInvalidArgument on a span with start >= end.
PrfResult entity_prf(std::span<const std::vector<Span>> gold,
                     std::span<const std::vector<Span>> pred);

/// Per-token scoring over non-outside tags: a token counts once as a true
/// positive when both tags agree, otherwise as a false positive for a
/// non-outside prediction and a false negative for a non-outside gold tag.
PrfResult token_prf(std::span<const std::vector<std::string>> gold,
                    std::span<const std::vector<std::string>> pred,
                    const std::string& outside_tag = "O");

/// (p_o - p_e) / (1 - p_e). Throws kLengthMismatch, kEmptyInput, or
/// kDegenerate when p_e = 1.
double cohen_kappa(std::span<const std::string> a, std::span<const std::string> b);

}  // namespace slmw::evaluation

#endif  // SLMW_EVALUATION_HPP
