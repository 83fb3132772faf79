#ifndef SLMW_TEST_METRICS_ORACLE_HPP
#define SLMW_TEST_METRICS_ORACLE_HPP

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "slmw/evaluation.hpp"

namespace slmw::testing {

/// Counts TP/FP/FN/TN per class straight from the samples and applies the
/// accuracy, precision, recall, F1, macro and weighted formulas term by term.
inline evaluation::ClassificationReport brute_force_report(const std::vector<std::string>& gold,
                                                           const std::vector<std::string>& pred,
                                                           const std::vector<std::string>& classes) {
  evaluation::ClassificationReport r;
  r.classes = classes;
  const double total = static_cast<double>(gold.size());
  r.total = gold.size();
  double correct = 0;
  for (std::size_t k = 0; k < gold.size(); ++k) correct += gold[k] == pred[k] ? 1 : 0;
  r.accuracy = correct / total;
  const double n = static_cast<double>(classes.size());
  for (const auto& c : classes) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t k = 0; k < gold.size(); ++k) {
      if (gold[k] == c && pred[k] == c) tp += 1;
      if (gold[k] != c && pred[k] == c) fp += 1;
      if (gold[k] == c && pred[k] != c) fn += 1;
    }
    evaluation::ClassMetrics m;
    m.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    m.support = static_cast<std::size_t>(tp + fn);
    const double weight = (tp + fn) / total;
    r.per_class.push_back(m);
    r.class_weights.push_back(weight);
    r.macro.precision += m.precision / n;
    r.macro.recall += m.recall / n;
    r.macro.f1_of_classes += m.f1 / n;
    r.weighted.precision += weight * m.precision;
    r.weighted.recall += weight * m.recall;
    r.weighted.f1_of_classes += weight * m.f1;
  }
  auto hm = [](double p, double q) { return p + q > 0 ? 2 * p * q / (p + q) : 0.0; };
  r.macro.f1 = hm(r.macro.precision, r.macro.recall);
  r.weighted.f1 = hm(r.weighted.precision, r.weighted.recall);
  return r;
}

/// Largest absolute difference over every numeric field of two reports.
inline double report_distance(const evaluation::ClassificationReport& a,
                              const evaluation::ClassificationReport& b) {
  if (a.classes != b.classes || a.total != b.total || a.per_class.size() != b.per_class.size()) {
    return INFINITY;
  }
  double d = std::abs(a.accuracy - b.accuracy);
  auto avg = [&](const evaluation::AveragedMetrics& x, const evaluation::AveragedMetrics& y) {
    d = std::max({d, std::abs(x.precision - y.precision), std::abs(x.recall - y.recall),
                  std::abs(x.f1 - y.f1), std::abs(x.f1_of_classes - y.f1_of_classes)});
  };
  avg(a.macro, b.macro);
  avg(a.weighted, b.weighted);
  for (std::size_t c = 0; c < a.per_class.size(); ++c) {
    const auto& x = a.per_class[c];
    const auto& y = b.per_class[c];
    if (x.support != y.support) return INFINITY;
    d = std::max({d, std::abs(x.precision - y.precision), std::abs(x.recall - y.recall),
                  std::abs(x.f1 - y.f1), std::abs(a.class_weights[c] - b.class_weights[c])});
  }
  return d;
}

struct RandomLabels {
  std::vector<std::string> classes;
  std::vector<std::string> gold;
  std::vector<std::string> pred;
};

/// Up to 6 classes and 50 samples.
inline RandomLabels random_labels(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n_classes(1, 6), n_samples(1, 50);
  RandomLabels out;
  const int k = n_classes(rng);
  for (int c = 0; c < k; ++c) out.classes.push_back(std::string(1, static_cast<char>('A' + c)));
  std::uniform_int_distribution<int> pick(0, k - 1);
  const int n = n_samples(rng);
  for (int i = 0; i < n; ++i) {
    out.gold.push_back(out.classes[static_cast<std::size_t>(pick(rng))]);
    out.pred.push_back(out.classes[static_cast<std::size_t>(pick(rng))]);
  }
  return out;
}

}  // namespace slmw::testing

#endif  // SLMW_TEST_METRICS_ORACLE_HPP
