#include "osdr/eval.hpp"

#include <algorithm>

#include "osdr/errors.hpp"

namespace osdr {

std::vector<std::size_t> predict(const Backbone& bb, const Matrix& x) {
  const Matrix probs = responses(bb, x);
  std::vector<std::size_t> preds(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto row = probs.row(i);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    preds[i] = best;
  }
  return preds;
}

AccuracyTriple accuracy_triple(const std::vector<std::size_t>& preds,
                               const std::vector<std::int32_t>& truth,
                               const std::vector<std::size_t>& known_classes) {
  if (preds.size() != truth.size())
    throw DimensionError("accuracy: prediction and truth counts differ");
  std::vector<std::size_t> known_sorted = known_classes;
  std::sort(known_sorted.begin(), known_sorted.end());
  std::size_t n_known = 0, n_unknown = 0, c_known = 0, c_unknown = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto cls = static_cast<std::size_t>(truth[i]);
    const bool is_known = std::binary_search(known_sorted.begin(),
                                             known_sorted.end(), cls);
    const bool hit = preds[i] == cls;
    if (is_known) {
      ++n_known;
      c_known += hit;
    } else {
      ++n_unknown;
      c_unknown += hit;
    }
  }
  AccuracyTriple t;
  if (n_known > 0)
    t.known = static_cast<double>(c_known) / static_cast<double>(n_known);
  if (n_unknown > 0)
    t.unknown = static_cast<double>(c_unknown) / static_cast<double>(n_unknown);
  if (!preds.empty())
    t.all = static_cast<double>(c_known + c_unknown) /
            static_cast<double>(preds.size());
  return t;
}

EvalReport evaluate(const Backbone& bb, const DomainDataset& target) {
  if (!target.labeled()) throw UsageError("evaluate: target has no labels");
  validate_dataset(target);
  const auto preds = predict(bb, target.features);

  EvalReport rep;
  std::vector<std::size_t> known_sorted = bb.known;
  std::sort(known_sorted.begin(), known_sorted.end());
  std::map<std::size_t, std::size_t> per_class_hits;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto cls = static_cast<std::size_t>(target.labels[i]);
    const bool hit = preds[i] == cls;
    rep.per_class_count[cls] += 1;
    per_class_hits[cls] += hit;
    if (std::binary_search(known_sorted.begin(), known_sorted.end(), cls)) {
      rep.known_total += 1;
      rep.known_correct += hit;
    } else {
      rep.unknown_total += 1;
      rep.unknown_correct += hit;
    }
  }
  for (const auto& [cls, count] : rep.per_class_count)
    rep.per_class_acc[cls] =
        static_cast<double>(per_class_hits[cls]) / static_cast<double>(count);
  if (rep.known_total > 0)
    rep.known_acc = static_cast<double>(rep.known_correct) /
                    static_cast<double>(rep.known_total);
  if (rep.unknown_total > 0)
    rep.unknown_acc = static_cast<double>(rep.unknown_correct) /
                      static_cast<double>(rep.unknown_total);
  rep.all_acc = static_cast<double>(rep.known_correct + rep.unknown_correct) /
                static_cast<double>(preds.size());
  return rep;
}

std::vector<std::pair<std::size_t, double>> top_k_predictions(
    const Backbone& bb, std::span<const double> sample, std::size_t k) {
  if (k < 1 || k > bb.class_count())
    throw UsageError("top-k: k must be in [1, " +
                     std::to_string(bb.class_count()) + "]");
  Matrix x(1, sample.size());
  std::copy(sample.begin(), sample.end(), x.row(0).begin());
  const Matrix probs = responses(bb, x);
  std::vector<std::pair<std::size_t, double>> ranked(bb.class_count());
  for (std::size_t c = 0; c < bb.class_count(); ++c) ranked[c] = {c, probs(0, c)};
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  ranked.resize(k);
  return ranked;
}

std::vector<std::pair<std::string, double>> dump_attention(
    const GcnModel& m, const KnowledgeGraph& g, std::uint32_t node,
    std::size_t k) {
  auto coeffs = output_attention(m, g, node);
  std::sort(coeffs.begin(), coeffs.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  coeffs.resize(std::min(k, coeffs.size()));
  std::vector<std::pair<std::string, double>> named(coeffs.size());
  for (std::size_t i = 0; i < coeffs.size(); ++i)
    named[i] = {g.name(coeffs[i].first), coeffs[i].second};
  return named;
}

}  // namespace osdr
