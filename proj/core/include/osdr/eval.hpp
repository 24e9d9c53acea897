#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "osdr/backbone.hpp"
#include "osdr/gcn.hpp"
#include "osdr/knowledge_graph.hpp"

namespace osdr {

/// Top-1 class per sample row, ties to the lowest class index.
std::vector<std::size_t> predict(const Backbone& bb, const Matrix& x);

struct AccuracyTriple {
  double known = 0.0;
  double unknown = 0.0;
  double all = 0.0;
};

/// Accuracy over samples whose true class is in `known_classes`, over the
/// rest, and over everything. An empty subset scores 0.
AccuracyTriple accuracy_triple(const std::vector<std::size_t>& preds,
                               const std::vector<std::int32_t>& truth,
                               const std::vector<std::size_t>& known_classes);

struct EvalReport {
  double known_acc = 0.0;
  double unknown_acc = 0.0;
  double all_acc = 0.0;
  std::size_t known_total = 0, known_correct = 0;
  std::size_t unknown_total = 0, unknown_correct = 0;
  std::map<std::size_t, double> per_class_acc;
  std::map<std::size_t, std::size_t> per_class_count;
  std::uint64_t config_fingerprint = 0;  // filled by the caller
  std::uint64_t seed = 0;                // filled by the caller
};

/// Scores the classifier on a labeled target set. Throws when the dataset
/// carries no labels.
EvalReport evaluate(const Backbone& bb, const DomainDataset& target);

/// k highest-probability classes for one sample, descending, ties by
/// class index. k must be in [1, class count].
std::vector<std::pair<std::size_t, double>> top_k_predictions(
    const Backbone& bb, std::span<const double> sample, std::size_t k);

/// k largest output-layer attention coefficients for a node, as
/// (neighbor name, coefficient) descending, ties by node index; k is
/// truncated to the neighborhood size.
std::vector<std::pair<std::string, double>> dump_attention(
    const GcnModel& m, const KnowledgeGraph& g, std::uint32_t node,
    std::size_t k);

}  // namespace osdr
