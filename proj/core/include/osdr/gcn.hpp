#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "osdr/autodiff.hpp"
#include "osdr/knowledge_graph.hpp"
#include "osdr/matrix.hpp"

namespace osdr {

enum class AttentionKernel { Cosine, NegEuclidean };

AttentionKernel parse_kernel(const std::string& s);
const char* kernel_name(AttentionKernel k);

/// One attention head: a linear transform plus the similarity kernel used
/// to score transformed node pairs.
struct AttentionHead {
  Parameter weight;  // out_dim x in_dim
  AttentionKernel kernel = AttentionKernel::Cosine;
};

struct GcnConfig {
  std::size_t input_dim = 0;    // semantic vector length
  std::size_t hidden_dim = 64;  // per first-layer head
  std::size_t output_dim = 0;   // classifier row length (weights + bias)
  AttentionKernel kernel = AttentionKernel::Cosine;
  bool uniform_attention = false;  // mean aggregation baseline
  double leaky_slope = 0.2;
};

/// Two-layer graph network: the first layer runs two attention heads over
/// the node vectors and concatenates their outputs, the second runs a
/// single head on the activated concatenation. Output rows regress
/// classifier weight vectors (bias folded in as the last coordinate).
struct GcnModel {
  GcnConfig config;
  AttentionHead head1a;  // hidden_dim x input_dim
  AttentionHead head1b;  // hidden_dim x input_dim
  AttentionHead head2;   // output_dim x (2 * hidden_dim)

  /// Deterministic scaled-uniform weight init from the seed.
  static GcnModel init(const GcnConfig& cfg, std::uint64_t seed);
  /// Re-draws all weights exactly as init(config, seed) would.
  void reseed(std::uint64_t seed);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
};

/// Copy of the model with attention replaced by the uniform distribution
/// over each neighborhood (the mean-aggregation ablation arm).
GcnModel uniform_attention_mode(const GcnModel& m);

/// Softmax-normalized attention of node i over neighborhood(i), in
/// ascending neighbor order (self included). With uniform=true every
/// neighbor gets 1/|neighborhood(i)| regardless of features.
std::vector<double> attention_coefficients(const AttentionHead& head,
                                           const KnowledgeGraph& g,
                                           const Matrix& features,
                                           std::uint32_t i,
                                           bool uniform = false);

/// Pre-activation aggregation for node i: sum_j alpha_ij * (W h_j).
std::vector<double> aggregate(const AttentionHead& head,
                              const KnowledgeGraph& g,
                              const Matrix& features, std::uint32_t i,
                              bool uniform = false);

// -- tape path ---------------------------------------------------------

/// The model's weights watched by a tape, so training steps can flow
/// gradients into them.
struct BoundGcn {
  const GcnModel* model = nullptr;
  Tape::Id w1a = 0, w1b = 0, w2 = 0;
};

BoundGcn bind(Tape& t, const GcnModel& m);

/// Full two-layer pass on arbitrary per-node input rows (n x input_dim).
Tape::Id gcn_forward(Tape& t, const BoundGcn& b, const KnowledgeGraph& g,
                     Tape::Id inputs);

// -- pure forward ------------------------------------------------------

Matrix gcn_forward(const GcnModel& m, const KnowledgeGraph& g,
                   const Matrix& features);
/// Forward on the graph's own (normalized) semantic vectors.
Matrix gcn_forward(const GcnModel& m, const KnowledgeGraph& g);

/// First-layer output after activation (n x 2*hidden_dim); the features
/// the output head attends over.
Matrix layer1_hidden(const GcnModel& m, const KnowledgeGraph& g,
                     const Matrix& features);

/// Output-layer attention row for one node: (neighbor, weight) pairs in
/// ascending neighbor order. For inspection tooling.
std::vector<std::pair<std::uint32_t, double>> output_attention(
    const GcnModel& m, const KnowledgeGraph& g, std::uint32_t i);

// -- supervision -------------------------------------------------------

/// Ground-truth classifier rows for supervised classes: row k belongs to
/// graph node class_index[k]; each row is a weight vector with the bias
/// appended as the last coordinate.
struct ClassifierWeightSet {
  std::vector<std::size_t> class_index;
  Matrix weights;  // class_index.size() x output_dim
};

/// Mean over supervised classes of the per-element squared error between
/// the class's output row and its ground-truth row.
double init_loss(const Matrix& z, const ClassifierWeightSet& gt);
Tape::Id init_loss(Tape& t, Tape::Id z, const ClassifierWeightSet& gt);

struct InitTrainConfig {
  double lr = 0.01;
  std::size_t steps = 2000;
  std::uint64_t seed = 0;
};

/// Re-initializes the model weights from cfg.seed, then runs full-batch
/// gradient descent on init_loss. Returns the loss trace (steps+1 values,
/// recorded before each update plus once after the last). Throws
/// TrainingDiverged when the loss exceeds 1e6 or stops being finite.
std::vector<double> train_init(GcnModel& m, const KnowledgeGraph& g,
                               const ClassifierWeightSet& gt,
                               const InitTrainConfig& cfg);

}  // namespace osdr
