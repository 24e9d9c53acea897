#pragma once

#include <cstdint>
#include <vector>

#include "osdr/backbone.hpp"
#include "osdr/gcn.hpp"
#include "osdr/knowledge_graph.hpp"
#include "osdr/matching.hpp"
#include "osdr/synth.hpp"

namespace osdr {

struct LossWeights {
  double cls = 1.0, tran = 1.0, lb = 1.0, d = 1.0;
};

/// One evaluated loss decomposition: raw terms, their weights, and the
/// weighted total (total = sum of weight*term by construction).
struct LossBreakdown {
  double l_cls = 0.0, l_tran = 0.0, l_lb = 0.0, l_d = 0.0;
  double w_cls = 1.0, w_tran = 1.0, w_lb = 1.0, w_d = 1.0;
  double total = 0.0;

  static LossBreakdown weighted(double cls, double tran, double lb, double d,
                                const LossWeights& w);
};

/// Table-style ablation switches: attention off swaps every graph pass to
/// uniform aggregation; smo off zeroes the discrepancy weight and skips
/// matching entirely.
struct AblationSwitches {
  bool attention = true;
  bool smo = true;
};

struct StageAConfig {
  std::size_t hidden_dim = 64;
  AttentionKernel kernel = AttentionKernel::Cosine;
  double leaky_slope = 0.2;
  InitTrainConfig train;  // lr, steps, seed
};

struct JointConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double lr = 0.01;
  std::uint64_t seed = 0;
  /// Full-batch steps fitting the joint-stage graph network to the
  /// initialized classifier rows before the first epoch, so the transfer
  /// term starts near its fixed point instead of at a random output.
  std::size_t warmup_steps = 200;
  /// false: unknown classifier rows train freely, pulled by the transfer
  /// term. true: they are overwritten from the graph network each epoch
  /// and the transfer term covers known rows only.
  bool refresh_unknown = false;
  ExtractorKind extractor = ExtractorKind::Affine;
};

struct PipelineConfig {
  StageAConfig stage_a;
  JointConfig joint;
  SmoConfig smo;
  LossWeights weights;
  AblationSwitches ablation;
};

// -- stage A -----------------------------------------------------------

struct StageAResult {
  GcnModel model;
  Matrix all_outputs;           // n_nodes x (f+1) forward output
  ClassifierWeightSet harvested;  // rows for every class node
  std::vector<double> loss_trace;
};

/// Trains the semantic-input graph network against the source-fit
/// classifier rows and harvests its output for every class node.
StageAResult run_stage_a(const StageAConfig& cfg, bool uniform_attention,
                         const KnowledgeGraph& g,
                         const ClassifierWeightSet& gt_known,
                         std::size_t output_dim);

/// Initial classifier rows: known classes from the source-fit weights,
/// unknown classes from the harvested graph output.
ClassifierWeightSet initial_classifier_rows(const StageAResult& stage_a,
                                            const ClassifierWeightSet& gt_known,
                                            const NodeRoleSplit& split);

// -- transfer term -----------------------------------------------------

/// Node-input matrix for the joint-stage graph pass: class rows from the
/// stage-A weight set, auxiliary rows from the stage-A forward output.
/// Throws when a class node has no stage-A row.
Matrix transfer_inputs(const KnowledgeGraph& g,
                       const ClassifierWeightSet& stage_a,
                       const Matrix& stage_a_outputs);

/// Runs the joint-stage graph network on the stage-A derived inputs and
/// returns the mean squared element error between its output rows and the
/// current classifier rows over `covered`. Gradients flow to both the
/// graph network and the classifier.
Tape::Id transfer_loss(Tape& t, const BoundGcn& gcnb, const KnowledgeGraph& g,
                       Tape::Id joint_inputs, const BoundBackbone& bb,
                       const std::vector<std::size_t>& covered);
double transfer_loss(const GcnModel& gcnb, const KnowledgeGraph& g,
                     const Matrix& joint_inputs, const Backbone& bb,
                     const std::vector<std::size_t>& covered);

// -- joint stage ---------------------------------------------------------

struct EpochLog {
  std::size_t epoch = 0;
  LossBreakdown losses;
  double known_acc = 0.0, unknown_acc = 0.0, all_acc = 0.0;
};

struct JointResult {
  Backbone bb;
  GcnModel gcnb;
  std::vector<EpochLog> trace;
  std::vector<MatchedPair> last_pairs;  // audit of the final match round
  double last_tau = 0.0;
};

/// Joint minimization of the weighted four-term objective with minibatch
/// SGD; matching and the full-set terms are refreshed per epoch. `truth`
/// may be null, which leaves the accuracy columns at zero.
JointResult run_joint(const PipelineConfig& cfg, Backbone bb, GcnModel gcnb,
                      const KnowledgeGraph& g, const Matrix& joint_inputs,
                      const DomainDataset& source, const DomainDataset& target,
                      const std::vector<std::int32_t>* truth);

// -- end to end ----------------------------------------------------------

struct PipelineResult {
  StageAResult stage_a;
  JointResult joint;
};

/// Stage A, classifier init, warmup, and the joint stage on one synthetic
/// instance, honoring the ablation switches.
PipelineResult run_pipeline(const PipelineConfig& cfg,
                            const SynthInstance& inst);

}  // namespace osdr
