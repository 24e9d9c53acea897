#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "osdr/backbone.hpp"
#include "osdr/eval.hpp"
#include "osdr/gcn.hpp"
#include "osdr/matching.hpp"
#include "osdr/pipeline.hpp"

namespace osdr {

/// %.17g rendering used by every text emitter, chosen so doubles survive
/// a write/parse round trip.
std::string fmt_g17(double v);

/// Writes content to path via a temporary file and rename, so a crash
/// never leaves a half-written file at the final name.
void write_file_atomic(const std::string& path, const std::string& content);

// -- feature datasets ----------------------------------------------------

/// Binary dataset: header int32 {n, d, label flag}, then n*d float32
/// features row-major, then n int32 labels when the flag is 1.
void write_dataset_fbin(const std::string& path, const DomainDataset& ds);
DomainDataset read_dataset_fbin(const std::string& path);

/// CSV dataset: header "f0,...,f{d-1}[,label]"; the label column's
/// presence in the header decides whether rows carry labels.
void write_dataset_csv(const std::string& path, const DomainDataset& ds);
DomainDataset read_dataset_csv(const std::string& path);

// -- classifier rows -------------------------------------------------------

/// Text rows "class v0 ... v_f" (bias last), one line per class.
void write_weight_set(const std::string& path, const ClassifierWeightSet& set);
ClassifierWeightSet read_weight_set(const std::string& path);

// -- checkpoints -----------------------------------------------------------

/// Binary graph-network checkpoint (shapes, kernel, flags, raw weights);
/// load reproduces forward outputs bit-exactly.
void save_gcn_checkpoint(const std::string& path, const GcnModel& m);
GcnModel load_gcn_checkpoint(const std::string& path);

struct JointCheckpoint {
  Backbone bb;
  GcnModel gcnb;
  std::uint64_t seed = 0;
  std::uint64_t fingerprint = 0;
};

void save_joint_checkpoint(const std::string& path, const Backbone& bb,
                           const GcnModel& gcnb, std::uint64_t seed,
                           std::uint64_t fingerprint);
JointCheckpoint load_joint_checkpoint(const std::string& path);

// -- run artifacts -----------------------------------------------------

/// Joint trace: epoch,l_cls,l_tran,l_lb,l_d,total,known_acc,unknown_acc,
/// all_acc.
void write_trace_csv(const std::string& path,
                     const std::vector<EpochLog>& trace);

/// Stage-A loss trace: step,loss.
void write_loss_trace_csv(const std::string& path,
                          const std::vector<double>& trace);

/// Pair audit: target_idx,source_idx,feat_dist,resp_dist,pass.
void write_pairs_csv(const std::string& path,
                     const std::vector<MatchedPair>& pairs);

std::string report_to_json(const EvalReport& rep);
EvalReport report_from_json(const std::string& text);
void write_report_json(const std::string& path, const EvalReport& rep);
EvalReport read_report_json(const std::string& path);

/// Aligned three-row accuracy table (known / unknown / all).
std::string report_to_text(const EvalReport& rep);
void write_report_text(const std::string& path, const EvalReport& rep);

std::string benchmark_to_json(const MatcherBenchmark& b);
void write_benchmark_json(const std::string& path, const MatcherBenchmark& b);

}  // namespace osdr
