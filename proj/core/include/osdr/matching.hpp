#pragma once

#include <cstdint>
#include <vector>

#include "osdr/autodiff.hpp"
#include "osdr/matrix.hpp"

namespace osdr {

/// One cross-domain pair: a target sample and its selected source sample.
/// resp_dist and pass are filled by filter_pairs.
struct MatchedPair {
  std::size_t target = 0;
  std::size_t source = 0;
  double feat_dist = 0.0;  // L2 between feature rows
  double resp_dist = 0.0;  // L2 between response rows
  bool pass = false;       // resp_dist strictly below tau
};

enum class TauMode { Fixed, Quantile };

TauMode parse_tau_mode(const std::string& s);
const char* tau_mode_name(TauMode m);
enum class Reduction { Sum, Mean };

Reduction parse_reduction(const std::string& s);
const char* reduction_name(Reduction r);

struct SmoConfig {
  TauMode tau_mode = TauMode::Quantile;
  /// Threshold when Fixed; quantile in (0,1] of the current response
  /// distances when Quantile.
  double tau = 0.5;
  Reduction reduction = Reduction::Sum;
  std::size_t rematch_period = 1;  // epochs between rematches
};

void validate(const SmoConfig& cfg);

/// Nearest source (L2) for every target row, ties to the lowest source
/// index, ordered by target index. Blocked over the pair grid for cache
/// locality; results equal the naive double loop exactly.
std::vector<MatchedPair> match_greedy(const Matrix& source_feats,
                                      const Matrix& target_feats);

/// L2 distances between the matched samples' response rows, in pair order.
std::vector<double> response_distances(const std::vector<MatchedPair>& pairs,
                                       const Matrix& source_resp,
                                       const Matrix& target_resp);

/// Threshold for this round: the fixed value, or the nearest-rank quantile
/// of the given response distances.
double resolve_tau(const SmoConfig& cfg, const std::vector<double>& dists);

/// Fills resp_dist on every pair and sets pass = resp_dist < tau.
void filter_pairs(std::vector<MatchedPair>& pairs, const Matrix& source_resp,
                  const Matrix& target_resp, double tau);

/// Sum (or mean) of feature L2 distances over passing pairs; 0 when none
/// pass. The tape form only routes gradients through passing pairs.
double discrepancy_loss(const std::vector<MatchedPair>& pairs,
                        const Matrix& source_feats, const Matrix& target_feats,
                        Reduction reduction);
Tape::Id discrepancy_loss(Tape& t, const std::vector<MatchedPair>& pairs,
                          Tape::Id source_feats, Tape::Id target_feats,
                          Reduction reduction);

struct HungarianResult {
  std::vector<std::size_t> match;  // match[row] = assigned column
  double total_cost = 0.0;
};

/// Minimum-total-cost perfect assignment on a square finite cost matrix
/// (potential-based Kuhn-Munkres, O(n^3)).
HungarianResult match_hungarian(const Matrix& cost);

/// Fraction of pairs whose endpoints carry the same class label.
double match_class_accuracy(const std::vector<MatchedPair>& pairs,
                            const std::vector<std::int32_t>& source_labels,
                            const std::vector<std::int32_t>& target_labels);

struct MatcherBenchmark {
  std::size_t n_source = 0;
  std::size_t n_target = 0;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  double greedy_ms = 0.0;
  double hungarian_ms = 0.0;
  double greedy_acc = 0.0;
  double hungarian_acc = 0.0;
};

/// Times both matchers on a synthetic labeled instance truncated to the
/// requested sizes and scores match correctness by shared class. The
/// Hungarian baseline needs a square instance, so n_s must equal n_t.
MatcherBenchmark benchmark_matchers(std::size_t n_s, std::size_t n_t,
                                    std::size_t dim, std::uint64_t seed);

}  // namespace osdr
