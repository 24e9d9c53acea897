#include "osdr/matching.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "osdr/errors.hpp"
#include "osdr/synth.hpp"

namespace osdr {

namespace {

constexpr std::size_t kTargetBlock = 64;
constexpr std::size_t kSourceBlock = 128;

double row_l2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

TauMode parse_tau_mode(const std::string& s) {
  if (s == "fixed") return TauMode::Fixed;
  if (s == "quantile") return TauMode::Quantile;
  throw ConfigError("unknown tau mode '" + s +
                    "' (expected fixed or quantile)");
}

const char* tau_mode_name(TauMode m) {
  return m == TauMode::Fixed ? "fixed" : "quantile";
}

Reduction parse_reduction(const std::string& s) {
  if (s == "sum") return Reduction::Sum;
  if (s == "mean") return Reduction::Mean;
  throw ConfigError("unknown reduction '" + s + "' (expected sum or mean)");
}

const char* reduction_name(Reduction r) {
  return r == Reduction::Sum ? "sum" : "mean";
}

void validate(const SmoConfig& cfg) {
  if (cfg.rematch_period < 1)
    throw ConfigError("smo: rematch period must be >= 1");
  if (cfg.tau_mode == TauMode::Fixed && !(cfg.tau > 0.0))
    throw ConfigError("smo: fixed tau must be > 0");
  if (cfg.tau_mode == TauMode::Quantile &&
      !(cfg.tau > 0.0 && cfg.tau <= 1.0))
    throw ConfigError("smo: tau quantile must be in (0,1]");
}

std::vector<MatchedPair> match_greedy(const Matrix& source_feats,
                                      const Matrix& target_feats) {
  if (source_feats.rows() == 0)
    throw UsageError("match: source set is empty");
  if (source_feats.cols() != target_feats.cols())
    throw DimensionError("match: feature dimensions differ");
  const std::size_t n_s = source_feats.rows();
  const std::size_t n_t = target_feats.rows();
  const std::size_t dim = source_feats.cols();

  std::vector<double> best(n_t, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> arg(n_t, 0);
  // Blocked sweep; within each target the candidate sources still arrive
  // in ascending index order, so the strict < keeps the lowest tied index
  // exactly as the naive double loop would.
  for (std::size_t tb = 0; tb < n_t; tb += kTargetBlock) {
    const std::size_t te = std::min(tb + kTargetBlock, n_t);
    for (std::size_t sb = 0; sb < n_s; sb += kSourceBlock) {
      const std::size_t se = std::min(sb + kSourceBlock, n_s);
      for (std::size_t t = tb; t < te; ++t) {
        const auto trow = target_feats.row(t);
        for (std::size_t s = sb; s < se; ++s) {
          const auto srow = source_feats.row(s);
          double d2 = 0.0;
          for (std::size_t k = 0; k < dim; ++k) {
            const double d = srow[k] - trow[k];
            d2 += d * d;
          }
          if (d2 < best[t]) {
            best[t] = d2;
            arg[t] = s;
          }
        }
      }
    }
  }

  std::vector<MatchedPair> pairs(n_t);
  for (std::size_t t = 0; t < n_t; ++t) {
    pairs[t].target = t;
    pairs[t].source = arg[t];
    pairs[t].feat_dist = std::sqrt(best[t]);
  }
  return pairs;
}

std::vector<double> response_distances(const std::vector<MatchedPair>& pairs,
                                       const Matrix& source_resp,
                                       const Matrix& target_resp) {
  if (source_resp.cols() != target_resp.cols())
    throw DimensionError("filter: response row lengths differ");
  std::vector<double> dists(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i)
    dists[i] = row_l2(source_resp.row(pairs[i].source),
                      target_resp.row(pairs[i].target));
  return dists;
}

double resolve_tau(const SmoConfig& cfg, const std::vector<double>& dists) {
  validate(cfg);
  if (cfg.tau_mode == TauMode::Fixed) return cfg.tau;
  if (dists.empty())
    throw UsageError("smo: no response distances to take a quantile of");
  std::vector<double> sorted = dists;
  std::sort(sorted.begin(), sorted.end());
  const auto rank = static_cast<std::size_t>(
      std::ceil(cfg.tau * static_cast<double>(sorted.size())));
  return sorted[std::max<std::size_t>(rank, 1) - 1];
}

void filter_pairs(std::vector<MatchedPair>& pairs, const Matrix& source_resp,
                  const Matrix& target_resp, double tau) {
  const std::vector<double> dists =
      response_distances(pairs, source_resp, target_resp);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    pairs[i].resp_dist = dists[i];
    pairs[i].pass = dists[i] < tau;
  }
}

double discrepancy_loss(const std::vector<MatchedPair>& pairs,
                        const Matrix& source_feats, const Matrix& target_feats,
                        Reduction reduction) {
  if (source_feats.cols() != target_feats.cols())
    throw DimensionError("discrepancy: feature dimensions differ");
  double total = 0.0;
  std::size_t passing = 0;
  for (const MatchedPair& p : pairs) {
    if (!p.pass) continue;
    total += row_l2(source_feats.row(p.source), target_feats.row(p.target));
    ++passing;
  }
  if (passing == 0) return 0.0;
  return reduction == Reduction::Sum ? total
                                     : total / static_cast<double>(passing);
}

Tape::Id discrepancy_loss(Tape& t, const std::vector<MatchedPair>& pairs,
                          Tape::Id source_feats, Tape::Id target_feats,
                          Reduction reduction) {
  std::vector<std::size_t> sidx, tidx;
  for (const MatchedPair& p : pairs) {
    if (!p.pass) continue;
    sidx.push_back(p.source);
    tidx.push_back(p.target);
  }
  if (sidx.empty()) return t.constant(Matrix(1, 1));
  Tape::Id diff = t.sub(t.select_rows(source_feats, std::move(sidx)),
                        t.select_rows(target_feats, std::move(tidx)));
  Tape::Id norms = t.row_norms(diff);
  return reduction == Reduction::Sum ? t.sum_all(norms) : t.mean_all(norms);
}

HungarianResult match_hungarian(const Matrix& cost) {
  if (cost.rows() == 0) throw UsageError("hungarian: empty cost matrix");
  if (cost.rows() != cost.cols())
    throw UsageError("hungarian: cost matrix must be square");
  if (!cost.all_finite())
    throw UsageError("hungarian: cost matrix must be finite");
  const std::size_t n = cost.rows();
  const double inf = std::numeric_limits<double>::infinity();

  // Potential-based shortest augmenting paths; p[j] is the row matched to
  // column j, column 0 is the virtual staging slot.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  HungarianResult res;
  res.match.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) res.match[p[j] - 1] = j - 1;
  for (std::size_t i = 0; i < n; ++i) res.total_cost += cost(i, res.match[i]);
  return res;
}

double match_class_accuracy(const std::vector<MatchedPair>& pairs,
                            const std::vector<std::int32_t>& source_labels,
                            const std::vector<std::int32_t>& target_labels) {
  if (pairs.empty()) throw UsageError("match accuracy: no pairs");
  std::size_t hits = 0;
  for (const MatchedPair& p : pairs)
    if (source_labels.at(p.source) == target_labels.at(p.target)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

namespace {

// First `take` rows of a seeded shuffle, re-sorted so row order stays
// stable for the matchers.
std::vector<std::size_t> sample_rows(std::size_t available, std::size_t take,
                                     std::mt19937_64& rng) {
  std::vector<std::size_t> idx(available);
  for (std::size_t i = 0; i < available; ++i) idx[i] = i;
  for (std::size_t i = available; i > 1; --i)
    std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng() % i)]);
  idx.resize(take);
  std::sort(idx.begin(), idx.end());
  return idx;
}

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& idx) {
  Matrix out(idx.size(), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto row = m.row(idx[i]);
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

MatcherBenchmark benchmark_matchers(std::size_t n_s, std::size_t n_t,
                                    std::size_t dim, std::uint64_t seed) {
  if (n_s != n_t)
    throw UsageError(
        "benchmark: the assignment baseline needs a square instance "
        "(n_s must equal n_t)");
  if (n_s == 0) throw UsageError("benchmark: need at least one sample");

  SynthSpec spec;
  spec.total_classes = 10;
  spec.openness = 0.2;
  spec.feature_dim = dim;
  spec.seed = seed;
  spec.source_per_class =
      (n_s + spec.known_count() - 1) / spec.known_count();
  spec.target_per_class = (n_t + spec.total_classes - 1) / spec.total_classes;
  SynthInstance inst = generate(spec);

  std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ULL);
  const auto sidx = sample_rows(inst.source.size(), n_s, rng);
  const auto tidx = sample_rows(inst.target.size(), n_t, rng);
  const Matrix source_x = gather_rows(inst.source.features, sidx);
  const Matrix target_x = gather_rows(inst.target.features, tidx);
  std::vector<std::int32_t> source_y(n_s), target_y(n_t);
  for (std::size_t i = 0; i < n_s; ++i) source_y[i] = inst.source.labels[sidx[i]];
  for (std::size_t i = 0; i < n_t; ++i) target_y[i] = inst.truth[tidx[i]];

  MatcherBenchmark report;
  report.n_source = n_s;
  report.n_target = n_t;
  report.dim = dim;
  report.seed = seed;

  using clock = std::chrono::steady_clock;
  const auto g0 = clock::now();
  const auto pairs = match_greedy(source_x, target_x);
  report.greedy_ms =
      std::chrono::duration<double, std::milli>(clock::now() - g0).count();
  report.greedy_acc = match_class_accuracy(pairs, source_y, target_y);

  // Cost-matrix construction is part of the baseline's bill: the global
  // assignment cannot start without the full grid.
  const auto h0 = clock::now();
  Matrix cost(n_t, n_s);
  for (std::size_t i = 0; i < n_t; ++i)
    for (std::size_t j = 0; j < n_s; ++j)
      cost(i, j) = row_l2(target_x.row(i), source_x.row(j));
  const HungarianResult hung = match_hungarian(cost);
  report.hungarian_ms =
      std::chrono::duration<double, std::milli>(clock::now() - h0).count();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n_t; ++i)
    if (source_y[hung.match[i]] == target_y[i]) ++hits;
  report.hungarian_acc = static_cast<double>(hits) / static_cast<double>(n_t);
  return report;
}

}  // namespace osdr
