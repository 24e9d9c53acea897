#include "osdr/gcn.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "osdr/errors.hpp"

namespace osdr {

namespace {

constexpr double kNormEps = 1e-12;

// Uniform double in [0, 1) from the raw generator stream; avoids the
// unspecified distribution implementations so weight draws are stable.
double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Matrix scaled_uniform(std::size_t rows, std::size_t cols,
                      std::mt19937_64& rng) {
  Matrix w(rows, cols);
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (double& v : w.flat()) v = limit * (2.0 * unit_uniform(rng) - 1.0);
  return w;
}

// Kernel score between two already-transformed vectors. Cosine divides by
// max(norm, eps) so degenerate rows score near zero instead of blowing up,
// matching the tape-side row_normalize semantics.
double kernel_score(AttentionKernel k, std::span<const double> a,
                    std::span<const double> b) {
  switch (k) {
    case AttentionKernel::Cosine: {
      const double na = std::max(norm2(a), kNormEps);
      const double nb = std::max(norm2(b), kNormEps);
      return dot(a, b) / (na * nb);
    }
    case AttentionKernel::NegEuclidean: {
      double s = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
      }
      return -s;
    }
  }
  throw UsageError("unknown attention kernel");
}

std::vector<double> transform_node(const Matrix& w, const Matrix& features,
                                   std::uint32_t j) {
  std::vector<double> out(w.rows(), 0.0);
  const auto row = features.row(j);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < w.cols(); ++c) s += w(r, c) * row[c];
    out[r] = s;
  }
  return out;
}

// Row-stochastic matrix with 1/|neighborhood(i)| on each neighborhood.
Matrix uniform_alpha(const KnowledgeGraph& g) {
  const std::size_t n = g.node_count();
  Matrix a(n, n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto nbhd = g.neighborhood(i);
    const double w = 1.0 / static_cast<double>(nbhd.size());
    for (std::uint32_t j : nbhd) a(i, j) = w;
  }
  return a;
}

// Dense pairwise scores for one head given transformed rows T (n x f_out),
// followed by the neighborhood-masked softmax.
Tape::Id head_alpha(Tape& t, AttentionKernel kernel, const KnowledgeGraph& g,
                    Tape::Id transformed) {
  Tape::Id scores = 0;
  switch (kernel) {
    case AttentionKernel::Cosine: {
      Tape::Id unit = t.row_normalize(transformed, kNormEps);
      scores = t.matmul(unit, t.transpose(unit));
      break;
    }
    case AttentionKernel::NegEuclidean: {
      // -|t_i - t_j|^2 = 2 t_i.t_j - |t_i|^2 - |t_j|^2
      Tape::Id gram = t.matmul(transformed, t.transpose(transformed));
      Tape::Id sq = t.row_sums(t.hadamard(transformed, transformed));
      Tape::Id bi = t.col_broadcast(sq, g.node_count());
      scores = t.sub(t.sub(t.scale(gram, 2.0), bi), t.transpose(bi));
      break;
    }
  }
  return t.masked_softmax_rows(scores, g.attention_mask());
}

Tape::Id head_forward(Tape& t, Tape::Id weight, AttentionKernel kernel,
                      const KnowledgeGraph& g, Tape::Id inputs,
                      bool uniform) {
  Tape::Id transformed = t.matmul(inputs, t.transpose(weight));
  if (uniform) {
    return t.matmul(t.constant(uniform_alpha(g)), transformed);
  }
  return t.matmul(head_alpha(t, kernel, g, transformed), transformed);
}

}  // namespace

AttentionKernel parse_kernel(const std::string& s) {
  if (s == "cosine") return AttentionKernel::Cosine;
  if (s == "neg-euclidean") return AttentionKernel::NegEuclidean;
  throw ConfigError("unknown attention kernel '" + s +
                    "' (expected cosine or neg-euclidean)");
}

const char* kernel_name(AttentionKernel k) {
  return k == AttentionKernel::Cosine ? "cosine" : "neg-euclidean";
}

GcnModel GcnModel::init(const GcnConfig& cfg, std::uint64_t seed) {
  if (cfg.input_dim == 0 || cfg.hidden_dim == 0 || cfg.output_dim == 0)
    throw ConfigError("gcn dimensions must be positive");
  GcnModel m;
  m.config = cfg;
  m.head1a.kernel = m.head1b.kernel = m.head2.kernel = cfg.kernel;
  m.head1a.weight.name = "gcn.head1a";
  m.head1b.weight.name = "gcn.head1b";
  m.head2.weight.name = "gcn.head2";
  m.reseed(seed);
  return m;
}

void GcnModel::reseed(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  head1a.weight.value = scaled_uniform(config.hidden_dim, config.input_dim, rng);
  head1b.weight.value = scaled_uniform(config.hidden_dim, config.input_dim, rng);
  head2.weight.value =
      scaled_uniform(config.output_dim, 2 * config.hidden_dim, rng);
}

std::vector<Parameter*> GcnModel::parameters() {
  return {&head1a.weight, &head1b.weight, &head2.weight};
}

std::vector<const Parameter*> GcnModel::parameters() const {
  return {&head1a.weight, &head1b.weight, &head2.weight};
}

GcnModel uniform_attention_mode(const GcnModel& m) {
  GcnModel u = m;
  u.config.uniform_attention = true;
  return u;
}

std::vector<double> attention_coefficients(const AttentionHead& head,
                                           const KnowledgeGraph& g,
                                           const Matrix& features,
                                           std::uint32_t i, bool uniform) {
  if (features.rows() != g.node_count())
    throw DimensionError("attention: features must have one row per node");
  if (features.cols() != head.weight.value.cols())
    throw DimensionError("attention: feature dim does not match head input");
  const auto nbhd = g.neighborhood(i);
  if (uniform) {
    return std::vector<double>(nbhd.size(), 1.0 / static_cast<double>(nbhd.size()));
  }
  const auto ti = transform_node(head.weight.value, features, i);
  std::vector<double> scores(nbhd.size());
  for (std::size_t k = 0; k < nbhd.size(); ++k) {
    const auto tj = transform_node(head.weight.value, features, nbhd[k]);
    scores[k] = kernel_score(head.kernel, ti, tj);
  }
  const double hi = *std::max_element(scores.begin(), scores.end());
  double total = 0.0;
  for (double& s : scores) {
    s = std::exp(s - hi);
    total += s;
  }
  for (double& s : scores) s /= total;
  return scores;
}

std::vector<double> aggregate(const AttentionHead& head,
                              const KnowledgeGraph& g, const Matrix& features,
                              std::uint32_t i, bool uniform) {
  const auto nbhd = g.neighborhood(i);
  const auto alpha = attention_coefficients(head, g, features, i, uniform);
  std::vector<double> out(head.weight.value.rows(), 0.0);
  for (std::size_t k = 0; k < nbhd.size(); ++k) {
    const auto tj = transform_node(head.weight.value, features, nbhd[k]);
    for (std::size_t r = 0; r < out.size(); ++r) out[r] += alpha[k] * tj[r];
  }
  return out;
}

BoundGcn bind(Tape& t, const GcnModel& m) {
  BoundGcn b;
  b.model = &m;
  b.w1a = t.parameter(m.head1a.weight);
  b.w1b = t.parameter(m.head1b.weight);
  b.w2 = t.parameter(m.head2.weight);
  return b;
}

Tape::Id gcn_forward(Tape& t, const BoundGcn& b, const KnowledgeGraph& g,
                     Tape::Id inputs) {
  const GcnConfig& cfg = b.model->config;
  if (t.value(inputs).rows() != g.node_count())
    throw ConfigError("gcn forward: inputs must have one row per node");
  if (t.value(inputs).cols() != cfg.input_dim)
    throw ConfigError("gcn forward: input dim does not match model config");
  Tape::Id za = head_forward(t, b.w1a, b.model->head1a.kernel, g, inputs,
                             cfg.uniform_attention);
  Tape::Id zb = head_forward(t, b.w1b, b.model->head1b.kernel, g, inputs,
                             cfg.uniform_attention);
  Tape::Id hidden = t.leaky_relu(t.concat_cols(za, zb), cfg.leaky_slope);
  return head_forward(t, b.w2, b.model->head2.kernel, g, hidden,
                      cfg.uniform_attention);
}

Matrix gcn_forward(const GcnModel& m, const KnowledgeGraph& g,
                   const Matrix& features) {
  Tape t;
  BoundGcn b = bind(t, m);
  return t.value(gcn_forward(t, b, g, t.constant(features)));
}

Matrix gcn_forward(const GcnModel& m, const KnowledgeGraph& g) {
  return gcn_forward(m, g, g.vectors());
}

Matrix layer1_hidden(const GcnModel& m, const KnowledgeGraph& g,
                     const Matrix& features) {
  Tape t;
  BoundGcn b = bind(t, m);
  Tape::Id inputs = t.constant(features);
  if (features.cols() != m.config.input_dim)
    throw ConfigError("gcn forward: input dim does not match model config");
  Tape::Id za = head_forward(t, b.w1a, m.head1a.kernel, g, inputs,
                             m.config.uniform_attention);
  Tape::Id zb = head_forward(t, b.w1b, m.head1b.kernel, g, inputs,
                             m.config.uniform_attention);
  return t.value(t.leaky_relu(t.concat_cols(za, zb), m.config.leaky_slope));
}

std::vector<std::pair<std::uint32_t, double>> output_attention(
    const GcnModel& m, const KnowledgeGraph& g, std::uint32_t i) {
  const Matrix hidden = layer1_hidden(m, g, g.vectors());
  const auto alpha = attention_coefficients(m.head2, g, hidden, i,
                                            m.config.uniform_attention);
  const auto nbhd = g.neighborhood(i);
  std::vector<std::pair<std::uint32_t, double>> out(nbhd.size());
  for (std::size_t k = 0; k < nbhd.size(); ++k) out[k] = {nbhd[k], alpha[k]};
  return out;
}

namespace {

void check_supervision(std::size_t n_rows, const ClassifierWeightSet& gt) {
  if (gt.class_index.empty())
    throw UsageError("init loss: no supervised classes");
  if (gt.weights.rows() != gt.class_index.size())
    throw DimensionError("init loss: one ground-truth row per class required");
  for (std::size_t c : gt.class_index)
    if (c >= n_rows)
      throw UsageError("init loss: class index " + std::to_string(c) +
                       " has no output row");
}

}  // namespace

double init_loss(const Matrix& z, const ClassifierWeightSet& gt) {
  check_supervision(z.rows(), gt);
  if (z.cols() != gt.weights.cols())
    throw DimensionError("init loss: output and ground-truth widths differ");
  double total = 0.0;
  for (std::size_t k = 0; k < gt.class_index.size(); ++k) {
    const auto zi = z.row(gt.class_index[k]);
    const auto wi = gt.weights.row(k);
    for (std::size_t c = 0; c < z.cols(); ++c) {
      const double d = zi[c] - wi[c];
      total += d * d;
    }
  }
  return total / static_cast<double>(gt.class_index.size() * z.cols());
}

Tape::Id init_loss(Tape& t, Tape::Id z, const ClassifierWeightSet& gt) {
  check_supervision(t.value(z).rows(), gt);
  Tape::Id picked = t.select_rows(z, gt.class_index);
  return t.mse(picked, t.constant(gt.weights));
}

std::vector<double> train_init(GcnModel& m, const KnowledgeGraph& g,
                               const ClassifierWeightSet& gt,
                               const InitTrainConfig& cfg) {
  m.reseed(cfg.seed);
  std::vector<double> trace;
  trace.reserve(cfg.steps + 1);
  for (std::size_t step = 0; step <= cfg.steps; ++step) {
    Tape t;
    BoundGcn b = bind(t, m);
    Tape::Id z = gcn_forward(t, b, g, t.constant(g.vectors()));
    Tape::Id loss = init_loss(t, z, gt);
    const double lv = t.value(loss)(0, 0);
    if (!std::isfinite(lv) || lv > 1e6)
      throw TrainingDiverged("classifier-regression loss diverged", step);
    trace.push_back(lv);
    if (step == cfg.steps) break;
    GradientMap grads = t.backward(loss);
    sgd_step(m.parameters(), grads, cfg.lr);
  }
  return trace;
}

}  // namespace osdr
