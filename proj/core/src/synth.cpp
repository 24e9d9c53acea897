#include "osdr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "osdr/errors.hpp"

namespace osdr {

namespace {

constexpr double kRidge = 1e-8;
constexpr std::size_t kTreeArity = 3;
constexpr int kMaxRegenerations = 16;

double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Box-Muller on the raw generator stream; two uniforms per draw keeps the
// stream layout independent of the platform's distribution internals.
double gaussian(std::mt19937_64& rng) {
  const double u1 = 1.0 - unit_uniform(rng);  // (0, 1]
  const double u2 = unit_uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols,
                       std::mt19937_64& rng) {
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = gaussian(rng);
  return m;
}

// In-place Fisher-Yates using the raw stream (descending bounded draws).
void shuffle_indices(std::vector<std::uint32_t>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

// Cholesky solve of the ridge normal equations, shared across classes.
// a is symmetric positive definite (n x n), rhs columns are solved in
// place into x.
Matrix cholesky_solve(const Matrix& a, const Matrix& rhs) {
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (i == j) {
        if (s <= 0.0)
          throw ConfigError("synth: normal equations not positive definite");
        l(i, i) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  Matrix x(n, rhs.cols());
  for (std::size_t c = 0; c < rhs.cols(); ++c) {
    // forward: L y = rhs
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = rhs(i, c);
      for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
      y[i] = s / l(i, i);
    }
    // backward: L^T x = y
    for (std::size_t ii = n; ii > 0; --ii) {
      const std::size_t i = ii - 1;
      double s = y[i];
      for (std::size_t k = i + 1; k < n; ++k) s -= l(k, i) * x(k, c);
      x(i, c) = s / l(i, i);
    }
  }
  return x;
}

struct Tree {
  // children[k] lists the node indices under internal node l_t + k.
  std::vector<std::vector<std::uint32_t>> children;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
};

// Balanced arity-3 hierarchy over the shuffled leaf order; one internal
// (auxiliary) node per group, grouped level by level up to a single root.
Tree build_tree(const std::vector<std::uint32_t>& leaves,
                std::uint32_t first_aux) {
  Tree tree;
  std::vector<std::uint32_t> level = leaves;
  std::uint32_t next = first_aux;
  while (level.size() > 1) {
    const std::size_t groups =
        (level.size() + kTreeArity - 1) / kTreeArity;
    const std::size_t base = level.size() / groups;
    const std::size_t extra = level.size() % groups;
    std::vector<std::uint32_t> parents;
    std::size_t at = 0;
    for (std::size_t gidx = 0; gidx < groups; ++gidx) {
      const std::size_t take = base + (gidx < extra ? 1 : 0);
      const std::uint32_t parent = next++;
      tree.children.emplace_back();
      for (std::size_t k = 0; k < take; ++k) {
        tree.children.back().push_back(level[at]);
        tree.edges.emplace_back(parent, level[at]);
        ++at;
      }
      parents.push_back(parent);
    }
    level = std::move(parents);
  }
  return tree;
}

// Leaf classes reachable under graph node `node` (identity for leaves).
void collect_leaves(const Tree& tree, std::uint32_t node, std::uint32_t l_t,
                    std::vector<std::uint32_t>& out) {
  if (node < l_t) {
    out.push_back(node);
    return;
  }
  for (std::uint32_t child : tree.children[node - l_t])
    collect_leaves(tree, child, l_t, out);
}

double source_accuracy(const Matrix& x, const std::vector<std::int32_t>& y,
                       const ClassifierWeightSet& gt) {
  const std::size_t d = x.cols();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    std::size_t best = 0;
    double best_score = -1e300;
    for (std::size_t k = 0; k < gt.class_index.size(); ++k) {
      double s = gt.weights(k, d);
      for (std::size_t c = 0; c < d; ++c) s += gt.weights(k, c) * x(i, c);
      if (s > best_score) {
        best_score = s;
        best = gt.class_index[k];
      }
    }
    if (best == static_cast<std::size_t>(y[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(x.rows());
}

SynthInstance generate_once(const SynthSpec& spec) {
  const std::size_t l_t = spec.total_classes;
  const std::size_t l_u = spec.unknown_count();
  const std::size_t l_s = l_t - l_u;
  const std::size_t d = spec.feature_dim;
  const std::size_t c = spec.semantic_dim;

  std::mt19937_64 rng(spec.seed);

  // Draw order is part of the format: translation direction, semantic
  // projection, leaf shuffle, hierarchical prototype directions (DFS from
  // the root), leaf noise, aux noise, source samples, target samples.
  std::vector<double> translation(d, 0.0);
  for (double& v : translation) v = gaussian(rng);
  {
    const double n = std::max(norm2(translation), 1e-12);
    for (double& v : translation) v *= spec.shift_norm / n;
  }

  Matrix projection = gaussian_matrix(c, d, rng);
  const double proj_scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (double& v : projection.flat()) v *= proj_scale;

  std::vector<std::uint32_t> leaf_order(l_t);
  for (std::uint32_t i = 0; i < l_t; ++i) leaf_order[i] = i;
  shuffle_indices(leaf_order, rng);

  const Tree tree = build_tree(leaf_order, static_cast<std::uint32_t>(l_t));
  const std::size_t n_aux = tree.children.size();
  const std::size_t n_nodes = l_t + n_aux;

  // Prototypes follow the hierarchy: each node's direction is its parent's
  // plus an isotropic kick, renormalized; leaves land on the separation
  // sphere. Tree siblings therefore share feature (and hence semantic)
  // structure, which neighborhood aggregation can exploit.
  Matrix protos(l_t, d);
  const std::uint32_t root = static_cast<std::uint32_t>(n_nodes - 1);
  std::vector<double> dir(d);
  const auto assign_dirs = [&](auto&& self, std::uint32_t node,
                               const std::vector<double>* parent) -> void {
    for (std::size_t k = 0; k < d; ++k) {
      const double kick = gaussian(rng);
      dir[k] = parent ? (*parent)[k] + spec.hierarchy_spread * kick : kick;
    }
    const double n = std::max(norm2(dir), 1e-12);
    for (double& v : dir) v /= n;
    if (node < l_t) {
      for (std::size_t k = 0; k < d; ++k)
        protos(node, k) = spec.separation * dir[k];
      return;
    }
    const std::vector<double> here = dir;
    for (std::uint32_t child : tree.children[node - l_t])
      self(self, child, &here);
  };
  assign_dirs(assign_dirs, root, nullptr);

  // Semantic vectors: projected prototypes for classes, projected
  // descendant-prototype means for auxiliary nodes, noise on both.
  Matrix semantics(n_nodes, c);
  auto project_into = [&](std::span<const double> feat, std::size_t row) {
    for (std::size_t r = 0; r < c; ++r) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += projection(r, k) * feat[k];
      semantics(row, r) = s;
    }
  };
  for (std::size_t i = 0; i < l_t; ++i) project_into(protos.row(i), i);
  for (std::size_t i = 0; i < l_t; ++i)
    for (std::size_t r = 0; r < c; ++r)
      semantics(i, r) += spec.semantic_noise * gaussian(rng);
  std::vector<double> mean_proto(d);
  for (std::size_t a = 0; a < n_aux; ++a) {
    std::vector<std::uint32_t> leaves;
    collect_leaves(tree, static_cast<std::uint32_t>(l_t + a),
                   static_cast<std::uint32_t>(l_t), leaves);
    std::fill(mean_proto.begin(), mean_proto.end(), 0.0);
    for (std::uint32_t leaf : leaves)
      for (std::size_t k = 0; k < d; ++k) mean_proto[k] += protos(leaf, k);
    for (double& v : mean_proto) v /= static_cast<double>(leaves.size());
    project_into(mean_proto, l_t + a);
  }
  for (std::size_t a = 0; a < n_aux; ++a)
    for (std::size_t r = 0; r < c; ++r)
      semantics(l_t + a, r) += spec.semantic_noise * gaussian(rng);

  // Target prototypes: rotate by the shift angle in every disjoint
  // (2k, 2k+1) coordinate plane, then translate.  Spreading one angle
  // across all planes displaces prototypes by 2·sin(angle/2) of their
  // norm while staying orthogonal, so the gap is large yet free of the
  // per-direction bias a lone translation would inject.
  const double angle =
      spec.shift_angle_deg * std::numbers::pi / 180.0;
  const double ca = std::cos(angle), sa = std::sin(angle);
  Matrix target_protos = protos;
  for (std::size_t i = 0; i < l_t; ++i) {
    for (std::size_t k = 0; k + 1 < d; k += 2) {
      const double p0 = protos(i, k), p1 = protos(i, k + 1);
      target_protos(i, k) = ca * p0 - sa * p1;
      target_protos(i, k + 1) = sa * p0 + ca * p1;
    }
    for (std::size_t k = 0; k < d; ++k) target_protos(i, k) += translation[k];
  }

  const std::size_t n_s = l_s * spec.source_per_class;
  const std::size_t n_t = l_t * spec.target_per_class;
  Matrix source_x(n_s, d);
  std::vector<std::int32_t> source_y(n_s);
  for (std::size_t cls = 0, at = 0; cls < l_s; ++cls) {
    for (std::size_t s = 0; s < spec.source_per_class; ++s, ++at) {
      for (std::size_t k = 0; k < d; ++k)
        source_x(at, k) = protos(cls, k) + gaussian(rng);
      source_y[at] = static_cast<std::int32_t>(cls);
    }
  }
  Matrix target_x(n_t, d);
  std::vector<std::int32_t> target_y(n_t);
  for (std::size_t cls = 0, at = 0; cls < l_t; ++cls) {
    for (std::size_t s = 0; s < spec.target_per_class; ++s, ++at) {
      for (std::size_t k = 0; k < d; ++k)
        target_x(at, k) = target_protos(cls, k) + gaussian(rng);
      target_y[at] = static_cast<std::int32_t>(cls);
    }
  }

  // Graph assembly: class nodes first (index = class id), then aux nodes.
  std::vector<std::string> names;
  std::vector<NodeRole> roles;
  names.reserve(n_nodes);
  for (std::size_t i = 0; i < l_t; ++i) {
    names.push_back("class_" + std::to_string(i));
    roles.push_back(i < l_s ? NodeRole::Known : NodeRole::Unknown);
  }
  for (std::size_t a = 0; a < n_aux; ++a) {
    names.push_back("aux_" + std::to_string(a));
    roles.push_back(NodeRole::Aux);
  }
  KnowledgeGraph graph(std::move(names), semantics, roles, tree.edges);

  // Closed-form one-vs-rest ridge classifiers on [X 1] with +-1 targets.
  Matrix design(n_s, d + 1);
  for (std::size_t i = 0; i < n_s; ++i) {
    for (std::size_t k = 0; k < d; ++k) design(i, k) = source_x(i, k);
    design(i, d) = 1.0;
  }
  Matrix normal = matmul(transpose(design), design);
  for (std::size_t k = 0; k < d + 1; ++k) normal(k, k) += kRidge;
  Matrix rhs(d + 1, l_s);
  for (std::size_t cls = 0; cls < l_s; ++cls) {
    for (std::size_t i = 0; i < n_s; ++i) {
      const double t = source_y[i] == static_cast<std::int32_t>(cls) ? 1.0 : -1.0;
      for (std::size_t k = 0; k < d + 1; ++k) rhs(k, cls) += design(i, k) * t;
    }
  }
  Matrix beta = cholesky_solve(normal, rhs);  // (d+1) x l_s

  ClassifierWeightSet gt;
  gt.class_index.resize(l_s);
  gt.weights = Matrix(l_s, d + 1);
  for (std::size_t cls = 0; cls < l_s; ++cls) {
    gt.class_index[cls] = cls;
    for (std::size_t k = 0; k < d + 1; ++k) gt.weights(cls, k) = beta(k, cls);
  }

  SynthInstance inst{
      DomainDataset{std::move(source_x), std::move(source_y), l_s,
                    DomainTag::Source},
      DomainDataset{std::move(target_x), {}, l_t, DomainTag::Target},
      std::move(target_y),
      std::move(graph),
      std::move(gt),
      spec,
      {}};
  validate_dataset(inst.source);
  return inst;
}

}  // namespace

std::size_t SynthSpec::unknown_count() const {
  return static_cast<std::size_t>(
      std::lround(openness * static_cast<double>(total_classes)));
}

void validate(const SynthSpec& spec) {
  if (spec.total_classes < 2)
    throw ConfigError("synth: need at least two classes");
  if (!(spec.openness > 0.0 && spec.openness < 1.0))
    throw ConfigError("synth: openness must be in (0,1)");
  const std::size_t l_u = spec.unknown_count();
  if (l_u < 1 || spec.total_classes - l_u < 1)
    throw ConfigError("synth: openness leaves no known or no unknown class");
  if (spec.feature_dim < 2 || spec.semantic_dim < 2)
    throw ConfigError("synth: dimensions must be at least 2");
  if (spec.source_per_class == 0 || spec.target_per_class == 0)
    throw ConfigError("synth: samples per class must be positive");
  if (spec.semantic_noise < 0.0)
    throw ConfigError("synth: semantic noise must be non-negative");
  if (spec.shift_norm < 0.0 || spec.separation <= 0.0)
    throw ConfigError("synth: shift norm must be >= 0 and separation > 0");
  if (spec.hierarchy_spread <= 0.0)
    throw ConfigError("synth: hierarchy spread must be positive");
}

SynthInstance generate(const SynthSpec& spec) {
  validate(spec);
  SynthSpec attempt = spec;
  std::vector<std::string> notes;
  for (int round = 0; round <= kMaxRegenerations; ++round) {
    SynthInstance inst = generate_once(attempt);
    const double acc =
        source_accuracy(inst.source.features, inst.source.labels, inst.gt_known);
    if (acc >= 0.95) {
      inst.notes = std::move(notes);
      return inst;
    }
    notes.push_back("seed " + std::to_string(attempt.seed) +
                    " rejected: source classifier accuracy " +
                    std::to_string(acc) + " below 0.95");
    attempt.seed = attempt.seed * 6364136223846793005ULL + 1442695040888963407ULL;
  }
  throw ConfigError("synth: could not reach 95% source accuracy after " +
                    std::to_string(kMaxRegenerations + 1) + " attempts");
}

SynthSpec reference_instance(const std::string& name) {
  SynthSpec spec;  // desk defaults double as the published desk-i2awa base
  spec.total_classes = 10;
  spec.openness = 0.2;
  spec.feature_dim = 32;
  spec.source_per_class = 60;
  spec.target_per_class = 60;
  spec.shift_norm = 2.0;
  spec.shift_angle_deg = 15.0;
  spec.separation = 10.0;
  spec.semantic_dim = 16;
  spec.semantic_noise = 0.02;
  spec.seed = 7;
  if (name == "desk-i2awa-02") return spec;
  if (name == "desk-i2awa-04") {
    spec.openness = 0.4;
    return spec;
  }
  if (name == "desk-i2cifar") {
    spec.total_classes = 15;
    spec.openness = 2.0 / 3.0;  // 10 unknown of 15
    return spec;
  }
  throw ConfigError("unknown reference instance '" + name +
                    "' (expected desk-i2awa-02, desk-i2awa-04, desk-i2cifar)");
}

}  // namespace osdr
