#include "osdr/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "osdr/errors.hpp"

namespace osdr {

namespace {
// Mass below this is treated as fully saturated rather than fed to log.
constexpr double kTinyMass = 1e-300;
}  // namespace

void validate_dataset(const DomainDataset& ds) {
  if (ds.size() == 0) throw FormatError("dataset: no samples");
  if (ds.class_count == 0) throw FormatError("dataset: class inventory empty");
  if (!ds.features.all_finite())
    throw FormatError("dataset: non-finite feature value");
  if (ds.labeled()) {
    if (ds.labels.size() != ds.size())
      throw FormatError("dataset: label count does not match sample count");
    for (std::int32_t y : ds.labels)
      if (y < 0 || static_cast<std::size_t>(y) >= ds.class_count)
        throw FormatError("dataset: label " + std::to_string(y) +
                          " outside class inventory of " +
                          std::to_string(ds.class_count));
  }
}

ExtractorKind parse_extractor(const std::string& s) {
  if (s == "identity") return ExtractorKind::Identity;
  if (s == "affine") return ExtractorKind::Affine;
  throw ConfigError("unknown extractor '" + s +
                    "' (expected identity or affine)");
}

const char* extractor_name(ExtractorKind k) {
  return k == ExtractorKind::Identity ? "identity" : "affine";
}

Backbone Backbone::init(std::size_t feature_dim, std::size_t known_count,
                        std::size_t unknown_count, ExtractorKind kind) {
  if (feature_dim == 0) throw ConfigError("backbone: feature dim must be > 0");
  if (known_count == 0) throw ConfigError("backbone: need at least one known class");
  Backbone bb;
  bb.extractor = kind;
  if (kind == ExtractorKind::Affine) {
    bb.phi_w = {"phi.w", Matrix::identity(feature_dim)};
    bb.phi_b = {"phi.b", Matrix(1, feature_dim)};
  }
  const std::size_t l_t = known_count + unknown_count;
  bb.psi_w = {"psi.w", Matrix(l_t, feature_dim)};
  bb.psi_b = {"psi.b", Matrix(1, l_t)};
  bb.known.resize(known_count);
  std::iota(bb.known.begin(), bb.known.end(), std::size_t{0});
  bb.unknown.resize(unknown_count);
  std::iota(bb.unknown.begin(), bb.unknown.end(), known_count);
  return bb;
}

double Backbone::unknown_ratio() const {
  return static_cast<double>(unknown.size()) /
         static_cast<double>(class_count());
}

std::vector<Parameter*> Backbone::parameters() {
  std::vector<Parameter*> ps;
  if (extractor == ExtractorKind::Affine) {
    ps.push_back(&phi_w);
    ps.push_back(&phi_b);
  }
  ps.push_back(&psi_w);
  ps.push_back(&psi_b);
  return ps;
}

std::vector<const Parameter*> Backbone::parameters() const {
  std::vector<const Parameter*> ps;
  if (extractor == ExtractorKind::Affine) {
    ps.push_back(&phi_w);
    ps.push_back(&phi_b);
  }
  ps.push_back(&psi_w);
  ps.push_back(&psi_b);
  return ps;
}

void init_classifier_from_gcn(Backbone& bb, const ClassifierWeightSet& z) {
  const std::size_t f = bb.feature_dim();
  if (z.weights.cols() != f + 1)
    throw DimensionError("classifier init: rows must be weights plus bias (" +
                         std::to_string(f + 1) + " values)");
  for (std::size_t cls = 0; cls < bb.class_count(); ++cls) {
    auto it = std::find(z.class_index.begin(), z.class_index.end(), cls);
    if (it == z.class_index.end())
      throw UsageError("classifier init: no row for class " +
                       std::to_string(cls));
    const auto row =
        z.weights.row(static_cast<std::size_t>(it - z.class_index.begin()));
    for (std::size_t c = 0; c < f; ++c) bb.psi_w.value(cls, c) = row[c];
    bb.psi_b.value(0, cls) = row[f];
  }
}

Matrix classifier_rows(const Backbone& bb) {
  const std::size_t f = bb.feature_dim();
  Matrix rows(bb.class_count(), f + 1);
  for (std::size_t cls = 0; cls < bb.class_count(); ++cls) {
    for (std::size_t c = 0; c < f; ++c) rows(cls, c) = bb.psi_w.value(cls, c);
    rows(cls, f) = bb.psi_b.value(0, cls);
  }
  return rows;
}

BoundBackbone bind(Tape& t, const Backbone& bb) {
  BoundBackbone b;
  b.bb = &bb;
  if (bb.extractor == ExtractorKind::Affine) {
    b.phi_w = t.parameter(bb.phi_w);
    b.phi_b = t.parameter(bb.phi_b);
  }
  b.psi_w = t.parameter(bb.psi_w);
  b.psi_b = t.parameter(bb.psi_b);
  return b;
}

Tape::Id extract(Tape& t, const BoundBackbone& b, Tape::Id x) {
  if (t.value(x).cols() != b.bb->feature_dim())
    throw DimensionError("backbone: sample dim does not match extractor");
  if (b.bb->extractor == ExtractorKind::Identity) return x;
  return t.add_row_broadcast(t.matmul(x, t.transpose(b.phi_w)), b.phi_b);
}

Tape::Id logits(Tape& t, const BoundBackbone& b, Tape::Id x) {
  Tape::Id feats = extract(t, b, x);
  return t.add_row_broadcast(t.matmul(feats, t.transpose(b.psi_w)), b.psi_b);
}

Tape::Id responses(Tape& t, const BoundBackbone& b, Tape::Id x) {
  return t.softmax_rows(logits(t, b, x));
}

Tape::Id classifier_rows(Tape& t, const BoundBackbone& b) {
  return t.concat_cols(b.psi_w, t.transpose(b.psi_b));
}

Tape::Id classification_loss(Tape& t, const BoundBackbone& b, Tape::Id x,
                             const std::vector<std::int32_t>& labels) {
  const std::size_t n = t.value(x).rows();
  if (labels.empty()) throw UsageError("classification loss: unlabeled batch");
  if (labels.size() != n)
    throw DimensionError("classification loss: label count mismatch");
  Tape::Id ls = t.log_softmax_rows(logits(t, b, x));
  Matrix onehot(n, b.bb->class_count());
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= b.bb->class_count())
      throw UsageError("classification loss: label " + std::to_string(y) +
                       " outside class inventory");
    onehot(i, static_cast<std::size_t>(y)) = 1.0;
  }
  Tape::Id picked = t.hadamard(ls, t.constant(std::move(onehot)));
  return t.scale(t.sum_all(picked), -1.0 / static_cast<double>(n));
}

Tape::Id balance_loss(Tape& t, const BoundBackbone& b, Tape::Id x) {
  if (b.bb->unknown.empty())
    throw UsageError("balance loss: no unknown classes configured");
  const std::size_t n = t.value(x).rows();
  if (n == 0) throw UsageError("balance loss: empty batch");
  Tape::Id probs = responses(t, b, x);
  Tape::Id mass = t.scale(t.sum_all(t.select_cols(probs, b.bb->unknown)),
                          1.0 / static_cast<double>(n));
  const double mval = t.value(mass)(0, 0);
  if (mval >= b.bb->unknown_ratio()) return t.constant(Matrix(1, 1));
  if (mval < kTinyMass) {
    Matrix saturated(1, 1);
    saturated(0, 0) = -std::log(kTinyMass);
    return t.constant(std::move(saturated));
  }
  return t.scale(t.log(mass), -1.0);
}

Matrix extract(const Backbone& bb, const Matrix& x) {
  Tape t;
  return t.value(extract(t, bind(t, bb), t.constant(x)));
}

Matrix responses(const Backbone& bb, const Matrix& x) {
  Tape t;
  return t.value(responses(t, bind(t, bb), t.constant(x)));
}

double classification_loss(const Backbone& bb, const DomainDataset& source) {
  if (!source.labeled())
    throw UsageError("classification loss: unlabeled dataset");
  Tape t;
  BoundBackbone b = bind(t, bb);
  return t.value(
      classification_loss(t, b, t.constant(source.features), source.labels))(0, 0);
}

double balance_loss(const Backbone& bb, const Matrix& target_features) {
  Tape t;
  BoundBackbone b = bind(t, bb);
  return t.value(balance_loss(t, b, t.constant(target_features)))(0, 0);
}

}  // namespace osdr
