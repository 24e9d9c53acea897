#pragma once

#include <cstdint>
#include <vector>

#include "osdr/autodiff.hpp"
#include "osdr/gcn.hpp"
#include "osdr/matrix.hpp"

namespace osdr {

enum class DomainTag { Source, Target };

/// A feature dataset for one domain. Labels are empty for the unlabeled
/// target at train time and present for evaluation.
struct DomainDataset {
  Matrix features;                   // n x d
  std::vector<std::int32_t> labels;  // empty when unlabeled
  std::size_t class_count = 0;       // class inventory for this domain
  DomainTag domain = DomainTag::Source;

  bool labeled() const { return !labels.empty(); }
  std::size_t size() const { return features.rows(); }
};

/// Throws unless features are finite and nonempty and any labels fit the
/// class inventory.
void validate_dataset(const DomainDataset& ds);

enum class ExtractorKind { Identity, Affine };

ExtractorKind parse_extractor(const std::string& s);
const char* extractor_name(ExtractorKind k);

/// Feature extractor plus linear classifier over all target classes.
/// The affine extractor keeps the feature dimension and starts as the
/// identity map, so enabling it changes nothing until it trains.
struct Backbone {
  ExtractorKind extractor = ExtractorKind::Identity;
  Parameter phi_w;  // d x d, affine only
  Parameter phi_b;  // 1 x d, affine only
  Parameter psi_w;  // l_t x f
  Parameter psi_b;  // 1 x l_t
  std::vector<std::size_t> known;    // supervised class indices
  std::vector<std::size_t> unknown;  // classes with no source samples

  static Backbone init(std::size_t feature_dim, std::size_t known_count,
                       std::size_t unknown_count,
                       ExtractorKind kind = ExtractorKind::Identity);

  std::size_t class_count() const { return psi_w.value.rows(); }
  std::size_t feature_dim() const { return psi_w.value.cols(); }
  double unknown_ratio() const;  // l_u / l_t

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
};

/// Sets every classifier row (weights + trailing bias coordinate) from the
/// matching class row of z. Throws when a class of bb has no row in z.
void init_classifier_from_gcn(Backbone& bb, const ClassifierWeightSet& z);

/// Classifier rows as one l_t x (f+1) matrix, bias last. The layout the
/// graph network regresses against.
Matrix classifier_rows(const Backbone& bb);

// -- tape path ---------------------------------------------------------

struct BoundBackbone {
  const Backbone* bb = nullptr;
  Tape::Id phi_w = 0, phi_b = 0;  // watched only for the affine extractor
  Tape::Id psi_w = 0, psi_b = 0;
};

BoundBackbone bind(Tape& t, const Backbone& bb);

Tape::Id extract(Tape& t, const BoundBackbone& b, Tape::Id x);
Tape::Id logits(Tape& t, const BoundBackbone& b, Tape::Id x);
Tape::Id responses(Tape& t, const BoundBackbone& b, Tape::Id x);
/// Classifier rows as a tape value (gradients reach psi_w and psi_b).
Tape::Id classifier_rows(Tape& t, const BoundBackbone& b);

/// Mean cross-entropy of the labeled batch.
Tape::Id classification_loss(Tape& t, const BoundBackbone& b, Tape::Id x,
                             const std::vector<std::int32_t>& labels);

/// -log(mean per-sample probability mass on unknown classes), clipped to
/// exactly 0 (constant, no gradient) once that mass reaches l_u / l_t.
/// A fully saturated batch (mass underflowing to zero) yields a large
/// constant instead of infinity.
Tape::Id balance_loss(Tape& t, const BoundBackbone& b, Tape::Id x);

// -- pure evaluation ---------------------------------------------------

Matrix extract(const Backbone& bb, const Matrix& x);
Matrix responses(const Backbone& bb, const Matrix& x);
double classification_loss(const Backbone& bb, const DomainDataset& source);
double balance_loss(const Backbone& bb, const Matrix& target_features);

}  // namespace osdr
