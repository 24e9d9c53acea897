#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "osdr/matrix.hpp"

namespace osdr {

/// A named trainable matrix. Identity (the object address) is what the
/// gradient map is keyed by, so parameters must outlive the tapes that
/// watch them and must not be copied while watched.
struct Parameter {
  std::string name;
  Matrix value;
};

class Tape;

/// Gradients accumulated by Tape::backward, one entry per watched
/// parameter. Parameters that did not influence the loss map to zero
/// matrices of matching shape.
class GradientMap {
 public:
  const Matrix& at(const Parameter& p) const;
  bool contains(const Parameter& p) const;

 private:
  friend class Tape;
  std::unordered_map<const Parameter*, Matrix> grads_;
};

/// Define-by-run gradient tape over Matrix values. Records one node per
/// primitive operation; backward() replays the records in exact reverse
/// order, accumulating additively into parent gradients. A tape is
/// confined to one thread and one training step; build a fresh tape per
/// step.
class Tape {
 public:
  using Id = std::uint32_t;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf carrying a fixed value; receives no gradient entry.
  Id constant(Matrix v);
  /// Leaf bound to a trainable parameter (value copied at watch time).
  Id parameter(const Parameter& p);

  const Matrix& value(Id id) const { return nodes_[id].value; }
  std::size_t node_count() const { return nodes_.size(); }

  // -- primitives -----------------------------------------------------
  Id matmul(Id a, Id b);
  Id transpose(Id a);
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id hadamard(Id a, Id b);
  Id scale(Id a, double k);
  Id leaky_relu(Id a, double negative_slope);
  Id log(Id a);  // entries must be strictly positive
  Id sum_all(Id a);
  Id mean_all(Id a);
  Id select_rows(Id a, std::vector<std::size_t> idx);
  Id select_cols(Id a, std::vector<std::size_t> idx);
  Id concat_cols(Id a, Id b);
  Id add_row_broadcast(Id a, Id row);
  Id row_sums(Id a);
  Id col_broadcast(Id colvec, std::size_t cols);
  /// Rows scaled to unit Euclidean norm; rows with norm below eps are
  /// divided by eps instead (zero rows stay zero).
  Id row_normalize(Id a, double eps = 1e-12);
  /// Column of per-row Euclidean norms. Exact at zero rows; the backward
  /// pass clamps the denominator at eps.
  Id row_norms(Id a, double eps = 1e-12);
  Id softmax_rows(Id a);
  Id log_softmax_rows(Id a);
  /// Row-wise softmax restricted to entries where mask (row-major,
  /// same shape) is nonzero; other entries are exactly zero. Every row
  /// must have at least one masked entry.
  Id masked_softmax_rows(Id a, std::vector<std::uint8_t> mask);

  // -- composites -----------------------------------------------------
  /// Mean of squared element differences over the whole matrix.
  Id mse(Id a, Id b);

  /// Gradient of the scalar at `loss` w.r.t. every watched parameter.
  /// Throws UsageError if loss is not 1x1.
  GradientMap backward(Id loss);

 private:
  struct Node {
    Matrix value;
    // Adds this node's contribution to its parents' gradient buffers.
    std::function<void(Tape&, Id)> back;
    const Parameter* param = nullptr;
  };

  Id push(Matrix value, std::function<void(Tape&, Id)> back);
  Matrix& grad_buf(Id id);  // lazily zero-initialized to value shape

  std::vector<Node> nodes_;
  std::vector<Matrix> grads_;  // live only during backward
};

/// value -= lr * grad for every parameter present in the map.
void sgd_step(std::vector<Parameter*> params, const GradientMap& grads, double lr);

}  // namespace osdr
