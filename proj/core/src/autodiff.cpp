#include "osdr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "osdr/errors.hpp"

namespace osdr {

const Matrix& GradientMap::at(const Parameter& p) const {
  auto it = grads_.find(&p);
  if (it == grads_.end())
    throw UsageError("GradientMap: parameter '" + p.name + "' was not watched");
  return it->second;
}

bool GradientMap::contains(const Parameter& p) const {
  return grads_.count(&p) != 0;
}

Tape::Id Tape::push(Matrix value, std::function<void(Tape&, Id)> back) {
  nodes_.push_back(Node{std::move(value), std::move(back), nullptr});
  return static_cast<Id>(nodes_.size() - 1);
}

Matrix& Tape::grad_buf(Id id) {
  Matrix& g = grads_[id];
  if (g.empty() && !nodes_[id].value.empty())
    g = Matrix(nodes_[id].value.rows(), nodes_[id].value.cols());
  return g;
}

Tape::Id Tape::constant(Matrix v) { return push(std::move(v), nullptr); }

Tape::Id Tape::parameter(const Parameter& p) {
  Id id = push(p.value, nullptr);
  nodes_[id].param = &p;
  return id;
}

Tape::Id Tape::matmul(Id a, Id b) {
  Matrix out = osdr::matmul(value(a), value(b));
  return push(std::move(out), [a, b](Tape& t, Id self) {
    const Matrix& g = t.grads_[self];
    const Matrix& va = t.value(a);
    const Matrix& vb = t.value(b);
    // dA += G * B^T
    {
      Matrix& da = t.grad_buf(a);
      for (std::size_t i = 0; i < va.rows(); ++i)
        for (std::size_t j = 0; j < vb.cols(); ++j) {
          const double gij = g(i, j);
          if (gij == 0.0) continue;
          for (std::size_t k = 0; k < va.cols(); ++k) da(i, k) += gij * vb(k, j);
        }
    }
    // dB += A^T * G
    {
      Matrix& db = t.grad_buf(b);
      for (std::size_t i = 0; i < va.rows(); ++i)
        for (std::size_t k = 0; k < va.cols(); ++k) {
          const double aik = va(i, k);
          if (aik == 0.0) continue;
          for (std::size_t j = 0; j < vb.cols(); ++j) db(k, j) += aik * g(i, j);
        }
    }
  });
}

Tape::Id Tape::transpose(Id a) {
  return push(osdr::transpose(value(a)), [a](Tape& t, Id self) {
    const Matrix& g = t.grads_[self];
    Matrix& da = t.grad_buf(a);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) da(j, i) += g(i, j);
  });
}

Tape::Id Tape::add(Id a, Id b) {
  return push(osdr::add(value(a), value(b)), [a, b](Tape& t, Id self) {
    const Matrix& g = t.grads_[self];
    Matrix& da = t.grad_buf(a);
    Matrix& db = t.grad_buf(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      da.flat()[i] += g.flat()[i];
      db.flat()[i] += g.flat()[i];
    }
  });
}

Tape::Id Tape::sub(Id a, Id b) {
  return push(osdr::sub(value(a), value(b)), [a, b](Tape& t, Id self) {
    const Matrix& g = t.grads_[self];
    Matrix& da = t.grad_buf(a);
    Matrix& db = t.grad_buf(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      da.flat()[i] += g.flat()[i];
      db.flat()[i] -= g.flat()[i];
    }
  });
}

Tape::Id Tape::hadamard(Id a, Id b) {
  return push(osdr::hadamard(value(a), value(b)), [a, b](Tape& t, Id self) {
    const Matrix& g = t.grads_[self];
    const Matrix& va = t.value(a);
    const Matrix& vb = t.value(b);
    Matrix& da = t.grad_buf(a);
    Matrix& db = t.grad_buf(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      da.flat()[i] += g.flat()[i] * vb.flat()[i];
      db.flat()[i] += g.flat()[i] * va.flat()[i];
    }
  });
}

Tape::Id Tape::scale(Id a, double k) {
  return push(osdr::scale(value(a), k), [a, k](Tape& t, Id self) {
    const Matrix& g = t.grads_[self];
    Matrix& da = t.grad_buf(a);
    for (std::size_t i = 0; i < g.size(); ++i) da.flat()[i] += k * g.flat()[i];
  });
}

Tape::Id Tape::leaky_relu(Id a, double negative_slope) {
  Matrix out = value(a);
  for (double& v : out.flat())
    if (v < 0.0) v *= negative_slope;
  return push(std::move(out), [a, negative_slope](Tape& t, Id self) {
    const Matrix& g = t.grads_[self];
    const Matrix& va = t.value(a);
    Matrix& da = t.grad_buf(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      da.flat()[i] += g.flat()[i] * (va.flat()[i] > 0.0 ? 1.0 : negative_slope);
  });
}

Tape::Id Tape::log(Id a) {
  Matrix out = value(a);
  for (double& v : out.flat()) {
    if (!(v > 0.0)) throw Error("log: non-positive entry");
    v = std::log(v);
  }
  return push(std::move(out), [a](Tape& t, Id self) {
    const Matrix& g = t.grads_[self];
    const Matrix& va = t.value(a);
    Matrix& da = t.grad_buf(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      da.flat()[i] += g.flat()[i] / va.flat()[i];
  });
}

Tape::Id Tape::sum_all(Id a) {
  double s = 0.0;
  for (double v : value(a).flat()) s += v;
  Matrix out(1, 1);
  out(0, 0) = s;
  return push(std::move(out), [a](Tape& t, Id self) {
    const double g = t.grads_[self](0, 0);
    Matrix& da = t.grad_buf(a);
    for (double& v : da.flat()) v += g;
  });
}

Tape::Id Tape::mean_all(Id a) {
  const std::size_t n = value(a).size();
  if (n == 0) throw UsageError("mean_all: empty matrix");
  return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

Tape::Id Tape::select_rows(Id a, std::vector<std::size_t> idx) {
  const Matrix& va = value(a);
  Matrix out(idx.size(), va.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= va.rows()) throw UsageError("select_rows: index out of range");
    std::copy(va.row(idx[k]).begin(), va.row(idx[k]).end(), out.row(k).begin());
  }
  return push(std::move(out), [a, idx = std::move(idx)](Tape& t, Id self) {
    const Matrix& g = t.grads_[self];
    Matrix& da = t.grad_buf(a);
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (std::size_t j = 0; j < g.cols(); ++j) da(idx[k], j) += g(k, j);
  });
}

Tape::Id Tape::select_cols(Id a, std::vector<std::size_t> idx) {
  const Matrix& va = value(a);
  Matrix out(va.rows(), idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= va.cols()) throw UsageError("select_cols: index out of range");
    for (std::size_t i = 0; i < va.rows(); ++i) out(i, k) = va(i, idx[k]);
  }
  return push(std::move(out), [a, idx = std::move(idx)](Tape& t, Id self) {
    const Matrix& g = t.grads_[self];
    Matrix& da = t.grad_buf(a);
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (std::size_t i = 0; i < g.rows(); ++i) da(i, idx[k]) += g(i, k);
  });
}

Tape::Id Tape::concat_cols(Id a, Id b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  if (va.rows() != vb.rows()) throw DimensionError("concat_cols: row mismatch");
  Matrix out(va.rows(), va.cols() + vb.cols());
  for (std::size_t i = 0; i < va.rows(); ++i) {
    std::copy(va.row(i).begin(), va.row(i).end(), out.row(i).begin());
    std::copy(vb.row(i).begin(), vb.row(i).end(), out.row(i).begin() + va.cols());
  }
  const std::size_t ca = va.cols();
  return push(std::move(out), [a, b, ca](Tape& t, Id self) {
    const Matrix& g = t.grads_[self];
    Matrix& da = t.grad_buf(a);
    Matrix& db = t.grad_buf(b);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < ca; ++j) da(i, j) += g(i, j);
      for (std::size_t j = ca; j < g.cols(); ++j) db(i, j - ca) += g(i, j);
    }
  });
}

Tape::Id Tape::add_row_broadcast(Id a, Id row) {
  const Matrix& va = value(a);
  const Matrix& vr = value(row);
  if (vr.rows() != 1 || vr.cols() != va.cols())
    throw DimensionError("add_row_broadcast: need 1x" + std::to_string(va.cols()));
  Matrix out = va;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += vr(0, j);
  return push(std::move(out), [a, row](Tape& t, Id self) {
    const Matrix& g = t.grads_[self];
    Matrix& da = t.grad_buf(a);
    Matrix& dr = t.grad_buf(row);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) {
        da(i, j) += g(i, j);
        dr(0, j) += g(i, j);
      }
  });
}

Tape::Id Tape::row_sums(Id a) {
  const Matrix& va = value(a);
  Matrix out(va.rows(), 1);
  for (std::size_t i = 0; i < va.rows(); ++i) {
    double s = 0.0;
    for (double v : va.row(i)) s += v;
    out(i, 0) = s;
  }
  return push(std::move(out), [a](Tape& t, Id self) {
    const Matrix& g = t.grads_[self];
    Matrix& da = t.grad_buf(a);
    for (std::size_t i = 0; i < da.rows(); ++i)
      for (std::size_t j = 0; j < da.cols(); ++j) da(i, j) += g(i, 0);
  });
}

Tape::Id Tape::col_broadcast(Id colvec, std::size_t cols) {
  const Matrix& v = value(colvec);
  if (v.cols() != 1) throw DimensionError("col_broadcast: input must be n x 1");
  Matrix out(v.rows(), cols);
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = 0; j < cols; ++j) out(i, j) = v(i, 0);
  return push(std::move(out), [colvec](Tape& t, Id self) {
    const Matrix& g = t.grads_[self];
    Matrix& dv = t.grad_buf(colvec);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) s += g(i, j);
      dv(i, 0) += s;
    }
  });
}

Tape::Id Tape::row_normalize(Id a, double eps) {
  const Matrix& va = value(a);
  Matrix out = va;
  std::vector<double> denom(va.rows());
  for (std::size_t i = 0; i < va.rows(); ++i) {
    denom[i] = std::max(norm2(va.row(i)), eps);
    for (double& v : out.row(i)) v /= denom[i];
  }
  return push(std::move(out),
              [a, eps, denom = std::move(denom)](Tape& t, Id self) {
                const Matrix& g = t.grads_[self];
                const Matrix& va = t.value(a);
                const Matrix& y = t.value(self);
                Matrix& da = t.grad_buf(a);
                for (std::size_t i = 0; i < va.rows(); ++i) {
                  const double r = denom[i];
                  if (norm2(va.row(i)) > eps) {
                    const double gy = dot(g.row(i), y.row(i));
                    for (std::size_t j = 0; j < va.cols(); ++j)
                      da(i, j) += (g(i, j) - gy * y(i, j)) / r;
                  } else {
                    for (std::size_t j = 0; j < va.cols(); ++j)
                      da(i, j) += g(i, j) / eps;
                  }
                }
              });
}

Tape::Id Tape::row_norms(Id a, double eps) {
  const Matrix& va = value(a);
  Matrix out(va.rows(), 1);
  for (std::size_t i = 0; i < va.rows(); ++i) out(i, 0) = norm2(va.row(i));
  return push(std::move(out), [a, eps](Tape& t, Id self) {
    const Matrix& g = t.grads_[self];
    const Matrix& va = t.value(a);
    const Matrix& nrm = t.value(self);
    Matrix& da = t.grad_buf(a);
    for (std::size_t i = 0; i < va.rows(); ++i) {
      const double r = std::max(nrm(i, 0), eps);
      for (std::size_t j = 0; j < va.cols(); ++j)
        da(i, j) += g(i, 0) * va(i, j) / r;
    }
  });
}

Tape::Id Tape::masked_softmax_rows(Id a, std::vector<std::uint8_t> mask) {
  const Matrix& va = value(a);
  if (mask.size() != va.size())
    throw DimensionError("masked_softmax_rows: mask size mismatch");
  Matrix out(va.rows(), va.cols());
  for (std::size_t i = 0; i < va.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < va.cols(); ++j)
      if (mask[i * va.cols() + j] && va(i, j) > mx) mx = va(i, j);
    if (mx == -std::numeric_limits<double>::infinity())
      throw UsageError("masked_softmax_rows: row " + std::to_string(i) +
                       " has no masked entries");
    double sum = 0.0;
    for (std::size_t j = 0; j < va.cols(); ++j) {
      if (mask[i * va.cols() + j]) {
        out(i, j) = std::exp(va(i, j) - mx);
        sum += out(i, j);
      }
    }
    for (std::size_t j = 0; j < va.cols(); ++j)
      if (mask[i * va.cols() + j]) out(i, j) /= sum;
  }
  return push(std::move(out), [a, mask = std::move(mask)](Tape& t, Id self) {
    const Matrix& g = t.grads_[self];
    const Matrix& y = t.value(self);
    Matrix& da = t.grad_buf(a);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double gy = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j)
        if (mask[i * y.cols() + j]) gy += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j)
        if (mask[i * y.cols() + j]) da(i, j) += y(i, j) * (g(i, j) - gy);
    }
  });
}

Tape::Id Tape::softmax_rows(Id a) {
  std::vector<std::uint8_t> mask(value(a).size(), 1);
  return masked_softmax_rows(a, std::move(mask));
}

Tape::Id Tape::log_softmax_rows(Id a) {
  const Matrix& va = value(a);
  Matrix out(va.rows(), va.cols());
  for (std::size_t i = 0; i < va.rows(); ++i) {
    auto in = va.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (double v : in) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < va.cols(); ++j) out(i, j) = va(i, j) - lse;
  }
  return push(std::move(out), [a](Tape& t, Id self) {
    const Matrix& g = t.grads_[self];
    const Matrix& ls = t.value(self);
    Matrix& da = t.grad_buf(a);
    for (std::size_t i = 0; i < ls.rows(); ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < ls.cols(); ++j) gsum += g(i, j);
      for (std::size_t j = 0; j < ls.cols(); ++j)
        da(i, j) += g(i, j) - std::exp(ls(i, j)) * gsum;
    }
  });
}

Tape::Id Tape::mse(Id a, Id b) {
  Id d = sub(a, b);
  return mean_all(hadamard(d, d));
}

GradientMap Tape::backward(Id loss) {
  const Matrix& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1)
    throw UsageError("backward: loss must be a 1x1 scalar node, got " +
                     std::to_string(lv.rows()) + "x" + std::to_string(lv.cols()));
  grads_.assign(nodes_.size(), Matrix());
  grad_buf(loss)(0, 0) = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (grads_[i].empty()) continue;  // node did not influence the loss
    if (nodes_[i].back) nodes_[i].back(*this, static_cast<Id>(i));
  }
  GradientMap out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].param == nullptr) continue;
    Matrix& g = grad_buf(static_cast<Id>(i));
    auto [it, inserted] = out.grads_.emplace(nodes_[i].param, g);
    if (!inserted) it->second = osdr::add(it->second, g);
  }
  grads_.clear();
  return out;
}

void sgd_step(std::vector<Parameter*> params, const GradientMap& grads, double lr) {
  for (Parameter* p : params) {
    if (!grads.contains(*p)) continue;
    const Matrix& g = grads.at(*p);
    for (std::size_t i = 0; i < p->value.size(); ++i)
      p->value.flat()[i] -= lr * g.flat()[i];
  }
}

}  // namespace osdr
