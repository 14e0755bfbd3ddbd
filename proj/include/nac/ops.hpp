#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nac/tape.hpp"

// Differentiable operations on Tape tensors. Broadcasting is limited to a
// 1xC row vector added across the rows of an RxC matrix; every other shape
// mix is a ShapeError.
namespace nac {

class DegenerateCoefficientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
  }
}

inline void require_tape(const char* op, const Tensor& a, const Tensor& b) {
  if (&a.tape() != &b.tape()) throw std::logic_error(std::string(op) + ": tensors on different tapes");
}

inline void require_column(const char* op, const Matrix& m, Index rows) {
  if (m.cols() != 1 || m.rows() != rows) {
    throw ShapeError(std::string(op) + ": expected " + shape_string(rows, 1) + ", got " + shape_string(m));
  }
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_tape("matmul", a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: shape mismatch " + shape_string(av) + " * " + shape_string(bv));
  }
  Matrix out = av * bv;
  return a.tape().record(std::move(out), {a, b}, [](BackwardContext& ctx) {
    const Matrix& g = ctx.grad_output();
    if (ctx.needs_grad(0)) ctx.input_grad(0).noalias() += g * ctx.input(1).transpose();
    if (ctx.needs_grad(1)) ctx.input_grad(1).noalias() += ctx.input(0).transpose() * g;
  });
}

// s * d with s constant. `s` must outlive the backward pass.
inline Tensor spmm(const SparseMatrix& s, const Tensor& d) {
  Matrix out = s.multiply(d.value());
  const SparseMatrix* sp = &s;
  return d.tape().record(std::move(out), {d}, [sp](BackwardContext& ctx) {
    ctx.input_grad(0) += sp->transpose_multiply(ctx.grad_output());
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_tape("add", a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() == bv.rows() && av.cols() == bv.cols()) {
    return a.tape().record(av + bv, {a, b}, [](BackwardContext& ctx) {
      if (ctx.needs_grad(0)) ctx.input_grad(0) += ctx.grad_output();
      if (ctx.needs_grad(1)) ctx.input_grad(1) += ctx.grad_output();
    });
  }
  if (bv.rows() == 1 && bv.cols() == av.cols()) {
    Matrix out = av.rowwise() + bv.row(0);
    return a.tape().record(std::move(out), {a, b}, [](BackwardContext& ctx) {
      if (ctx.needs_grad(0)) ctx.input_grad(0) += ctx.grad_output();
      if (ctx.needs_grad(1)) ctx.input_grad(1) += ctx.grad_output().colwise().sum();
    });
  }
  throw ShapeError("add: shape mismatch " + shape_string(av) + " vs " + shape_string(bv));
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_tape("sub", a, b);
  detail::require_same_shape("sub", a.value(), b.value());
  return a.tape().record(a.value() - b.value(), {a, b}, [](BackwardContext& ctx) {
    if (ctx.needs_grad(0)) ctx.input_grad(0) += ctx.grad_output();
    if (ctx.needs_grad(1)) ctx.input_grad(1) -= ctx.grad_output();
  });
}

// Elementwise product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_tape("mul", a, b);
  detail::require_same_shape("mul", a.value(), b.value());
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape().record(std::move(out), {a, b}, [](BackwardContext& ctx) {
    const Matrix& g = ctx.grad_output();
    if (ctx.needs_grad(0)) ctx.input_grad(0) += g.cwiseProduct(ctx.input(1));
    if (ctx.needs_grad(1)) ctx.input_grad(1) += g.cwiseProduct(ctx.input(0));
  });
}

inline Tensor scale(const Tensor& a, double factor) {
  return a.tape().record(a.value() * factor, {a}, [factor](BackwardContext& ctx) {
    ctx.input_grad(0) += factor * ctx.grad_output();
  });
}

inline Tensor sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape().record(std::move(out), {a}, [](BackwardContext& ctx) {
    ctx.input_grad(0).array() += ctx.grad_output()(0, 0);
  });
}

// ReLU with subgradient 0 at 0.
inline Tensor relu(const Tensor& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape().record(std::move(out), {a}, [](BackwardContext& ctx) {
    ctx.input_grad(0).array() += (ctx.input(0).array() > 0.0).cast<double>() * ctx.grad_output().array();
  });
}

inline Tensor leaky_relu(const Tensor& a, double slope = 0.2) {
  Matrix out = a.value().unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
  return a.tape().record(std::move(out), {a}, [slope](BackwardContext& ctx) {
    ctx.input_grad(0).array() +=
        ctx.input(0).unaryExpr([slope](double x) { return x > 0.0 ? 1.0 : slope; }).array() *
        ctx.grad_output().array();
  });
}

inline Tensor elu(const Tensor& a) {
  Matrix out = a.value().unaryExpr([](double x) { return x > 0.0 ? x : std::expm1(x); });
  return a.tape().record(std::move(out), {a}, [](BackwardContext& ctx) {
    ctx.input_grad(0).array() +=
        ctx.input(0).unaryExpr([](double x) { return x > 0.0 ? 1.0 : std::exp(x); }).array() *
        ctx.grad_output().array();
  });
}

inline Tensor tanh(const Tensor& a) {
  Matrix out = a.value().array().tanh().matrix();
  return a.tape().record(std::move(out), {a}, [](BackwardContext& ctx) {
    ctx.input_grad(0).array() += (1.0 - ctx.output().array().square()) * ctx.grad_output().array();
  });
}

inline Matrix row_softmax_values(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    out.row(i) = (x.row(i).array() - m).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

inline Tensor row_softmax(const Tensor& a) {
  return a.tape().record(row_softmax_values(a.value()), {a}, [](BackwardContext& ctx) {
    const Matrix& y = ctx.output();
    const Matrix& g = ctx.grad_output();
    const Eigen::VectorXd dots = (g.cwiseProduct(y)).rowwise().sum();
    Matrix& dx = ctx.input_grad(0);
    for (Index i = 0; i < y.rows(); ++i) {
      dx.row(i).array() += y.row(i).array() * (g.row(i).array() - dots(i));
    }
  });
}

inline Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Tensor& p : parts) {
    detail::require_tape("concat_cols", parts.front(), p);
    if (p.rows() != rows) {
      throw ShapeError("concat_cols: row mismatch " + shape_string(parts.front().value()) + " vs " +
                       shape_string(p.value()));
    }
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Index offset = 0;
  for (const Tensor& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return parts.front().tape().record(std::move(out), parts, [](BackwardContext& ctx) {
    Index off = 0;
    for (std::size_t i = 0; off < ctx.output().cols(); ++i) {
      const Index w = ctx.input(i).cols();
      if (ctx.needs_grad(i)) ctx.input_grad(i) += ctx.grad_output().middleCols(off, w);
      off += w;
    }
  });
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  const Tensor parts[] = {a, b};
  return concat_cols(std::span<const Tensor>(parts));
}

inline Tensor select_row(const Tensor& a, Index row) {
  if (row < 0 || row >= a.rows()) {
    throw ShapeError("select_row: row " + std::to_string(row) + " outside " + shape_string(a.value()));
  }
  Matrix out = a.value().row(row);
  return a.tape().record(std::move(out), {a}, [row](BackwardContext& ctx) {
    ctx.input_grad(0).row(row) += ctx.grad_output().row(0);
  });
}

inline constexpr double kDegenerateNorm = 1e-12;

// v / ||v||_2 for a row or column vector, differentiated through the norm.
inline Tensor l2_normalize_vector(const Tensor& v) {
  const Matrix& x = v.value();
  if (x.rows() != 1 && x.cols() != 1) {
    throw ShapeError("l2_normalize_vector: expected a vector, got " + shape_string(x));
  }
  const double norm = x.norm();
  if (!(norm >= kDegenerateNorm)) {
    throw DegenerateCoefficientError("l2_normalize_vector: norm " + std::to_string(norm) +
                                     " below 1e-12; coefficients collapsed to zero");
  }
  return v.tape().record(x / norm, {v}, [norm](BackwardContext& ctx) {
    const Matrix& y = ctx.output();
    const Matrix& g = ctx.grad_output();
    const double dot = g.cwiseProduct(y).sum();
    ctx.input_grad(0) += (g - dot * y) / norm;
  });
}

// Row-wise L2 normalization; rows with norm below eps are divided by eps.
inline Tensor row_l2_normalize(const Tensor& a, double eps = 1e-12) {
  const Matrix& x = a.value();
  Eigen::VectorXd norms = x.rowwise().norm().cwiseMax(eps);
  Matrix out = norms.cwiseInverse().asDiagonal() * x;
  return a.tape().record(std::move(out), {a}, [norms, eps](BackwardContext& ctx) {
    const Matrix& y = ctx.output();
    const Matrix& g = ctx.grad_output();
    Matrix& dx = ctx.input_grad(0);
    for (Index i = 0; i < y.rows(); ++i) {
      if (norms(i) > eps) {
        const double dot = g.row(i).dot(y.row(i));
        dx.row(i) += (g.row(i) - dot * y.row(i)) / norms(i);
      } else {
        dx.row(i) += g.row(i) / eps;
      }
    }
  });
}

// sum_k coeffs[k] * outputs[k]; coeffs is a 1xK or Kx1 tensor.
inline Tensor mix(const Tensor& coeffs, std::span<const Tensor> outputs) {
  const Matrix& c = coeffs.value();
  if (c.size() != static_cast<Index>(outputs.size()) || (c.rows() != 1 && c.cols() != 1)) {
    throw ShapeError("mix: " + std::to_string(outputs.size()) + " outputs but coefficients are " +
                     shape_string(c));
  }
  if (outputs.empty()) throw ShapeError("mix: no outputs");
  Matrix out = Matrix::Zero(outputs.front().rows(), outputs.front().cols());
  std::vector<Tensor> inputs{coeffs};
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    detail::require_tape("mix", coeffs, outputs[k]);
    detail::require_same_shape("mix", out, outputs[k].value());
    out += c(static_cast<Index>(k)) * outputs[k].value();
    inputs.push_back(outputs[k]);
  }
  return coeffs.tape().record(std::move(out), inputs, [](BackwardContext& ctx) {
    const Matrix& g = ctx.grad_output();
    const Matrix& cv = ctx.input(0);
    for (Index k = 0; k < cv.size(); ++k) {
      const std::size_t slot = static_cast<std::size_t>(k) + 1;
      if (ctx.needs_grad(0)) ctx.input_grad(0)(k) += g.cwiseProduct(ctx.input(slot)).sum();
      if (ctx.needs_grad(slot)) ctx.input_grad(slot) += cv(k) * g;
    }
  });
}

// Mean negative log-likelihood of row-softmax(logits) over the masked rows.
inline Tensor cross_entropy(const Tensor& logits, std::span<const Index> labels, std::span<const Index> mask) {
  const Matrix& z = logits.value();
  if (mask.empty()) throw std::invalid_argument("cross_entropy: empty mask");
  if (static_cast<Index>(labels.size()) != z.rows()) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " + shape_string(z));
  }
  std::vector<Index> rows(mask.begin(), mask.end());
  std::vector<Index> targets;
  targets.reserve(rows.size());
  double total = 0.0;
  Matrix probs(static_cast<Index>(rows.size()), z.cols());
  for (std::size_t m = 0; m < rows.size(); ++m) {
    const Index r = rows[m];
    if (r < 0 || r >= z.rows()) throw std::out_of_range("cross_entropy: mask row " + std::to_string(r));
    const Index y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= z.cols()) throw std::out_of_range("cross_entropy: label " + std::to_string(y));
    const double mx = z.row(r).maxCoeff();
    const auto e = (z.row(r).array() - mx).exp();
    const double s = e.sum();
    total += -(z(r, y) - mx - std::log(s));
    probs.row(static_cast<Index>(m)) = (e / s).matrix();
    targets.push_back(y);
  }
  const double n = static_cast<double>(rows.size());
  Matrix out(1, 1);
  out(0, 0) = total / n;
  return logits.tape().record(std::move(out), {logits},
                              [rows = std::move(rows), targets = std::move(targets), probs = std::move(probs),
                               n](BackwardContext& ctx) {
                                const double g = ctx.grad_output()(0, 0) / n;
                                Matrix& dz = ctx.input_grad(0);
                                for (std::size_t m = 0; m < rows.size(); ++m) {
                                  dz.row(rows[m]) += g * probs.row(static_cast<Index>(m));
                                  dz(rows[m], targets[m]) -= g;
                                }
                              });
}

// Inverted dropout. Identity when p == 0.
template <typename Rng>
Tensor dropout(const Tensor& a, double p, Rng& rng) {
  static_assert(Rng::min() == 0 && Rng::max() == std::numeric_limits<std::uint64_t>::max(),
                "dropout expects a full-range 64-bit engine");
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must lie in [0,1)");
  if (p == 0.0) return a;
  // One draw from `rng` seeds a splitmix64 stream; an entry is kept iff the
  // top 53 bits of its word, read as a fraction in [0,1), fall below 1 - p.
  const auto threshold = static_cast<std::uint64_t>((1.0 - p) * 9007199254740992.0);
  const double kept = 1.0 / (1.0 - p);
  std::uint64_t state = static_cast<std::uint64_t>(rng());
  Matrix mask(a.rows(), a.cols());
  for (Index i = 0; i < mask.size(); ++i) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    mask.data()[i] = (z >> 11) < threshold ? kept : 0.0;
  }
  Matrix out = a.value().cwiseProduct(mask);
  return a.tape().record(std::move(out), {a}, [mask = std::move(mask)](BackwardContext& ctx) {
    ctx.input_grad(0) += ctx.grad_output().cwiseProduct(mask);
  });
}

// ---- edge-level ops over a sparsity pattern (values of the pattern ignored).
// Edge e of the pattern sits in row i ("center") and column j ("neighbor").

// out_e = row_term[i] + col_term[j]
inline Tensor edge_pair_sum(const SparseMatrix& pattern, const Tensor& row_term, const Tensor& col_term) {
  detail::require_tape("edge_pair_sum", row_term, col_term);
  detail::require_column("edge_pair_sum", row_term.value(), pattern.rows());
  detail::require_column("edge_pair_sum", col_term.value(), pattern.cols());
  const Matrix& r = row_term.value();
  const Matrix& c = col_term.value();
  Matrix out(pattern.nnz(), 1);
  for (Index i = 0; i < pattern.rows(); ++i) {
    for (Index e = pattern.row_begin(i); e < pattern.row_end(i); ++e) out(e, 0) = r(i, 0) + c(pattern.col(e), 0);
  }
  const SparseMatrix* p = &pattern;
  return row_term.tape().record(std::move(out), {row_term, col_term}, [p](BackwardContext& ctx) {
    const Matrix& g = ctx.grad_output();
    for (Index i = 0; i < p->rows(); ++i) {
      for (Index e = p->row_begin(i); e < p->row_end(i); ++e) {
        if (ctx.needs_grad(0)) ctx.input_grad(0)(i, 0) += g(e, 0);
        if (ctx.needs_grad(1)) ctx.input_grad(1)(p->col(e), 0) += g(e, 0);
      }
    }
  });
}

// out_e = <a_i, b_j>
inline Tensor edge_dot(const SparseMatrix& pattern, const Tensor& a, const Tensor& b) {
  detail::require_tape("edge_dot", a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != pattern.rows() || bv.rows() != pattern.cols() || av.cols() != bv.cols()) {
    throw ShapeError("edge_dot: pattern " + shape_string(pattern.rows(), pattern.cols()) + " with " +
                     shape_string(av) + " and " + shape_string(bv));
  }
  Matrix out(pattern.nnz(), 1);
  for (Index i = 0; i < pattern.rows(); ++i) {
    for (Index e = pattern.row_begin(i); e < pattern.row_end(i); ++e) out(e, 0) = av.row(i).dot(bv.row(pattern.col(e)));
  }
  const SparseMatrix* p = &pattern;
  return a.tape().record(std::move(out), {a, b}, [p](BackwardContext& ctx) {
    const Matrix& g = ctx.grad_output();
    const Matrix& av = ctx.input(0);
    const Matrix& bv = ctx.input(1);
    for (Index i = 0; i < p->rows(); ++i) {
      for (Index e = p->row_begin(i); e < p->row_end(i); ++e) {
        const Index j = p->col(e);
        if (ctx.needs_grad(0)) ctx.input_grad(0).row(i) += g(e, 0) * bv.row(j);
        if (ctx.needs_grad(1)) ctx.input_grad(1).row(j) += g(e, 0) * av.row(i);
      }
    }
  });
}

// Softmax of edge scores within each row of the pattern.
inline Tensor edge_softmax(const SparseMatrix& pattern, const Tensor& scores) {
  detail::require_column("edge_softmax", scores.value(), pattern.nnz());
  const Matrix& s = scores.value();
  Matrix out(pattern.nnz(), 1);
  for (Index i = 0; i < pattern.rows(); ++i) {
    const Index b = pattern.row_begin(i), e = pattern.row_end(i);
    if (b == e) continue;
    const double mx = s.col(0).segment(b, e - b).maxCoeff();
    double total = 0.0;
    for (Index k = b; k < e; ++k) total += (out(k, 0) = std::exp(s(k, 0) - mx));
    for (Index k = b; k < e; ++k) out(k, 0) /= total;
  }
  const SparseMatrix* p = &pattern;
  return scores.tape().record(std::move(out), {scores}, [p](BackwardContext& ctx) {
    const Matrix& y = ctx.output();
    const Matrix& g = ctx.grad_output();
    Matrix& dx = ctx.input_grad(0);
    for (Index i = 0; i < p->rows(); ++i) {
      const Index b = p->row_begin(i), e = p->row_end(i);
      double dot = 0.0;
      for (Index k = b; k < e; ++k) dot += g(k, 0) * y(k, 0);
      for (Index k = b; k < e; ++k) dx(k, 0) += y(k, 0) * (g(k, 0) - dot);
    }
  });
}

// out_i = sum_e weights_e * h_j
inline Tensor edge_aggregate(const SparseMatrix& pattern, const Tensor& weights, const Tensor& h) {
  detail::require_tape("edge_aggregate", weights, h);
  detail::require_column("edge_aggregate", weights.value(), pattern.nnz());
  const Matrix& w = weights.value();
  const Matrix& hv = h.value();
  if (hv.rows() != pattern.cols()) {
    throw ShapeError("edge_aggregate: pattern " + shape_string(pattern.rows(), pattern.cols()) + " with " +
                     shape_string(hv));
  }
  Matrix out = Matrix::Zero(pattern.rows(), hv.cols());
  for (Index i = 0; i < pattern.rows(); ++i) {
    for (Index e = pattern.row_begin(i); e < pattern.row_end(i); ++e) out.row(i) += w(e, 0) * hv.row(pattern.col(e));
  }
  const SparseMatrix* p = &pattern;
  return weights.tape().record(std::move(out), {weights, h}, [p](BackwardContext& ctx) {
    const Matrix& g = ctx.grad_output();
    const Matrix& w = ctx.input(0);
    const Matrix& hv = ctx.input(1);
    for (Index i = 0; i < p->rows(); ++i) {
      for (Index e = p->row_begin(i); e < p->row_end(i); ++e) {
        const Index j = p->col(e);
        if (ctx.needs_grad(0)) ctx.input_grad(0)(e, 0) += g.row(i).dot(hv.row(j));
        if (ctx.needs_grad(1)) ctx.input_grad(1).row(j) += w(e, 0) * g.row(i);
      }
    }
  });
}

// Featurewise max over each row's neighbors; empty rows produce zeros.
// Gradient goes to the first maximizing neighbor.
inline Tensor neighbor_max(const SparseMatrix& pattern, const Tensor& h) {
  const Matrix& hv = h.value();
  if (hv.rows() != pattern.cols()) {
    throw ShapeError("neighbor_max: pattern " + shape_string(pattern.rows(), pattern.cols()) + " with " +
                     shape_string(hv));
  }
  Matrix out = Matrix::Zero(pattern.rows(), hv.cols());
  std::vector<Index> argmax(static_cast<std::size_t>(pattern.rows() * hv.cols()), -1);
  for (Index i = 0; i < pattern.rows(); ++i) {
    for (Index f = 0; f < hv.cols(); ++f) {
      double best = -std::numeric_limits<double>::infinity();
      Index who = -1;
      for (Index e = pattern.row_begin(i); e < pattern.row_end(i); ++e) {
        const double v = hv(pattern.col(e), f);
        if (v > best) {
          best = v;
          who = pattern.col(e);
        }
      }
      if (who >= 0) {
        out(i, f) = best;
        argmax[static_cast<std::size_t>(i * hv.cols() + f)] = who;
      }
    }
  }
  const Index width = hv.cols();
  return h.tape().record(std::move(out), {h}, [argmax = std::move(argmax), width](BackwardContext& ctx) {
    const Matrix& g = ctx.grad_output();
    Matrix& dh = ctx.input_grad(0);
    for (Index i = 0; i < g.rows(); ++i) {
      for (Index f = 0; f < width; ++f) {
        const Index who = argmax[static_cast<std::size_t>(i * width + f)];
        if (who >= 0) dh(who, f) += g(i, f);
      }
    }
  });
}

}  // namespace nac
