#include "mtl/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mtl/error.hpp"

namespace mtl {

bool all_finite(const Matrix& m) {
  for (double v : m.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

namespace ad {

Precision parse_precision(std::string_view text) {
  if (text == "fp64" || text == "double") return Precision::kDouble;
  if (text == "fp32" || text == "single" || text == "float") return Precision::kSingle;
  fail(ErrorCode::kConfig, "unknown precision mode '" + std::string(text) + "' (expected fp64 or fp32)");
}

const char* to_string(Precision precision) {
  return precision == Precision::kDouble ? "fp64" : "fp32";
}

const Matrix& Var::value() const { return tape_->value_of(index_); }

double Var::scalar() const {
  const Matrix& v = value();
  require(v.rows() == 1 && v.cols() == 1, ErrorCode::kShapeMismatch, "scalar() on non-1x1 node");
  return v[0];
}

Tape::Tape(bool record_gradients, Precision precision)
    : recording_(record_gradients), precision_(precision) {
  nodes_.reserve(256);
}

void Tape::round_if_single(Matrix& m) const {
  if (precision_ != Precision::kSingle) return;
  for (double& v : m.values()) v = static_cast<double>(static_cast<float>(v));
}

Var Tape::make_leaf(Matrix value, bool needs_grad, Parameter* param) {
  round_if_single(value);
  Node node;
  node.value = std::move(value);
  node.needs_grad = recording_ && needs_grad;
  node.param = param;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) { return make_leaf(std::move(value), false, nullptr); }

Var Tape::input(Matrix value) { return make_leaf(std::move(value), true, nullptr); }

Var Tape::parameter(Parameter& param) {
  if (auto it = bound_.find(&param); it != bound_.end()) return Var(this, it->second);
  if (precision_ == Precision::kSingle) {
    Var v = make_leaf(param.value, true, &param);
    bound_.emplace(&param, v.index());
    return v;
  }
  // Parameters must not change while the tape is alive.
  Node node;
  node.borrowed = &param.value;
  node.needs_grad = recording_;
  node.param = &param;
  nodes_.push_back(std::move(node));
  bound_.emplace(&param, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
              std::move(backward));
}

Var Tape::push(Matrix value, std::span<const Var> inputs, BackwardFn backward) {
  round_if_single(value);
  bool needs = false;
  if (recording_) {
    for (const Var& in : inputs) needs = needs || nodes_[in.index()].needs_grad;
  }
  Node node;
  node.value = std::move(value);
  node.needs_grad = needs;
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Matrix& Tape::grad_buffer(std::size_t index) {
  Node& node = nodes_[index];
  const Matrix& value = node.current();
  if (node.grad.empty() && !value.empty()) node.grad = Matrix(value.rows(), value.cols());
  return node.grad;
}

void Tape::backward(Var loss) {
  require(recording_, ErrorCode::kInvalidArgument, "backward() on a tape that does not record gradients");
  require(loss.rows() == 1 && loss.cols() == 1, ErrorCode::kShapeMismatch,
          "backward() requires a 1x1 loss");
  for (Node& node : nodes_) node.grad = Matrix();
  grad_buffer(loss.index())[0] = 1.0;
  for (std::size_t i = loss.index() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.empty()) continue;
    if (node.backward) node.backward(*this, i);
  }
  for (Node& node : nodes_) {
    if (node.param == nullptr || node.grad.empty()) continue;
    Matrix& dst = node.param->grad;
    if (!dst.same_shape(node.grad)) dst = Matrix(node.grad.rows(), node.grad.cols());
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += node.grad[k];
  }
}

Matrix Tape::grad(Var v) const {
  const Node& node = nodes_[v.index()];
  if (node.grad.empty()) return Matrix(node.current().rows(), node.current().cols());
  return node.grad;
}

namespace {

void check_same_tape(Var a, Var b) {
  require(&a.tape() == &b.tape(), ErrorCode::kInvalidArgument, "operands live on different tapes");
}

void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  fail(ErrorCode::kShapeMismatch, std::string(op) + ": incompatible shapes [" +
                                      std::to_string(a.rows()) + "," + std::to_string(a.cols()) +
                                      "] and [" + std::to_string(b.rows()) + "," +
                                      std::to_string(b.cols()) + "]");
}

// out[m,n] += a[m,k] * b[k,n]
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double* o = out.row(i).data();
    const double* ar = a.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ar[p];
      if (av == 0.0) continue;
      const double* br = b.row(p).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += av * br[j];
    }
  }
}

// out[m,n] += a[m,k] * b[n,k]^T
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = a.row(i).data();
    for (std::size_t j = 0; j < n; ++j) {
      const double* br = b.row(j).data();
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ar[p] * br[p];
      out(i, j) += s;
    }
  }
}

// out[k,n] += a[m,k]^T * b[m,n]
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = a.row(i).data();
    const double* br = b.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ar[p];
      if (av == 0.0) continue;
      double* o = out.row(p).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += av * br[j];
    }
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
  Matrix out(av.rows(), bv.cols());
  gemm_nn(av, bv, out);
  const std::size_t ia = a.index(), ib = b.index();
  return a.tape().push(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    if (t.needs_grad(ia)) gemm_nt(g, t.value_of(ib), t.grad_buffer(ia));
    if (t.needs_grad(ib)) gemm_tn(t.value_of(ia), g, t.grad_buffer(ib));
  });
}

Var matmul_transposed(Var a, Var b) {
  check_same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols()) shape_error("matmul_transposed", av, bv);
  Matrix out(av.rows(), bv.rows());
  gemm_nt(av, bv, out);
  const std::size_t ia = a.index(), ib = b.index();
  return a.tape().push(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    if (t.needs_grad(ia)) gemm_nn(g, t.value_of(ib), t.grad_buffer(ia));
    // d(b)[n,k] += g[m,n]^T a[m,k]
    if (t.needs_grad(ib)) gemm_tn(g, t.value_of(ia), t.grad_buffer(ib));
  });
}

Var add(Var a, Var b) {
  check_same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (!av.same_shape(bv)) shape_error("add", av, bv);
  Matrix out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t ia = a.index(), ib = b.index();
  return a.tape().push(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    for (std::size_t idx : {ia, ib}) {
      if (!t.needs_grad(idx)) continue;
      Matrix& d = t.grad_buffer(idx);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  });
}

Var add_row(Var a, Var row) {
  check_same_tape(a, row);
  const Matrix& av = a.value();
  const Matrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) shape_error("add_row", av, rv);
  Matrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto o = out.row(r);
    for (std::size_t c = 0; c < o.size(); ++c) o[c] += rv[c];
  }
  const std::size_t ia = a.index(), ir = row.index();
  return a.tape().push(std::move(out), {a, row}, [ia, ir](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    if (t.needs_grad(ia)) {
      Matrix& d = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
    if (t.needs_grad(ir)) {
      Matrix& d = t.grad_buffer(ir);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto gr = g.row(r);
        for (std::size_t c = 0; c < gr.size(); ++c) d[c] += gr[c];
      }
    }
  });
}

Var scale(Var a, double factor) {
  Matrix out = a.value();
  for (double& v : out.values()) v *= factor;
  const std::size_t ia = a.index();
  return a.tape().push(std::move(out), {a}, [ia, factor](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    Matrix& d = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += factor * g[i];
  });
}

Var mul_scalar(Var a, Var factor) {
  check_same_tape(a, factor);
  const Matrix& fv = factor.value();
  require(fv.rows() == 1 && fv.cols() == 1, ErrorCode::kShapeMismatch, "mul_scalar: factor must be 1x1");
  const double f = fv[0];
  Matrix out = a.value();
  for (double& v : out.values()) v *= f;
  const std::size_t ia = a.index(), iff = factor.index();
  return a.tape().push(std::move(out), {a, factor}, [ia, iff](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    const double fval = t.value_of(iff)[0];
    if (t.needs_grad(ia)) {
      Matrix& d = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += fval * g[i];
    }
    if (t.needs_grad(iff)) {
      const Matrix& av = t.value_of(ia);
      double s = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) s += av[i] * g[i];
      t.grad_buffer(iff)[0] += s;
    }
  });
}

Var relu(Var a) {
  Matrix out = a.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  const std::size_t ia = a.index();
  return a.tape().push(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    const Matrix& x = t.value_of(ia);
    Matrix& d = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > 0.0) d[i] += g[i];
    }
  });
}

Var gelu(Var a) {
  Matrix out = a.value();
  for (double& v : out.values()) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  const std::size_t ia = a.index();
  return a.tape().push(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    const Matrix& x = t.value_of(ia);
    Matrix& d = t.grad_buffer(ia);
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = x[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      d[i] += g[i] * (cdf + v * pdf);
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  check_same_tape(x, gamma);
  check_same_tape(x, beta);
  const Matrix& xv = x.value();
  const std::size_t n = xv.cols();
  if (gamma.rows() != 1 || gamma.cols() != n) shape_error("layer_norm gamma", xv, gamma.value());
  if (beta.rows() != 1 || beta.cols() != n) shape_error("layer_norm beta", xv, beta.value());
  const Matrix& gv = gamma.value();
  const Matrix& bv = beta.value();

  Matrix out(xv.rows(), n);
  Matrix xhat(xv.rows(), n);
  std::vector<double> inv_std(xv.rows());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto xr = xv.row(r);
    double mu = 0.0;
    for (double v : xr) mu += v;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (double v : xr) var += (v - mu) * (v - mu);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t c = 0; c < n; ++c) {
      const double h = (xr[c] - mu) * inv;
      xhat(r, c) = h;
      out(r, c) = gv[c] * h + bv[c];
    }
  }
  const std::size_t ix = x.index(), ig = gamma.index(), ib = beta.index();
  return x.tape().push(
      std::move(out), {x, gamma, beta},
      [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
        const Matrix& g = t.grad_of(self);
        const Matrix& gam = t.value_of(ig);
        const std::size_t rows = g.rows(), n = g.cols();
        if (t.needs_grad(ig)) {
          Matrix& d = t.grad_buffer(ig);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < n; ++c) d[c] += g(r, c) * xhat(r, c);
        }
        if (t.needs_grad(ib)) {
          Matrix& d = t.grad_buffer(ib);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < n; ++c) d[c] += g(r, c);
        }
        if (t.needs_grad(ix)) {
          Matrix& d = t.grad_buffer(ix);
          const double nn = static_cast<double>(n);
          for (std::size_t r = 0; r < rows; ++r) {
            double sum_dh = 0.0, sum_dh_h = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
              const double dh = g(r, c) * gam[c];
              sum_dh += dh;
              sum_dh_h += dh * xhat(r, c);
            }
            for (std::size_t c = 0; c < n; ++c) {
              const double dh = g(r, c) * gam[c];
              d(r, c) += inv_std[r] / nn * (nn * dh - sum_dh - xhat(r, c) * sum_dh_h);
            }
          }
        }
      });
}

namespace {

Var softmax_impl(Var x, std::span<const int> key_mask) {
  const Matrix& xv = x.value();
  const bool masked = !key_mask.empty();
  if (masked) {
    require(key_mask.size() == xv.cols(), ErrorCode::kShapeMismatch,
            "masked_softmax_rows: mask length does not match score columns");
  }
  Matrix out(xv.rows(), xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto xr = xv.row(r);
    auto o = out.row(r);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < xr.size(); ++c) {
      if (masked && key_mask[c] == 0) continue;
      mx = std::max(mx, xr[c]);
    }
    if (!std::isfinite(mx)) continue;  // fully masked row stays zero
    double sum = 0.0;
    for (std::size_t c = 0; c < xr.size(); ++c) {
      if (masked && key_mask[c] == 0) continue;
      o[c] = std::exp(xr[c] - mx);
      sum += o[c];
    }
    for (double& v : o) v /= sum;
  }
  const std::size_t ix = x.index();
  return x.tape().push(std::move(out), {x}, [ix](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    const Matrix& p = t.value_of(self);
    Matrix& d = t.grad_buffer(ix);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) dot += p(r, c) * g(r, c);
      for (std::size_t c = 0; c < g.cols(); ++c) d(r, c) += p(r, c) * (g(r, c) - dot);
    }
  });
}

}  // namespace

Var softmax_rows(Var x) { return softmax_impl(x, {}); }

Var masked_softmax_rows(Var scores, std::span<const int> key_mask) {
  require(!key_mask.empty(), ErrorCode::kShapeMismatch, "masked_softmax_rows: empty mask");
  return softmax_impl(scores, key_mask);
}

Var dropout(Var a, double rate) {
  Rng* rng = a.tape().dropout_rng();
  if (rng == nullptr || rate <= 0.0) return a;
  require(rate < 1.0, ErrorCode::kInvalidArgument, "dropout rate must be < 1");
  const double keep_scale = 1.0 / (1.0 - rate);
  Matrix mask(a.rows(), a.cols());
  for (double& m : mask.values()) m = rng->unit() < rate ? 0.0 : keep_scale;
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  const std::size_t ia = a.index();
  return a.tape().push(std::move(out), {a}, [ia, mask = std::move(mask)](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    Matrix& d = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * mask[i];
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Matrix& av = a.value();
  require(begin + count <= av.rows(), ErrorCode::kShapeMismatch, "slice_rows out of range");
  Matrix out(count, av.cols());
  for (std::size_t r = 0; r < count; ++r) {
    auto src = av.row(begin + r);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  const std::size_t ia = a.index();
  return a.tape().push(std::move(out), {a}, [ia, begin](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    Matrix& d = t.grad_buffer(ia);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto gr = g.row(r);
      auto dr = d.row(begin + r);
      for (std::size_t c = 0; c < gr.size(); ++c) dr[c] += gr[c];
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Matrix& av = a.value();
  require(begin + count <= av.cols(), ErrorCode::kShapeMismatch, "slice_cols out of range");
  Matrix out(av.rows(), count);
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = av(r, begin + c);
  const std::size_t ia = a.index();
  return a.tape().push(std::move(out), {a}, [ia, begin](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    Matrix& d = t.grad_buffer(ia);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) d(r, begin + c) += g(r, c);
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), ErrorCode::kInvalidArgument, "concat_cols of nothing");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    check_same_tape(parts.front(), p);
    if (p.rows() != rows) shape_error("concat_cols", parts.front().value(), p.value());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> indices;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Matrix& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < pv.cols(); ++c) out(r, off + c) = pv(r, c);
    offsets.push_back(off);
    indices.push_back(p.index());
    off += pv.cols();
  }
  return parts.front().tape().push(
      std::move(out), parts, [offsets, indices](Tape& t, std::size_t self) {
        const Matrix& g = t.grad_of(self);
        for (std::size_t k = 0; k < indices.size(); ++k) {
          if (!t.needs_grad(indices[k])) continue;
          Matrix& d = t.grad_buffer(indices[k]);
          for (std::size_t r = 0; r < d.rows(); ++r)
            for (std::size_t c = 0; c < d.cols(); ++c) d(r, c) += g(r, offsets[k] + c);
        }
      });
}

Var gather_rows(Var table, std::span<const int> ids) {
  const Matrix& tv = table.value();
  Matrix out(ids.size(), tv.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    require(ids[r] >= 0 && static_cast<std::size_t>(ids[r]) < tv.rows(), ErrorCode::kShapeMismatch,
            "gather_rows: id " + std::to_string(ids[r]) + " outside table of " +
                std::to_string(tv.rows()) + " rows");
    auto src = tv.row(static_cast<std::size_t>(ids[r]));
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  const std::size_t it = table.index();
  std::vector<int> id_copy(ids.begin(), ids.end());
  return table.tape().push(std::move(out), {table}, [it, id_copy = std::move(id_copy)](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    Matrix& d = t.grad_buffer(it);
    for (std::size_t r = 0; r < id_copy.size(); ++r) {
      auto gr = g.row(r);
      auto dr = d.row(static_cast<std::size_t>(id_copy[r]));
      for (std::size_t c = 0; c < gr.size(); ++c) dr[c] += gr[c];
    }
  });
}

Var element(Var a, std::size_t r, std::size_t c) {
  const Matrix& av = a.value();
  require(r < av.rows() && c < av.cols(), ErrorCode::kShapeMismatch, "element out of range");
  Matrix out(1, 1, av(r, c));
  const std::size_t ia = a.index();
  return a.tape().push(std::move(out), {a}, [ia, r, c](Tape& t, std::size_t self) {
    t.grad_buffer(ia)(r, c) += t.grad_of(self)[0];
  });
}

Var cross_entropy(Var logits, int label) {
  const Matrix& lv = logits.value();
  require(lv.rows() == 1 && lv.cols() >= 2, ErrorCode::kShapeMismatch, "cross_entropy expects 1 x k logits");
  require(label >= 0 && static_cast<std::size_t>(label) < lv.cols(), ErrorCode::kInvalidArgument,
          "cross_entropy label out of range");
  double mx = lv[0];
  for (double v : lv.values()) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : lv.values()) sum += std::exp(v - mx);
  const double log_z = mx + std::log(sum);
  Matrix out(1, 1, log_z - lv[static_cast<std::size_t>(label)]);
  const std::size_t il = logits.index();
  return logits.tape().push(std::move(out), {logits}, [il, label](Tape& t, std::size_t self) {
    const double g = t.grad_of(self)[0];
    const Matrix& x = t.value_of(il);
    double m = x[0];
    for (double v : x.values()) m = std::max(m, v);
    double s = 0.0;
    for (double v : x.values()) s += std::exp(v - m);
    Matrix& d = t.grad_buffer(il);
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const double p = std::exp(x[c] - m) / s;
      d[c] += g * (p - (static_cast<int>(c) == label ? 1.0 : 0.0));
    }
  });
}

Var mean(std::span<const Var> scalars) {
  require(!scalars.empty(), ErrorCode::kInvalidArgument, "mean of no values");
  double s = 0.0;
  std::vector<std::size_t> indices;
  for (const Var& v : scalars) {
    check_same_tape(scalars.front(), v);
    s += v.scalar();
    indices.push_back(v.index());
  }
  const double inv = 1.0 / static_cast<double>(scalars.size());
  Matrix out(1, 1, s * inv);
  return scalars.front().tape().push(std::move(out), scalars, [indices, inv](Tape& t, std::size_t self) {
    const double g = t.grad_of(self)[0];
    for (std::size_t idx : indices) {
      if (t.needs_grad(idx)) t.grad_buffer(idx)[0] += g * inv;
    }
  });
}

}  // namespace ad
}  // namespace mtl
