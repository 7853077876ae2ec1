// Copyright 2026 The SDG-SOD Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sdg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sdg::ops {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

bool grad_needed(std::initializer_list<const Tensor*> inputs) {
  if (!GradTape::current().enabled()) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

Tensor make_out(const char* op, Shape shape, std::vector<double> data, bool requires_grad) {
  for (double v : data) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite result");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

void record(const Tensor& out, const char* op, GradTape::BackwardFn fn) {
  GradTape::current().record(out.node(), op, std::move(fn));
}

// Gradient buffer of an input, or nullptr when it does not take gradients.
std::vector<double>* grad_of(const NodePtr& n) { return n->requires_grad ? &n->ensure_grad() : nullptr; }

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_str(t.shape()));
  }
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_scalar(const char* op, const Tensor& s) {
  if (s.numel() != 1) throw DimensionError(std::string(op) + ": expected scalar, got " + shape_str(s.shape()));
}

void require_finite(const char* op, const Tensor& x) {
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

template <class Fwd, class Deriv>
Tensor unary(const char* op, const Tensor& x, Fwd fwd, Deriv deriv) {
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xd[i]);
  const bool rg = grad_needed({&x});
  Tensor y = make_out(op, x.shape(), std::move(out), rg);
  if (rg) {
    record(y, op, [xn = x.node(), yn = y.node().get(), deriv] {
      auto& gx = xn->ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += yn->grad[i] * deriv(xn->data[i], yn->data[i]);
    });
  }
  return y;
}

struct SplitDims {
  std::size_t outer = 1, extent = 1, inner = 1;
};

SplitDims split_at(const Shape& s, std::size_t axis) {
  SplitDims d;
  for (std::size_t i = 0; i < axis; ++i) d.outer *= s[i];
  d.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) d.inner *= s[i];
  return d;
}

// c[m x n] += a[m x k] * b[k x n]
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[m x n] += a[m x k] * b[n x k]^T
void gemm_abt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      c[i * n + j] += s;
    }
  }
}

// c[k x n] += a[m x k]^T * b[m x n]
void gemm_atb_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_deriv(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct Interp {
  std::size_t i0, i1;
  double frac;
};

std::vector<Interp> interp_table(std::size_t in, std::size_t out) {
  std::vector<Interp> table(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    table[o] = {i0, i1, i1 == i0 ? 0.0 : src - static_cast<double>(i0)};
  }
  return table;
}

}  // namespace

// --- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  add_multiplies(static_cast<std::uint64_t>(m) * k * n);
  const bool rg = grad_needed({&a, &b});
  Tensor c = make_out("matmul", {m, n}, std::move(out), rg);
  if (rg) {
    record(c, "matmul", [an = a.node(), bn = b.node(), cn = c.node().get(), m, k, n] {
      if (auto* ga = grad_of(an)) gemm_abt_acc(cn->grad.data(), bn->data.data(), ga->data(), m, n, k);
      if (auto* gb = grad_of(bn)) gemm_atb_acc(an->data.data(), cn->grad.data(), gb->data(), m, k, n);
    });
  }
  return c;
}

Tensor transpose(const Tensor& x) {
  require_rank("transpose", x, 2);
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(r * c);
  auto xd = x.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xd[i * c + j];
  const bool rg = grad_needed({&x});
  Tensor y = make_out("transpose", {c, r}, std::move(out), rg);
  if (rg) {
    record(y, "transpose", [xn = x.node(), yn = y.node().get(), r, c] {
      auto& gx = xn->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += yn->grad[j * r + i];
    });
  }
  return y;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank("linear", w, 2);
  if (x.rank() < 1 || x.shape().back() != w.dim(0)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(w.shape()));
  }
  const std::size_t in = w.dim(0), out_dim = w.dim(1), rows = x.numel() / in;
  if (b.defined() && (b.rank() != 1 || b.dim(0) != out_dim)) {
    throw DimensionError("linear: bias " + shape_str(b.shape()) + " does not match weight " +
                         shape_str(w.shape()));
  }
  std::vector<double> out(rows * out_dim, 0.0);
  if (b.defined()) {
    auto bd = b.data();
    for (std::size_t r = 0; r < rows; ++r) std::copy(bd.begin(), bd.end(), out.begin() + r * out_dim);
  }
  gemm_acc(x.data().data(), w.data().data(), out.data(), rows, in, out_dim);
  add_multiplies(static_cast<std::uint64_t>(rows) * in * out_dim);
  Shape shape = x.shape();
  shape.back() = out_dim;
  const bool rg = grad_needed({&x, &w, &b});
  Tensor y = make_out("linear", std::move(shape), std::move(out), rg);
  if (rg) {
    NodePtr bn = b.defined() ? b.node() : nullptr;
    record(y, "linear", [xn = x.node(), wn = w.node(), bn, yn = y.node().get(), rows, in, out_dim] {
      const double* gy = yn->grad.data();
      if (auto* gx = grad_of(xn)) gemm_abt_acc(gy, wn->data.data(), gx->data(), rows, out_dim, in);
      if (auto* gw = grad_of(wn)) gemm_atb_acc(xn->data.data(), gy, gw->data(), rows, in, out_dim);
      if (bn) {
        if (auto* gb = grad_of(bn)) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < out_dim; ++j) (*gb)[j] += gy[r * out_dim + j];
        }
      }
    });
  }
  return y;
}

Tensor linear(const Tensor& x, const Tensor& w) { return linear(x, w, Tensor()); }

// --- shape ----------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  const bool rg = grad_needed({&x});
  Tensor y = make_out("reshape", std::move(shape), std::move(out), rg);
  if (rg) {
    record(y, "reshape", [xn = x.node(), yn = y.node().get()] {
      auto& gx = xn->ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += yn->grad[i];
    });
  }
  return y;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) throw DimensionError("concat: axis out of range for " + shape_str(ref));
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == ref[i];
    if (!ok) throw DimensionError("concat: shape " + shape_str(s) + " incompatible with " + shape_str(ref));
    total += s[axis];
  }
  Shape shape = ref;
  shape[axis] = total;
  const SplitDims d = split_at(shape, axis);
  std::vector<double> out(shape_numel(shape));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t block = p.dim(axis) * d.inner;
    auto pd = p.data();
    for (std::size_t o = 0; o < d.outer; ++o) {
      std::copy_n(pd.begin() + o * block, block, out.begin() + o * total * d.inner + offset);
    }
    offset += block;
  }
  bool rg = false;
  if (GradTape::current().enabled()) {
    for (const auto& p : parts) rg = rg || p.requires_grad();
  }
  Tensor y = make_out("concat", std::move(shape), std::move(out), rg);
  if (rg) {
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    record(y, "concat", [nodes, yn = y.node().get(), d, axis, total] {
      std::size_t offset = 0;
      for (const auto& pn : nodes) {
        const std::size_t block = pn->shape[axis] * d.inner;
        if (auto* gp = grad_of(pn)) {
          for (std::size_t o = 0; o < d.outer; ++o) {
            const double* src = yn->grad.data() + o * total * d.inner + offset;
            double* dst = gp->data() + o * block;
            for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
          }
        }
        offset += block;
      }
    });
  }
  return y;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= x.rank() || start + length > x.dim(axis) || length == 0) {
    throw DimensionError("slice: [" + std::to_string(start) + ", +" + std::to_string(length) + ") on axis " +
                         std::to_string(axis) + " out of range for " + shape_str(x.shape()));
  }
  const SplitDims d = split_at(x.shape(), axis);
  Shape shape = x.shape();
  shape[axis] = length;
  std::vector<double> out(shape_numel(shape));
  auto xd = x.data();
  const std::size_t block = length * d.inner;
  for (std::size_t o = 0; o < d.outer; ++o) {
    std::copy_n(xd.begin() + o * d.extent * d.inner + start * d.inner, block, out.begin() + o * block);
  }
  const bool rg = grad_needed({&x});
  Tensor y = make_out("slice", std::move(shape), std::move(out), rg);
  if (rg) {
    record(y, "slice", [xn = x.node(), yn = y.node().get(), d, start, block] {
      auto& gx = xn->ensure_grad();
      for (std::size_t o = 0; o < d.outer; ++o) {
        double* dst = gx.data() + o * d.extent * d.inner + start * d.inner;
        const double* src = yn->grad.data() + o * block;
        for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
      }
    });
  }
  return y;
}

Tensor repeat_leading(const Tensor& x, std::size_t n) {
  if (n == 0) throw DimensionError("repeat_leading: zero copies");
  Shape shape{n};
  shape.insert(shape.end(), x.shape().begin(), x.shape().end());
  std::vector<double> out;
  out.reserve(n * x.numel());
  for (std::size_t i = 0; i < n; ++i) out.insert(out.end(), x.data().begin(), x.data().end());
  const bool rg = grad_needed({&x});
  Tensor y = make_out("repeat_leading", std::move(shape), std::move(out), rg);
  if (rg) {
    record(y, "repeat_leading", [xn = x.node(), yn = y.node().get(), n] {
      auto& gx = xn->ensure_grad();
      const std::size_t m = gx.size();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) gx[j] += yn->grad[i * m + j];
    });
  }
  return y;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  require_rank("gather_rows", table, 2);
  const std::size_t v = table.dim(0), dim = table.dim(1);
  std::vector<double> out(ids.size() * dim);
  auto td = table.data();
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= v) {
      throw ContractError("gather_rows: id " + std::to_string(ids[r]) + " outside table of " + std::to_string(v) +
                          " rows");
    }
    std::copy_n(td.begin() + static_cast<std::size_t>(ids[r]) * dim, dim, out.begin() + r * dim);
  }
  const bool rg = grad_needed({&table});
  Tensor y = make_out("gather_rows", {ids.size(), dim}, std::move(out), rg);
  if (rg) {
    record(y, "gather_rows", [tn = table.node(), yn = y.node().get(), ids, dim] {
      auto& gt = tn->ensure_grad();
      for (std::size_t r = 0; r < ids.size(); ++r)
        for (std::size_t j = 0; j < dim; ++j) gt[static_cast<std::size_t>(ids[r]) * dim + j] += yn->grad[r * dim + j];
    });
  }
  return y;
}

// --- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  const bool rg = grad_needed({&a, &b});
  Tensor y = make_out("add", a.shape(), std::move(out), rg);
  if (rg) {
    record(y, "add", [an = a.node(), bn = b.node(), yn = y.node().get()] {
      for (auto* g : {grad_of(an), grad_of(bn)}) {
        if (!g) continue;
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += yn->grad[i];
      }
    });
  }
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  const bool rg = grad_needed({&a, &b});
  Tensor y = make_out("sub", a.shape(), std::move(out), rg);
  if (rg) {
    record(y, "sub", [an = a.node(), bn = b.node(), yn = y.node().get()] {
      if (auto* ga = grad_of(an))
        for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += yn->grad[i];
      if (auto* gb = grad_of(bn))
        for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] -= yn->grad[i];
    });
  }
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  const bool rg = grad_needed({&a, &b});
  Tensor y = make_out("mul", a.shape(), std::move(out), rg);
  if (rg) {
    record(y, "mul", [an = a.node(), bn = b.node(), yn = y.node().get()] {
      if (auto* ga = grad_of(an))
        for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += yn->grad[i] * bn->data[i];
      if (auto* gb = grad_of(bn))
        for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += yn->grad[i] * an->data[i];
    });
  }
  return y;
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape("div", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] / b[i];
  const bool rg = grad_needed({&a, &b});
  Tensor y = make_out("div", a.shape(), std::move(out), rg);
  if (rg) {
    record(y, "div", [an = a.node(), bn = b.node(), yn = y.node().get()] {
      if (auto* ga = grad_of(an))
        for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += yn->grad[i] / bn->data[i];
      if (auto* gb = grad_of(bn))
        for (std::size_t i = 0; i < gb->size(); ++i)
          (*gb)[i] -= yn->grad[i] * an->data[i] / (bn->data[i] * bn->data[i]);
    });
  }
  return y;
}

Tensor scale(const Tensor& x, double c) {
  return unary("scale", x, [c](double v) { return v * c; }, [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary("add_scalar", x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Tensor mul_by(const Tensor& x, const Tensor& s) {
  require_scalar("mul_by", s);
  const double sv = s[0];
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * sv;
  const bool rg = grad_needed({&x, &s});
  Tensor y = make_out("mul_by", x.shape(), std::move(out), rg);
  if (rg) {
    record(y, "mul_by", [xn = x.node(), sn = s.node(), yn = y.node().get()] {
      const double sv = sn->data[0];
      if (auto* gx = grad_of(xn))
        for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += yn->grad[i] * sv;
      if (auto* gs = grad_of(sn)) {
        double acc = 0.0;
        for (std::size_t i = 0; i < xn->data.size(); ++i) acc += yn->grad[i] * xn->data[i];
        (*gs)[0] += acc;
      }
    });
  }
  return y;
}

Tensor div_by(const Tensor& x, const Tensor& s) {
  require_scalar("div_by", s);
  const double sv = s[0];
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / sv;
  const bool rg = grad_needed({&x, &s});
  Tensor y = make_out("div_by", x.shape(), std::move(out), rg);
  if (rg) {
    record(y, "div_by", [xn = x.node(), sn = s.node(), yn = y.node().get()] {
      const double sv = sn->data[0];
      if (auto* gx = grad_of(xn))
        for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += yn->grad[i] / sv;
      if (auto* gs = grad_of(sn)) {
        double acc = 0.0;
        for (std::size_t i = 0; i < xn->data.size(); ++i) acc += yn->grad[i] * xn->data[i];
        (*gs)[0] -= acc / (sv * sv);
      }
    });
  }
  return y;
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor exp(const Tensor& x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sigmoid(const Tensor& x) {
  return unary("sigmoid", x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& x) {
  return unary(
      "softplus", x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) { return stable_sigmoid(v); });
}

Tensor gelu(const Tensor& x) {
  return unary("gelu", x, gelu_value, [](double v, double) { return gelu_deriv(v); });
}

// --- reductions -----------------------------------------------------------

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  const bool rg = grad_needed({&x});
  Tensor y = make_out("sum", {}, {acc}, rg);
  if (rg) {
    record(y, "sum", [xn = x.node(), yn = y.node().get()] {
      auto& gx = xn->ensure_grad();
      for (double& g : gx) g += yn->grad[0];
    });
  }
  return y;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor max_all(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("max_all: empty tensor");
  auto xd = x.data();
  const auto it = std::max_element(xd.begin(), xd.end());
  const auto idx = static_cast<std::size_t>(it - xd.begin());
  const bool rg = grad_needed({&x});
  Tensor y = make_out("max_all", {}, {*it}, rg);
  if (rg) {
    record(y, "max_all", [xn = x.node(), yn = y.node().get(), idx] { xn->ensure_grad()[idx] += yn->grad[0]; });
  }
  return y;
}

// --- normalization and attention ------------------------------------------

namespace {

void softmax_backward(const Node& y, Node& x, std::size_t rows, std::size_t n) {
  auto& gx = x.ensure_grad();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* yr = y.data.data() + r * n;
    const double* gr = y.grad.data() + r * n;
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += gr[j] * yr[j];
    for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += yr[j] * (gr[j] - dot);
  }
}

// Softmax of row[0..visible) with the remainder left at zero.
void softmax_row(const double* in, double* out, std::size_t visible, std::size_t n) {
  double mx = in[0];
  for (std::size_t j = 1; j < visible; ++j) mx = std::max(mx, in[j]);
  double total = 0.0;
  for (std::size_t j = 0; j < visible; ++j) {
    out[j] = std::exp(in[j] - mx);
    total += out[j];
  }
  for (std::size_t j = 0; j < visible; ++j) out[j] /= total;
  for (std::size_t j = visible; j < n; ++j) out[j] = 0.0;
}

}  // namespace

Tensor softmax_last(const Tensor& x) {
  if (x.rank() == 0 || x.shape().back() == 0) throw DimensionError("softmax_last: empty last axis");
  require_finite("softmax_last", x);
  const std::size_t n = x.shape().back(), rows = x.numel() / n;
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) softmax_row(x.data().data() + r * n, out.data() + r * n, n, n);
  const bool rg = grad_needed({&x});
  Tensor y = make_out("softmax_last", x.shape(), std::move(out), rg);
  if (rg) {
    record(y, "softmax_last",
           [xn = x.node(), yn = y.node().get(), rows, n] { softmax_backward(*yn, *xn, rows, n); });
  }
  return y;
}

Tensor softmax_causal(const Tensor& x) {
  require_rank("softmax_causal", x, 2);
  require_finite("softmax_causal", x);
  const std::size_t rows = x.dim(0), n = x.dim(1);
  if (n < rows) throw DimensionError("softmax_causal: fewer keys than queries in " + shape_str(x.shape()));
  const std::size_t offset = n - rows;
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    softmax_row(x.data().data() + r * n, out.data() + r * n, r + offset + 1, n);
  }
  const bool rg = grad_needed({&x});
  Tensor y = make_out("softmax_causal", x.shape(), std::move(out), rg);
  if (rg) {
    record(y, "softmax_causal",
           [xn = x.node(), yn = y.node().get(), rows, n] { softmax_backward(*yn, *xn, rows, n); });
  }
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (!(eps > 0)) throw ContractError("layer_norm: eps must be positive");
  if (x.rank() == 0) throw DimensionError("layer_norm: scalar input");
  const std::size_t c = x.shape().back();
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw DimensionError("layer_norm: channel count " + std::to_string(c) + " vs gamma " +
                         shape_str(gamma.shape()) + " / beta " + shape_str(beta.shape()));
  }
  const std::size_t rows = x.numel() / c;
  std::vector<double> out(x.numel()), xhat(x.numel()), rstd(rows);
  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xd.data() + r * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xr[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(c);
    if (!std::isfinite(var)) throw NumericError("layer_norm: non-finite variance in row " + std::to_string(r));
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[r * c + j] = (xr[j] - mu) * rstd[r];
      out[r * c + j] = gd[j] * xhat[r * c + j] + bd[j];
    }
  }
  const bool rg = grad_needed({&x, &gamma, &beta});
  Tensor y = make_out("layer_norm", x.shape(), std::move(out), rg);
  if (rg) {
    record(y, "layer_norm",
           [xn = x.node(), gn = gamma.node(), bn = beta.node(), yn = y.node().get(), xhat = std::move(xhat),
            rstd = std::move(rstd), rows, c] {
             const double* gy = yn->grad.data();
             auto* gg = grad_of(gn);
             auto* gb = grad_of(bn);
             auto* gx = grad_of(xn);
             std::vector<double> dxhat(c);
             for (std::size_t r = 0; r < rows; ++r) {
               double mean_d = 0.0, mean_dx = 0.0;
               for (std::size_t j = 0; j < c; ++j) {
                 const std::size_t i = r * c + j;
                 if (gg) (*gg)[j] += gy[i] * xhat[i];
                 if (gb) (*gb)[j] += gy[i];
                 dxhat[j] = gy[i] * gn->data[j];
                 mean_d += dxhat[j];
                 mean_dx += dxhat[j] * xhat[i];
               }
               if (!gx) continue;
               mean_d /= static_cast<double>(c);
               mean_dx /= static_cast<double>(c);
               for (std::size_t j = 0; j < c; ++j) {
                 const std::size_t i = r * c + j;
                 (*gx)[i] += rstd[r] * (dxhat[j] - mean_d - xhat[i] * mean_dx);
               }
             }
           });
  }
  return y;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, int ignore_index) {
  require_rank("cross_entropy", logits, 2);
  require_finite("cross_entropy", logits);
  const std::size_t rows = logits.dim(0), v = logits.dim(1);
  if (targets.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(rows) + " rows");
  }
  std::vector<double> probs(rows * v);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    softmax_row(logits.data().data() + r * v, probs.data() + r * v, v, v);
    if (targets[r] == ignore_index) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= v) {
      throw ContractError("cross_entropy: target " + std::to_string(targets[r]) + " outside vocabulary");
    }
    const double* lr = logits.data().data() + r * v;
    double mx = lr[0];
    for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, lr[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += std::exp(lr[j] - mx);
    total += (std::log(z) + mx) - lr[targets[r]];
    ++count;
  }
  if (count == 0) throw ContractError("cross_entropy: every target is ignored");
  const bool rg = grad_needed({&logits});
  Tensor y = make_out("cross_entropy", {}, {total / static_cast<double>(count)}, rg);
  if (rg) {
    record(y, "cross_entropy",
           [ln = logits.node(), yn = y.node().get(), probs = std::move(probs), targets, ignore_index, rows, v, count] {
             auto& gl = ln->ensure_grad();
             const double g = yn->grad[0] / static_cast<double>(count);
             for (std::size_t r = 0; r < rows; ++r) {
               if (targets[r] == ignore_index) continue;
               for (std::size_t j = 0; j < v; ++j) {
                 const double onehot = static_cast<int>(j) == targets[r] ? 1.0 : 0.0;
                 gl[r * v + j] += g * (probs[r * v + j] - onehot);
               }
             }
           });
  }
  return y;
}

// --- spatial --------------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
  require_rank("conv2d", x, 3);
  require_rank("conv2d", w, 4);
  const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin || w.dim(3) != k) {
    throw DimensionError("conv2d: weight " + shape_str(w.shape()) + " incompatible with input " +
                         shape_str(x.shape()));
  }
  if (b.defined() && b.shape() != Shape{cout}) {
    throw DimensionError("conv2d: bias " + shape_str(b.shape()) + " for " + std::to_string(cout) + " channels");
  }
  if (stride == 0) throw DimensionError("conv2d: zero stride");
  if (h + 2 * pad < k || wd + 2 * pad < k) {
    throw DimensionError("conv2d: input " + shape_str(x.shape()) + " smaller than kernel " + std::to_string(k));
  }
  const std::size_t ho = (h + 2 * pad - k) / stride + 1, wo = (wd + 2 * pad - k) / stride + 1;
  const std::size_t kk = cin * k * k, pix = ho * wo;

  std::vector<double> cols(kk * pix, 0.0);
  auto xd = x.data();
  for (std::size_t ci = 0; ci < cin; ++ci)
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* row = cols.data() + ((ci * k + ky) * k + kx) * pix;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
            row[oy * wo + ox] = xd[(ci * h + static_cast<std::size_t>(iy)) * wd + static_cast<std::size_t>(ix)];
          }
        }
      }

  std::vector<double> out(cout * pix, 0.0);
  if (b.defined()) {
    for (std::size_t co = 0; co < cout; ++co) std::fill_n(out.begin() + co * pix, pix, b[co]);
  }
  gemm_acc(w.data().data(), cols.data(), out.data(), cout, kk, pix);
  add_multiplies(static_cast<std::uint64_t>(cout) * kk * pix);

  const bool rg = grad_needed({&x, &w, &b});
  Tensor y = make_out("conv2d", {cout, ho, wo}, std::move(out), rg);
  if (rg) {
    NodePtr bn = b.defined() ? b.node() : nullptr;
    record(y, "conv2d",
           [xn = x.node(), wn = w.node(), bn, yn = y.node().get(), cols = std::move(cols), cin, h, wd, cout, k,
            stride, pad, ho, wo, kk, pix] {
             const double* gy = yn->grad.data();
             if (auto* gw = grad_of(wn)) gemm_abt_acc(gy, cols.data(), gw->data(), cout, pix, kk);
             if (bn) {
               if (auto* gb = grad_of(bn))
                 for (std::size_t co = 0; co < cout; ++co)
                   for (std::size_t p = 0; p < pix; ++p) (*gb)[co] += gy[co * pix + p];
             }
             auto* gx = grad_of(xn);
             if (!gx) return;
             std::vector<double> dcols(kk * pix, 0.0);
             gemm_atb_acc(wn->data.data(), gy, dcols.data(), cout, kk, pix);
             for (std::size_t ci = 0; ci < cin; ++ci)
               for (std::size_t ky = 0; ky < k; ++ky)
                 for (std::size_t kx = 0; kx < k; ++kx) {
                   const double* row = dcols.data() + ((ci * k + ky) * k + kx) * pix;
                   for (std::size_t oy = 0; oy < ho; ++oy) {
                     const auto iy =
                         static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                     if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                     for (std::size_t ox = 0; ox < wo; ++ox) {
                       const auto ix =
                           static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                       if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                       (*gx)[(ci * h + static_cast<std::size_t>(iy)) * wd + static_cast<std::size_t>(ix)] +=
                           row[oy * wo + ox];
                     }
                   }
                 }
           });
  }
  return y;
}

Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  require_rank("bilinear_resize", x, 3);
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h == 0 || w == 0 || out_h == 0 || out_w == 0) {
    throw DimensionError("bilinear_resize: zero extent resizing " + shape_str(x.shape()) + " to " +
                         std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  auto ty = interp_table(h, out_h);
  auto tx = interp_table(w, out_w);
  std::vector<double> out(c * out_h * out_w);
  auto xd = x.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* src = xd.data() + ch * h * w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const Interp& iy = ty[oy];
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const Interp& ix = tx[ox];
        const double a = src[iy.i0 * w + ix.i0], b = src[iy.i0 * w + ix.i1];
        const double cc = src[iy.i1 * w + ix.i0], d = src[iy.i1 * w + ix.i1];
        const double top = a + ix.frac * (b - a);
        const double bot = cc + ix.frac * (d - cc);
        const double v = top + iy.frac * (bot - top);
        // Rounding can land one ulp outside the corner hull; clamp it back.
        const double lo = std::min({a, b, cc, d}), hi = std::max({a, b, cc, d});
        out[(ch * out_h + oy) * out_w + ox] = std::clamp(v, lo, hi);
      }
    }
  }
  const bool rg = grad_needed({&x});
  Tensor y = make_out("bilinear_resize", {c, out_h, out_w}, std::move(out), rg);
  if (rg) {
    record(y, "bilinear_resize",
           [xn = x.node(), yn = y.node().get(), ty = std::move(ty), tx = std::move(tx), c, h, w, out_h, out_w] {
             auto& gx = xn->ensure_grad();
             for (std::size_t ch = 0; ch < c; ++ch) {
               double* dst = gx.data() + ch * h * w;
               for (std::size_t oy = 0; oy < out_h; ++oy) {
                 const Interp& iy = ty[oy];
                 for (std::size_t ox = 0; ox < out_w; ++ox) {
                   const Interp& ix = tx[ox];
                   const double g = yn->grad[(ch * out_h + oy) * out_w + ox];
                   dst[iy.i0 * w + ix.i0] += g * (1 - iy.frac) * (1 - ix.frac);
                   dst[iy.i0 * w + ix.i1] += g * (1 - iy.frac) * ix.frac;
                   dst[iy.i1 * w + ix.i0] += g * iy.frac * (1 - ix.frac);
                   dst[iy.i1 * w + ix.i1] += g * iy.frac * ix.frac;
                 }
               }
             }
           });
  }
  return y;
}

namespace {

// Window bounds per output position, shared by the two pooling flavours.
struct Window {
  std::size_t y0, y1, x0, x1;
  double count;
};

Tensor pool_with_windows(const char* op, const Tensor& x, std::size_t oh, std::size_t ow,
                         std::vector<Window> windows) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::vector<double> out(c * oh * ow, 0.0);
  auto xd = x.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t o = 0; o < oh * ow; ++o) {
      const Window& win = windows[o];
      double acc = 0.0;
      for (std::size_t yy = win.y0; yy < win.y1; ++yy)
        for (std::size_t xx = win.x0; xx < win.x1; ++xx) acc += xd[(ch * h + yy) * w + xx];
      out[ch * oh * ow + o] = acc / win.count;
    }
  const bool rg = grad_needed({&x});
  Tensor y = make_out(op, {c, oh, ow}, std::move(out), rg);
  if (rg) {
    record(y, op, [xn = x.node(), yn = y.node().get(), windows = std::move(windows), c, h, w, oh, ow] {
      auto& gx = xn->ensure_grad();
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t o = 0; o < oh * ow; ++o) {
          const Window& win = windows[o];
          const double g = yn->grad[ch * oh * ow + o] / win.count;
          for (std::size_t yy = win.y0; yy < win.y1; ++yy)
            for (std::size_t xx = win.x0; xx < win.x1; ++xx) gx[(ch * h + yy) * w + xx] += g;
        }
    });
  }
  return y;
}

}  // namespace

Tensor avg_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t pad, bool count_include_pad) {
  require_rank("avg_pool2d", x, 3);
  const std::size_t h = x.dim(1), w = x.dim(2);
  if (kernel == 0 || stride == 0 || h + 2 * pad < kernel || w + 2 * pad < kernel) {
    throw DimensionError("avg_pool2d: kernel " + std::to_string(kernel) + " does not fit " + shape_str(x.shape()));
  }
  const std::size_t oh = (h + 2 * pad - kernel) / stride + 1, ow = (w + 2 * pad - kernel) / stride + 1;
  std::vector<Window> windows(oh * ow);
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox) {
      const auto sy = static_cast<std::ptrdiff_t>(oy * stride) - static_cast<std::ptrdiff_t>(pad);
      const auto sx = static_cast<std::ptrdiff_t>(ox * stride) - static_cast<std::ptrdiff_t>(pad);
      const auto k = static_cast<std::ptrdiff_t>(kernel);
      Window win;
      win.y0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(sy, 0));
      win.y1 = static_cast<std::size_t>(std::min<std::ptrdiff_t>(sy + k, static_cast<std::ptrdiff_t>(h)));
      win.x0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(sx, 0));
      win.x1 = static_cast<std::size_t>(std::min<std::ptrdiff_t>(sx + k, static_cast<std::ptrdiff_t>(w)));
      win.count = count_include_pad ? static_cast<double>(kernel * kernel)
                                    : static_cast<double>((win.y1 - win.y0) * (win.x1 - win.x0));
      windows[oy * ow + ox] = win;
    }
  return pool_with_windows("avg_pool2d", x, oh, ow, std::move(windows));
}

Tensor adaptive_avg_pool2d(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  require_rank("adaptive_avg_pool2d", x, 3);
  const std::size_t h = x.dim(1), w = x.dim(2);
  if (out_h == 0 || out_w == 0 || h == 0 || w == 0) {
    throw DimensionError("adaptive_avg_pool2d: zero extent for " + shape_str(x.shape()));
  }
  std::vector<Window> windows(out_h * out_w);
  for (std::size_t oy = 0; oy < out_h; ++oy)
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      Window win;
      win.y0 = oy * h / out_h;
      win.y1 = ((oy + 1) * h + out_h - 1) / out_h;
      win.x0 = ox * w / out_w;
      win.x1 = ((ox + 1) * w + out_w - 1) / out_w;
      win.count = static_cast<double>((win.y1 - win.y0) * (win.x1 - win.x0));
      windows[oy * out_w + ox] = win;
    }
  return pool_with_windows("adaptive_avg_pool2d", x, out_h, out_w, std::move(windows));
}

}  // namespace sdg::ops
