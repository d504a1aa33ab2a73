// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include "patchforge/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>
#include <utility>

#include <Eigen/Dense>
#include <fmt/format.h>

namespace patchforge {

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;
  bool grad_alloc = false;
  bool requires_grad = false;
  std::string name;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backfn;

  Tensor& ensure_grad() {
    if (!grad_alloc) {
      grad = Tensor(value.shape());
      grad_alloc = true;
    }
    return grad;
  }
};

}  // namespace detail

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

namespace {

thread_local bool g_grad_enabled = true;

NodePtr make_leaf(Tensor v, bool requires_grad, std::string name) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = requires_grad;
  n->name = std::move(name);
  return n;
}

NodePtr make_op(Tensor v, std::vector<NodePtr> parents, std::function<void(Node&)> backfn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  if (g_grad_enabled && rg) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backfn = std::move(backfn);
  }
  return n;
}

const Tensor& val(const Var& v) { return v.node()->value; }

[[noreturn]] void shape_error(const char* op, const Var& a, const Var& b) {
  throw std::invalid_argument(fmt::format("{}: incompatible shapes {} and {}", op, shape_str(a.shape()), shape_str(b.shape())));
}

// Right-aligned broadcast plan for binary elementwise ops.
struct BcastPlan {
  Shape out_shape;
  std::vector<int64_t> a_strides, b_strides;  // 0 on broadcast dims
  int64_t n = 0;
};

BcastPlan plan_bcast(const char* op, const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const size_t r = std::max(sa.size(), sb.size());
  Shape out(r, 1);
  for (size_t i = 0; i < r; ++i) {
    const int64_t da = i < r - sa.size() ? 1 : sa[i - (r - sa.size())];
    const int64_t db = i < r - sb.size() ? 1 : sb[i - (r - sb.size())];
    if (da != db && da != 1 && db != 1) shape_error(op, a, b);
    out[i] = std::max(da, db);
  }
  auto strided = [&](const Shape& s) {
    std::vector<int64_t> st(r, 0);
    auto own = strides_of(s);
    for (size_t i = 0; i < s.size(); ++i) {
      const size_t oi = i + (r - s.size());
      st[oi] = s[i] == 1 ? 0 : own[i];
    }
    return st;
  };
  BcastPlan p;
  p.out_shape = out;
  p.a_strides = strided(sa);
  p.b_strides = strided(sb);
  p.n = shape_numel(out);
  return p;
}

// Odometer walk over the broadcast output; fn(out_i, a_i, b_i).
template <typename Fn>
void for_each_bcast(const BcastPlan& p, Fn&& fn) {
  const size_t r = p.out_shape.size();
  if (r == 0) {
    fn(0, 0, 0);
    return;
  }
  std::vector<int64_t> idx(r, 0);
  int64_t oa = 0;
  int64_t ob = 0;
  for (int64_t i = 0; i < p.n; ++i) {
    fn(i, oa, ob);
    for (size_t d = r; d-- > 0;) {
      ++idx[d];
      oa += p.a_strides[d];
      ob += p.b_strides[d];
      if (idx[d] < p.out_shape[d]) break;
      oa -= p.a_strides[d] * p.out_shape[d];
      ob -= p.b_strides[d] * p.out_shape[d];
      idx[d] = 0;
    }
  }
}

bool same_shape(const Var& a, const Var& b) { return a.shape() == b.shape(); }

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

}  // namespace

// ---- Var ----

Var::Var(Tensor value, bool requires_grad, std::string name)
    : node_(make_leaf(std::move(value), requires_grad, std::move(name))) {}

const Tensor& Var::value() const { return node_->value; }
Tensor& Var::value() { return node_->value; }

const Tensor& Var::grad() const {
  static const Tensor kEmpty;
  if (!node_) return kEmpty;
  // Materialize zeros lazily so callers can always read a grad.
  if (!node_->grad_alloc) node_->ensure_grad();
  return node_->grad;
}

bool Var::has_grad() const { return node_ && node_->grad_alloc; }
bool Var::requires_grad() const { return node_ && node_->requires_grad; }
void Var::set_requires_grad(bool rg) { node_->requires_grad = rg; }
const std::string& Var::name() const { return node_->name; }
void Var::set_name(std::string name) { node_->name = std::move(name); }

void Var::zero_grad() {
  if (node_) {
    node_->grad = Tensor();
    node_->grad_alloc = false;
  }
}

const void* Var::id() const { return node_.get(); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

void backward(const Var& root) {
  if (!root.defined()) throw std::logic_error("backward() on undefined Var");
  if (root.numel() != 1) {
    throw std::logic_error(fmt::format("backward() root must be scalar, got shape {}", shape_str(root.shape())));
  }
  NodePtr r = root.node();
  if (!r->requires_grad) return;

  // Iterative post-order DFS.
  std::vector<NodePtr> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<NodePtr, size_t>> stack;
  stack.emplace_back(r, 0);
  visited.insert(r.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodePtr p = node->parents[next++];
      if (p->requires_grad && !visited.count(p.get())) {
        visited.insert(p.get());
        stack.emplace_back(std::move(p), 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  r->ensure_grad().fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node& n = **it;
    if (n.backfn && n.grad_alloc) n.backfn(n);
  }
}

// ---- elementwise / broadcast ----

namespace {

template <typename Fwd, typename Bwd>
Var bcast_binop(const char* name, const Var& a, const Var& b, Fwd fwd, Bwd bwd) {
  if (same_shape(a, b)) {
    Tensor out(a.shape());
    const double* pa = val(a).data();
    const double* pb = val(b).data();
    double* po = out.data();
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i], pb[i]);
    return Var(make_op(std::move(out), {a.node(), b.node()}, [bwd](Node& self) {
      const int64_t n = self.value.numel();
      const Tensor& g = self.grad;
      Node& na = *self.parents[0];
      Node& nb = *self.parents[1];
      const double* pa = na.value.data();
      const double* pb = nb.value.data();
      double* ga = na.requires_grad ? na.ensure_grad().data() : nullptr;
      double* gb = nb.requires_grad ? nb.ensure_grad().data() : nullptr;
      for (int64_t i = 0; i < n; ++i) {
        double da, db;
        bwd(g[i], pa[i], pb[i], da, db);
        if (ga) ga[i] += da;
        if (gb) gb[i] += db;
      }
    }));
  }
  BcastPlan plan = plan_bcast(name, a, b);
  Tensor out(plan.out_shape);
  {
    const double* pa = val(a).data();
    const double* pb = val(b).data();
    double* po = out.data();
    for_each_bcast(plan, [&](int64_t i, int64_t ia, int64_t ib) { po[i] = fwd(pa[ia], pb[ib]); });
  }
  return Var(make_op(std::move(out), {a.node(), b.node()}, [plan, bwd](Node& self) {
    const Tensor& g = self.grad;
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    const double* pa = na.value.data();
    const double* pb = nb.value.data();
    double* ga = na.requires_grad ? na.ensure_grad().data() : nullptr;
    double* gb = nb.requires_grad ? nb.ensure_grad().data() : nullptr;
    for_each_bcast(plan, [&](int64_t i, int64_t ia, int64_t ib) {
      double da, db;
      bwd(g[i], pa[ia], pb[ib], da, db);
      if (ga) ga[ia] += da;
      if (gb) gb[ib] += db;
    });
  }));
}

template <typename Fwd, typename Bwd>
Var unary_op(const Var& a, Fwd fwd, Bwd bwd) {
  Tensor out(a.shape());
  const double* pa = val(a).data();
  double* po = out.data();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i]);
  return Var(make_op(std::move(out), {a.node()}, [bwd](Node& self) {
    Node& na = *self.parents[0];
    if (!na.requires_grad) return;
    const int64_t n = self.value.numel();
    const double* pa = na.value.data();
    const double* py = self.value.data();
    const double* g = self.grad.data();
    double* ga = na.ensure_grad().data();
    for (int64_t i = 0; i < n; ++i) ga[i] += bwd(g[i], pa[i], py[i]);
  }));
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return bcast_binop(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double g, double, double, double& da, double& db) {
        da = g;
        db = g;
      });
}

Var sub(const Var& a, const Var& b) {
  return bcast_binop(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double g, double, double, double& da, double& db) {
        da = g;
        db = -g;
      });
}

Var mul(const Var& a, const Var& b) {
  return bcast_binop(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double g, double x, double y, double& da, double& db) {
        da = g * y;
        db = g * x;
      });
}

Var add_scalar(const Var& a, double c) {
  return unary_op(
      a, [c](double x) { return x + c; }, [](double g, double, double) { return g; });
}

Var scale(const Var& a, double c) {
  return unary_op(
      a, [c](double x) { return x * c; }, [c](double g, double, double) { return g * c; });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var sqrt(const Var& a) {
  return unary_op(
      a, [](double x) { return std::sqrt(x); },
      [](double g, double, double y) { return g * 0.5 / y; });
}

Var square(const Var& a) {
  return unary_op(
      a, [](double x) { return x * x; }, [](double g, double x, double) { return g * 2.0 * x; });
}

Var log(const Var& a) {
  return unary_op(
      a, [](double x) { return std::log(x); }, [](double g, double x, double) { return g / x; });
}

Var reciprocal(const Var& a) {
  return unary_op(
      a, [](double x) { return 1.0 / x; }, [](double g, double, double y) { return -g * y * y; });
}

Var gelu(const Var& a) {
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  constexpr double kInvSqrt2Pi = 0.3989422804014326779;
  return unary_op(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double g, double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        return g * (cdf + x * pdf);
      });
}

Var clamp01(const Var& a) {
  return unary_op(
      a, [](double x) { return std::min(1.0, std::max(0.0, x)); },
      [](double g, double x, double) { return (x > 0.0 && x < 1.0) ? g : 0.0; });
}

// ---- structure ----

Var reshape(const Var& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw std::invalid_argument(fmt::format("reshape: cannot view {} as {}", shape_str(a.shape()), shape_str(shape)));
  }
  Tensor out(std::move(shape), val(a).storage());
  return Var(make_op(std::move(out), {a.node()}, [](Node& self) {
    Node& na = *self.parents[0];
    if (!na.requires_grad) return;
    double* ga = na.ensure_grad().data();
    const double* g = self.grad.data();
    const int64_t n = self.value.numel();
    for (int64_t i = 0; i < n; ++i) ga[i] += g[i];
  }));
}

Var permute(const Var& a, const std::vector<size_t>& perm) {
  const Shape& sa = a.shape();
  if (perm.size() != sa.size()) throw std::invalid_argument("permute: rank mismatch");
  Shape so(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) so[i] = sa[perm[i]];
  const auto out_strides = strides_of(so);
  // For each input axis, the stride its index contributes in the output.
  std::vector<int64_t> contrib(sa.size(), 0);
  for (size_t i = 0; i < perm.size(); ++i) contrib[perm[i]] = out_strides[i];

  const int64_t n = a.numel();
  Tensor out(so);
  {
    const double* pa = val(a).data();
    double* po = out.data();
    std::vector<int64_t> idx(sa.size(), 0);
    int64_t oo = 0;
    for (int64_t i = 0; i < n; ++i) {
      po[oo] = pa[i];
      for (size_t d = sa.size(); d-- > 0;) {
        ++idx[d];
        oo += contrib[d];
        if (idx[d] < sa[d]) break;
        oo -= contrib[d] * sa[d];
        idx[d] = 0;
      }
    }
  }
  return Var(make_op(std::move(out), {a.node()}, [sa, contrib, n](Node& self) {
    Node& na = *self.parents[0];
    if (!na.requires_grad) return;
    double* ga = na.ensure_grad().data();
    const double* g = self.grad.data();
    std::vector<int64_t> idx(sa.size(), 0);
    int64_t oo = 0;
    for (int64_t i = 0; i < n; ++i) {
      ga[i] += g[oo];
      for (size_t d = sa.size(); d-- > 0;) {
        ++idx[d];
        oo += contrib[d];
        if (idx[d] < sa[d]) break;
        oo -= contrib[d] * sa[d];
        idx[d] = 0;
      }
    }
  }));
}

Var narrow(const Var& a, size_t dim, int64_t start, int64_t len) {
  const Shape& sa = a.shape();
  if (dim >= sa.size() || start < 0 || len < 0 || start + len > sa[dim]) {
    throw std::invalid_argument(fmt::format("narrow: dim {} range [{}, {}) out of {}", dim, start, start + len, shape_str(sa)));
  }
  int64_t pre = 1;
  int64_t post = 1;
  for (size_t i = 0; i < dim; ++i) pre *= sa[i];
  for (size_t i = dim + 1; i < sa.size(); ++i) post *= sa[i];
  Shape so = sa;
  so[dim] = len;
  Tensor out(so);
  {
    const double* pa = val(a).data();
    double* po = out.data();
    for (int64_t o = 0; o < pre; ++o) {
      const double* src = pa + (o * sa[dim] + start) * post;
      std::copy(src, src + len * post, po + o * len * post);
    }
  }
  const int64_t d_in = sa[dim];
  return Var(make_op(std::move(out), {a.node()}, [pre, post, d_in, start, len](Node& self) {
    Node& na = *self.parents[0];
    if (!na.requires_grad) return;
    double* ga = na.ensure_grad().data();
    const double* g = self.grad.data();
    for (int64_t o = 0; o < pre; ++o) {
      double* dst = ga + (o * d_in + start) * post;
      const double* src = g + o * len * post;
      for (int64_t k = 0; k < len * post; ++k) dst[k] += src[k];
    }
  }));
}

Var concat(const Var& a, const Var& b, size_t dim) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != sb.size() || dim >= sa.size()) shape_error("concat", a, b);
  for (size_t i = 0; i < sa.size(); ++i) {
    if (i != dim && sa[i] != sb[i]) shape_error("concat", a, b);
  }
  int64_t pre = 1;
  int64_t post = 1;
  for (size_t i = 0; i < dim; ++i) pre *= sa[i];
  for (size_t i = dim + 1; i < sa.size(); ++i) post *= sa[i];
  const int64_t da = sa[dim];
  const int64_t db = sb[dim];
  Shape so = sa;
  so[dim] = da + db;
  Tensor out(so);
  {
    const double* pa = val(a).data();
    const double* pb = val(b).data();
    double* po = out.data();
    for (int64_t o = 0; o < pre; ++o) {
      std::copy(pa + o * da * post, pa + (o + 1) * da * post, po + o * (da + db) * post);
      std::copy(pb + o * db * post, pb + (o + 1) * db * post, po + (o * (da + db) + da) * post);
    }
  }
  return Var(make_op(std::move(out), {a.node(), b.node()}, [pre, post, da, db](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    const double* g = self.grad.data();
    double* ga = na.requires_grad ? na.ensure_grad().data() : nullptr;
    double* gb = nb.requires_grad ? nb.ensure_grad().data() : nullptr;
    for (int64_t o = 0; o < pre; ++o) {
      const double* ge = g + o * (da + db) * post;
      if (ga) {
        for (int64_t k = 0; k < da * post; ++k) ga[o * da * post + k] += ge[k];
      }
      if (gb) {
        for (int64_t k = 0; k < db * post; ++k) gb[o * db * post + k] += ge[da * post + k];
      }
    }
  }));
}

Var stack0(std::span<const Var> items) {
  if (items.empty()) throw std::invalid_argument("stack0: empty input");
  const Shape& s = items[0].shape();
  const int64_t m = items[0].numel();
  Shape so;
  so.push_back(static_cast<int64_t>(items.size()));
  so.insert(so.end(), s.begin(), s.end());
  Tensor out(so);
  std::vector<NodePtr> parents;
  parents.reserve(items.size());
  for (size_t k = 0; k < items.size(); ++k) {
    if (items[k].shape() != s) throw std::invalid_argument("stack0: mismatched item shapes");
    std::copy(val(items[k]).data(), val(items[k]).data() + m, out.data() + static_cast<int64_t>(k) * m);
    parents.push_back(items[k].node());
  }
  return Var(make_op(std::move(out), std::move(parents), [m](Node& self) {
    const double* g = self.grad.data();
    for (size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      double* gp = p.ensure_grad().data();
      const double* gs = g + static_cast<int64_t>(k) * m;
      for (int64_t i = 0; i < m; ++i) gp[i] += gs[i];
    }
  }));
}

// ---- reductions ----

Var sum(const Var& a) {
  double s = 0.0;
  const double* pa = val(a).data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) s += pa[i];
  return Var(make_op(Tensor::scalar(s), {a.node()}, [n](Node& self) {
    Node& na = *self.parents[0];
    if (!na.requires_grad) return;
    const double g = self.grad[0];
    double* ga = na.ensure_grad().data();
    for (int64_t i = 0; i < n; ++i) ga[i] += g;
  }));
}

Var mean(const Var& a) {
  const int64_t n = a.numel();
  if (n == 0) throw std::invalid_argument("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

// ---- linear algebra ----

namespace {

struct MatmulDims {
  int64_t batch, m, k, n;
  bool b_shared;  // b is rank-2, shared across the batch
};

MatmulDims matmul_dims(const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) shape_error("matmul", a, b);
  MatmulDims d{};
  d.m = sa[sa.size() - 2];
  d.k = sa[sa.size() - 1];
  d.batch = 1;
  for (size_t i = 0; i + 2 < sa.size(); ++i) d.batch *= sa[i];
  if (sb.size() == 2) {
    d.b_shared = true;
  } else {
    if (sb.size() != sa.size()) shape_error("matmul", a, b);
    for (size_t i = 0; i + 2 < sa.size(); ++i) {
      if (sa[i] != sb[i]) shape_error("matmul", a, b);
    }
    d.b_shared = false;
  }
  if (sb[sb.size() - 2] != d.k) shape_error("matmul", a, b);
  d.n = sb[sb.size() - 1];
  return d;
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  const MatmulDims d = matmul_dims(a, b);
  Shape so(a.shape().begin(), a.shape().end() - 1);
  so.push_back(d.n);
  Tensor out(so);
  {
    const double* pa = val(a).data();
    const double* pb = val(b).data();
    double* po = out.data();
    for (int64_t s = 0; s < d.batch; ++s) {
      CMapMat A(pa + s * d.m * d.k, d.m, d.k);
      CMapMat B(d.b_shared ? pb : pb + s * d.k * d.n, d.k, d.n);
      MapMat C(po + s * d.m * d.n, d.m, d.n);
      C.noalias() = A * B;
    }
  }
  return Var(make_op(std::move(out), {a.node(), b.node()}, [d](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    const double* pa = na.value.data();
    const double* pb = nb.value.data();
    const double* pg = self.grad.data();
    if (na.requires_grad) {
      double* ga = na.ensure_grad().data();
      for (int64_t s = 0; s < d.batch; ++s) {
        CMapMat G(pg + s * d.m * d.n, d.m, d.n);
        CMapMat B(d.b_shared ? pb : pb + s * d.k * d.n, d.k, d.n);
        MapMat GA(ga + s * d.m * d.k, d.m, d.k);
        GA.noalias() += G * B.transpose();
      }
    }
    if (nb.requires_grad) {
      double* gb = nb.ensure_grad().data();
      for (int64_t s = 0; s < d.batch; ++s) {
        CMapMat G(pg + s * d.m * d.n, d.m, d.n);
        CMapMat A(pa + s * d.m * d.k, d.m, d.k);
        MapMat GB(d.b_shared ? gb : gb + s * d.k * d.n, d.k, d.n);
        GB.noalias() += A.transpose() * G;
      }
    }
  }));
}

Var transpose_last2(const Var& a) {
  std::vector<size_t> perm(a.shape().size());
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::swap(perm[perm.size() - 1], perm[perm.size() - 2]);
  return permute(a, perm);
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const Shape& sx = x.shape();
  const Shape& sw = weight.shape();
  if (sw.size() != 2 || sx.empty() || sx.back() != sw[0]) shape_error("linear", x, weight);
  const int64_t rows = x.numel() / sx.back();
  Var flat = reshape(x, {rows, sx.back()});
  Var y = add(matmul(flat, weight), bias);
  Shape so(sx.begin(), sx.end() - 1);
  so.push_back(sw[1]);
  return reshape(y, so);
}

// ---- nn primitives ----

Var softmax_lastdim(const Var& a) {
  const Shape& s = a.shape();
  if (s.empty()) throw std::invalid_argument("softmax_lastdim: scalar input");
  const int64_t d = s.back();
  const int64_t rows = a.numel() / d;
  Tensor out(s);
  {
    const double* pa = val(a).data();
    double* po = out.data();
    for (int64_t r = 0; r < rows; ++r) {
      const double* x = pa + r * d;
      double* y = po + r * d;
      double mx = x[0];
      for (int64_t i = 1; i < d; ++i) mx = std::max(mx, x[i]);
      double z = 0.0;
      for (int64_t i = 0; i < d; ++i) {
        y[i] = std::exp(x[i] - mx);
        z += y[i];
      }
      for (int64_t i = 0; i < d; ++i) y[i] /= z;
    }
  }
  return Var(make_op(std::move(out), {a.node()}, [rows, d](Node& self) {
    Node& na = *self.parents[0];
    if (!na.requires_grad) return;
    const double* y = self.value.data();
    const double* g = self.grad.data();
    double* ga = na.ensure_grad().data();
    for (int64_t r = 0; r < rows; ++r) {
      const double* yr = y + r * d;
      const double* gr = g + r * d;
      double dot = 0.0;
      for (int64_t i = 0; i < d; ++i) dot += gr[i] * yr[i];
      double* gar = ga + r * d;
      for (int64_t i = 0; i < d; ++i) gar[i] += yr[i] * (gr[i] - dot);
    }
  }));
}

Var log_softmax_lastdim(const Var& a) {
  const Shape& s = a.shape();
  if (s.empty()) throw std::invalid_argument("log_softmax_lastdim: scalar input");
  const int64_t d = s.back();
  const int64_t rows = a.numel() / d;
  Tensor out(s);
  {
    const double* pa = val(a).data();
    double* po = out.data();
    for (int64_t r = 0; r < rows; ++r) {
      const double* x = pa + r * d;
      double* y = po + r * d;
      double mx = x[0];
      for (int64_t i = 1; i < d; ++i) mx = std::max(mx, x[i]);
      double z = 0.0;
      for (int64_t i = 0; i < d; ++i) z += std::exp(x[i] - mx);
      const double lz = std::log(z) + mx;
      for (int64_t i = 0; i < d; ++i) y[i] = x[i] - lz;
    }
  }
  return Var(make_op(std::move(out), {a.node()}, [rows, d](Node& self) {
    Node& na = *self.parents[0];
    if (!na.requires_grad) return;
    const double* y = self.value.data();
    const double* g = self.grad.data();
    double* ga = na.ensure_grad().data();
    for (int64_t r = 0; r < rows; ++r) {
      const double* yr = y + r * d;
      const double* gr = g + r * d;
      double gs = 0.0;
      for (int64_t i = 0; i < d; ++i) gs += gr[i];
      double* gar = ga + r * d;
      for (int64_t i = 0; i < d; ++i) gar[i] += gr[i] - std::exp(yr[i]) * gs;
    }
  }));
}

Var layer_norm(const Var& x, const Var& weight, const Var& bias, double eps) {
  const Shape& s = x.shape();
  if (s.empty()) throw std::invalid_argument("layer_norm: scalar input");
  const int64_t d = s.back();
  if (weight.shape() != Shape{d} || bias.shape() != Shape{d}) shape_error("layer_norm", x, weight);
  const int64_t rows = x.numel() / d;

  Tensor out(s);
  Tensor xhat(s);
  Tensor invstd({rows});
  {
    const double* px = val(x).data();
    const double* pw = val(weight).data();
    const double* pb = val(bias).data();
    double* po = out.data();
    double* ph = xhat.data();
    for (int64_t r = 0; r < rows; ++r) {
      const double* xr = px + r * d;
      double mu = 0.0;
      for (int64_t i = 0; i < d; ++i) mu += xr[i];
      mu /= static_cast<double>(d);
      double var = 0.0;
      for (int64_t i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
      var /= static_cast<double>(d);
      const double is = 1.0 / std::sqrt(var + eps);
      invstd[r] = is;
      double* hr = ph + r * d;
      double* yr = po + r * d;
      for (int64_t i = 0; i < d; ++i) {
        hr[i] = (xr[i] - mu) * is;
        yr[i] = hr[i] * pw[i] + pb[i];
      }
    }
  }
  return Var(make_op(std::move(out), {x.node(), weight.node(), bias.node()},
                     [rows, d, xhat = std::move(xhat), invstd = std::move(invstd)](Node& self) {
                       Node& nx = *self.parents[0];
                       Node& nw = *self.parents[1];
                       Node& nb = *self.parents[2];
                       const double* g = self.grad.data();
                       const double* h = xhat.data();
                       const double* pw = nw.value.data();
                       double* gx = nx.requires_grad ? nx.ensure_grad().data() : nullptr;
                       double* gw = nw.requires_grad ? nw.ensure_grad().data() : nullptr;
                       double* gb = nb.requires_grad ? nb.ensure_grad().data() : nullptr;
                       for (int64_t r = 0; r < rows; ++r) {
                         const double* gr = g + r * d;
                         const double* hr = h + r * d;
                         if (gw || gb) {
                           for (int64_t i = 0; i < d; ++i) {
                             if (gw) gw[i] += gr[i] * hr[i];
                             if (gb) gb[i] += gr[i];
                           }
                         }
                         if (gx) {
                           // dL/dxhat = g * w; then the standard layernorm pullback.
                           double sum_gh = 0.0;
                           double sum_ghh = 0.0;
                           for (int64_t i = 0; i < d; ++i) {
                             const double gh = gr[i] * pw[i];
                             sum_gh += gh;
                             sum_ghh += gh * hr[i];
                           }
                           const double is = invstd[r];
                           double* gxr = gx + r * d;
                           for (int64_t i = 0; i < d; ++i) {
                             const double gh = gr[i] * pw[i];
                             gxr[i] += is * (gh - (sum_gh + hr[i] * sum_ghh) / static_cast<double>(d));
                           }
                         }
                       }
                     }));
}

Var gather_rows(const Var& a, const std::vector<int64_t>& cols) {
  const Shape& s = a.shape();
  if (s.size() != 2) throw std::invalid_argument("gather_rows: expected rank-2 input");
  const int64_t rows = s[0];
  const int64_t k = s[1];
  if (static_cast<int64_t>(cols.size()) != rows) throw std::invalid_argument("gather_rows: one index per row required");
  Tensor out({rows});
  const double* pa = val(a).data();
  for (int64_t r = 0; r < rows; ++r) {
    if (cols[r] < 0 || cols[r] >= k) throw std::out_of_range("gather_rows: column index out of range");
    out[r] = pa[r * k + cols[r]];
  }
  return Var(make_op(std::move(out), {a.node()}, [cols, k](Node& self) {
    Node& na = *self.parents[0];
    if (!na.requires_grad) return;
    double* ga = na.ensure_grad().data();
    const double* g = self.grad.data();
    for (size_t r = 0; r < cols.size(); ++r) ga[static_cast<int64_t>(r) * k + cols[r]] += g[r];
  }));
}

// ---- image ops ----

namespace {

struct TapWeights {
  int64_t x0, x1, y0, y1;
  double wx, wy;
};

TapWeights taps(double x, double y, int64_t w, int64_t h) {
  TapWeights t{};
  const double xc = std::min(std::max(x, 0.0), static_cast<double>(w - 1));
  const double yc = std::min(std::max(y, 0.0), static_cast<double>(h - 1));
  if (w == 1) {
    t.x0 = t.x1 = 0;
    t.wx = 0.0;
  } else {
    t.x0 = std::min(static_cast<int64_t>(std::floor(xc)), w - 2);
    t.x1 = t.x0 + 1;
    t.wx = xc - static_cast<double>(t.x0);
  }
  if (h == 1) {
    t.y0 = t.y1 = 0;
    t.wy = 0.0;
  } else {
    t.y0 = std::min(static_cast<int64_t>(std::floor(yc)), h - 2);
    t.y1 = t.y0 + 1;
    t.wy = yc - static_cast<double>(t.y0);
  }
  return t;
}

}  // namespace

Var bilinear_gather(const Var& src, const Tensor& coords) {
  const Shape& ss = src.shape();
  const Shape& sc = coords.shape();
  if (ss.size() != 3) throw std::invalid_argument("bilinear_gather: src must be (C,H,W)");
  if (sc.size() != 3 || sc[0] != 2) throw std::invalid_argument("bilinear_gather: coords must be (2,Ho,Wo)");
  const int64_t c = ss[0];
  const int64_t h = ss[1];
  const int64_t w = ss[2];
  const int64_t ho = sc[1];
  const int64_t wo = sc[2];
  const int64_t plane = ho * wo;

  Tensor out({c, ho, wo});
  {
    const double* ps = val(src).data();
    const double* px = coords.data();
    const double* py = coords.data() + plane;
    double* po = out.data();
    for (int64_t i = 0; i < plane; ++i) {
      const TapWeights t = taps(px[i], py[i], w, h);
      const double w00 = (1.0 - t.wy) * (1.0 - t.wx);
      const double w01 = (1.0 - t.wy) * t.wx;
      const double w10 = t.wy * (1.0 - t.wx);
      const double w11 = t.wy * t.wx;
      for (int64_t ch = 0; ch < c; ++ch) {
        const double* plane_s = ps + ch * h * w;
        po[ch * plane + i] = w00 * plane_s[t.y0 * w + t.x0] + w01 * plane_s[t.y0 * w + t.x1] +
                             w10 * plane_s[t.y1 * w + t.x0] + w11 * plane_s[t.y1 * w + t.x1];
      }
    }
  }
  return Var(make_op(std::move(out), {src.node()}, [coords, c, h, w, plane](Node& self) {
    Node& ns = *self.parents[0];
    if (!ns.requires_grad) return;
    double* gs = ns.ensure_grad().data();
    const double* g = self.grad.data();
    const double* px = coords.data();
    const double* py = coords.data() + plane;
    for (int64_t i = 0; i < plane; ++i) {
      const TapWeights t = taps(px[i], py[i], w, h);
      const double w00 = (1.0 - t.wy) * (1.0 - t.wx);
      const double w01 = (1.0 - t.wy) * t.wx;
      const double w10 = t.wy * (1.0 - t.wx);
      const double w11 = t.wy * t.wx;
      for (int64_t ch = 0; ch < c; ++ch) {
        const double gv = g[ch * plane + i];
        double* plane_g = gs + ch * h * w;
        plane_g[t.y0 * w + t.x0] += w00 * gv;
        plane_g[t.y0 * w + t.x1] += w01 * gv;
        plane_g[t.y1 * w + t.x0] += w10 * gv;
        plane_g[t.y1 * w + t.x1] += w11 * gv;
      }
    }
  }));
}

Var paste(const Var& image, const Var& patch, int64_t x0, int64_t y0) {
  const Shape& si = image.shape();
  const Shape& sp = patch.shape();
  if (si.size() != 3 || sp.size() != 3 || si[0] != sp[0]) shape_error("paste", image, patch);
  const int64_t c = si[0];
  const int64_t h = si[1];
  const int64_t w = si[2];
  const int64_t ph = sp[1];
  const int64_t pw = sp[2];
  if (x0 < 0 || y0 < 0 || x0 + pw > w || y0 + ph > h) {
    throw std::invalid_argument(fmt::format("paste: patch {}x{} at ({}, {}) leaves image {}x{}", pw, ph, x0, y0, w, h));
  }
  Tensor out = val(image).clone();
  {
    const double* pp = val(patch).data();
    double* po = out.data();
    for (int64_t ch = 0; ch < c; ++ch) {
      for (int64_t y = 0; y < ph; ++y) {
        double* dst = po + (ch * h + y0 + y) * w + x0;
        const double* src = pp + (ch * ph + y) * pw;
        std::copy(src, src + pw, dst);
      }
    }
  }
  return Var(make_op(std::move(out), {image.node(), patch.node()}, [c, h, w, ph, pw, x0, y0](Node& self) {
    Node& ni = *self.parents[0];
    Node& np = *self.parents[1];
    const double* g = self.grad.data();
    if (np.requires_grad) {
      double* gp = np.ensure_grad().data();
      for (int64_t ch = 0; ch < c; ++ch) {
        for (int64_t y = 0; y < ph; ++y) {
          const double* src = g + (ch * h + y0 + y) * w + x0;
          double* dst = gp + (ch * ph + y) * pw;
          for (int64_t x = 0; x < pw; ++x) dst[x] += src[x];
        }
      }
    }
    if (ni.requires_grad) {
      double* gi = ni.ensure_grad().data();
      for (int64_t ch = 0; ch < c; ++ch) {
        for (int64_t y = 0; y < h; ++y) {
          const bool in_rows = y >= y0 && y < y0 + ph;
          const double* src = g + (ch * h + y) * w;
          double* dst = gi + (ch * h + y) * w;
          for (int64_t x = 0; x < w; ++x) {
            if (in_rows && x >= x0 && x < x0 + pw) continue;  // covered by the patch
            dst[x] += src[x];
          }
        }
      }
    }
  }));
}

Var image_to_tokens(const Var& x, int64_t p) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw std::invalid_argument("image_to_tokens: expected (B,C,H,W)");
  const int64_t b = s[0];
  const int64_t c = s[1];
  const int64_t h = s[2];
  const int64_t w = s[3];
  if (p <= 0 || h % p != 0 || w % p != 0) {
    throw std::invalid_argument(fmt::format("image_to_tokens: patch size {} does not divide {}x{}", p, h, w));
  }
  const int64_t gh = h / p;
  const int64_t gw = w / p;
  const int64_t t = gh * gw;
  const int64_t d = c * p * p;
  Tensor out({b, t, d});
  {
    const double* px = val(x).data();
    double* po = out.data();
    for (int64_t bi = 0; bi < b; ++bi) {
      for (int64_t gy = 0; gy < gh; ++gy) {
        for (int64_t gx = 0; gx < gw; ++gx) {
          double* tok = po + (bi * t + gy * gw + gx) * d;
          for (int64_t ch = 0; ch < c; ++ch) {
            for (int64_t py = 0; py < p; ++py) {
              const double* src = px + ((bi * c + ch) * h + gy * p + py) * w + gx * p;
              std::copy(src, src + p, tok + (ch * p + py) * p);
            }
          }
        }
      }
    }
  }
  return Var(make_op(std::move(out), {x.node()}, [b, c, h, w, p, gh, gw, t, d](Node& self) {
    Node& nx = *self.parents[0];
    if (!nx.requires_grad) return;
    double* gx_ = nx.ensure_grad().data();
    const double* g = self.grad.data();
    for (int64_t bi = 0; bi < b; ++bi) {
      for (int64_t gy = 0; gy < gh; ++gy) {
        for (int64_t gxi = 0; gxi < gw; ++gxi) {
          const double* tok = g + (bi * t + gy * gw + gxi) * d;
          for (int64_t ch = 0; ch < c; ++ch) {
            for (int64_t py = 0; py < p; ++py) {
              double* dst = gx_ + ((bi * c + ch) * h + gy * p + py) * w + gxi * p;
              const double* src = tok + (ch * p + py) * p;
              for (int64_t k = 0; k < p; ++k) dst[k] += src[k];
            }
          }
        }
      }
    }
  }));
}

}  // namespace patchforge
