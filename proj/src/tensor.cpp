// SPDX-License-Identifier: Apache-2.0

#include "scoter/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "scoter/common.hpp"

namespace scoter::numerics {

namespace {

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string(op) + ": non-finite value produced");
    }
  }
}

using Back = std::function<void(detail::Node&)>;

thread_local bool g_grad_enabled = true;

// Central op constructor. Parents and the backward closure are dropped when
// no input needs gradients, so inference graphs stay flat.
Tensor make_node(const char* op, Shape shape, std::vector<double> data,
                 std::initializer_list<Tensor> parents, Back back) {
  check_finite(data, op);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (g_grad_enabled) {
    for (const Tensor& p : parents) {
      node->requires_grad = node->requires_grad || p.requires_grad();
    }
  }
  if (node->requires_grad) {
    for (const Tensor& p : parents) node->parents.push_back(p.handle());
    node->backward_fn = std::move(back);
  }
  return Tensor::adopt(std::move(node));
}

// Accumulate g into the parent's grad buffer if it participates.
void accum(const std::shared_ptr<detail::Node>& p, std::size_t i, double g) {
  if (p->requires_grad) {
    p->ensure_grad();
    p->grad[i] += g;
  }
}

bool wants(const std::shared_ptr<detail::Node>& p) { return p->requires_grad; }

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// Tensor basics
// ---------------------------------------------------------------------------

Tensor Tensor::adopt(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return from_data(std::move(shape), {}, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> d(shape_numel(shape), value);
  return from_data(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  if (data.empty() && n > 0) data.assign(n, 0.0);
  if (data.size() != n) {
    throw ShapeError("from_data: " + std::to_string(data.size()) +
                     " values for shape " + shape_str(shape));
  }
  check_finite(data, "from_data");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return adopt(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  std::vector<double> d(shape_numel(shape));
  for (double& x : d) x = rng.normal(0.0, stddev);
  return from_data(std::move(shape), std::move(d), requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
int Tensor::rank() const { return static_cast<int>(node_->shape.size()); }
int Tensor::dim(int i) const { return node_->shape.at(static_cast<std::size_t>(i)); }
std::size_t Tensor::size() const { return node_->data.size(); }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

const std::vector<double>& Tensor::data() const { return node_->data; }
std::vector<double>& Tensor::mutable_data() { return node_->data; }

double Tensor::value() const {
  if (size() != 1) throw ShapeError("value(): tensor is not scalar");
  return node_->data[0];
}

double Tensor::at(int i) const {
  return node_->data.at(static_cast<std::size_t>(i));
}

double Tensor::at(int i, int j) const {
  require(rank() == 2, "at(i,j): rank-2 required");
  return node_->data[static_cast<std::size_t>(i) * dim(1) + j];
}

bool Tensor::has_grad() const {
  return node_ && node_->grad.size() == node_->data.size() && !node_->data.empty();
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw ScoterError("grad(): no gradient accumulated");
  return node_->grad;
}

std::vector<double>& Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.assign(node_->data.size(), 0.0);
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ShapeError("backward: loss must be a defined scalar");
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; graphs can be thousands of nodes deep.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.handle().get(), 0);
  visited.insert(loss.handle().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent && parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.handle()->ensure_grad();
  loss.handle()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward_fn && node->grad.size() == node->data.size()) {
      node->backward_fn(*node);
    }
  }
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul: rank-2 operands required");
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  require(k == k2, "matmul: inner dims disagree " + shape_str(a.shape()) +
                       " x " + shape_str(b.shape()));
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  const auto& A = a.data();
  const auto& B = b.data();
  for (int i = 0; i < m; ++i) {
    for (int l = 0; l < k; ++l) {
      const double ail = A[static_cast<std::size_t>(i) * k + l];
      if (ail == 0.0) continue;
      const double* brow = &B[static_cast<std::size_t>(l) * n];
      double* orow = &out[static_cast<std::size_t>(i) * n];
      for (int j = 0; j < n; ++j) orow[j] += ail * brow[j];
    }
  }
  auto pa = a.handle();
  auto pb = b.handle();
  return make_node("matmul", {m, n}, std::move(out), {a, b},
                   [pa, pb, m, k, n](detail::Node& o) {
                     const auto& g = o.grad;
                     if (wants(pa)) {
                       pa->ensure_grad();
                       // dA += g . B^T
                       for (int i = 0; i < m; ++i)
                         for (int j = 0; j < n; ++j) {
                           const double gij = g[static_cast<std::size_t>(i) * n + j];
                           if (gij == 0.0) continue;
                           for (int l = 0; l < k; ++l)
                             pa->grad[static_cast<std::size_t>(i) * k + l] +=
                                 gij * pb->data[static_cast<std::size_t>(l) * n + j];
                         }
                     }
                     if (wants(pb)) {
                       pb->ensure_grad();
                       // dB += A^T . g
                       for (int i = 0; i < m; ++i)
                         for (int l = 0; l < k; ++l) {
                           const double ail =
                               pa->data[static_cast<std::size_t>(i) * k + l];
                           if (ail == 0.0) continue;
                           for (int j = 0; j < n; ++j)
                             pb->grad[static_cast<std::size_t>(l) * n + j] +=
                                 ail * g[static_cast<std::size_t>(i) * n + j];
                         }
                     }
                   });
}

Tensor transpose(const Tensor& a) {
  require(a.rank() == 2, "transpose: rank-2 required");
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> out(a.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::size_t>(j) * m + i] = a.data()[static_cast<std::size_t>(i) * n + j];
  auto pa = a.handle();
  return make_node("transpose", {n, m}, std::move(out), {a},
                   [pa, m, n](detail::Node& o) {
                     if (!wants(pa)) return;
                     pa->ensure_grad();
                     for (int i = 0; i < m; ++i)
                       for (int j = 0; j < n; ++j)
                         pa->grad[static_cast<std::size_t>(i) * n + j] +=
                             o.grad[static_cast<std::size_t>(j) * m + i];
                   });
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "add: shape mismatch " +
                                      shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  auto pa = a.handle();
  auto pb = b.handle();
  return make_node("add", a.shape(), std::move(out), {a, b},
                   [pa, pb](detail::Node& o) {
                     for (std::size_t i = 0; i < o.size(); ++i) {
                       accum(pa, i, o.grad[i]);
                       accum(pb, i, o.grad[i]);
                     }
                   });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "sub: shape mismatch");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  auto pa = a.handle();
  auto pb = b.handle();
  return make_node("sub", a.shape(), std::move(out), {a, b},
                   [pa, pb](detail::Node& o) {
                     for (std::size_t i = 0; i < o.size(); ++i) {
                       accum(pa, i, o.grad[i]);
                       accum(pb, i, -o.grad[i]);
                     }
                   });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  auto pa = a.handle();
  auto pb = b.handle();
  return make_node("mul", a.shape(), std::move(out), {a, b},
                   [pa, pb](detail::Node& o) {
                     for (std::size_t i = 0; i < o.size(); ++i) {
                       accum(pa, i, o.grad[i] * pb->data[i]);
                       accum(pb, i, o.grad[i] * pa->data[i]);
                     }
                   });
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  require(a.rank() == 2 && v.rank() == 1 && a.dim(1) == v.dim(0),
          "add_rowvec: [m,n] + [n] required");
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> out(a.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::size_t>(i) * n + j] =
          a.data()[static_cast<std::size_t>(i) * n + j] + v.data()[static_cast<std::size_t>(j)];
  auto pa = a.handle();
  auto pv = v.handle();
  return make_node("add_rowvec", a.shape(), std::move(out), {a, v},
                   [pa, pv, m, n](detail::Node& o) {
                     for (int i = 0; i < m; ++i)
                       for (int j = 0; j < n; ++j) {
                         const double g = o.grad[static_cast<std::size_t>(i) * n + j];
                         accum(pa, static_cast<std::size_t>(i) * n + j, g);
                         accum(pv, static_cast<std::size_t>(j), g);
                       }
                   });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  auto pa = a.handle();
  return make_node("scale", a.shape(), std::move(out), {a},
                   [pa, s](detail::Node& o) {
                     for (std::size_t i = 0; i < o.size(); ++i)
                       accum(pa, i, o.grad[i] * s);
                   });
}

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + s;
  auto pa = a.handle();
  return make_node("add_scalar", a.shape(), std::move(out), {a},
                   [pa](detail::Node& o) {
                     for (std::size_t i = 0; i < o.size(); ++i)
                       accum(pa, i, o.grad[i]);
                   });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.data()[i];
    out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                      : std::exp(x) / (1.0 + std::exp(x));
  }
  auto pa = a.handle();
  return make_node("sigmoid", a.shape(), std::move(out), {a},
                   [pa](detail::Node& o) {
                     for (std::size_t i = 0; i < o.size(); ++i) {
                       const double y = o.data[i];
                       accum(pa, i, o.grad[i] * y * (1.0 - y));
                     }
                   });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  auto pa = a.handle();
  return make_node("relu", a.shape(), std::move(out), {a},
                   [pa](detail::Node& o) {
                     for (std::size_t i = 0; i < o.size(); ++i)
                       if (pa->data[i] > 0.0) accum(pa, i, o.grad[i]);
                   });
}

// ---------------------------------------------------------------------------
// Softmax / LayerNorm
// ---------------------------------------------------------------------------

namespace {

// softmax over contiguous rows of length n
Tensor softmax_rows(const Tensor& a, int rows, int n) {
  std::vector<double> out(a.size());
  for (int r = 0; r < rows; ++r) {
    const double* x = &a.data()[static_cast<std::size_t>(r) * n];
    double* y = &out[static_cast<std::size_t>(r) * n];
    double mx = x[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (int j = 0; j < n; ++j) y[j] /= z;
  }
  auto pa = a.handle();
  return make_node("softmax", a.shape(), std::move(out), {a},
                   [pa, rows, n](detail::Node& o) {
                     if (!wants(pa)) return;
                     pa->ensure_grad();
                     for (int r = 0; r < rows; ++r) {
                       const double* y = &o.data[static_cast<std::size_t>(r) * n];
                       const double* g = &o.grad[static_cast<std::size_t>(r) * n];
                       double dot = 0.0;
                       for (int j = 0; j < n; ++j) dot += y[j] * g[j];
                       double* dx = &pa->grad[static_cast<std::size_t>(r) * n];
                       for (int j = 0; j < n; ++j) dx[j] += y[j] * (g[j] - dot);
                     }
                   });
}

}  // namespace

Tensor softmax(const Tensor& a, int axis) {
  const int r = a.rank();
  int ax = axis < 0 ? axis + r : axis;
  require(ax >= 0 && ax < r, "softmax: axis out of range");
  if (r == 1) return softmax_rows(a, 1, a.dim(0));
  require(r == 2, "softmax: rank-1 or rank-2 supported");
  if (ax == 1) return softmax_rows(a, a.dim(0), a.dim(1));
  return transpose(softmax_rows(transpose(a), a.dim(1), a.dim(0)));
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  const int r = x.rank();
  require(r == 1 || r == 2, "layer_norm: rank-1 or rank-2 supported");
  const int d = x.dim(r - 1);
  const int rows = r == 1 ? 1 : x.dim(0);
  if (d < 2) {
    throw ShapeError("layer_norm: degenerate axis of length " + std::to_string(d));
  }
  require(gamma.rank() == 1 && gamma.dim(0) == d, "layer_norm: gamma length");
  require(beta.rank() == 1 && beta.dim(0) == d, "layer_norm: beta length");
  require(eps > 0.0, "layer_norm: eps must be > 0");

  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(static_cast<std::size_t>(rows));
  for (int i = 0; i < rows; ++i) {
    const double* xi = &x.data()[static_cast<std::size_t>(i) * d];
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += xi[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(i)] = is;
    for (int j = 0; j < d; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * d + j;
      xhat[k] = (xi[j] - mu) * is;
      out[k] = gamma.data()[static_cast<std::size_t>(j)] * xhat[k] +
               beta.data()[static_cast<std::size_t>(j)];
    }
  }
  auto px = x.handle();
  auto pg = gamma.handle();
  auto pb = beta.handle();
  auto xh = std::make_shared<std::vector<double>>(std::move(xhat));
  auto istd = std::make_shared<std::vector<double>>(std::move(inv_std));
  return make_node(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [px, pg, pb, xh, istd, rows, d](detail::Node& o) {
        for (int i = 0; i < rows; ++i) {
          const std::size_t base = static_cast<std::size_t>(i) * d;
          const double is = (*istd)[static_cast<std::size_t>(i)];
          // dgamma, dbeta
          for (int j = 0; j < d; ++j) {
            accum(pg, static_cast<std::size_t>(j), o.grad[base + j] * (*xh)[base + j]);
            accum(pb, static_cast<std::size_t>(j), o.grad[base + j]);
          }
          if (!wants(px)) continue;
          px->ensure_grad();
          // dxhat = g * gamma; dx = is * (dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
          double m1 = 0.0, m2 = 0.0;
          for (int j = 0; j < d; ++j) {
            const double dxh = o.grad[base + j] * pg->data[static_cast<std::size_t>(j)];
            m1 += dxh;
            m2 += dxh * (*xh)[base + j];
          }
          m1 /= d;
          m2 /= d;
          for (int j = 0; j < d; ++j) {
            const double dxh = o.grad[base + j] * pg->data[static_cast<std::size_t>(j)];
            px->grad[base + j] += is * (dxh - m1 - (*xh)[base + j] * m2);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  require(shape_numel(shape) == a.size(), "reshape: element count mismatch");
  auto pa = a.handle();
  return make_node("reshape", std::move(shape), a.data(), {a},
                   [pa](detail::Node& o) {
                     for (std::size_t i = 0; i < o.size(); ++i)
                       accum(pa, i, o.grad[i]);
                   });
}

Tensor concat_last_axis(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_last_axis: no inputs");
  const int r = parts[0].rank();
  require(r == 1 || r == 2, "concat_last_axis: rank-1 or rank-2 supported");
  const int rows = r == 1 ? 1 : parts[0].dim(0);
  int total = 0;
  for (const auto& p : parts) {
    require(p.rank() == r && (r == 1 || p.dim(0) == rows),
            "concat_last_axis: row count mismatch");
    total += p.dim(r - 1);
  }
  std::vector<double> out(static_cast<std::size_t>(rows) * total);
  int off = 0;
  for (const auto& p : parts) {
    const int n = p.dim(r - 1);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < n; ++j)
        out[static_cast<std::size_t>(i) * total + off + j] =
            p.data()[static_cast<std::size_t>(i) * n + j];
    off += n;
  }
  Shape out_shape = r == 1 ? Shape{total} : Shape{rows, total};

  std::vector<std::shared_ptr<detail::Node>> handles;
  std::vector<int> widths;
  bool needs_grad = false;
  for (const auto& p : parts) {
    handles.push_back(p.handle());
    widths.push_back(p.dim(r - 1));
    needs_grad = needs_grad || (grad_enabled() && p.requires_grad());
  }
  check_finite(out, "concat_last_axis");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(out_shape);
  node->data = std::move(out);
  node->requires_grad = needs_grad;
  if (needs_grad) {
    node->parents = handles;
    node->backward_fn = [handles, widths, rows, total](detail::Node& o) {
      int off2 = 0;
      for (std::size_t k = 0; k < handles.size(); ++k) {
        const int n = widths[k];
        if (wants(handles[k])) {
          handles[k]->ensure_grad();
          for (int i = 0; i < rows; ++i)
            for (int j = 0; j < n; ++j)
              handles[k]->grad[static_cast<std::size_t>(i) * n + j] +=
                  o.grad[static_cast<std::size_t>(i) * total + off2 + j];
        }
        off2 += n;
      }
    };
  }
  return Tensor::adopt(std::move(node));
}

Tensor slice_cols(const Tensor& a, int begin, int end) {
  require(a.rank() == 2, "slice_cols: rank-2 required");
  const int m = a.dim(0), n = a.dim(1);
  require(0 <= begin && begin < end && end <= n, "slice_cols: bad range");
  const int w = end - begin;
  std::vector<double> out(static_cast<std::size_t>(m) * w);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < w; ++j)
      out[static_cast<std::size_t>(i) * w + j] =
          a.data()[static_cast<std::size_t>(i) * n + begin + j];
  auto pa = a.handle();
  return make_node("slice_cols", {m, w}, std::move(out), {a},
                   [pa, m, n, w, begin](detail::Node& o) {
                     if (!wants(pa)) return;
                     pa->ensure_grad();
                     for (int i = 0; i < m; ++i)
                       for (int j = 0; j < w; ++j)
                         pa->grad[static_cast<std::size_t>(i) * n + begin + j] +=
                             o.grad[static_cast<std::size_t>(i) * w + j];
                   });
}

Tensor row(const Tensor& a, int r) {
  require(a.rank() == 2, "row: rank-2 required");
  const int m = a.dim(0), n = a.dim(1);
  require(0 <= r && r < m, "row: index out of range");
  std::vector<double> out(a.data().begin() + static_cast<std::ptrdiff_t>(r) * n,
                          a.data().begin() + static_cast<std::ptrdiff_t>(r + 1) * n);
  auto pa = a.handle();
  return make_node("row", {n}, std::move(out), {a},
                   [pa, r, n](detail::Node& o) {
                     for (int j = 0; j < n; ++j)
                       accum(pa, static_cast<std::size_t>(r) * n + j, o.grad[static_cast<std::size_t>(j)]);
                   });
}

Tensor mean_rows(const Tensor& a) {
  require(a.rank() == 2, "mean_rows: rank-2 required");
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::size_t>(j)] += a.data()[static_cast<std::size_t>(i) * n + j];
  for (double& v : out) v /= m;
  auto pa = a.handle();
  return make_node("mean_rows", {n}, std::move(out), {a},
                   [pa, m, n](detail::Node& o) {
                     for (int i = 0; i < m; ++i)
                       for (int j = 0; j < n; ++j)
                         accum(pa, static_cast<std::size_t>(i) * n + j,
                               o.grad[static_cast<std::size_t>(j)] / m);
                   });
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& indices) {
  require(table.rank() == 2, "gather_rows: rank-2 table required");
  const int v = table.dim(0), d = table.dim(1);
  for (int idx : indices) {
    if (idx < 0 || idx >= v) {
      throw ShapeError("gather_rows: index " + std::to_string(idx) +
                       " out of vocabulary of size " + std::to_string(v));
    }
  }
  const int m = static_cast<int>(indices.size());
  std::vector<double> out(static_cast<std::size_t>(m) * d);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j)
      out[static_cast<std::size_t>(i) * d + j] =
          table.data()[static_cast<std::size_t>(indices[static_cast<std::size_t>(i)]) * d + j];
  auto pt = table.handle();
  auto idx = std::make_shared<std::vector<int>>(indices);
  return make_node("gather_rows", {m, d}, std::move(out), {table},
                   [pt, idx, m, d](detail::Node& o) {
                     if (!wants(pt)) return;
                     pt->ensure_grad();
                     for (int i = 0; i < m; ++i)
                       for (int j = 0; j < d; ++j)
                         pt->grad[static_cast<std::size_t>((*idx)[static_cast<std::size_t>(i)]) * d + j] +=
                             o.grad[static_cast<std::size_t>(i) * d + j];
                   });
}

// ---------------------------------------------------------------------------
// Reductions and scalar plumbing
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  auto pa = a.handle();
  return make_node("sum", {1}, {s}, {a}, [pa](detail::Node& o) {
    for (std::size_t i = 0; i < pa->data.size(); ++i) accum(pa, i, o.grad[0]);
  });
}

Tensor mean(const Tensor& a) {
  require(a.size() > 0, "mean: empty tensor");
  double s = 0.0;
  for (double x : a.data()) s += x;
  const double inv = 1.0 / static_cast<double>(a.size());
  auto pa = a.handle();
  return make_node("mean", {1}, {s * inv}, {a}, [pa, inv](detail::Node& o) {
    for (std::size_t i = 0; i < pa->data.size(); ++i)
      accum(pa, i, o.grad[0] * inv);
  });
}

Tensor pick(const Tensor& v, int index) {
  require(v.rank() == 1, "pick: rank-1 required");
  require(0 <= index && index < v.dim(0), "pick: index out of range");
  auto pv = v.handle();
  return make_node("pick", {1}, {v.data()[static_cast<std::size_t>(index)]}, {v},
                   [pv, index](detail::Node& o) {
                     accum(pv, static_cast<std::size_t>(index), o.grad[0]);
                   });
}

Tensor cosine_similarity(const Tensor& u, const Tensor& v) {
  require(u.rank() == 1 && v.rank() == 1 && u.dim(0) == v.dim(0),
          "cosine_similarity: equal-length rank-1 tensors required");
  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (int j = 0; j < u.dim(0); ++j) {
    uu += u.data()[static_cast<std::size_t>(j)] * u.data()[static_cast<std::size_t>(j)];
    vv += v.data()[static_cast<std::size_t>(j)] * v.data()[static_cast<std::size_t>(j)];
    uv += u.data()[static_cast<std::size_t>(j)] * v.data()[static_cast<std::size_t>(j)];
  }
  const double nu = std::sqrt(uu), nv = std::sqrt(vv);
  if (nu < 1e-300 || nv < 1e-300) {
    throw DegenerateNormError("cosine_similarity: zero-norm input");
  }
  const double c = uv / (nu * nv);
  auto pu = u.handle();
  auto pv = v.handle();
  return make_node("cosine_similarity", {1}, {c}, {u, v},
                   [pu, pv, nu, nv, c](detail::Node& o) {
                     const double g = o.grad[0];
                     const std::size_t n = pu->data.size();
                     for (std::size_t j = 0; j < n; ++j) {
                       const double uj = pu->data[j], vj = pv->data[j];
                       accum(pu, j, g * (vj / (nu * nv) - c * uj / (nu * nu)));
                       accum(pv, j, g * (uj / (nu * nv) - c * vj / (nv * nv)));
                     }
                   });
}

Tensor log_sum_exp(const Tensor& x) {
  require(x.rank() == 1 && x.dim(0) >= 1, "log_sum_exp: nonempty rank-1 required");
  const int n = x.dim(0);
  double mx = x.data()[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, x.data()[static_cast<std::size_t>(j)]);
  double z = 0.0;
  for (int j = 0; j < n; ++j) z += std::exp(x.data()[static_cast<std::size_t>(j)] - mx);
  const double lse = mx + std::log(z);
  auto px = x.handle();
  return make_node("log_sum_exp", {1}, {lse}, {x},
                   [px, mx, z, n](detail::Node& o) {
                     if (!wants(px)) return;
                     px->ensure_grad();
                     for (int j = 0; j < n; ++j)
                       px->grad[static_cast<std::size_t>(j)] +=
                           o.grad[0] * std::exp(px->data[static_cast<std::size_t>(j)] - mx) / z;
                   });
}

Tensor cross_entropy_with_logits(const Tensor& logits, int target) {
  require(logits.rank() == 1, "cross_entropy: rank-1 logits required");
  require(0 <= target && target < logits.dim(0), "cross_entropy: bad target");
  return sub(log_sum_exp(logits), pick(logits, target));
}

Tensor stack_scalars(const std::vector<Tensor>& scalars) {
  require(!scalars.empty(), "stack_scalars: no inputs");
  const int n = static_cast<int>(scalars.size());
  std::vector<double> out(static_cast<std::size_t>(n));
  std::vector<std::shared_ptr<detail::Node>> handles;
  bool needs_grad = false;
  for (int i = 0; i < n; ++i) {
    require(scalars[static_cast<std::size_t>(i)].size() == 1, "stack_scalars: scalar inputs required");
    out[static_cast<std::size_t>(i)] = scalars[static_cast<std::size_t>(i)].value();
    handles.push_back(scalars[static_cast<std::size_t>(i)].handle());
    needs_grad = needs_grad || (grad_enabled() && scalars[static_cast<std::size_t>(i)].requires_grad());
  }
  check_finite(out, "stack_scalars");
  auto node = std::make_shared<detail::Node>();
  node->shape = {n};
  node->data = std::move(out);
  node->requires_grad = needs_grad;
  if (needs_grad) {
    node->parents = handles;
    node->backward_fn = [handles](detail::Node& o) {
      for (std::size_t i = 0; i < handles.size(); ++i) accum(handles[i], 0, o.grad[i]);
    };
  }
  return Tensor::adopt(std::move(node));
}

Tensor dropout(const Tensor& a, double p, Rng& rng, bool training) {
  if (!training || p <= 0.0) return a;
  require(p < 1.0, "dropout: p must be < 1");
  const double keep = 1.0 - p;
  std::vector<double> mask(a.size());
  for (double& m : mask) m = rng.uniform() < p ? 0.0 : 1.0 / keep;
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * mask[i];
  auto pa = a.handle();
  auto pm = std::make_shared<std::vector<double>>(std::move(mask));
  return make_node("dropout", a.shape(), std::move(out), {a},
                   [pa, pm](detail::Node& o) {
                     for (std::size_t i = 0; i < o.size(); ++i)
                       accum(pa, i, o.grad[i] * (*pm)[i]);
                   });
}

}  // namespace scoter::numerics
