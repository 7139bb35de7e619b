#pragma once

// SPDX-License-Identifier: Apache-2.0

// Dense float64 tensor kernel with reverse-mode differentiation.
//
// Design: every op builds a node in an implicit DAG; backward() walks the
// graph from a scalar loss in reverse topological order. Gradients
// accumulate additively when a tensor is reused. A graph and its tensors
// belong to one worker; distinct graphs may live on distinct threads.
//
// Only the operations the fusion/backbone stack needs are provided - this
// is not a general broadcasting library.

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "scoter/rng.hpp"

namespace scoter::numerics {

using Shape = std::vector<int>;

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated on first use
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad, accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  std::size_t size() const { return data.size(); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// Entries ~ N(0, stddev^2).
  static Tensor randn(Shape shape, Rng& rng, double stddev,
                      bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const;
  int dim(int i) const;
  std::size_t size() const;
  bool requires_grad() const;

  const std::vector<double>& data() const;
  /// Mutable access for leaf tensors (parameter init / optimizer updates).
  std::vector<double>& mutable_data();

  double value() const;           // scalar tensors only
  double at(int i) const;         // flat index
  double at(int i, int j) const;  // rank-2

  bool has_grad() const;
  const std::vector<double>& grad() const;
  std::vector<double>& mutable_grad();
  void zero_grad();

  // Graph internals, used by the op implementations.
  const std::shared_ptr<detail::Node>& handle() const { return node_; }
  static Tensor adopt(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

// Backward pass from a scalar loss. Seeds d(loss)/d(loss)=1 and accumulates
// gradients into every reachable tensor with requires_grad set.
void backward(const Tensor& loss);

/// Scoped inference mode: ops built while a guard is alive record no
/// parents and no backward closures (thread-local).
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

// ---------------------------------------------------------------------------
// Operations. All differentiable unless noted. Shape violations throw
// ShapeError; non-finite outputs throw NumericError.
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);   // [m,k]x[k,n] -> [m,n]
Tensor transpose(const Tensor& a);                 // [m,n] -> [n,m]

Tensor add(const Tensor& a, const Tensor& b);      // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);      // elementwise
Tensor add_rowvec(const Tensor& a, const Tensor& v);  // [m,n] + [n] per row
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);

/// Numerically stable softmax along the given axis (-1 = last).
Tensor softmax(const Tensor& a, int axis = -1);

/// Per-last-axis normalization followed by the gamma/beta affine.
/// gamma and beta are rank-1 of length d = last dim; d must be >= 2.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

/// Same data, new shape (sizes must agree); gradient passes through.
Tensor reshape(const Tensor& a, Shape shape);

Tensor concat_last_axis(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, int begin, int end);  // [m,n] -> [m,e-b]
Tensor row(const Tensor& a, int r);                      // [m,n] -> [n]
Tensor mean_rows(const Tensor& a);                       // [m,n] -> [n]

/// Rows of an embedding table; backward scatter-adds into the table.
Tensor gather_rows(const Tensor& table, const std::vector<int>& indices);

Tensor sum(const Tensor& a);        // -> scalar
Tensor mean(const Tensor& a);       // -> scalar
Tensor pick(const Tensor& v, int index);  // rank-1 -> scalar

/// Cosine similarity of two same-length rank-1 tensors.
/// Throws DegenerateNormError when either norm is ~0.
Tensor cosine_similarity(const Tensor& u, const Tensor& v);

/// log(sum(exp(x))) over a rank-1 tensor, max-shifted for stability.
Tensor log_sum_exp(const Tensor& x);

/// -log softmax(logits)[target] for a rank-1 logits tensor.
Tensor cross_entropy_with_logits(const Tensor& logits, int target);

Tensor stack_scalars(const std::vector<Tensor>& scalars);  // n -> [n]

/// Inverted dropout. Identity when !training or p == 0.
Tensor dropout(const Tensor& a, double p, Rng& rng, bool training);

}  // namespace scoter::numerics
