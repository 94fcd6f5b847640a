#pragma once

// Dense row-major float64 tensors with reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a graph node. Operations on tensors that
// require gradients record their inputs and a backward closure; calling
// backward() on a scalar result walks the recorded graph in reverse
// topological order and accumulates d(loss)/d(input) into every reachable
// tensor that requires gradients. Values produced by operations are never
// modified afterwards; only leaf tensors (parameters) may be written through
// mutable_values(), which is what optimizers and gradient checks do.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lightllm {

class SeededRng;

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something is accumulated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  const char* op = "leaf";

  double* grad_buffer();
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(Shape shape, SeededRng& rng, double stddev, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> values() const;
  // Leaf tensors only.
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t flat) const { return values()[flat]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();
  void clear_grad();

  // Back-propagates from this scalar; throws std::invalid_argument otherwise.
  void backward() const;

  // Copy of the values with no history.
  Tensor detach() const;
  const char* op_name() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  detail::Node& checked() const;
  std::shared_ptr<detail::Node> node_;
};

// While alive, operations record no graph (evaluation mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// --- arithmetic -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// x (..., n) + bias (n), broadcast over leading axes.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& x, double factor);
// x * s where s is a one-element tensor (gradient flows to s).
Tensor mul_scalar(const Tensor& x, const Tensor& s);
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor tanh(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor identity(const Tensor& x);

// Softmax along `axis` (negative counts from the end), max-subtracted.
Tensor softmax(const Tensor& x, int axis);

// Row-wise layer normalization of a 2-D tensor with affine gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// --- shape ----------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);
// out.flat[i] = index[i] < 0 ? 0 : x.flat[index[i]].
Tensor gather(const Tensor& x, Shape out_shape, std::vector<std::int64_t> index);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor select_rows(const Tensor& x, std::span<const std::size_t> rows);
// Concatenate along axis 0; trailing dimensions must agree.
Tensor concat_rows(std::span<const Tensor> parts);

// --- reductions -------------------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// (groups * n, d) -> (groups, d), mean over each consecutive block of n rows.
Tensor segment_mean(const Tensor& x, std::size_t n);

// --- structured ops ---------------------------------------------------------

// For x of shape (blocks * n, h): each block X_b becomes M X_b with the
// constant n x n matrix M.
Tensor block_apply(std::shared_ptr<const std::vector<double>> m, std::size_t n, const Tensor& x);

// Multi-head scaled dot-product attention over independent sample blocks.
// q: (batch * nq, d). k, v: (nk, d) shared by every block when shared_kv,
// otherwise (batch * nk, d). Heads split d into equal contiguous slices.
// Returns (batch * nq, d) with out = softmax(scale * q k^T) v per block/head.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                 std::size_t batch, bool shared_kv, double scale);

// Inverted dropout: keeps each entry with probability 1 - p, scaling by 1/(1-p).
Tensor dropout(const Tensor& x, double p, SeededRng& rng);

// --- losses ----------------------------------------------------------------

// Mean cross-entropy of logits (batch, classes) against class indices.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);
// Mean pinball loss of pred (m, levels) against target (m).
Tensor pinball_loss(const Tensor& pred, std::span<const double> target,
                    std::span<const double> levels);
Tensor mse_loss(const Tensor& pred, std::span<const double> target);

}  // namespace lightllm
