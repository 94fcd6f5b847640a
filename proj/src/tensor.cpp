#include "lightllm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "lightllm/kernels.hpp"
#include "lightllm/rng.hpp"

namespace lightllm {

using detail::Node;

namespace {

thread_local bool g_grad_enabled = true;

[[noreturn]] void fail(const std::string& what) { throw std::invalid_argument(what); }

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (!t.defined()) fail(std::string(op) + ": undefined tensor");
  if (t.rank() != rank)
    fail(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
         shape_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    fail(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
         shape_string(b.shape()));
}

// Builds the result node. History is only recorded when some input needs it.
Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<const Tensor*> inputs,
                   const char* op, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (g_grad_enabled)
    for (const Tensor* t : inputs) needs = needs || t->requires_grad();
  if (needs) {
    node->requires_grad = true;
    for (const Tensor* t : inputs) node->parents.push_back(t->node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

Tensor make_result(Shape shape, std::vector<double> value, std::span<const Tensor> inputs,
                   const char* op, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (g_grad_enabled)
    for (const Tensor& t : inputs) needs = needs || t.requires_grad();
  if (needs) {
    node->requires_grad = true;
    for (const Tensor& t : inputs) node->parents.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

template <class F>
Tensor unary(const Tensor& x, const char* op, F&& f) {
  std::vector<double> out(x.size());
  std::vector<double> deriv(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) f(xv[i], out[i], deriv[i]);
  Node* px = x.node().get();
  return make_result(x.shape(), std::move(out), {&x}, op,
                     [px, deriv = std::move(deriv)](Node& self) {
                       if (!px->requires_grad) return;
                       double* g = px->grad_buffer();
                       for (std::size_t i = 0; i < deriv.size(); ++i) g[i] += self.grad[i] * deriv[i];
                     });
}

}  // namespace

// --- Shape / Node / Tensor ------------------------------------------------------

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ')';
  return os.str();
}

double* Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad.data();
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  if (shape_size(shape) != values.size())
    fail("Tensor: shape " + shape_string(shape) + " does not match " +
         std::to_string(values.size()) + " values");
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, SeededRng& rng, double stddev, bool requires_grad) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.normal(0.0, stddev);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Node& Tensor::checked() const {
  if (!node_) fail("use of undefined Tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return checked().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) fail("Tensor::dim: axis out of range");
  return s[axis];
}

std::size_t Tensor::size() const { return checked().value.size(); }

std::span<const double> Tensor::values() const { return checked().value; }

std::span<double> Tensor::mutable_values() {
  Node& n = checked();
  if (!n.parents.empty() || n.backward) fail("mutable_values: only leaf tensors may be written");
  return n.value;
}

double Tensor::item() const {
  if (size() != 1) fail("Tensor::item: tensor has " + std::to_string(size()) + " elements");
  return checked().value[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  require_rank(*this, 2, "Tensor::at");
  return checked().value[row * dim(1) + col];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) fail("set_requires_grad: only leaf tensors");
  checked().requires_grad = flag;
}

bool Tensor::is_leaf() const { return checked().parents.empty() && !checked().backward; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const { return checked().grad; }

void Tensor::zero_grad() {
  Node& n = checked();
  if (!n.grad.empty()) std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

void Tensor::clear_grad() { checked().grad.clear(); }

Tensor Tensor::detach() const {
  return Tensor(shape(), std::vector<double>(values().begin(), values().end()));
}

const char* Tensor::op_name() const { return checked().op; }

void Tensor::backward() const {
  Node& root = checked();
  if (root.value.size() != 1)
    fail("backward: loss must be a scalar, got shape " + shape_string(root.shape));
  if (!root.requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{&root, 0}};
  visited.insert(&root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// --- arithmetic -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    fail("matmul: inner dimension mismatch " + shape_string(a.shape()) + " x " +
         shape_string(b.shape()));
  std::vector<double> out(m * n, 0.0);
  kernels::active().gemm_nn(m, n, k, a.values().data(), b.values().data(), out.data());
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return make_result({m, n}, std::move(out), {&a, &b}, "matmul", [pa, pb, m, n, k](Node& self) {
    const auto& kt = kernels::active();
    if (pa->requires_grad) kt.gemm_nt(m, k, n, self.grad.data(), pb->value.data(), pa->grad_buffer());
    if (pb->requires_grad) kt.gemm_tn(k, n, m, pa->value.data(), self.grad.data(), pb->grad_buffer());
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return make_result(a.shape(), std::move(out), {&a, &b}, "add", [pa, pb](Node& self) {
    for (Node* p : {pa, pb}) {
      if (!p->requires_grad) continue;
      double* g = p->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return make_result(a.shape(), std::move(out), {&a, &b}, "sub", [pa, pb](Node& self) {
    if (pa->requires_grad) {
      double* g = pa->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      double* g = pb->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  Node* pa = a.node().get();
  Node* pb = b.node().get();
  return make_result(a.shape(), std::move(out), {&a, &b}, "mul", [pa, pb](Node& self) {
    if (pa->requires_grad) {
      double* g = pa->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      double* g = pb->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * pa->value[i];
    }
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank(bias, 1, "add_bias");
  if (x.rank() < 1 || x.shape().back() != bias.dim(0))
    fail("add_bias: bias " + shape_string(bias.shape()) + " does not match " +
         shape_string(x.shape()));
  const std::size_t n = bias.dim(0);
  std::vector<double> out(x.values().begin(), x.values().end());
  const auto bv = bias.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % n];
  Node* px = x.node().get();
  Node* pb = bias.node().get();
  return make_result(x.shape(), std::move(out), {&x, &bias}, "add_bias", [px, pb, n](Node& self) {
    if (px->requires_grad) {
      double* g = px->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      double* g = pb->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(x, "scale", [factor](double v, double& y, double& d) {
    y = v * factor;
    d = factor;
  });
}

Tensor mul_scalar(const Tensor& x, const Tensor& s) {
  if (s.size() != 1) fail("mul_scalar: scale must have one element, got " + shape_string(s.shape()));
  const double c = s.item();
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * c;
  Node* px = x.node().get();
  Node* ps = s.node().get();
  return make_result(x.shape(), std::move(out), {&x, &s}, "mul_scalar", [px, ps](Node& self) {
    const double c = ps->value[0];
    if (px->requires_grad) {
      double* g = px->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * c;
    }
    if (ps->requires_grad) {
      double acc = 0.0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * px->value[i];
      ps->grad_buffer()[0] += acc;
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return add_bias(matmul(x, weight), bias);
}

Tensor tanh(const Tensor& x) {
  return unary(x, "tanh", [](double v, double& y, double& d) {
    y = std::tanh(v);
    d = 1.0 - y * y;
  });
}

Tensor gelu(const Tensor& x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2 / pi)
  constexpr double k = 0.044715;
  return unary(x, "gelu", [](double v, double& y, double& d) {
    const double inner = c * (v + k * v * v * v);
    const double t = std::tanh(inner);
    y = 0.5 * v * (1.0 + t);
    d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * c * (1.0 + 3.0 * k * v * v);
  });
}

Tensor identity(const Tensor& x) {
  return unary(x, "identity", [](double v, double& y, double& d) {
    y = v;
    d = 1.0;
  });
}

Tensor softmax(const Tensor& x, int axis) {
  const Shape& shape = x.shape();
  const int rank = static_cast<int>(shape.size());
  const int ax = axis < 0 ? axis + rank : axis;
  if (rank == 0 || ax < 0 || ax >= rank)
    fail("softmax: invalid axis " + std::to_string(axis) + " for shape " + shape_string(shape));
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= shape[i];
  for (int i = ax + 1; i < rank; ++i) inner *= shape[i];
  const std::size_t len = shape[ax];
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = xv[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= total;
    }
  }
  Node* px = x.node().get();
  return make_result(shape, std::move(out), {&x}, "softmax", [px, outer, inner, len](Node& self) {
    if (!px->requires_grad) return;
    double* g = px->grad_buffer();
    const auto& y = self.value;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dotp = 0.0;
        for (std::size_t j = 0; j < len; ++j) dotp += self.grad[base + j * inner] * y[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t idx = base + j * inner;
          g[idx] += y[idx] * (self.grad[idx] - dotp);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank(x, 2, "layer_norm");
  require_rank(gamma, 1, "layer_norm");
  require_rank(beta, 1, "layer_norm");
  const std::size_t rows = x.dim(0), d = x.dim(1);
  if (gamma.dim(0) != d || beta.dim(0) != d) fail("layer_norm: affine width mismatch");
  const auto xv = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();
  std::vector<double> out(xv.size());
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (row[j] - mu) * inv_std[r];
      out[r * d + j] = gv[j] * xhat[r * d + j] + bv[j];
    }
  }
  Node* px = x.node().get();
  Node* pg = gamma.node().get();
  Node* pb = beta.node().get();
  return make_result(
      x.shape(), std::move(out), {&x, &gamma, &beta}, "layer_norm",
      [px, pg, pb, rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const double* dy = self.grad.data();
        if (pg->requires_grad) {
          double* g = pg->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) g[j] += dy[r * d + j] * xhat[r * d + j];
        }
        if (pb->requires_grad) {
          double* g = pb->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) g[j] += dy[r * d + j];
        }
        if (px->requires_grad) {
          double* g = px->grad_buffer();
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = dy[r * d + j] * pg->value[j];
              mean_dxhat += dxh;
              mean_dxhat_xhat += dxh * xhat[r * d + j];
            }
            mean_dxhat *= inv_d;
            mean_dxhat_xhat *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = dy[r * d + j] * pg->value[j];
              g[r * d + j] += inv_std[r] * (dxh - mean_dxhat - xhat[r * d + j] * mean_dxhat_xhat);
            }
          }
        }
      });
}

// --- shape -----------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size())
    fail("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  std::vector<double> out(x.values().begin(), x.values().end());
  Node* px = x.node().get();
  return make_result(std::move(shape), std::move(out), {&x}, "reshape", [px](Node& self) {
    if (!px->requires_grad) return;
    double* g = px->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  Node* px = x.node().get();
  return make_result({c, r}, std::move(out), {&x}, "transpose", [px, r, c](Node& self) {
    if (!px->requires_grad) return;
    double* g = px->grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
  });
}

Tensor gather(const Tensor& x, Shape out_shape, std::vector<std::int64_t> index) {
  if (shape_size(out_shape) != index.size())
    fail("gather: index count does not match output shape " + shape_string(out_shape));
  const auto xv = x.values();
  const auto limit = static_cast<std::int64_t>(xv.size());
  std::vector<double> out(index.size(), 0.0);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= limit) fail("gather: index out of range");
    if (index[i] >= 0) out[i] = xv[static_cast<std::size_t>(index[i])];
  }
  Node* px = x.node().get();
  return make_result(std::move(out_shape), std::move(out), {&x}, "gather",
                     [px, index = std::move(index)](Node& self) {
                       if (!px->requires_grad) return;
                       double* g = px->grad_buffer();
                       for (std::size_t i = 0; i < index.size(); ++i)
                         if (index[i] >= 0) g[index[i]] += self.grad[i];
                     });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank(x, 2, "slice_rows");
  if (begin + count > x.dim(0)) fail("slice_rows: range out of bounds");
  const std::size_t c = x.dim(1);
  std::vector<std::int64_t> idx(count * c);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::int64_t>(begin * c + i);
  return gather(x, {count, c}, std::move(idx));
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank(x, 2, "slice_cols");
  if (begin + count > x.dim(1)) fail("slice_cols: range out of bounds");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<std::int64_t> idx(r * count);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < count; ++j)
      idx[i * count + j] = static_cast<std::int64_t>(i * c + begin + j);
  return gather(x, {r, count}, std::move(idx));
}

Tensor select_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_rank(x, 2, "select_rows");
  const std::size_t c = x.dim(1);
  std::vector<std::int64_t> idx(rows.size() * c);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.dim(0)) fail("select_rows: row out of range");
    for (std::size_t j = 0; j < c; ++j) idx[i * c + j] = static_cast<std::int64_t>(rows[i] * c + j);
  }
  return gather(x, {rows.size(), c}, std::move(idx));
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) fail("concat_rows: nothing to concatenate");
  Shape trailing(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  std::vector<double> out;
  for (const Tensor& p : parts) {
    if (p.rank() < 1 || Shape(p.shape().begin() + 1, p.shape().end()) != trailing)
      fail("concat_rows: trailing shape mismatch");
    rows += p.dim(0);
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  Shape shape{rows};
  shape.insert(shape.end(), trailing.begin(), trailing.end());
  std::vector<Node*> nodes;
  for (const Tensor& p : parts) nodes.push_back(p.node().get());
  return make_result(std::move(shape), std::move(out), parts, "concat_rows",
                     [nodes = std::move(nodes)](Node& self) {
                       std::size_t offset = 0;
                       for (Node* p : nodes) {
                         if (p->requires_grad) {
                           double* g = p->grad_buffer();
                           for (std::size_t i = 0; i < p->value.size(); ++i)
                             g[i] += self.grad[offset + i];
                         }
                         offset += p->value.size();
                       }
                     });
}

// --- reductions -----------------------------------------------------------

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  Node* px = x.node().get();
  return make_result({1}, {total}, {&x}, "sum", [px](Node& self) {
    if (!px->requires_grad) return;
    double* g = px->grad_buffer();
    for (std::size_t i = 0; i < px->value.size(); ++i) g[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) fail("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor segment_mean(const Tensor& x, std::size_t n) {
  require_rank(x, 2, "segment_mean");
  if (n == 0 || x.dim(0) % n != 0) fail("segment_mean: rows not divisible by segment length");
  const std::size_t groups = x.dim(0) / n, d = x.dim(1);
  const auto xv = x.values();
  std::vector<double> out(groups * d, 0.0);
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < d; ++j) out[g * d + j] += xv[(g * n + r) * d + j] * inv;
  Node* px = x.node().get();
  return make_result({groups, d}, std::move(out), {&x}, "segment_mean",
                     [px, groups, n, d, inv](Node& self) {
                       if (!px->requires_grad) return;
                       double* gx = px->grad_buffer();
                       for (std::size_t g = 0; g < groups; ++g)
                         for (std::size_t r = 0; r < n; ++r)
                           for (std::size_t j = 0; j < d; ++j)
                             gx[(g * n + r) * d + j] += self.grad[g * d + j] * inv;
                     });
}

// --- structured ops ----------------------------------------------------------

Tensor block_apply(std::shared_ptr<const std::vector<double>> m, std::size_t n, const Tensor& x) {
  require_rank(x, 2, "block_apply");
  if (!m || m->size() != n * n) fail("block_apply: matrix must be n x n");
  if (n == 0 || x.dim(0) % n != 0) fail("block_apply: rows not divisible by block size");
  const std::size_t blocks = x.dim(0) / n, h = x.dim(1);
  std::vector<double> out(x.size(), 0.0);
  const auto& kt = kernels::active();
  for (std::size_t b = 0; b < blocks; ++b)
    kt.gemm_nn(n, h, n, m->data(), x.values().data() + b * n * h, out.data() + b * n * h);
  Node* px = x.node().get();
  return make_result(x.shape(), std::move(out), {&x}, "block_apply",
                     [px, m = std::move(m), n, h, blocks](Node& self) {
                       if (!px->requires_grad) return;
                       double* g = px->grad_buffer();
                       const auto& kt = kernels::active();
                       for (std::size_t b = 0; b < blocks; ++b)
                         kt.gemm_tn(n, h, n, m->data(), self.grad.data() + b * n * h, g + b * n * h);
                     });
}

namespace {

// Copies columns [col, col + width) of rows [row, row + count) into dst.
void copy_head(const double* src, std::size_t src_cols, std::size_t row, std::size_t count,
               std::size_t col, std::size_t width, double* dst) {
  for (std::size_t r = 0; r < count; ++r)
    std::copy_n(src + (row + r) * src_cols + col, width, dst + r * width);
}

void add_head(const double* src, std::size_t dst_cols, std::size_t row, std::size_t count,
              std::size_t col, std::size_t width, double* dst) {
  for (std::size_t r = 0; r < count; ++r)
    for (std::size_t j = 0; j < width; ++j) dst[(row + r) * dst_cols + col + j] += src[r * width + j];
}

void softmax_rows_inplace(double* s, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = s + r * cols;
    double mx = row[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      total += row[j];
    }
    for (std::size_t j = 0; j < cols; ++j) row[j] /= total;
  }
}

}  // namespace

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                 std::size_t batch, bool shared_kv, double scale_factor) {
  require_rank(q, 2, "attention");
  require_rank(k, 2, "attention");
  require_rank(v, 2, "attention");
  const std::size_t d = q.dim(1);
  if (k.dim(1) != d || v.dim(1) != d) fail("attention: width mismatch between q, k and v");
  if (k.dim(0) != v.dim(0)) fail("attention: key/value row mismatch");
  if (heads == 0 || d % heads != 0) fail("attention: width not divisible by heads");
  if (batch == 0 || q.dim(0) % batch != 0) fail("attention: query rows not divisible by batch");
  if (!shared_kv && k.dim(0) % batch != 0) fail("attention: key rows not divisible by batch");
  const std::size_t nq = q.dim(0) / batch;
  const std::size_t nk = shared_kv ? k.dim(0) : k.dim(0) / batch;
  if (nk == 0) fail("attention: no keys");
  const std::size_t dk = d / heads;

  const auto& kt = kernels::active();
  std::vector<double> out(q.dim(0) * d, 0.0);
  auto probs = std::make_shared<std::vector<double>>(batch * heads * nq * nk);
  std::vector<double> qh(nq * dk), kh(nk * dk), vh(nk * dk), oh(nq * dk);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t kv_row = shared_kv ? 0 : b * nk;
    for (std::size_t h = 0; h < heads; ++h) {
      copy_head(q.values().data(), d, b * nq, nq, h * dk, dk, qh.data());
      copy_head(k.values().data(), d, kv_row, nk, h * dk, dk, kh.data());
      copy_head(v.values().data(), d, kv_row, nk, h * dk, dk, vh.data());
      double* p = probs->data() + (b * heads + h) * nq * nk;
      std::fill_n(p, nq * nk, 0.0);
      kt.gemm_nt(nq, nk, dk, qh.data(), kh.data(), p);
      for (std::size_t i = 0; i < nq * nk; ++i) p[i] *= scale_factor;
      softmax_rows_inplace(p, nq, nk);
      std::fill(oh.begin(), oh.end(), 0.0);
      kt.gemm_nn(nq, dk, nk, p, vh.data(), oh.data());
      add_head(oh.data(), d, b * nq, nq, h * dk, dk, out.data());
    }
  }

  Node* pq = q.node().get();
  Node* pk = k.node().get();
  Node* pv = v.node().get();
  return make_result(
      q.shape(), std::move(out), {&q, &k, &v}, "attention",
      [pq, pk, pv, probs, heads, batch, shared_kv, scale_factor, nq, nk, dk, d](Node& self) {
        const auto& kt = kernels::active();
        std::vector<double> qh(nq * dk), kh(nk * dk), vh(nk * dk), doh(nq * dk);
        std::vector<double> dp(nq * nk), dqh(nq * dk), dkh(nk * dk), dvh(nk * dk);
        for (std::size_t b = 0; b < batch; ++b) {
          const std::size_t kv_row = shared_kv ? 0 : b * nk;
          for (std::size_t h = 0; h < heads; ++h) {
            const double* p = probs->data() + (b * heads + h) * nq * nk;
            copy_head(self.grad.data(), d, b * nq, nq, h * dk, dk, doh.data());
            copy_head(pq->value.data(), d, b * nq, nq, h * dk, dk, qh.data());
            copy_head(pk->value.data(), d, kv_row, nk, h * dk, dk, kh.data());
            copy_head(pv->value.data(), d, kv_row, nk, h * dk, dk, vh.data());
            if (pv->requires_grad) {
              std::fill(dvh.begin(), dvh.end(), 0.0);
              kt.gemm_tn(nk, dk, nq, p, doh.data(), dvh.data());
              add_head(dvh.data(), d, kv_row, nk, h * dk, dk, pv->grad_buffer());
            }
            if (!pq->requires_grad && !pk->requires_grad) continue;
            std::fill(dp.begin(), dp.end(), 0.0);
            kt.gemm_nt(nq, nk, dk, doh.data(), vh.data(), dp.data());
            for (std::size_t i = 0; i < nq; ++i) {
              double rowdot = 0.0;
              for (std::size_t j = 0; j < nk; ++j) rowdot += dp[i * nk + j] * p[i * nk + j];
              for (std::size_t j = 0; j < nk; ++j)
                dp[i * nk + j] = p[i * nk + j] * (dp[i * nk + j] - rowdot) * scale_factor;
            }
            if (pq->requires_grad) {
              std::fill(dqh.begin(), dqh.end(), 0.0);
              kt.gemm_nn(nq, dk, nk, dp.data(), kh.data(), dqh.data());
              add_head(dqh.data(), d, b * nq, nq, h * dk, dk, pq->grad_buffer());
            }
            if (pk->requires_grad) {
              std::fill(dkh.begin(), dkh.end(), 0.0);
              kt.gemm_tn(nk, dk, nq, dp.data(), qh.data(), dkh.data());
              add_head(dkh.data(), d, kv_row, nk, h * dk, dk, pk->grad_buffer());
            }
          }
        }
      });
}

Tensor dropout(const Tensor& x, double p, SeededRng& rng) {
  if (p < 0.0 || p >= 1.0) fail("dropout: rate must be in [0, 1)");
  if (p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size());
  for (double& m : mask) m = rng.bernoulli(p) ? 0.0 : keep_scale;
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  Node* px = x.node().get();
  return make_result(x.shape(), std::move(out), {&x}, "dropout",
                     [px, mask = std::move(mask)](Node& self) {
                       if (!px->requires_grad) return;
                       double* g = px->grad_buffer();
                       for (std::size_t i = 0; i < mask.size(); ++i) g[i] += self.grad[i] * mask[i];
                     });
}

// --- losses -----------------------------------------------------------------

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t rows = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != rows) fail("cross_entropy: label count does not match batch");
  const auto lv = logits.values();
  auto probs = std::make_shared<std::vector<double>>(lv.begin(), lv.end());
  softmax_rows_inplace(probs->data(), rows, classes);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] >= classes) fail("cross_entropy: label out of range");
    const double* row = lv.data() + r * classes;
    double mx = row[0];
    for (std::size_t j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < classes; ++j) z += std::exp(row[j] - mx);
    total += (mx + std::log(z)) - row[labels[r]];
  }
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  Node* pl = logits.node().get();
  return make_result({1}, {total / static_cast<double>(rows)}, {&logits}, "cross_entropy",
                     [pl, probs, lab = std::move(lab), rows, classes](Node& self) {
                       if (!pl->requires_grad) return;
                       double* g = pl->grad_buffer();
                       const double s = self.grad[0] / static_cast<double>(rows);
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t j = 0; j < classes; ++j)
                           g[r * classes + j] +=
                               s * ((*probs)[r * classes + j] - (j == lab[r] ? 1.0 : 0.0));
                     });
}

Tensor pinball_loss(const Tensor& pred, std::span<const double> target,
                    std::span<const double> levels) {
  require_rank(pred, 2, "pinball_loss");
  const std::size_t rows = pred.dim(0), nl = pred.dim(1);
  if (target.size() != rows) fail("pinball_loss: target count does not match rows");
  if (levels.size() != nl) fail("pinball_loss: level count does not match columns");
  const auto pv = pred.values();
  std::vector<double> deriv(pv.size());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t l = 0; l < nl; ++l) {
      const double u = target[r] - pv[r * nl + l];
      const double tau = levels[l];
      total += u >= 0.0 ? tau * u : (tau - 1.0) * u;
      deriv[r * nl + l] = u >= 0.0 ? -tau : 1.0 - tau;
    }
  }
  const double inv = 1.0 / static_cast<double>(rows * nl);
  Node* pp = pred.node().get();
  return make_result({1}, {total * inv}, {&pred}, "pinball_loss",
                     [pp, deriv = std::move(deriv), inv](Node& self) {
                       if (!pp->requires_grad) return;
                       double* g = pp->grad_buffer();
                       for (std::size_t i = 0; i < deriv.size(); ++i)
                         g[i] += self.grad[0] * inv * deriv[i];
                     });
}

Tensor mse_loss(const Tensor& pred, std::span<const double> target) {
  if (pred.size() != target.size()) fail("mse_loss: length mismatch");
  if (target.empty()) fail("mse_loss: empty input");
  const auto pv = pred.values();
  std::vector<double> diff(pv.size());
  double total = 0.0;
  for (std::size_t i = 0; i < diff.size(); ++i) {
    diff[i] = pv[i] - target[i];
    total += diff[i] * diff[i];
  }
  const double inv = 1.0 / static_cast<double>(diff.size());
  Node* pp = pred.node().get();
  return make_result({1}, {total * inv}, {&pred}, "mse_loss",
                     [pp, diff = std::move(diff), inv](Node& self) {
                       if (!pp->requires_grad) return;
                       double* g = pp->grad_buffer();
                       for (std::size_t i = 0; i < diff.size(); ++i)
                         g[i] += self.grad[0] * 2.0 * inv * diff[i];
                     });
}

}  // namespace lightllm
