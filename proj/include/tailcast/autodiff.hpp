/*
 * Copyright 2026 The Tailcast Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Graph is a tape: every primitive appends a node holding its forward
// value and a closure that pushes the node's gradient back to its inputs.
// The tape is rebuilt for every forward pass and never reused. Parameters
// enter the tape through Graph::param, which borrows the tensor and
// remembers where to accumulate the gradient when backward() runs.
//
// All kernels accumulate each output element in a fixed order that does not
// depend on the number of rows, so scoring one window at a time and scoring
// a batch of windows give bit-identical results.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tailcast/error.hpp"
#include "tailcast/rng.hpp"

namespace tailcast::ad {

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), data_(std::move(values)) {
    require(data_.size() == rows_ * cols_, ErrorCode::kShapeMismatch,
            "tensor data length " + std::to_string(data_.size()) + " != " +
                std::to_string(rows_) + "x" + std::to_string(cols_));
  }

  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor row_vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor(1, n, std::move(v));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double item() const {
    require(size() == 1, ErrorCode::kNotScalar, "item() on a non-scalar tensor");
    return data_[0];
  }

  bool requires_grad = false;
  // Empty until a gradient has been accumulated; same length as data after.
  std::vector<double> grad;

  bool has_grad() const { return grad.size() == data_.size(); }
  void zero_grad() { grad.assign(data_.size(), 0.0); }

  bool operator==(const Tensor& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Serialized form: {"shape": [rows, cols], "values": [row-major doubles]}.
inline nlohmann::json tensor_to_json(const Tensor& t) {
  nlohmann::json j;
  j["shape"] = {t.rows(), t.cols()};
  j["values"] = std::vector<double>(t.values().begin(), t.values().end());
  return j;
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("shape") || !j.contains("values") ||
      !j["shape"].is_array() || j["shape"].size() != 2 || !j["values"].is_array()) {
    fail(ErrorCode::kCorruptFile, "tensor entry must have shape [r, c] and values");
  }
  const auto rows = j["shape"][0].get<std::size_t>();
  const auto cols = j["shape"][1].get<std::size_t>();
  auto values = j["values"].get<std::vector<double>>();
  if (values.size() != rows * cols) {
    fail(ErrorCode::kCorruptFile, "tensor values do not match shape");
  }
  return Tensor(rows, cols, std::move(values));
}

namespace kernel {

// out (n x m) = a (n x k) * b (k x m); out must be zeroed by the caller or
// hold a value to accumulate into.
inline void matmul_acc(const double* a, const double* b, double* out, std::size_t n,
                       std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* out_row = out + i * m;
    const double* a_row = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a_row[p];
      const double* b_row = b + p * m;
      for (std::size_t j = 0; j < m; ++j) out_row[j] += av * b_row[j];
    }
  }
}

inline std::vector<double> transpose(const double* a, std::size_t rows, std::size_t cols) {
  std::vector<double> t(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = a[r * cols + c];
  }
  return t;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace kernel

class Graph;

// Handle to a node on a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, int id) : graph_(graph), id_(id) {}

  const Tensor& value() const;
  double item() const { return value().item(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Graph* graph() const { return graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  int id_ = -1;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf bound to a parameter. If t.requires_grad, backward() accumulates
  // into t.grad. The tensor is borrowed, not copied: it must outlive the
  // graph and keep its value until the graph is discarded.
  Var param(Tensor& t) {
    Node node;
    node.borrowed = &t;
    node.param = &t;
    node.needs_grad = t.requires_grad;
    return push(std::move(node));
  }

  // Borrowed leaf that never receives gradients.
  Var frozen(const Tensor& t) {
    Node node;
    node.borrowed = &t;
    return push(std::move(node));
  }

  Var constant(Tensor t) {
    Node node;
    node.value = std::move(t);
    return push(std::move(node));
  }

  Var constant(double v) { return constant(Tensor::scalar(v)); }

  // Appends an op node. Inputs must belong to this graph.
  Var record(Tensor value, std::vector<int> inputs, BackwardFn fn) {
    Node node;
    node.value = std::move(value);
    for (int in : inputs) node.needs_grad = node.needs_grad || nodes_[in].needs_grad;
    node.inputs = std::move(inputs);
    if (node.needs_grad) node.backward = std::move(fn);
    return push(std::move(node));
  }

  // Fills gradients of every requires_grad parameter reachable from loss.
  // Parameter gradients accumulate across calls until zeroed by the caller.
  void backward(Var loss) {
    require(loss.graph() == this, ErrorCode::kShapeMismatch, "loss belongs to another graph");
    require(value(loss.id()).size() == 1, ErrorCode::kNotScalar,
            "backward() needs a scalar loss, got " + std::to_string(value(loss.id()).rows()) + "x" +
                std::to_string(value(loss.id()).cols()));
    for (auto& node : nodes_) node.grad.clear();
    grad(loss.id())[0] = 1.0;
    for (int id = loss.id(); id >= 0; --id) {
      Node& node = nodes_[id];
      if (!node.needs_grad || node.grad.empty()) continue;
      if (node.backward) node.backward(*this, id);
      if (node.param != nullptr) {
        Tensor& p = *node.param;
        if (!p.has_grad()) p.zero_grad();
        for (std::size_t i = 0; i < node.grad.size(); ++i) p.grad[i] += node.grad[i];
      }
    }
  }

  const Tensor& value(int id) const {
    const Node& node = nodes_[id];
    return node.borrowed != nullptr ? *node.borrowed : node.value;
  }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  const std::vector<int>& inputs(int id) const { return nodes_[id].inputs; }

  // Gradient buffer of a node, zero-allocated on first touch.
  std::vector<double>& grad(int id) {
    Node& node = nodes_[id];
    if (node.grad.empty()) node.grad.assign(value(id).size(), 0.0);
    return node.grad;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    std::vector<int> inputs;
    BackwardFn backward;
    const Tensor* borrowed = nullptr;
    Tensor* param = nullptr;
    bool needs_grad = false;
  };

  Var push(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, static_cast<int>(nodes_.size() - 1));
  }

  // Deque keeps value references stable while the tape grows.
  std::deque<Node> nodes_;
};

inline const Tensor& Var::value() const { return graph_->value(id_); }

namespace detail {

inline void check_same_graph(const Var& a, const Var& b) {
  require(a.graph() != nullptr && a.graph() == b.graph(), ErrorCode::kShapeMismatch,
          "operands belong to different graphs");
}

inline void check_same_shape(const Var& a, const Var& b, const char* op) {
  check_same_graph(a, b);
  require(a.value().same_shape(b.value()), ErrorCode::kShapeMismatch,
          std::string(op) + ": shapes " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
              " and " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

// Elementwise unary op. `deriv(x, y)` returns dy/dx from input and output.
template <typename Fwd, typename Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
  Graph& g = *a.graph();
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  const int ia = a.id();
  return g.record(std::move(y), {ia}, [ia, deriv](Graph& gr, int self) {
    const Tensor& xv = gr.value(ia);
    const Tensor& yv = gr.value(self);
    const std::vector<double>& gout = gr.grad(self);
    std::vector<double>& gin = gr.grad(ia);
    for (std::size_t i = 0; i < gin.size(); ++i) gin[i] += gout[i] * deriv(xv[i], yv[i]);
  });
}

}  // namespace detail

inline Var matmul(const Var& a, const Var& b) {
  detail::check_same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.cols() == bv.rows(), ErrorCode::kShapeMismatch,
          "matmul: " + std::to_string(av.rows()) + "x" + std::to_string(av.cols()) + " * " +
              std::to_string(bv.rows()) + "x" + std::to_string(bv.cols()));
  const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
  Tensor out(n, m);
  kernel::matmul_acc(av.data(), bv.data(), out.data(), n, k, m);
  const int ia = a.id(), ib = b.id();
  return a.graph()->record(std::move(out), {ia, ib}, [ia, ib, n, k, m](Graph& g, int self) {
    const std::vector<double>& gout = g.grad(self);
    if (g.needs_grad(ia)) {
      const std::vector<double> bt = kernel::transpose(g.value(ib).data(), k, m);
      kernel::matmul_acc(gout.data(), bt.data(), g.grad(ia).data(), n, m, k);
    }
    if (g.needs_grad(ib)) {
      const std::vector<double> at = kernel::transpose(g.value(ia).data(), n, k);
      kernel::matmul_acc(at.data(), gout.data(), g.grad(ib).data(), k, n, m);
    }
  });
}

inline Var add(const Var& a, const Var& b) {
  detail::check_same_shape(a, b, "add");
  Tensor out = a.value();
  out.requires_grad = false;
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const int ia = a.id(), ib = b.id();
  return a.graph()->record(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
    const std::vector<double>& gout = g.grad(self);
    for (int in : {ia, ib}) {
      if (!g.needs_grad(in)) continue;
      std::vector<double>& gin = g.grad(in);
      for (std::size_t i = 0; i < gin.size(); ++i) gin[i] += gout[i];
    }
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::check_same_shape(a, b, "sub");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const int ia = a.id(), ib = b.id();
  return a.graph()->record(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
    const std::vector<double>& gout = g.grad(self);
    if (g.needs_grad(ia)) {
      std::vector<double>& gin = g.grad(ia);
      for (std::size_t i = 0; i < gin.size(); ++i) gin[i] += gout[i];
    }
    if (g.needs_grad(ib)) {
      std::vector<double>& gin = g.grad(ib);
      for (std::size_t i = 0; i < gin.size(); ++i) gin[i] -= gout[i];
    }
  });
}

inline Var mul(const Var& a, const Var& b) {
  detail::check_same_shape(a, b, "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const int ia = a.id(), ib = b.id();
  return a.graph()->record(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
    const std::vector<double>& gout = g.grad(self);
    if (g.needs_grad(ia)) {
      const Tensor& bv = g.value(ib);
      std::vector<double>& gin = g.grad(ia);
      for (std::size_t i = 0; i < gin.size(); ++i) gin[i] += gout[i] * bv[i];
    }
    if (g.needs_grad(ib)) {
      const Tensor& av = g.value(ia);
      std::vector<double>& gin = g.grad(ib);
      for (std::size_t i = 0; i < gin.size(); ++i) gin[i] += gout[i] * av[i];
    }
  });
}

inline Var div(const Var& a, const Var& b) {
  detail::check_same_shape(a, b, "div");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) {
    require(bv[i] != 0.0, ErrorCode::kDomainError, "div by zero");
    out[i] = av[i] / bv[i];
  }
  const int ia = a.id(), ib = b.id();
  return a.graph()->record(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
    const std::vector<double>& gout = g.grad(self);
    const Tensor& bv = g.value(ib);
    if (g.needs_grad(ia)) {
      std::vector<double>& gin = g.grad(ia);
      for (std::size_t i = 0; i < gin.size(); ++i) gin[i] += gout[i] / bv[i];
    }
    if (g.needs_grad(ib)) {
      const Tensor& yv = g.value(self);
      std::vector<double>& gin = g.grad(ib);
      for (std::size_t i = 0; i < gin.size(); ++i) gin[i] -= gout[i] * yv[i] / bv[i];
    }
  });
}

// a (n x m) + row (1 x m), broadcast over rows.
inline Var add_row(const Var& a, const Var& row) {
  detail::check_same_graph(a, row);
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  require(rv.rows() == 1 && rv.cols() == av.cols(), ErrorCode::kShapeMismatch,
          "add_row: row must be 1x" + std::to_string(av.cols()));
  Tensor out(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) = av(r, c) + rv[c];
  }
  const int ia = a.id(), ir = row.id();
  const std::size_t n = av.rows(), m = av.cols();
  return a.graph()->record(std::move(out), {ia, ir}, [ia, ir, n, m](Graph& g, int self) {
    const std::vector<double>& gout = g.grad(self);
    if (g.needs_grad(ia)) {
      std::vector<double>& gin = g.grad(ia);
      for (std::size_t i = 0; i < gin.size(); ++i) gin[i] += gout[i];
    }
    if (g.needs_grad(ir)) {
      std::vector<double>& gin = g.grad(ir);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < m; ++c) gin[c] += gout[r * m + c];
      }
    }
  });
}

// scale * a + shift.
inline Var affine(const Var& a, double scale, double shift) {
  return detail::unary(
      a, [scale, shift](double x) { return scale * x + shift; },
      [scale](double, double) { return scale; });
}

inline Var scale(const Var& a, double s) { return affine(a, s, 0.0); }
inline Var neg(const Var& a) { return affine(a, -1.0, 0.0); }

inline Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorCode::kShapeMismatch, "concat_cols of nothing");
  const std::size_t n = parts.front().rows();
  std::size_t total = 0;
  std::vector<int> ids;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    detail::check_same_graph(parts.front(), p);
    require(p.rows() == n, ErrorCode::kShapeMismatch, "concat_cols: row counts differ");
    total += p.cols();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  Tensor out(n, total);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < n; ++r) {
      std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
    }
    offset += v.cols();
  }
  return parts.front().graph()->record(std::move(out), ids, [ids, widths, n, total](Graph& g, int self) {
    const std::vector<double>& gout = g.grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (g.needs_grad(ids[k])) {
        std::vector<double>& gin = g.grad(ids[k]);
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t c = 0; c < widths[k]; ++c) gin[r * widths[k] + c] += gout[r * total + off + c];
        }
      }
      off += widths[k];
    }
  });
}

inline Var slice_cols(const Var& a, std::size_t begin, std::size_t count) {
  const Tensor& av = a.value();
  require(begin + count <= av.cols(), ErrorCode::kShapeMismatch,
          "slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + count) + ") outside " +
              std::to_string(av.cols()) + " columns");
  const std::size_t n = av.rows(), m = av.cols();
  Tensor out(n, count);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < count; ++c) out(r, c) = av(r, begin + c);
  }
  const int ia = a.id();
  return a.graph()->record(std::move(out), {ia}, [ia, begin, count, n, m](Graph& g, int self) {
    const std::vector<double>& gout = g.grad(self);
    std::vector<double>& gin = g.grad(ia);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < count; ++c) gin[r * m + begin + c] += gout[r * count + c];
    }
  });
}

inline Var tanh(const Var& a) {
  return detail::unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid(const Var& a) {
  return detail::unary(a, kernel::sigmoid, [](double, double y) { return y * (1.0 - y); });
}

inline Var relu(const Var& a) {
  return detail::unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var softplus(const Var& a) {
  return detail::unary(a, kernel::softplus, [](double x, double) { return kernel::sigmoid(x); });
}

inline Var exp(const Var& a) {
  return detail::unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(const Var& a) {
  for (double x : a.value().values()) {
    require(x > 0.0, ErrorCode::kDomainError, "log of non-positive value " + std::to_string(x));
  }
  return detail::unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Var square(const Var& a) {
  return detail::unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// x^p elementwise; non-integer p needs x >= 0.
inline Var pow(const Var& a, double p) {
  if (p != std::floor(p)) {
    for (double x : a.value().values()) {
      require(x >= 0.0, ErrorCode::kDomainError, "pow of negative base with non-integer exponent");
    }
  }
  return detail::unary(
      a, [p](double x) { return std::pow(x, p); },
      [p](double x, double) { return p == 0.0 ? 0.0 : p * std::pow(x, p - 1.0); });
}

// Gradient passes only where lo < x < hi.
inline Var clamp(const Var& a, double lo, double hi) {
  return detail::unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

inline Var logsumexp_rows(const Var& a) {
  const Tensor& av = a.value();
  const std::size_t n = av.rows(), m = av.cols();
  require(m > 0, ErrorCode::kShapeMismatch, "logsumexp over zero columns");
  Tensor out(n, 1);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = av.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double x : row) s += std::exp(x - mx);
    out[r] = mx + std::log(s);
  }
  const int ia = a.id();
  return a.graph()->record(std::move(out), {ia}, [ia, n, m](Graph& g, int self) {
    const Tensor& xv = g.value(ia);
    const Tensor& yv = g.value(self);
    const std::vector<double>& gout = g.grad(self);
    std::vector<double>& gin = g.grad(ia);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < m; ++c) gin[r * m + c] += gout[r] * std::exp(xv(r, c) - yv[r]);
    }
  });
}

inline Var log_softmax_rows(const Var& a) {
  const Tensor& av = a.value();
  const std::size_t n = av.rows(), m = av.cols();
  Tensor out(n, m);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = av.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double x : row) s += std::exp(x - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < m; ++c) out(r, c) = row[c] - lse;
  }
  const int ia = a.id();
  return a.graph()->record(std::move(out), {ia}, [ia, n, m](Graph& g, int self) {
    const Tensor& yv = g.value(self);
    const std::vector<double>& gout = g.grad(self);
    std::vector<double>& gin = g.grad(ia);
    for (std::size_t r = 0; r < n; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < m; ++c) total += gout[r * m + c];
      for (std::size_t c = 0; c < m; ++c) gin[r * m + c] += gout[r * m + c] - std::exp(yv(r, c)) * total;
    }
  });
}

inline Var softmax_rows(const Var& a) {
  const Tensor& av = a.value();
  const std::size_t n = av.rows(), m = av.cols();
  Tensor out(n, m);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = av.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      out(r, c) = std::exp(row[c] - mx);
      s += out(r, c);
    }
    for (std::size_t c = 0; c < m; ++c) out(r, c) /= s;
  }
  const int ia = a.id();
  return a.graph()->record(std::move(out), {ia}, [ia, n, m](Graph& g, int self) {
    const Tensor& yv = g.value(self);
    const std::vector<double>& gout = g.grad(self);
    std::vector<double>& gin = g.grad(ia);
    for (std::size_t r = 0; r < n; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < m; ++c) dot += gout[r * m + c] * yv(r, c);
      for (std::size_t c = 0; c < m; ++c) gin[r * m + c] += yv(r, c) * (gout[r * m + c] - dot);
    }
  });
}

// Inverted dropout: in train mode each element is zeroed with probability p
// and survivors are scaled by 1/(1-p). Eval mode, or p == 0, is identity.
inline Var dropout(const Var& a, double p, bool train, Rng& rng) {
  require(p >= 0.0 && p < 1.0, ErrorCode::kDomainError, "dropout p must lie in [0, 1)");
  if (!train || p == 0.0) return a;
  const Tensor& av = a.value();
  std::vector<double> mask(av.size());
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& m : mask) m = rng.uniform() < p ? 0.0 : keep_scale;
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * mask[i];
  const int ia = a.id();
  return a.graph()->record(std::move(out), {ia}, [ia, mask = std::move(mask)](Graph& g, int self) {
    const std::vector<double>& gout = g.grad(self);
    std::vector<double>& gin = g.grad(ia);
    for (std::size_t i = 0; i < gin.size(); ++i) gin[i] += gout[i] * mask[i];
  });
}

inline Var sum(const Var& a) {
  double s = 0.0;
  for (double x : a.value().values()) s += x;
  const int ia = a.id();
  return a.graph()->record(Tensor::scalar(s), {ia}, [ia](Graph& g, int self) {
    const double gs = g.grad(self)[0];
    for (double& gi : g.grad(ia)) gi += gs;
  });
}

inline Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  require(n > 0, ErrorCode::kShapeMismatch, "mean of empty tensor");
  return scale(sum(a), 1.0 / n);
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }

// ---------------------------------------------------------------------------
// Finite-difference gradient check.

struct GradCheckFailure {
  std::size_t param = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  std::vector<GradCheckFailure> failures;
  bool passed() const { return failures.empty(); }
};

using LossBuilder = std::function<Var(Graph&)>;

// Compares reverse-mode gradients against central differences
// (f(θ+h e_i) - f(θ-h e_i)) / 2h. The relative error of an element is
// |a - n| / max(|a|, |n|, abs_floor); abs_floor keeps roundoff on
// near-zero gradients from reading as relative failure. `max_per_param`
// limits the checked elements per tensor (0 checks all), picked with an
// even stride so the selection is deterministic.
inline GradCheckReport grad_check(const LossBuilder& f, std::span<Tensor* const> params, double h = 1e-5,
                                  double tol = 1e-4, std::size_t max_per_param = 0, double abs_floor = 1e-5) {
  for (Tensor* p : params) {
    p->requires_grad = true;
    p->zero_grad();
  }
  {
    Graph g;
    g.backward(f(g));
  }
  auto eval = [&f]() {
    Graph g;
    return f(g).item();
  };
  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi];
    const std::size_t n = p.size();
    const std::size_t step = (max_per_param == 0 || n <= max_per_param) ? 1 : n / max_per_param;
    for (std::size_t i = 0; i < n; i += step) {
      const double saved = p[i];
      p[i] = saved + h;
      const double up = eval();
      p[i] = saved - h;
      const double down = eval();
      p[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p.grad[i];
      const double abs_err = std::abs(analytic - numeric);
      const double rel = abs_err / std::max({std::abs(analytic), std::abs(numeric), abs_floor});
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      report.max_rel_error = std::max(report.max_rel_error, rel);
      ++report.checked;
      if (!(rel < tol)) report.failures.push_back({pi, i, analytic, numeric});
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Adam.

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamHyper hyper;
  std::int64_t step_count = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// Bias-corrected Adam update in place. Gradients are left untouched.
inline void adam_step(std::span<Tensor* const> params, AdamState& state) {
  if (state.m.empty()) {
    for (Tensor* p : params) {
      state.m.emplace_back(p->size(), 0.0);
      state.v.emplace_back(p->size(), 0.0);
    }
  }
  require(state.m.size() == params.size(), ErrorCode::kShapeMismatch, "Adam state does not match params");
  for (std::size_t k = 0; k < params.size(); ++k) {
    require(params[k]->has_grad(), ErrorCode::kMissingGrad, "parameter " + std::to_string(k) + " has no gradient");
    require(state.m[k].size() == params[k]->size(), ErrorCode::kShapeMismatch, "Adam moment shape mismatch");
  }
  ++state.step_count;
  const AdamHyper& hp = state.hyper;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(hp.beta1, t);
  const double bc2 = 1.0 - std::pow(hp.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    std::vector<double>& m = state.m[k];
    std::vector<double>& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
      v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= hp.lr * m_hat / (std::sqrt(v_hat) + hp.eps);
    }
  }
}

}  // namespace tailcast::ad
