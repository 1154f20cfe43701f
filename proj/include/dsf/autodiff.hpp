#pragma once

// Reverse-mode differentiation over a closed set of dense operations.
//
// A Graph records every operation applied to its Vars. Values are computed
// eagerly; Graph::backward walks the record in reverse and accumulates
// gradients, finally adding parameter gradients into their ParamStore slots.

#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "dsf/array.hpp"
#include "dsf/params.hpp"

namespace dsf::inline DSF_PREC::ad {

class Graph;

class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::uint32_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::uint32_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

  const Array& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::uint32_t self)>;

  /// With track_gradients = false, parameters enter as constants and no
  /// backward closures are kept (inference mode).
  explicit Graph(bool track_gradients = true) : track_gradients_(track_gradients) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Array value);
  /// Leaf that receives a gradient (readable via grad() after backward).
  Var variable(Array value);
  /// Leaf bound to a ParamStore entry; backward adds into the entry's grad.
  Var param(ParamStore& store, const std::string& name);

  const Array& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  bool has_grad(Var v) const { return nodes_[v.id()].grad_ready; }
  const Array& grad(Var v) const;

  /// Seeds d(loss)/d(loss) = 1 for a single-element loss and propagates.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

  // Used by operation implementations.
  Var record(Array value, std::initializer_list<Var> parents, BackwardFn backward);
  const Array& out_grad(std::uint32_t id) const { return nodes_[id].grad; }
  /// Zero-initialized on first access; nullptr when the node needs no grad.
  Array* grad_slot(Var v);

 private:
  struct Node {
    Array value;
    Array grad;
    bool requires_grad = false;
    bool grad_ready = false;
    BackwardFn backward;
    ParamStore::Entry* param = nullptr;
  };

  bool track_gradients_ = true;
  std::vector<Node> nodes_;
  std::unordered_map<const ParamStore::Entry*, std::uint32_t> param_nodes_;
};

// ---- linear algebra ----
Var matmul(Var a, Var b);     // [m x k] * [k x n]
Var matmul_nt(Var a, Var b);  // [m x k] * [n x k]^T
/// x * w^T + b with w [out x in], b [out].
Var linear(Var x, Var w, Var b);
Var linear(Var x, Var w);

// ---- elementwise ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, Real s);
Var add_scalar(Var a, Real s);
Var add_rowvec(Var x, Var v);  // x[n x c] + v[c] on every row
Var mul_rowvec(Var x, Var v);  // x[n x c] * v[c] on every row
Var relu(Var x);
Var leaky_relu(Var x, Real slope);
Var abs(Var x);
/// x^p for strictly positive x.
Var pow_scalar(Var x, Real p);

// ---- normalization / softmax ----
Var softmax_rows(Var x);
/// Per-row standardization (no affine).
Var layernorm_rows(Var x, Real eps = Real(1e-5));
/// Per-column standardization over rows (no affine).
Var normalize_cols(Var x, Real eps = Real(1e-5));
/// x[n*k x c]: softmax over each group of k consecutive rows, per column.
Var group_softmax(Var x, std::size_t k);

// ---- reductions ----
Var sum_all(Var x);
Var row_sum(Var x);                      // [n x c] -> [n x 1]
Var group_sum(Var x, std::size_t k);     // [n*k x c] -> [n x c]
Var group_max(Var x, std::size_t k);     // [n*k x c] -> [n x c]

// ---- indexing / layout ----
Var gather_rows(Var x, std::span<const std::uint32_t> index);
Var repeat_rows(Var x, std::size_t k);   // row i -> rows i*k .. i*k+k-1
Var concat_cols(Var a, Var b);
Var slice_cols(Var x, std::size_t begin, std::size_t count);

}  // namespace dsf::inline DSF_PREC::ad
