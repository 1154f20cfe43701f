#include "dsf/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dsf/kernels.hpp"

namespace dsf::inline DSF_PREC::ad {

namespace kp = kernels::par;

const Array& Var::value() const { return graph_->value(*this); }

Var Graph::constant(Array value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, {}, nullptr});
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::variable(Array value) {
  nodes_.push_back(Node{std::move(value), {}, true, false, {}, nullptr});
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::param(ParamStore& store, const std::string& name) {
  auto& entry = store.at(name);
  if (auto it = param_nodes_.find(&entry); it != param_nodes_.end()) {
    return Var(this, it->second);
  }
  nodes_.push_back(Node{entry.value, {}, track_gradients_, false, {},
                        track_gradients_ ? &entry : nullptr});
  const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
  param_nodes_.emplace(&entry, id);
  return Var(this, id);
}

const Array& Graph::grad(Var v) const {
  const auto& n = nodes_[v.id()];
  if (!n.grad_ready) throw std::logic_error("graph: no gradient recorded for node");
  return n.grad;
}

Var Graph::record(Array value, std::initializer_list<Var> parents, BackwardFn backward) {
  bool rg = false;
  for (const auto& p : parents) rg = rg || nodes_[p.id()].requires_grad;
  nodes_.push_back(Node{std::move(value), {}, rg, false, rg ? std::move(backward) : BackwardFn{},
                        nullptr});
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Array* Graph::grad_slot(Var v) {
  auto& n = nodes_[v.id()];
  if (!n.requires_grad) return nullptr;
  if (!n.grad_ready) {
    n.grad = Array(n.value.shape());
    n.grad_ready = true;
  }
  return &n.grad;
}

void Graph::backward(Var loss) {
  if (value(loss).size() != 1) {
    throw ShapeError("backward: loss must have one element, got shape " +
                     shape_str(value(loss).shape()));
  }
  for (auto& n : nodes_) n.grad_ready = false;
  Array* seed = grad_slot(loss);
  if (seed == nullptr) return;
  (*seed)[0] = Real{1};
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    auto& n = nodes_[i];
    if (n.grad_ready && n.backward) n.backward(*this, static_cast<std::uint32_t>(i));
  }
  for (auto& n : nodes_) {
    if (n.param == nullptr || !n.grad_ready) continue;
    auto dst = n.param->grad.values();
    auto src = n.grad.values();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    n.param->touched = true;
  }
}

namespace {

void require_same_graph(Var a, Var b, const char* op) {
  if (&a.graph() != &b.graph()) {
    throw std::invalid_argument(std::string(op) + ": operands belong to different graphs");
  }
}

void require_same_shape(const Array& a, const Array& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_matrix(const Array& a, const char* op) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
  }
}

void add_into(Array& dst, const Array& src) {
  Real* d = dst.data();
  const Real* s = src.data();
  const std::size_t n = dst.size();
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) d[i] += s[i];
}

template <typename F>
Var unary(Var x, F&& f, Graph::BackwardFn backward) {
  Array out(x.shape());
  const Array& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return x.graph().record(std::move(out), {x}, std::move(backward));
}

}  // namespace

// ---- linear algebra ----

Var matmul(Var a, Var b) {
  require_same_graph(a, b, "matmul");
  const Array& av = a.value();
  const Array& bv = b.value();
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(av.shape()) + " * " +
                     shape_str(bv.shape()));
  }
  const kernels::Gemm g{av.rows(), av.cols(), bv.cols()};
  Array out = Array::matrix(g.m, g.n);
  kp::matmul(av.values(), bv.values(), out.values(), g);
  return a.graph().record(std::move(out), {a, b}, [a, b, g](Graph& gr, std::uint32_t self) {
    const Array& dy = gr.out_grad(self);
    if (Array* ga = gr.grad_slot(a)) {
      kp::matmul_nt(dy.values(), b.value().values(), ga->values(), {g.m, g.n, g.k}, true);
    }
    if (Array* gb = gr.grad_slot(b)) {
      kp::matmul_tn(a.value().values(), dy.values(), gb->values(), {g.m, g.k, g.n}, true);
    }
  });
}

Var matmul_nt(Var a, Var b) {
  require_same_graph(a, b, "matmul_nt");
  const Array& av = a.value();
  const Array& bv = b.value();
  require_matrix(av, "matmul_nt");
  require_matrix(bv, "matmul_nt");
  if (av.cols() != bv.cols()) {
    throw ShapeError("matmul_nt: inner dimensions differ " + shape_str(av.shape()) + " * " +
                     shape_str(bv.shape()) + "^T");
  }
  const kernels::Gemm g{av.rows(), av.cols(), bv.rows()};
  Array out = Array::matrix(g.m, g.n);
  kp::matmul_nt(av.values(), bv.values(), out.values(), g);
  return a.graph().record(std::move(out), {a, b}, [a, b, g](Graph& gr, std::uint32_t self) {
    const Array& dy = gr.out_grad(self);
    if (Array* ga = gr.grad_slot(a)) {
      kp::matmul(dy.values(), b.value().values(), ga->values(), {g.m, g.n, g.k}, true);
    }
    if (Array* gb = gr.grad_slot(b)) {
      kp::matmul_tn(dy.values(), a.value().values(), gb->values(), {g.m, g.n, g.k}, true);
    }
  });
}

Var linear(Var x, Var w, Var b) {
  require_same_graph(x, w, "linear");
  require_same_graph(x, b, "linear");
  const Array& xv = x.value();
  const Array& wv = w.value();
  const Array& bv = b.value();
  require_matrix(xv, "linear");
  require_matrix(wv, "linear");
  if (xv.cols() != wv.cols() || bv.size() != wv.rows()) {
    throw ShapeError("linear: input " + shape_str(xv.shape()) + ", weight " +
                     shape_str(wv.shape()) + ", bias " + shape_str(bv.shape()));
  }
  const std::size_t n = xv.rows(), in = xv.cols(), out_dim = wv.rows();
  Array out = Array::matrix(n, out_dim);
  kp::matmul_nt(xv.values(), wv.values(), out.values(), {n, in, out_dim});
  for (std::size_t r = 0; r < n; ++r) {
    Real* o = out.data() + r * out_dim;
#pragma omp simd
    for (std::size_t c = 0; c < out_dim; ++c) o[c] += bv[c];
  }
  return x.graph().record(
      std::move(out), {x, w, b}, [x, w, b, n, in, out_dim](Graph& gr, std::uint32_t self) {
        const Array& dy = gr.out_grad(self);
        if (Array* gx = gr.grad_slot(x)) {
          kp::matmul(dy.values(), w.value().values(), gx->values(), {n, out_dim, in}, true);
        }
        if (Array* gw = gr.grad_slot(w)) {
          kp::matmul_tn(dy.values(), x.value().values(), gw->values(), {n, out_dim, in}, true);
        }
        if (Array* gb = gr.grad_slot(b)) {
          for (std::size_t r = 0; r < n; ++r) {
            const Real* d = dy.data() + r * out_dim;
            for (std::size_t c = 0; c < out_dim; ++c) (*gb)[c] += d[c];
          }
        }
      });
}

Var linear(Var x, Var w) {
  require_same_graph(x, w, "linear");
  return matmul_nt(x, w);
}

// ---- elementwise ----

Var add(Var a, Var b) {
  require_same_graph(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Array out = a.value();
  add_into(out, b.value());
  return a.graph().record(std::move(out), {a, b}, [a, b](Graph& gr, std::uint32_t self) {
    const Array& dy = gr.out_grad(self);
    if (Array* ga = gr.grad_slot(a)) add_into(*ga, dy);
    if (Array* gb = gr.grad_slot(b)) add_into(*gb, dy);
  });
}

Var sub(Var a, Var b) {
  require_same_graph(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Array out = a.value();
  const Array& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.graph().record(std::move(out), {a, b}, [a, b](Graph& gr, std::uint32_t self) {
    const Array& dy = gr.out_grad(self);
    if (Array* ga = gr.grad_slot(a)) add_into(*ga, dy);
    if (Array* gb = gr.grad_slot(b)) {
      for (std::size_t i = 0; i < dy.size(); ++i) (*gb)[i] -= dy[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_graph(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  Array out = a.value();
  const Array& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.graph().record(std::move(out), {a, b}, [a, b](Graph& gr, std::uint32_t self) {
    const Array& dy = gr.out_grad(self);
    const Array& av = a.value();
    const Array& bv = b.value();
    if (Array* ga = gr.grad_slot(a)) {
      for (std::size_t i = 0; i < dy.size(); ++i) (*ga)[i] += dy[i] * bv[i];
    }
    if (Array* gb = gr.grad_slot(b)) {
      for (std::size_t i = 0; i < dy.size(); ++i) (*gb)[i] += dy[i] * av[i];
    }
  });
}

Var scale(Var a, Real s) {
  return unary(a, [s](Real v) { return v * s; }, [a, s](Graph& gr, std::uint32_t self) {
    const Array& dy = gr.out_grad(self);
    if (Array* ga = gr.grad_slot(a)) {
      for (std::size_t i = 0; i < dy.size(); ++i) (*ga)[i] += s * dy[i];
    }
  });
}

Var add_scalar(Var a, Real s) {
  return unary(a, [s](Real v) { return v + s; }, [a](Graph& gr, std::uint32_t self) {
    if (Array* ga = gr.grad_slot(a)) add_into(*ga, gr.out_grad(self));
  });
}

Var add_rowvec(Var x, Var v) {
  require_same_graph(x, v, "add_rowvec");
  const Array& xv = x.value();
  const Array& vv = v.value();
  const std::size_t n = xv.rows(), c = xv.cols();
  if (vv.size() != c) {
    throw ShapeError("add_rowvec: vector " + shape_str(vv.shape()) + " vs rows of " +
                     shape_str(xv.shape()));
  }
  Array out = xv;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] += vv[j];
  }
  return x.graph().record(std::move(out), {x, v}, [x, v, n, c](Graph& gr, std::uint32_t self) {
    const Array& dy = gr.out_grad(self);
    if (Array* gx = gr.grad_slot(x)) add_into(*gx, dy);
    if (Array* gv = gr.grad_slot(v)) {
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < c; ++j) (*gv)[j] += dy[r * c + j];
      }
    }
  });
}

Var mul_rowvec(Var x, Var v) {
  require_same_graph(x, v, "mul_rowvec");
  const Array& xv = x.value();
  const Array& vv = v.value();
  const std::size_t n = xv.rows(), c = xv.cols();
  if (vv.size() != c) {
    throw ShapeError("mul_rowvec: vector " + shape_str(vv.shape()) + " vs rows of " +
                     shape_str(xv.shape()));
  }
  Array out = xv;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] *= vv[j];
  }
  return x.graph().record(std::move(out), {x, v}, [x, v, n, c](Graph& gr, std::uint32_t self) {
    const Array& dy = gr.out_grad(self);
    const Array& xv = x.value();
    const Array& vv = v.value();
    if (Array* gx = gr.grad_slot(x)) {
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < c; ++j) (*gx)[r * c + j] += dy[r * c + j] * vv[j];
      }
    }
    if (Array* gv = gr.grad_slot(v)) {
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < c; ++j) (*gv)[j] += dy[r * c + j] * xv[r * c + j];
      }
    }
  });
}

Var relu(Var x) { return leaky_relu(x, Real{0}); }

Var leaky_relu(Var x, Real slope) {
  return unary(
      x, [slope](Real v) { return v > 0 ? v : slope * v; },
      [x, slope](Graph& gr, std::uint32_t self) {
        const Array& dy = gr.out_grad(self);
        const Array& xv = x.value();
        if (Array* gx = gr.grad_slot(x)) {
          for (std::size_t i = 0; i < dy.size(); ++i) {
            (*gx)[i] += xv[i] > 0 ? dy[i] : slope * dy[i];
          }
        }
      });
}

Var abs(Var x) {
  return unary(
      x, [](Real v) { return std::abs(v); },
      [x](Graph& gr, std::uint32_t self) {
        const Array& dy = gr.out_grad(self);
        const Array& xv = x.value();
        if (Array* gx = gr.grad_slot(x)) {
          for (std::size_t i = 0; i < dy.size(); ++i) {
            // Subgradient at zero is taken as zero.
            const Real s = xv[i] > 0 ? Real{1} : (xv[i] < 0 ? Real{-1} : Real{0});
            (*gx)[i] += s * dy[i];
          }
        }
      });
}

Var pow_scalar(Var x, Real p) {
  for (Real v : x.value().values()) {
    if (!(v > 0)) throw std::domain_error("pow_scalar: input must be strictly positive");
  }
  return unary(
      x, [p](Real v) { return std::pow(v, p); },
      [x, p](Graph& gr, std::uint32_t self) {
        const Array& dy = gr.out_grad(self);
        const Array& xv = x.value();
        const Array& yv = gr.value(Var(&gr, self));
        if (Array* gx = gr.grad_slot(x)) {
          for (std::size_t i = 0; i < dy.size(); ++i) (*gx)[i] += dy[i] * p * yv[i] / xv[i];
        }
      });
}

// ---- normalization / softmax ----

Var softmax_rows(Var x) {
  const Array& xv = x.value();
  if (!xv.all_finite()) throw std::domain_error("softmax_rows: non-finite input");
  if (xv.rank() < 1 || xv.empty()) throw ShapeError("softmax_rows: empty input");
  const std::size_t cols = xv.shape().back();
  const std::size_t rows = xv.size() / cols;
  Array out(xv.shape());
  kp::softmax_rows(xv.values(), out.values(), rows, cols);
  return x.graph().record(std::move(out), {x}, [x, rows, cols](Graph& gr, std::uint32_t self) {
    const Array& dy = gr.out_grad(self);
    const Array& y = gr.value(Var(&gr, self));
    Array* gx = gr.grad_slot(x);
    if (!gx) return;
#pragma omp parallel for schedule(static) if (rows * cols > (1 << 15))
    for (std::size_t r = 0; r < rows; ++r) {
      const Real* yr = y.data() + r * cols;
      const Real* dr = dy.data() + r * cols;
      Real* gr_row = gx->data() + r * cols;
      double s = 0.0;
      for (std::size_t c = 0; c < cols; ++c) s += static_cast<double>(dr[c]) * yr[c];
      const Real sr = static_cast<Real>(s);
      for (std::size_t c = 0; c < cols; ++c) gr_row[c] += yr[c] * (dr[c] - sr);
    }
  });
}

namespace {

// Standardizes `count` values at base + i*stride; stores xhat and returns 1/sigma.
Real standardize(const Real* x, Real* xhat, std::size_t count, std::size_t stride, Real eps) {
  double mean = 0.0;
  for (std::size_t i = 0; i < count; ++i) mean += x[i * stride];
  mean /= static_cast<double>(count);
  double var = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double d = x[i * stride] - mean;
    var += d * d;
  }
  var /= static_cast<double>(count);
  const double inv = 1.0 / std::sqrt(var + eps);
  for (std::size_t i = 0; i < count; ++i) {
    xhat[i * stride] = static_cast<Real>((x[i * stride] - mean) * inv);
  }
  return static_cast<Real>(inv);
}

void standardize_backward(const Real* dy, const Real* xhat, Real* gx, Real inv,
                          std::size_t count, std::size_t stride) {
  double mdy = 0.0, mdyx = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    mdy += dy[i * stride];
    mdyx += static_cast<double>(dy[i * stride]) * xhat[i * stride];
  }
  mdy /= static_cast<double>(count);
  mdyx /= static_cast<double>(count);
  for (std::size_t i = 0; i < count; ++i) {
    gx[i * stride] += static_cast<Real>(
        inv * (dy[i * stride] - mdy - static_cast<double>(xhat[i * stride]) * mdyx));
  }
}

}  // namespace

Var layernorm_rows(Var x, Real eps) {
  const Array& xv = x.value();
  require_matrix(xv, "layernorm_rows");
  const std::size_t n = xv.rows(), c = xv.cols();
  Array out(xv.shape());
  std::vector<Real> inv(n);
  for (std::size_t r = 0; r < n; ++r) {
    inv[r] = standardize(xv.data() + r * c, out.data() + r * c, c, 1, eps);
  }
  return x.graph().record(std::move(out), {x},
                          [x, n, c, inv = std::move(inv)](Graph& gr, std::uint32_t self) {
                            const Array& dy = gr.out_grad(self);
                            const Array& y = gr.value(Var(&gr, self));
                            Array* gx = gr.grad_slot(x);
                            if (!gx) return;
                            for (std::size_t r = 0; r < n; ++r) {
                              standardize_backward(dy.data() + r * c, y.data() + r * c,
                                                   gx->data() + r * c, inv[r], c, 1);
                            }
                          });
}

Var normalize_cols(Var x, Real eps) {
  const Array& xv = x.value();
  require_matrix(xv, "normalize_cols");
  const std::size_t n = xv.rows(), c = xv.cols();
  Array out(xv.shape());
  std::vector<Real> inv(c);
  for (std::size_t j = 0; j < c; ++j) {
    inv[j] = standardize(xv.data() + j, out.data() + j, n, c, eps);
  }
  return x.graph().record(std::move(out), {x},
                          [x, n, c, inv = std::move(inv)](Graph& gr, std::uint32_t self) {
                            const Array& dy = gr.out_grad(self);
                            const Array& y = gr.value(Var(&gr, self));
                            Array* gx = gr.grad_slot(x);
                            if (!gx) return;
                            for (std::size_t j = 0; j < c; ++j) {
                              standardize_backward(dy.data() + j, y.data() + j, gx->data() + j,
                                                   inv[j], n, c);
                            }
                          });
}

Var group_softmax(Var x, std::size_t k) {
  const Array& xv = x.value();
  require_matrix(xv, "group_softmax");
  if (k == 0 || xv.rows() % k != 0) {
    throw ShapeError("group_softmax: rows " + std::to_string(xv.rows()) +
                     " not divisible by group size " + std::to_string(k));
  }
  if (!xv.all_finite()) throw std::domain_error("group_softmax: non-finite input");
  const std::size_t groups = xv.rows() / k, c = xv.cols();
  Array out(xv.shape());
  std::vector<double> sum(c);
  std::vector<Real> mx(c);
  for (std::size_t g = 0; g < groups; ++g) {
    const Real* base = xv.data() + g * k * c;
    Real* ob = out.data() + g * k * c;
    std::copy(base, base + c, mx.begin());
    for (std::size_t r = 1; r < k; ++r) {
      for (std::size_t j = 0; j < c; ++j) mx[j] = std::max(mx[j], base[r * c + j]);
    }
    std::fill(sum.begin(), sum.end(), 0.0);
    for (std::size_t r = 0; r < k; ++r) {
      for (std::size_t j = 0; j < c; ++j) {
        const Real e = std::exp(base[r * c + j] - mx[j]);
        ob[r * c + j] = e;
        sum[j] += e;
      }
    }
    for (std::size_t r = 0; r < k; ++r) {
      for (std::size_t j = 0; j < c; ++j) ob[r * c + j] = static_cast<Real>(ob[r * c + j] / sum[j]);
    }
  }
  return x.graph().record(std::move(out), {x}, [x, k, groups, c](Graph& gr, std::uint32_t self) {
    const Array& dy = gr.out_grad(self);
    const Array& y = gr.value(Var(&gr, self));
    Array* gx = gr.grad_slot(x);
    if (!gx) return;
    std::vector<double> s(c);
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t off = g * k * c;
      std::fill(s.begin(), s.end(), 0.0);
      for (std::size_t r = 0; r < k; ++r) {
        for (std::size_t j = 0; j < c; ++j) {
          s[j] += static_cast<double>(dy[off + r * c + j]) * y[off + r * c + j];
        }
      }
      for (std::size_t r = 0; r < k; ++r) {
        for (std::size_t j = 0; j < c; ++j) {
          const std::size_t i = off + r * c + j;
          (*gx)[i] += y[i] * (dy[i] - static_cast<Real>(s[j]));
        }
      }
    }
  });
}

// ---- reductions ----

Var sum_all(Var x) {
  double s = 0.0;
  for (Real v : x.value().values()) s += v;
  Array out({1}, static_cast<Real>(s));
  return x.graph().record(std::move(out), {x}, [x](Graph& gr, std::uint32_t self) {
    const Real d = gr.out_grad(self)[0];
    if (Array* gx = gr.grad_slot(x)) {
      for (auto& g : gx->values()) g += d;
    }
  });
}

Var row_sum(Var x) {
  const Array& xv = x.value();
  const std::size_t n = xv.rows(), c = xv.cols();
  Array out = Array::matrix(n, 1);
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += xv[r * c + j];
    out[r] = static_cast<Real>(s);
  }
  return x.graph().record(std::move(out), {x}, [x, n, c](Graph& gr, std::uint32_t self) {
    const Array& dy = gr.out_grad(self);
    if (Array* gx = gr.grad_slot(x)) {
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < c; ++j) (*gx)[r * c + j] += dy[r];
      }
    }
  });
}

Var group_sum(Var x, std::size_t k) {
  const Array& xv = x.value();
  if (k == 0 || xv.rows() % k != 0) {
    throw ShapeError("group_sum: rows not divisible by group size");
  }
  const std::size_t groups = xv.rows() / k, c = xv.cols();
  Array out = Array::matrix(groups, c);
  for (std::size_t g = 0; g < groups; ++g) {
    Real* o = out.data() + g * c;
    for (std::size_t r = 0; r < k; ++r) {
      const Real* xr = xv.data() + (g * k + r) * c;
#pragma omp simd
      for (std::size_t j = 0; j < c; ++j) o[j] += xr[j];
    }
  }
  return x.graph().record(std::move(out), {x}, [x, k, groups, c](Graph& gr, std::uint32_t self) {
    const Array& dy = gr.out_grad(self);
    if (Array* gx = gr.grad_slot(x)) {
      for (std::size_t g = 0; g < groups; ++g) {
        const Real* d = dy.data() + g * c;
        for (std::size_t r = 0; r < k; ++r) {
          Real* gxr = gx->data() + (g * k + r) * c;
#pragma omp simd
          for (std::size_t j = 0; j < c; ++j) gxr[j] += d[j];
        }
      }
    }
  });
}

Var group_max(Var x, std::size_t k) {
  const Array& xv = x.value();
  if (k == 0 || xv.rows() % k != 0) {
    throw ShapeError("group_max: rows not divisible by group size");
  }
  const std::size_t groups = xv.rows() / k, c = xv.cols();
  Array out = Array::matrix(groups, c);
  std::vector<std::uint32_t> arg(groups * c);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t j = 0; j < c; ++j) {
      std::size_t best = g * k;
      Real bv = xv[best * c + j];
      for (std::size_t r = 1; r < k; ++r) {
        const Real v = xv[(g * k + r) * c + j];
        if (v > bv) {
          bv = v;
          best = g * k + r;
        }
      }
      out[g * c + j] = bv;
      arg[g * c + j] = static_cast<std::uint32_t>(best);
    }
  }
  return x.graph().record(std::move(out), {x},
                          [x, c, arg = std::move(arg)](Graph& gr, std::uint32_t self) {
                            const Array& dy = gr.out_grad(self);
                            if (Array* gx = gr.grad_slot(x)) {
                              for (std::size_t i = 0; i < arg.size(); ++i) {
                                (*gx)[arg[i] * c + i % c] += dy[i];
                              }
                            }
                          });
}

// ---- indexing / layout ----

Var gather_rows(Var x, std::span<const std::uint32_t> index) {
  const Array& xv = x.value();
  const std::size_t n = xv.rows(), c = xv.cols();
  Array out = Array::matrix(index.size(), c);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= n) {
      throw std::out_of_range("gather_rows: index " + std::to_string(index[r]) +
                              " out of range for " + std::to_string(n) + " rows");
    }
    std::copy_n(xv.data() + index[r] * c, c, out.data() + r * c);
  }
  std::vector<std::uint32_t> idx(index.begin(), index.end());
  return x.graph().record(std::move(out), {x},
                          [x, c, idx = std::move(idx)](Graph& gr, std::uint32_t self) {
                            const Array& dy = gr.out_grad(self);
                            if (Array* gx = gr.grad_slot(x)) {
                              for (std::size_t r = 0; r < idx.size(); ++r) {
                                Real* dst = gx->data() + idx[r] * c;
                                const Real* src = dy.data() + r * c;
                                for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
                              }
                            }
                          });
}

Var repeat_rows(Var x, std::size_t k) {
  const Array& xv = x.value();
  const std::size_t n = xv.rows(), c = xv.cols();
  Array out = Array::matrix(n * k, c);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t q = 0; q < k; ++q) std::copy_n(xv.data() + r * c, c, out.data() + (r * k + q) * c);
  }
  return x.graph().record(std::move(out), {x}, [x, n, k, c](Graph& gr, std::uint32_t self) {
    const Array& dy = gr.out_grad(self);
    if (Array* gx = gr.grad_slot(x)) {
      for (std::size_t r = 0; r < n; ++r) {
        Real* dst = gx->data() + r * c;
        for (std::size_t q = 0; q < k; ++q) {
          const Real* src = dy.data() + (r * k + q) * c;
          for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
        }
      }
    }
  });
}

Var concat_cols(Var a, Var b) {
  require_same_graph(a, b, "concat_cols");
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.rows() != bv.rows()) throw ShapeError("concat_cols: row counts differ");
  const std::size_t n = av.rows(), ca = av.cols(), cb = bv.cols();
  Array out = Array::matrix(n, ca + cb);
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(av.data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(bv.data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  return a.graph().record(std::move(out), {a, b}, [a, b, n, ca, cb](Graph& gr, std::uint32_t self) {
    const Array& dy = gr.out_grad(self);
    Array* ga = gr.grad_slot(a);
    Array* gb = gr.grad_slot(b);
    for (std::size_t r = 0; r < n; ++r) {
      const Real* d = dy.data() + r * (ca + cb);
      if (ga) {
        for (std::size_t j = 0; j < ca; ++j) (*ga)[r * ca + j] += d[j];
      }
      if (gb) {
        for (std::size_t j = 0; j < cb; ++j) (*gb)[r * cb + j] += d[ca + j];
      }
    }
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  const Array& xv = x.value();
  const std::size_t n = xv.rows(), c = xv.cols();
  if (begin + count > c) throw ShapeError("slice_cols: range exceeds column count");
  Array out = Array::matrix(n, count);
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(xv.data() + r * c + begin, count, out.data() + r * count);
  }
  return x.graph().record(std::move(out), {x}, [x, n, c, begin, count](Graph& gr, std::uint32_t self) {
    const Array& dy = gr.out_grad(self);
    if (Array* gx = gr.grad_slot(x)) {
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < count; ++j) (*gx)[r * c + begin + j] += dy[r * count + j];
      }
    }
  });
}

}  // namespace dsf::inline DSF_PREC::ad
