#include "dsf/denoiser.hpp"

#include <cmath>
#include <cstdio>

namespace dsf::inline DSF_PREC {

using namespace ad;

namespace {

enum class Init { weight, zero, one };

struct ParamSpec {
  std::string name;
  Shape shape;
  Init init;
};

std::string layer_name(const char* stem, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%02zu", stem, i);
  return buf;
}

void add_linear(std::vector<ParamSpec>& specs, const std::string& name, std::size_t out,
                std::size_t in) {
  specs.push_back({name + ".w", {out, in}, Init::weight});
  specs.push_back({name + ".b", {out}, Init::zero});
}

void add_norm(std::vector<ParamSpec>& specs, const std::string& name, std::size_t width) {
  specs.push_back({name + ".g", {width}, Init::one});
  specs.push_back({name + ".b", {width}, Init::zero});
}

std::vector<ParamSpec> param_specs(const DenoiserConfig& cfg) {
  const std::size_t d = cfg.feature_dim;
  const auto widths = cfg.edgeconv_widths();
  std::vector<ParamSpec> specs;
  for (const char* stage : {"s1", "s2"}) {
    std::size_t in = 3;
    for (std::size_t l = 0; l < widths.size(); ++l) {
      const std::string base = std::string(stage) + "." + layer_name("edge", l);
      add_linear(specs, base, widths[l], 2 * in);
      add_norm(specs, base + ".norm", widths[l]);
      in = widths[l];
    }
    add_linear(specs, std::string(stage) + ".corr.wq", d, d);
    add_linear(specs, std::string(stage) + ".corr.wk", d, d);
  }
  for (const char* lin : {"phi", "psi", "alpha", "gamma1", "gamma2", "delta2", "out"}) {
    add_linear(specs, std::string("s2.local.") + lin, d, d);
  }
  add_linear(specs, "s2.local.delta1", d, 3);
  for (std::size_t l = 0; l < cfg.n_global_cross_layers; ++l) {
    const std::string base = "s2." + layer_name("gc", l);
    for (const char* part : {"self", "cross"}) {
      for (const char* lin : {"phi", "psi", "alpha", "out"}) {
        add_linear(specs, base + "." + part + "." + lin, d, d);
      }
      add_norm(specs, base + "." + part + ".ln", d);
    }
    add_linear(specs, base + ".ffn1", 2 * d, d);
    add_linear(specs, base + ".ffn2", d, 2 * d);
    add_norm(specs, base + ".ffn.ln", d);
  }
  return specs;
}

Var P(Graph& g, ParamStore& params, const std::string& name) { return g.param(params, name); }

Var lin(Graph& g, ParamStore& params, const std::string& name, Var x) {
  return linear(x, P(g, params, name + ".w"), P(g, params, name + ".b"));
}

Var affine(Graph& g, ParamStore& params, const std::string& name, Var x) {
  return add_rowvec(mul_rowvec(x, P(g, params, name + ".g")), P(g, params, name + ".b"));
}

void require_min_points(std::size_t n, std::size_t k, const char* what) {
  if (n < k) {
    throw std::invalid_argument(std::string(what) + ": " + std::to_string(n) +
                                " points but knn_k = " + std::to_string(k));
  }
}

}  // namespace

void DenoiserConfig::validate() const {
  if (feature_dim < 8) throw std::invalid_argument("denoiser: feature_dim must be >= 8");
  if (knn_k < 1) throw std::invalid_argument("denoiser: knn_k must be >= 1");
  if (n_global_cross_layers < 1) {
    throw std::invalid_argument("denoiser: n_global_cross_layers must be >= 1");
  }
  if (n_edgeconv_layers < 1) throw std::invalid_argument("denoiser: n_edgeconv_layers must be >= 1");
  if (heads != 1) throw std::invalid_argument("denoiser: only single-head attention is supported");
}

std::vector<std::size_t> DenoiserConfig::edgeconv_widths() const {
  std::vector<std::size_t> w(n_edgeconv_layers, feature_dim / 2);
  w.back() = feature_dim;
  return w;
}

void init_denoiser_params(ParamStore& store, const DenoiserConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  RngStream rng(seed);
  for (const auto& spec : param_specs(cfg)) {
    Array a(spec.shape);
    switch (spec.init) {
      case Init::weight: {
        const double bound = std::sqrt(3.0 / static_cast<double>(spec.shape[1]));
        for (auto& v : a.values()) v = static_cast<Real>(rng.uniform(-bound, bound));
        break;
      }
      case Init::one:
        a.fill(Real{1});
        break;
      case Init::zero:
        break;
    }
    store.add(spec.name, std::move(a));
  }
}

ParamStore make_denoiser_params(const DenoiserConfig& cfg, std::uint64_t seed) {
  ParamStore store;
  init_denoiser_params(store, cfg, seed);
  return store;
}

void check_denoiser_params(const ParamStore& store, const DenoiserConfig& cfg) {
  const auto specs = param_specs(cfg);
  if (specs.size() != store.size()) {
    throw std::invalid_argument("denoiser: configuration expects " + std::to_string(specs.size()) +
                                " tensors, checkpoint has " + std::to_string(store.size()));
  }
  for (const auto& spec : specs) {
    if (!store.contains(spec.name)) {
      throw std::invalid_argument("denoiser: missing tensor " + spec.name);
    }
    const auto& have = store.at(spec.name).value.shape();
    if (have != spec.shape) {
      throw std::invalid_argument("denoiser: tensor " + spec.name + " has shape " +
                                  shape_str(have) + ", configuration expects " +
                                  shape_str(spec.shape));
    }
  }
}

Point3 centroid(const Array& points) {
  double s[3] = {0, 0, 0};
  for (std::size_t i = 0; i < points.rows(); ++i) {
    for (int c = 0; c < 3; ++c) s[c] += points(i, c);
  }
  const double n = static_cast<double>(points.rows());
  return {static_cast<Real>(s[0] / n), static_cast<Real>(s[1] / n), static_cast<Real>(s[2] / n)};
}

Var edgeconv_edge_max(Var x, const NeighborIndex& neighbors, Var w, Var b) {
  const std::size_t in = x.cols();
  if (w.value().rank() != 2 || w.cols() != 2 * in) {
    throw ShapeError("edgeconv: weight " + shape_str(w.shape()) + " does not take 2 x " +
                     std::to_string(in) + " inputs");
  }
  if (neighbors.rows != x.rows()) throw ShapeError("edgeconv: neighbour table size mismatch");
  // w [x_i, x_j - x_i] = (w_a - w_b) x_i + w_b x_j, and the max over j only
  // touches the second term.
  Var wa = slice_cols(w, 0, in);
  Var wb = slice_cols(w, in, in);
  Var self_term = linear(x, sub(wa, wb), b);
  Var nbr_term = matmul_nt(x, wb);
  Var best = group_max(gather_rows(nbr_term, neighbors.index), neighbors.k);
  return add(self_term, best);
}

Var edgeconv_features(Graph& g, ParamStore& params, const DenoiserConfig& cfg,
                      const std::string& stage, Var points, const Point3& reference) {
  const std::size_t n = points.rows();
  require_min_points(n, cfg.knn_k, "edgeconv_features");
  Var x = add_rowvec(points, g.constant(Array({3}, {-reference[0], -reference[1], -reference[2]})));
  const auto widths = cfg.edgeconv_widths();
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const std::string base = stage + "." + layer_name("edge", l);
    const NeighborIndex nbrs = knn(x.value(), x.value(), cfg.knn_k);
    Var h = edgeconv_edge_max(x, nbrs, P(g, params, base + ".w"), P(g, params, base + ".b"));
    h = affine(g, params, base + ".norm", normalize_cols(h));
    x = leaky_relu(h, Real(0.2));
  }
  return x;
}

LocalAttention local_transformer(Graph& g, ParamStore& params, const DenoiserConfig& cfg,
                                 const std::string& prefix, Var features, Var points) {
  const std::size_t n = points.rows(), k = cfg.knn_k;
  require_min_points(n, k, "local_transformer");
  if (features.rows() != n) throw ShapeError("local_transformer: features/points row mismatch");
  const NeighborIndex nbrs = knn(points.value(), points.value(), k);
  Var rel = sub(repeat_rows(points, k), gather_rows(points, nbrs.index));
  Var delta = lin(g, params, prefix + ".delta2", relu(lin(g, params, prefix + ".delta1", rel)));
  Var q = repeat_rows(lin(g, params, prefix + ".phi", features), k);
  Var key = gather_rows(lin(g, params, prefix + ".psi", features), nbrs.index);
  Var val = gather_rows(lin(g, params, prefix + ".alpha", features), nbrs.index);
  Var logits = lin(g, params, prefix + ".gamma2",
                   relu(lin(g, params, prefix + ".gamma1", add(sub(q, key), delta))));
  Var w = group_softmax(logits, k);
  Var agg = group_sum(mul(w, add(val, delta)), k);
  return {add(features, lin(g, params, prefix + ".out", agg)), w};
}

Attention attention(Graph& g, ParamStore& params, const std::string& prefix, Var query,
                    Var key_value) {
  if (query.cols() != key_value.cols()) throw ShapeError("attention: feature width mismatch");
  Var q = lin(g, params, prefix + ".phi", query);
  Var k = lin(g, params, prefix + ".psi", key_value);
  Var v = lin(g, params, prefix + ".alpha", key_value);
  const Real inv_sqrt_d = Real(1) / std::sqrt(static_cast<Real>(q.cols()));
  Var w = softmax_rows(scale(matmul_nt(q, k), inv_sqrt_d));
  return {matmul(w, v), w};
}

FeaturePair global_cross_block(Graph& g, ParamStore& params, const std::string& prefix, Var f1,
                               Var f2) {
  if (f1.cols() != f2.cols()) {
    throw ShapeError("global_cross_block: feature widths " + std::to_string(f1.cols()) + " and " +
                     std::to_string(f2.cols()) + " differ");
  }
  auto branch = [&](const std::string& part, Var x, Var other) {
    Var a = attention(g, params, prefix + "." + part, x, other).output;
    Var h = lin(g, params, prefix + "." + part + ".out", a);
    return add(x, affine(g, params, prefix + "." + part + ".ln", layernorm_rows(h)));
  };
  Var s1 = branch("self", f1, f1);
  Var s2 = branch("self", f2, f2);
  Var c1 = branch("cross", s1, s2);
  Var c2 = branch("cross", s2, s1);
  auto ffn = [&](Var x) {
    Var h = lin(g, params, prefix + ".ffn2", relu(lin(g, params, prefix + ".ffn1", x)));
    return add(x, affine(g, params, prefix + ".ffn.ln", layernorm_rows(h)));
  };
  return {ffn(c1), ffn(c2)};
}

Similarity similarity_matrices(Graph& g, ParamStore& params, const std::string& prefix, Var f1,
                               Var f2) {
  if (f1.cols() != f2.cols()) throw ShapeError("similarity_matrices: feature width mismatch");
  const Real inv_sqrt_d = Real(1) / std::sqrt(static_cast<Real>(f1.cols()));
  Var m_cross = softmax_rows(scale(matmul_nt(f1, f2), inv_sqrt_d));
  Var q = lin(g, params, prefix + ".wq", f1);
  Var k = lin(g, params, prefix + ".wk", f1);
  Var m_self = softmax_rows(scale(matmul_nt(q, k), inv_sqrt_d));
  return {m_cross, m_self};
}

Var global_correlation_flow(Var m_cross, Var m_self, Var p_source, Var p_target) {
  const std::size_t n1 = p_source.rows(), n2 = p_target.rows();
  if (m_cross.shape() != Shape{n1, n2} || m_self.shape() != Shape{n1, n1} ||
      p_source.cols() != 3 || p_target.cols() != 3) {
    throw ShapeError("global_correlation_flow: m_cross " + shape_str(m_cross.shape()) +
                     ", m_self " + shape_str(m_self.shape()) + ", source " +
                     shape_str(p_source.shape()) + ", target " + shape_str(p_target.shape()));
  }
  return matmul(m_self, sub(matmul(m_cross, p_target), p_source));
}

DenoiserOutput denoise_forward(Graph& g, ParamStore& params, const DenoiserConfig& cfg, Var v_t,
                               const ScenePair& pair) {
  const std::size_t n1 = pair.source.size();
  if (v_t.shape() != Shape{n1, 3}) {
    throw ShapeError("denoise_forward: v_t " + shape_str(v_t.shape()) + " for " +
                     std::to_string(n1) + " source points");
  }
  Var src = g.constant(pair.source.points);
  Var tgt = g.constant(pair.target.points);
  const Point3 ref = centroid(pair.target.points);

  Var warped = add(src, v_t);
  Var a1 = edgeconv_features(g, params, cfg, "s1", warped, ref);
  Var a2 = edgeconv_features(g, params, cfg, "s1", tgt, ref);
  const Similarity sim1 = similarity_matrices(g, params, "s1.corr", a1, a2);
  Var v_init = global_correlation_flow(sim1.m_cross, sim1.m_self, src, tgt);

  Var warped2 = add(src, v_init);
  Var b1 = edgeconv_features(g, params, cfg, "s2", warped2, ref);
  Var b2 = edgeconv_features(g, params, cfg, "s2", tgt, ref);
  b1 = local_transformer(g, params, cfg, "s2.local", b1, warped2).output;
  b2 = local_transformer(g, params, cfg, "s2.local", b2, tgt).output;
  for (std::size_t l = 0; l < cfg.n_global_cross_layers; ++l) {
    const auto out = global_cross_block(g, params, "s2." + layer_name("gc", l), b1, b2);
    b1 = out.f1;
    b2 = out.f2;
  }
  const Similarity sim2 = similarity_matrices(g, params, "s2.corr", b1, b2);
  Var v_pred = global_correlation_flow(sim2.m_cross, sim2.m_self, src, tgt);
  return {v_init, v_pred};
}

Array predict_flow(ParamStore& params, const DenoiserConfig& cfg, const Array& v_t,
                   const ScenePair& pair) {
  Graph g(false);
  return denoise_forward(g, params, cfg, g.constant(v_t), pair).v_pred.value();
}

}  // namespace dsf::inline DSF_PREC
