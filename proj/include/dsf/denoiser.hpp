#pragma once

// Two-stage correlation denoiser f(V_t, P_source, P_target).
//
// Stage 1 warps the source by V_t, extracts EdgeConv features for both clouds
// and turns feature similarities into an initial flow. Stage 2 warps the
// source by that estimate and repeats with its own EdgeConv weights plus a
// local transformer and a stack of global/cross attention blocks.
// All geometry enters through point differences or a shared reference point,
// so translating both clouds together leaves the predicted flow unchanged.

#include <array>
#include <cstdint>
#include <string>

#include "dsf/autodiff.hpp"
#include "dsf/params.hpp"
#include "dsf/pointcloud.hpp"

namespace dsf::inline DSF_PREC {

struct DenoiserConfig {
  std::size_t feature_dim = 128;
  std::size_t knn_k = 16;
  std::size_t n_global_cross_layers = 14;
  std::size_t n_edgeconv_layers = 3;
  std::size_t heads = 1;

  void validate() const;
  /// Output width of every EdgeConv layer: d/2 ... d/2, d.
  std::vector<std::size_t> edgeconv_widths() const;
};

/// Adds every weight of the network to `store` (fan-in scaled uniform init).
void init_denoiser_params(ParamStore& store, const DenoiserConfig& cfg, std::uint64_t seed);
ParamStore make_denoiser_params(const DenoiserConfig& cfg, std::uint64_t seed);

/// Checks that `store` holds exactly the weights `cfg` requires, with matching shapes.
void check_denoiser_params(const ParamStore& store, const DenoiserConfig& cfg);

using Point3 = std::array<Real, 3>;
Point3 centroid(const Array& points);

/// max over neighbours j of w * [x_i, x_j - x_i] + b, before normalization.
ad::Var edgeconv_edge_max(ad::Var x, const NeighborIndex& neighbors, ad::Var w, ad::Var b);

/// Dynamic-graph EdgeConv stack. Layer 0 sees coordinates relative to
/// `reference`; later layers find neighbours in their input feature space.
ad::Var edgeconv_features(ad::Graph& g, ParamStore& params, const DenoiserConfig& cfg,
                          const std::string& stage, ad::Var points, const Point3& reference);

struct LocalAttention {
  ad::Var output;   // [N x d]
  ad::Var weights;  // [N*k x d], softmax over each point's k neighbours
};

/// Vector attention over the k spatial neighbours, then linear + residual.
LocalAttention local_transformer(ad::Graph& g, ParamStore& params, const DenoiserConfig& cfg,
                                 const std::string& prefix, ad::Var features, ad::Var points);

struct Attention {
  ad::Var output;   // [Nq x d]
  ad::Var weights;  // [Nq x Nkv], row-stochastic
};

/// softmax(phi(q) psi(kv)^T / sqrt(d)) alpha(kv)
Attention attention(ad::Graph& g, ParamStore& params, const std::string& prefix, ad::Var query,
                    ad::Var key_value);

struct FeaturePair {
  ad::Var f1;
  ad::Var f2;
};

/// Self attention within each cloud, cross attention to the other, then a
/// feed-forward layer; each sub-step is linear + layernorm + residual.
FeaturePair global_cross_block(ad::Graph& g, ParamStore& params, const std::string& prefix,
                               ad::Var f1, ad::Var f2);

struct Similarity {
  ad::Var m_cross;  // [N1 x N2]
  ad::Var m_self;   // [N1 x N1]
};

Similarity similarity_matrices(ad::Graph& g, ParamStore& params, const std::string& prefix,
                               ad::Var f1, ad::Var f2);

/// M_self (M_cross P_target - P_source)
ad::Var global_correlation_flow(ad::Var m_cross, ad::Var m_self, ad::Var p_source,
                                ad::Var p_target);

struct DenoiserOutput {
  ad::Var v_init;
  ad::Var v_pred;
};

/// v_t is the current noisy flow in meters, [N1 x 3].
DenoiserOutput denoise_forward(ad::Graph& g, ParamStore& params, const DenoiserConfig& cfg,
                               ad::Var v_t, const ScenePair& pair);

/// Inference without gradient bookkeeping; returns v_pred in meters.
Array predict_flow(ParamStore& params, const DenoiserConfig& cfg, const Array& v_t,
                   const ScenePair& pair);

}  // namespace dsf::inline DSF_PREC
