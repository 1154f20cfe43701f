#include <gtest/gtest.h>

#include <numeric>

#include "dsf/denoiser.hpp"
#include "dsf/scene_gen.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dsf;
using testutil::max_abs_diff;
using testutil::random_array;

namespace {

DenoiserConfig small_config() {
  DenoiserConfig c;
  c.feature_dim = 16;
  c.knn_k = 4;
  c.n_global_cross_layers = 2;
  return c;
}

ScenePair small_scene(std::uint64_t seed, std::size_t n = 32) {
  SceneGenConfig cfg;
  cfg.n1 = cfg.n2 = n;
  RngStream r(seed);
  return generate_scene(cfg, r);
}

std::vector<std::size_t> random_perm(RngStream& r, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(p[i], p[r.uniform_index(i + 1)]);
  return p;
}

Array permute_rows(const Array& a, const std::vector<std::size_t>& p) {
  Array out(a.shape());
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t c = 0; c < a.cols(); ++c) out(i, c) = a(p[i], c);
  return out;
}

void expect_rows_sum_to_one(const Array& w, std::size_t group = 0) {
  if (group == 0) {
    for (std::size_t i = 0; i < w.rows(); ++i) {
      double s = 0;
      for (std::size_t j = 0; j < w.cols(); ++j) s += w(i, j);
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
    return;
  }
  // [n*group x c]: each channel sums to one over every block of `group` rows.
  for (std::size_t b = 0; b < w.rows() / group; ++b)
    for (std::size_t c = 0; c < w.cols(); ++c) {
      double s = 0;
      for (std::size_t j = 0; j < group; ++j) s += w(b * group + j, c);
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
}

}  // namespace

TEST(DenoiserConfig, Validation) {
  DenoiserConfig c;
  EXPECT_NO_THROW(c.validate());
  c.feature_dim = 4;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = DenoiserConfig{};
  c.heads = 2;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_EQ(DenoiserConfig{}.edgeconv_widths(), (std::vector<std::size_t>{64, 64, 128}));
}

TEST(DenoiserParams, ShapeCheck) {
  const auto cfg = small_config();
  ParamStore p = make_denoiser_params(cfg, 1);
  EXPECT_NO_THROW(check_denoiser_params(p, cfg));
  auto other = cfg;
  other.feature_dim = 24;
  EXPECT_THROW(check_denoiser_params(p, other), std::invalid_argument);
  other = cfg;
  other.n_global_cross_layers = 3;
  EXPECT_THROW(check_denoiser_params(p, other), std::invalid_argument);
  EXPECT_EQ(make_denoiser_params(cfg, 1).at("s2.gc01.ffn1.w").value,
            make_denoiser_params(cfg, 1).at("s2.gc01.ffn1.w").value);
}

TEST(EdgeConv, IdenticalPointsHaveZeroEdges) {
  RngStream r(1);
  ad::Graph g;
  Array x({8, 3});
  for (std::size_t i = 0; i < 8; ++i) {
    x(i, 0) = 0.3f;
    x(i, 1) = -0.1f;
    x(i, 2) = 0.7f;
  }
  const Array w = random_array(r, {5, 6}), b = random_array(r, {5});
  const auto nb = knn(x, x, 4);
  const Array y = edgeconv_edge_max(g.constant(x), nb, g.constant(w), g.constant(b)).value();
  // Only the x_i half of the weight contributes.
  Array wa({5, 3});
  for (std::size_t o = 0; o < 5; ++o)
    for (std::size_t c = 0; c < 3; ++c) wa(o, c) = w(o, c);
  EXPECT_LT(max_abs_diff(y, oracle::linear(x, wa, b)), 1e-6);
}

TEST(EdgeConv, MatchesLoopOracleWithFullNeighbourhood) {
  RngStream r(2);
  const std::size_t n = 10, in = 4, out = 6;
  const Array x = random_array(r, {n, in}), w = random_array(r, {out, 2 * in}),
              b = random_array(r, {out});
  ad::Graph g;
  const Array y =
      edgeconv_edge_max(g.constant(x), knn(x, x, n), g.constant(w), g.constant(b)).value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < out; ++o) {
      double best = -1e300;
      for (std::size_t j = 0; j < n; ++j) {
        double s = b[o];
        for (std::size_t c = 0; c < in; ++c)
          s += w(o, c) * x(i, c) + w(o, in + c) * (double(x(j, c)) - x(i, c));
        best = std::max(best, s);
      }
      EXPECT_NEAR(y(i, o), best, 1e-5);
    }
}

TEST(EdgeConv, PermutationEquivariant) {
  const auto cfg = small_config();
  ParamStore p = make_denoiser_params(cfg, 3);
  RngStream r(3);
  const Array pts = random_array(r, {32, 3});
  const auto perm = random_perm(r, 32);
  ad::Graph g;
  const Point3 ref{0.1f, 0.2f, 0.3f};
  const Array a = edgeconv_features(g, p, cfg, "s1", g.constant(pts), ref).value();
  const Array b = edgeconv_features(g, p, cfg, "s1", g.constant(permute_rows(pts, perm)), ref).value();
  EXPECT_EQ(a.shape(), (Shape{32, 16}));
  EXPECT_LT(max_abs_diff(permute_rows(a, perm), b), 1e-5);
}

TEST(EdgeConv, TooFewPoints) {
  const auto cfg = small_config();
  ParamStore p = make_denoiser_params(cfg, 3);
  ad::Graph g;
  EXPECT_THROW(edgeconv_features(g, p, cfg, "s1", g.constant(Array({3, 3})), Point3{}),
               std::invalid_argument);
}

TEST(LocalTransformer, ResidualIdentityWhenOutputZeroed) {
  const auto cfg = small_config();
  ParamStore p = make_denoiser_params(cfg, 4);
  p.at("s2.local.out.w").value.fill(0);
  RngStream r(4);
  const Array f = random_array(r, {20, 16}), pts = random_array(r, {20, 3});
  ad::Graph g;
  const auto out = local_transformer(g, p, cfg, "s2.local", g.constant(f), g.constant(pts));
  EXPECT_EQ(out.output.value(), f);
  EXPECT_EQ(out.weights.shape(), (Shape{20 * 4, 16}));
  expect_rows_sum_to_one(out.weights.value(), 4);
}

TEST(GlobalCross, AttentionRowsSumToOne) {
  const auto cfg = small_config();
  ParamStore p = make_denoiser_params(cfg, 5);
  RngStream r(5);
  ad::Graph g;
  const auto a = attention(g, p, "s2.gc00.cross", g.constant(random_array(r, {12, 16})),
                           g.constant(random_array(r, {9, 16})));
  EXPECT_EQ(a.weights.shape(), (Shape{12, 9}));
  expect_rows_sum_to_one(a.weights.value());
}

TEST(GlobalCross, SymmetricInputsGiveIdenticalOutputs) {
  const auto cfg = small_config();
  ParamStore p = make_denoiser_params(cfg, 6);
  RngStream r(6);
  const Array f = random_array(r, {10, 16});
  ad::Graph g;
  const auto out = global_cross_block(g, p, "s2.gc00", g.constant(f), g.constant(f));
  EXPECT_EQ(out.f1.value(), out.f2.value());
}

TEST(GlobalCross, StackEqualsSequentialApplication) {
  const auto cfg = small_config();
  ParamStore p = make_denoiser_params(cfg, 7);
  RngStream r(7);
  const Array f1 = random_array(r, {8, 16}), f2 = random_array(r, {8, 16});
  ad::Graph g;
  auto s = global_cross_block(g, p, "s2.gc00", g.constant(f1), g.constant(f2));
  s = global_cross_block(g, p, "s2.gc01", s.f1, s.f2);
  ad::Graph h1, h2;
  const auto a = global_cross_block(h1, p, "s2.gc00", h1.constant(f1), h1.constant(f2));
  const auto b = global_cross_block(h2, p, "s2.gc01", h2.constant(a.f1.value()),
                                    h2.constant(a.f2.value()));
  EXPECT_EQ(s.f1.value(), b.f1.value());
  EXPECT_EQ(s.f2.value(), b.f2.value());
  ad::Graph bad;
  EXPECT_THROW(global_cross_block(bad, p, "s2.gc00", bad.constant(f1),
                                  bad.constant(random_array(r, {8, 12}))),
               ShapeError);
}

TEST(Similarity, MatchesDirectOracle) {
  const auto cfg = small_config();
  ParamStore p = make_denoiser_params(cfg, 8);
  RngStream r(8);
  for (int trial = 0; trial < 5; ++trial) {
    const Array f1 = random_array(r, {8, 16}), f2 = random_array(r, {11, 16});
    ad::Graph g;
    const auto s = similarity_matrices(g, p, "s1.corr", g.constant(f1), g.constant(f2));
    const double inv = 1.0 / 4.0;
    const Array mc = oracle::softmax_rows(oracle::matmul(f1, oracle::transpose(f2)), inv);
    const Array q = oracle::linear(f1, p.at("s1.corr.wq.w").value, p.at("s1.corr.wq.b").value);
    const Array k = oracle::linear(f1, p.at("s1.corr.wk.w").value, p.at("s1.corr.wk.b").value);
    const Array ms = oracle::softmax_rows(oracle::matmul(q, oracle::transpose(k)), inv);
    EXPECT_LT(max_abs_diff(s.m_cross.value(), mc), 1e-6);
    EXPECT_LT(max_abs_diff(s.m_self.value(), ms), 1e-6);
    expect_rows_sum_to_one(s.m_cross.value());
    expect_rows_sum_to_one(s.m_self.value());
  }
}

TEST(Similarity, LargeOrthogonalFeaturesApproachPermutation) {
  const auto cfg = small_config();
  ParamStore p = make_denoiser_params(cfg, 9);
  Array f({6, 16});
  for (std::size_t i = 0; i < 6; ++i) f(i, i) = 40.0f;
  ad::Graph g;
  const auto s = similarity_matrices(g, p, "s1.corr", g.constant(f), g.constant(f));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_GT(s.m_cross.value()(i, i), 1.0 - 1e-6);
}

TEST(Correlation, HardAssignment) {
  RngStream r(10);
  const Array src = random_array(r, {5, 3}), tgt = random_array(r, {5, 3});
  const std::vector<std::size_t> match{3, 0, 4, 1, 2};
  Array mc({5, 5}), eye({5, 5});
  for (std::size_t i = 0; i < 5; ++i) {
    mc(i, match[i]) = 1;
    eye(i, i) = 1;
  }
  ad::Graph g;
  const Array v = global_correlation_flow(g.constant(mc), g.constant(eye), g.constant(src),
                                          g.constant(tgt))
                      .value();
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_FLOAT_EQ(v(i, c), tgt(match[i], c) - src(i, c));
  const Array z = global_correlation_flow(g.constant(eye), g.constant(eye), g.constant(src),
                                          g.constant(src))
                      .value();
  for (auto x : z.values()) EXPECT_EQ(x, 0.0f);
}

TEST(Correlation, MatchesTwoMatmulOracle) {
  RngStream r(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Array mc = oracle::softmax_rows(random_array(r, {8, 6}));
    const Array ms = oracle::softmax_rows(random_array(r, {8, 8}));
    const Array src = random_array(r, {8, 3}), tgt = random_array(r, {6, 3});
    ad::Graph g;
    const Array v = global_correlation_flow(g.constant(mc), g.constant(ms), g.constant(src),
                                            g.constant(tgt))
                        .value();
    Array d = oracle::matmul(mc, tgt);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= src[i];
    EXPECT_LT(max_abs_diff(v, oracle::matmul(ms, d)), 1e-6);
  }
  ad::Graph g;
  EXPECT_THROW(global_correlation_flow(g.constant(Array({3, 4})), g.constant(Array({3, 3})),
                                       g.constant(Array({3, 3})), g.constant(Array({5, 3}))),
               ShapeError);
}

TEST(DenoiseForward, ShapesAndDeterminism) {
  const auto cfg = small_config();
  ParamStore p = make_denoiser_params(cfg, 12);
  const ScenePair s = small_scene(12, 24);
  RngStream r(12);
  const Array vt = random_array(r, {24, 3}, -0.1, 0.1);
  ad::Graph g;
  const auto out = denoise_forward(g, p, cfg, g.constant(vt), s);
  EXPECT_EQ(out.v_init.shape(), (Shape{24, 3}));
  EXPECT_EQ(out.v_pred.shape(), (Shape{24, 3}));
  EXPECT_EQ(predict_flow(p, cfg, vt, s), out.v_pred.value());
  EXPECT_EQ(predict_flow(p, cfg, vt, s), predict_flow(p, cfg, vt, s));
  ad::Graph bad;
  EXPECT_THROW(denoise_forward(bad, p, cfg, bad.constant(Array({23, 3})), s), ShapeError);
}

TEST(DenoiseForward, TranslationInvariant) {
  const auto cfg = small_config();
  ParamStore p = make_denoiser_params(cfg, 13);
  ScenePair s = small_scene(13);
  RngStream r(13);
  const Array vt = random_array(r, {32, 3}, -0.1, 0.1);
  const Array a = predict_flow(p, cfg, vt, s);
  const Real off[3] = {0.5f, -0.3f, 0.2f};
  for (auto* cloud : {&s.source.points, &s.target.points})
    for (std::size_t i = 0; i < cloud->rows(); ++i)
      for (int c = 0; c < 3; ++c) (*cloud)(i, c) += off[c];
  EXPECT_LT(max_abs_diff(a, predict_flow(p, cfg, vt, s)), 1e-4);
}

TEST(DenoiseForward, SourcePermutationEquivariant) {
  const auto cfg = small_config();
  ParamStore p = make_denoiser_params(cfg, 14);
  const ScenePair s = small_scene(14);
  RngStream r(14);
  const Array vt = random_array(r, {32, 3}, -0.1, 0.1);
  const auto perm = random_perm(r, 32);
  ScenePair t = s;
  t.source.points = permute_rows(s.source.points, perm);
  t.gt_flow.vectors = permute_rows(s.gt_flow.vectors, perm);
  const Array a = predict_flow(p, cfg, vt, s);
  const Array b = predict_flow(p, cfg, permute_rows(vt, perm), t);
  EXPECT_LT(max_abs_diff(permute_rows(a, perm), b), 1e-5);
}

TEST(DenoiseForward, FlowBoundedByCloudExtent) {
  const auto cfg = small_config();
  ParamStore p = make_denoiser_params(cfg, 15);
  const ScenePair s = small_scene(15);
  RngStream r(15);
  const Array v = predict_flow(p, cfg, random_array(r, {32, 3}), s);
  auto max_norm = [](const Array& a) {
    double m = 0;
    for (std::size_t i = 0; i < a.rows(); ++i)
      m = std::max(m, std::sqrt(double(a(i, 0)) * a(i, 0) + double(a(i, 1)) * a(i, 1) +
                                double(a(i, 2)) * a(i, 2)));
    return m;
  };
  EXPECT_LE(max_norm(v), max_norm(s.target.points) + max_norm(s.source.points) + 1e-5);
}
