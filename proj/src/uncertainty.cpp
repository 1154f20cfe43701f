#include "dsf/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace dsf::inline DSF_PREC {

HypothesisSet summarize_hypotheses(std::vector<Array> hypotheses) {
  const std::size_t k = hypotheses.size();
  if (k < 2) throw std::invalid_argument("hypotheses: need K >= 2, got " + std::to_string(k));
  const Shape shape = hypotheses[0].shape();
  if (shape.size() != 2 || shape[1] != 3) {
    throw ShapeError("hypotheses: expected [N x 3], got " + shape_str(shape));
  }
  for (const auto& h : hypotheses) expect_shape(h, shape, "hypothesis");
  const std::size_t n = shape[0];
  HypothesisSet out;
  out.mean = Array(shape);
  out.std.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double var = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      double mu = 0;
      for (const auto& h : hypotheses) mu += h(i, c);
      mu /= k;
      double ss = 0;
      for (const auto& h : hypotheses) ss += (h(i, c) - mu) * (h(i, c) - mu);
      var += ss / (k - 1);
      out.mean(i, c) = static_cast<Real>(mu);
    }
    out.std[i] = std::sqrt(var / 3.0);
  }
  out.hypotheses = std::move(hypotheses);
  return out;
}

HypothesisSet sample_hypotheses(const ScenePair& pair, const FlowPredictor& predict,
                                const DiffusionConfig& cfg, std::size_t k,
                                std::uint64_t root_seed) {
  if (k < 2) throw std::invalid_argument("hypotheses: need K >= 2, got " + std::to_string(k));
  std::vector<Array> hyps(k);
  for (std::size_t j = 0; j < k; ++j) {
    RngStream rng(root_seed ^ static_cast<std::uint64_t>(j));
    hyps[j] = sample_flow(pair, predict, cfg, rng);
  }
  return summarize_hypotheses(std::move(hyps));
}

std::vector<double> per_point_epe(const Array& pred, const Array& gt) {
  expect_shape(gt, pred.shape(), "epe gt");
  std::vector<double> e(pred.rows());
  for (std::size_t i = 0; i < pred.rows(); ++i) {
    double s = 0;
    for (std::size_t c = 0; c < pred.cols(); ++c) {
      const double d = double(pred(i, c)) - gt(i, c);
      s += d * d;
    }
    e[i] = std::sqrt(s);
  }
  return e;
}

std::vector<UncertaintyBin> uncertainty_error_bins(std::span<const double> epe,
                                                   std::span<const double> unc,
                                                   std::span<const double> edges) {
  if (epe.size() != unc.size()) throw std::invalid_argument("bins: epe/uncertainty length mismatch");
  if (epe.empty()) throw std::invalid_argument("bins: no points");
  if (edges.size() < 2) throw std::invalid_argument("bins: need at least two edges");
  for (std::size_t b = 1; b < edges.size(); ++b) {
    if (!(edges[b] > edges[b - 1])) throw std::invalid_argument("bins: edges must ascend");
  }
  const std::size_t nb = edges.size() - 1;
  std::vector<UncertaintyBin> bins(nb);
  std::vector<double> sum(nb, 0), sum2(nb, 0);
  for (std::size_t b = 0; b < nb; ++b) {
    bins[b].epe_lo = edges[b];
    bins[b].epe_hi = edges[b + 1];
  }
  for (std::size_t i = 0; i < epe.size(); ++i) {
    auto it = std::upper_bound(edges.begin(), edges.end(), epe[i]);
    if (it == edges.begin() || it == edges.end()) continue;
    const std::size_t b = static_cast<std::size_t>(it - edges.begin()) - 1;
    sum[b] += unc[i];
    bins[b].count++;
  }
  for (std::size_t b = 0; b < nb; ++b) {
    if (bins[b].count) bins[b].mean_unc = sum[b] / bins[b].count;
  }
  for (std::size_t i = 0; i < epe.size(); ++i) {
    auto it = std::upper_bound(edges.begin(), edges.end(), epe[i]);
    if (it == edges.begin() || it == edges.end()) continue;
    const std::size_t b = static_cast<std::size_t>(it - edges.begin()) - 1;
    const double d = unc[i] - bins[b].mean_unc;
    sum2[b] += d * d;
  }
  for (std::size_t b = 0; b < nb; ++b) {
    if (bins[b].count) bins[b].std_unc = std::sqrt(sum2[b] / bins[b].count);
  }
  return bins;
}

std::vector<UncertaintyBin> uncertainty_error_bins(const HypothesisSet& hyp, const Array& gt,
                                                   std::span<const double> edges) {
  const auto epe = per_point_epe(hyp.mean, gt);
  return uncertainty_error_bins(epe, hyp.std, edges);
}

std::vector<PRPoint> outlier_pr_curve(std::span<const double> epe, std::span<const double> unc,
                                      double outlier_epe, std::span<const double> thresholds) {
  if (epe.size() != unc.size()) throw std::invalid_argument("pr: epe/uncertainty length mismatch");
  std::size_t outliers = 0;
  for (double e : epe) outliers += e > outlier_epe;
  std::vector<PRPoint> curve;
  curve.reserve(thresholds.size());
  for (double u : thresholds) {
    std::size_t retrieved = 0, hit = 0;
    for (std::size_t i = 0; i < epe.size(); ++i) {
      if (unc[i] > u) {
        ++retrieved;
        hit += epe[i] > outlier_epe;
      }
    }
    PRPoint p;
    p.threshold = u;
    if (outliers) p.recall = double(hit) / outliers;
    if (retrieved) p.precision = double(hit) / retrieved;
    curve.push_back(p);
  }
  return curve;
}

std::vector<PRPoint> outlier_pr_curve(const HypothesisSet& hyp, const ScenePair& pair,
                                      double outlier_epe, std::span<const double> thresholds) {
  const auto epe = per_point_epe(hyp.mean, pair.gt_flow.vectors);
  return outlier_pr_curve(epe, hyp.std, outlier_epe, thresholds);
}

namespace {

std::vector<double> ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * double(i + j);
    for (std::size_t t = i; t <= j; ++t) r[order[t]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman: bad lengths");
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0 || sbb == 0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> default_bin_edges() {
  return {0.0, 0.05, 0.1, 0.2, 0.4, 0.8, std::numeric_limits<double>::infinity()};
}

std::vector<double> default_pr_thresholds(double flow_scale) {
  std::vector<double> t;
  for (int i = 1; i <= 20; ++i) t.push_back(i * 1e-4 * flow_scale);
  return t;
}

namespace {

std::string num(double v) {
  if (std::isinf(v)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.8g", v);
  return buf;
}

}  // namespace

std::string bins_csv(const std::vector<UncertaintyBin>& bins) {
  std::string s = "epe_lo,epe_hi,mean_unc,std_unc,count\n";
  for (const auto& b : bins) {
    s += num(b.epe_lo) + "," + num(b.epe_hi) + "," + (b.count ? num(b.mean_unc) : "") + "," +
         (b.count ? num(b.std_unc) : "") + "," + std::to_string(b.count) + "\n";
  }
  return s;
}

std::string pr_csv(const std::vector<PRPoint>& curve) {
  std::string s = "threshold,recall,precision\n";
  for (const auto& p : curve) {
    s += num(p.threshold) + "," + (p.recall ? num(*p.recall) : "") + "," +
         (p.precision ? num(*p.precision) : "") + "\n";
  }
  return s;
}

}  // namespace dsf::inline DSF_PREC
