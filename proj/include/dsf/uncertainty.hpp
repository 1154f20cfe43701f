#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsf/array.hpp"
#include "dsf/diffusion.hpp"
#include "dsf/pointcloud.hpp"

namespace dsf::inline DSF_PREC {

struct HypothesisSet {
  std::vector<Array> hypotheses;  // K flows, each [N x 3]
  Array mean;                     // [N x 3]
  std::vector<double> std;        // per point, pooled over components

  std::size_t size() const { return hypotheses.size(); }
};

/// Mean and pooled sample std (K - 1 denominator). Needs K >= 2.
HypothesisSet summarize_hypotheses(std::vector<Array> hypotheses);

/// K reverse runs, hypothesis k seeded with root_seed ^ k.
HypothesisSet sample_hypotheses(const ScenePair& pair, const FlowPredictor& predict,
                                const DiffusionConfig& cfg, std::size_t k,
                                std::uint64_t root_seed);

std::vector<double> per_point_epe(const Array& pred, const Array& gt);

struct UncertaintyBin {
  double epe_lo = 0;
  double epe_hi = 0;
  double mean_unc = 0;
  double std_unc = 0;
  std::size_t count = 0;

  bool populated() const { return count > 0; }
};

/// Bins [edges[b], edges[b+1]) over EPE; the last edge may be infinity.
std::vector<UncertaintyBin> uncertainty_error_bins(std::span<const double> epe,
                                                   std::span<const double> unc,
                                                   std::span<const double> edges);
std::vector<UncertaintyBin> uncertainty_error_bins(const HypothesisSet& hyp, const Array& gt,
                                                   std::span<const double> edges);

struct PRPoint {
  double threshold = 0;
  std::optional<double> recall;     // absent when there are no outliers
  std::optional<double> precision;  // absent when nothing is retrieved
};

/// Retrieved = points with uncertainty > threshold; outlier = EPE > outlier_epe.
std::vector<PRPoint> outlier_pr_curve(std::span<const double> epe, std::span<const double> unc,
                                      double outlier_epe, std::span<const double> thresholds);
std::vector<PRPoint> outlier_pr_curve(const HypothesisSet& hyp, const ScenePair& pair,
                                      double outlier_epe, std::span<const double> thresholds);

/// Rank correlation, average ranks on ties.
double spearman(std::span<const double> a, std::span<const double> b);

/// 0, 0.05, 0.1, 0.2, 0.4, 0.8, inf
std::vector<double> default_bin_edges();
/// 0.0001 .. 0.0020 step 0.0001, times flow_scale.
std::vector<double> default_pr_thresholds(double flow_scale);

std::string bins_csv(const std::vector<UncertaintyBin>& bins);
std::string pr_csv(const std::vector<PRPoint>& curve);

}  // namespace dsf::inline DSF_PREC
