#pragma once

#include <optional>
#include <string>

#include "dsf/array.hpp"
#include "dsf/autodiff.hpp"
#include "dsf/pointcloud.hpp"

namespace dsf::inline DSF_PREC {

struct LossConfig {
  double epsilon = 0.01;
  double q_exponent = 0.4;
  bool supervise_init = true;
  double init_weight = 1.0;

  /// epsilon > 0 and 0 < q <= 1; epsilon = 0 is accepted only with q = 1.
  void validate() const;
};

/// sum_i (|pred_i - gt_i|_1 + epsilon)^q
ad::Var robust_loss(ad::Var pred, ad::Var gt, const LossConfig& cfg);
double robust_loss(const Array& pred, const Array& gt, const LossConfig& cfg);

ad::Var total_loss(ad::Var v_init, ad::Var v_pred, ad::Var gt, const LossConfig& cfg);

struct FlowMetrics {
  double epe3d = 0;
  double acc_s = 0;
  double acc_r = 0;
  double outliers = 0;
  std::size_t count = 0;
};

struct MetricReport {
  FlowMetrics all;
  std::optional<FlowMetrics> noc;  // absent when no point is valid
};

FlowMetrics flow_metrics(const Array& pred, const Array& gt, const std::vector<std::uint8_t>* mask);
MetricReport metrics(const Array& pred, const ScenePair& pair);

/// Macro average over scenes; noc averages only scenes that have it.
MetricReport average_reports(const std::vector<MetricReport>& reports);

std::string metrics_csv_header();
std::string to_csv_row(const MetricReport& r);

}  // namespace dsf::inline DSF_PREC
