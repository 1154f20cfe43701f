#include "dsf/objective.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace dsf::inline DSF_PREC {

void LossConfig::validate() const {
  if (!(q_exponent > 0 && q_exponent <= 1)) {
    throw std::invalid_argument("loss: q_exponent must be in (0, 1]");
  }
  if (epsilon < 0 || (epsilon == 0 && q_exponent != 1)) {
    throw std::invalid_argument("loss: epsilon must be positive");
  }
  if (init_weight < 0) throw std::invalid_argument("loss: init_weight must be >= 0");
}

ad::Var robust_loss(ad::Var pred, ad::Var gt, const LossConfig& cfg) {
  cfg.validate();
  ad::Graph& g = pred.graph();
  expect_shape(g.value(gt), g.value(pred).shape(), "robust_loss gt");
  ad::Var l1 = ad::row_sum(ad::abs(ad::sub(pred, gt)));
  if (cfg.q_exponent == 1) return ad::sum_all(ad::add_scalar(l1, static_cast<Real>(cfg.epsilon)));
  return ad::sum_all(ad::pow_scalar(ad::add_scalar(l1, static_cast<Real>(cfg.epsilon)),
                                    static_cast<Real>(cfg.q_exponent)));
}

double robust_loss(const Array& pred, const Array& gt, const LossConfig& cfg) {
  cfg.validate();
  expect_shape(gt, pred.shape(), "robust_loss gt");
  double total = 0;
  for (std::size_t i = 0; i < pred.rows(); ++i) {
    double l1 = 0;
    for (std::size_t c = 0; c < pred.cols(); ++c) l1 += std::abs(double(pred(i, c)) - gt(i, c));
    total += std::pow(l1 + cfg.epsilon, cfg.q_exponent);
  }
  return total;
}

ad::Var total_loss(ad::Var v_init, ad::Var v_pred, ad::Var gt, const LossConfig& cfg) {
  ad::Var l = robust_loss(v_pred, gt, cfg);
  if (!cfg.supervise_init) return l;
  return ad::add(l, ad::scale(robust_loss(v_init, gt, cfg), static_cast<Real>(cfg.init_weight)));
}

FlowMetrics flow_metrics(const Array& pred, const Array& gt, const std::vector<std::uint8_t>* mask) {
  expect_shape(gt, pred.shape(), "metrics gt");
  if (pred.rank() != 2 || pred.cols() != 3) {
    throw ShapeError("metrics: expected [N x 3] flow, got " + shape_str(pred.shape()));
  }
  if (mask && mask->size() != pred.rows()) throw ShapeError("metrics: mask length mismatch");
  FlowMetrics m;
  double epe = 0;
  std::size_t s = 0, r = 0, o = 0;
  for (std::size_t i = 0; i < pred.rows(); ++i) {
    if (mask && !(*mask)[i]) continue;
    double e2 = 0, g2 = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      const double d = double(pred(i, c)) - gt(i, c);
      e2 += d * d;
      g2 += double(gt(i, c)) * gt(i, c);
    }
    const double e = std::sqrt(e2);
    const double rel = e / std::max(std::sqrt(g2), 1e-8);
    epe += e;
    s += (e < 0.05 || rel < 0.05);
    r += (e < 0.10 || rel < 0.10);
    o += (e > 0.30 || rel > 0.10);
    ++m.count;
  }
  if (m.count == 0) return m;
  const double n = static_cast<double>(m.count);
  m.epe3d = epe / n;
  m.acc_s = s / n;
  m.acc_r = r / n;
  m.outliers = o / n;
  return m;
}

MetricReport metrics(const Array& pred, const ScenePair& pair) {
  MetricReport rep;
  rep.all = flow_metrics(pred, pair.gt_flow.vectors, nullptr);
  if (rep.all.count == 0) throw std::invalid_argument("metrics: empty flow field");
  FlowMetrics noc = flow_metrics(pred, pair.gt_flow.vectors, &pair.valid_mask);
  if (noc.count > 0) rep.noc = noc;
  return rep;
}

namespace {

void accumulate(FlowMetrics& into, const FlowMetrics& m) {
  into.epe3d += m.epe3d;
  into.acc_s += m.acc_s;
  into.acc_r += m.acc_r;
  into.outliers += m.outliers;
  into.count += m.count;
}

void divide(FlowMetrics& m, std::size_t n) {
  m.epe3d /= n;
  m.acc_s /= n;
  m.acc_r /= n;
  m.outliers /= n;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

MetricReport average_reports(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("average_reports: no reports");
  MetricReport avg;
  FlowMetrics noc;
  std::size_t n_noc = 0;
  for (const auto& r : reports) {
    accumulate(avg.all, r.all);
    if (r.noc) {
      accumulate(noc, *r.noc);
      ++n_noc;
    }
  }
  divide(avg.all, reports.size());
  if (n_noc > 0) {
    divide(noc, n_noc);
    avg.noc = noc;
  }
  return avg;
}

std::string metrics_csv_header() {
  return "epe_all,accs_all,accr_all,out_all,epe_noc,accs_noc,accr_noc,out_noc";
}

std::string to_csv_row(const MetricReport& r) {
  std::string row = fmt(r.all.epe3d) + "," + fmt(r.all.acc_s) + "," + fmt(r.all.acc_r) + "," +
                    fmt(r.all.outliers);
  if (r.noc) {
    row += "," + fmt(r.noc->epe3d) + "," + fmt(r.noc->acc_s) + "," + fmt(r.noc->acc_r) + "," +
           fmt(r.noc->outliers);
  } else {
    row += ",,,,";
  }
  return row;
}

}  // namespace dsf::inline DSF_PREC
