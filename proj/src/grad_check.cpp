#include "dsf/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace dsf::inline DSF_PREC {

namespace {

double evaluate(const ScalarObjective& f, ParamStore& params) {
  ad::Graph g;
  return static_cast<double>(f(g, params).value()[0]);
}

}  // namespace

GradCheckReport grad_check(const ScalarObjective& f, ParamStore& params,
                           const GradCheckOptions& options) {
  if (!(options.eps > 0)) throw std::invalid_argument("grad_check: eps must be positive");

  params.zero_grad();
  {
    ad::Graph g;
    g.backward(f(g, params));
  }
  if (options.after_backward) options.after_backward(params);

  struct Coord {
    std::string name;
    std::size_t index;
  };
  std::vector<Coord> all;
  for (const auto& [name, e] : params.entries()) {
    for (std::size_t i = 0; i < e.value.size(); ++i) all.push_back({name, i});
  }
  std::vector<Coord> coords;
  if (options.samples == 0 || options.samples >= all.size()) {
    coords = all;
  } else {
    // Partial Fisher-Yates: distinct coordinates.
    RngStream rng(options.seed);
    for (std::size_t i = 0; i < options.samples; ++i) {
      const std::size_t j = i + rng.uniform_index(all.size() - i);
      std::swap(all[i], all[j]);
      coords.push_back(all[i]);
    }
  }

  GradCheckReport report;
  for (const auto& c : coords) {
    auto& entry = params.at(c.name);
    if (!entry.touched) {
      throw MissingGradientError("grad_check: no analytic gradient for parameter '" + c.name +
                                 "'");
    }
    const double analytic = entry.grad[c.index];
    const Real saved = entry.value[c.index];
    entry.value[c.index] = static_cast<Real>(saved + options.eps);
    const double up = evaluate(f, params);
    entry.value[c.index] = static_cast<Real>(saved - options.eps);
    const double down = evaluate(f, params);
    entry.value[c.index] = saved;
    const double numeric = (up - down) / (2.0 * options.eps);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
    const double rel = std::abs(analytic - numeric) / denom;
    ++report.coordinates;
    if (rel >= report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_param = c.name;
      report.worst_index = c.index;
      report.worst_analytic = analytic;
      report.worst_numeric = numeric;
    }
  }
  report.passed = report.max_rel_error < options.tol;
  return report;
}

}  // namespace dsf::inline DSF_PREC
