#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "dsf/autodiff.hpp"
#include "dsf/params.hpp"
#include "dsf/rng.hpp"

namespace dsf::inline DSF_PREC {

class MissingGradientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GradCheckReport {
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = false;
};

struct GradCheckOptions {
  double eps = 1e-4;
  double tol = 1e-5;
  /// Number of coordinates sampled uniformly over all parameters; 0 = all.
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  /// Relative error denominator floor: |a - n| / max(|a|, |n|, floor).
  double floor = 1e-8;
  /// Hook applied to the store after the analytic backward pass.
  std::function<void(ParamStore&)> after_backward;
};

/// Builds a single-element loss from the params into the given graph.
using ScalarObjective = std::function<ad::Var(ad::Graph&, ParamStore&)>;

/// Central-difference check of analytic gradients. Throws MissingGradientError
/// when a sampled coordinate's parameter never received a gradient.
GradCheckReport grad_check(const ScalarObjective& f, ParamStore& params,
                           const GradCheckOptions& options);

}  // namespace dsf::inline DSF_PREC
