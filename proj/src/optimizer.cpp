#include "dsf/optimizer.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dsf::inline DSF_PREC {

double one_cycle_lr(std::size_t step, std::size_t total, double peak) {
  if (step >= total) {
    throw std::out_of_range("one_cycle_lr: step " + std::to_string(step) + " >= total " +
                            std::to_string(total));
  }
  const double start = peak / 25.0, end = peak / 1e4;
  const double warm = 0.1 * static_cast<double>(total);
  const double s = static_cast<double>(step);
  if (s < warm) return start + (peak - start) * s / warm;
  const double span = static_cast<double>(total - 1) - warm;
  const double frac = span > 0 ? (s - warm) / span : 1.0;
  return end + (peak - end) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

void AdamW::step(ParamStore& params, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (auto& [name, e] : params.entries()) {
    auto it = state_.find(name);
    if (it == state_.end()) {
      it = state_.emplace(name, Moments{Array(e.value.shape()), Array(e.value.shape())}).first;
    }
    Array& m = it->second.m;
    Array& v = it->second.v;
    expect_shape(m, e.value.shape(), ("optimizer state for " + name).c_str());
    const bool decay = e.value.rank() == 2 && weight_decay > 0;
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad[i];
      const double mi = beta1 * m[i] + (1.0 - beta1) * g;
      const double vi = beta2 * v[i] + (1.0 - beta2) * g * g;
      m[i] = static_cast<Real>(mi);
      v[i] = static_cast<Real>(vi);
      double p = e.value[i];
      if (decay) p -= lr * weight_decay * p;
      p -= lr * (mi / c1) / (std::sqrt(vi / c2) + eps);
      e.value[i] = static_cast<Real>(p);
    }
  }
}

double clip_grad_norm(ParamStore& params, double max_norm) {
  const double norm = params.grad_norm();
  if (norm > max_norm) {
    const double s = max_norm / (norm + 1e-12);
    for (auto& [name, e] : params.entries()) {
      for (auto& g : e.grad.values()) g = static_cast<Real>(g * s);
    }
  }
  return norm;
}

}  // namespace dsf::inline DSF_PREC
