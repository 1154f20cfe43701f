#pragma once

#include <map>
#include <string>

#include "dsf/params.hpp"

namespace dsf::inline DSF_PREC {

/// Warmup from peak/25 to peak over the first 10% of steps, then cosine
/// decay to peak/1e4 at step total-1.
double one_cycle_lr(std::size_t step, std::size_t total, double peak);

/// Adam moments with weight decay applied directly to the weights. Decay
/// touches matrices only; biases and norm gains are left alone.
class AdamW {
 public:
  struct Moments {
    Array m;
    Array v;
  };

  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  explicit AdamW(double weight_decay = 0.0) : weight_decay(weight_decay) {}

  void step(ParamStore& params, double lr);

  std::uint64_t steps() const noexcept { return t_; }
  void set_steps(std::uint64_t t) noexcept { t_ = t; }
  std::map<std::string, Moments>& state() noexcept { return state_; }
  const std::map<std::string, Moments>& state() const noexcept { return state_; }

 private:
  std::uint64_t t_ = 0;
  std::map<std::string, Moments> state_;
};

/// Rescales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(ParamStore& params, double max_norm);

}  // namespace dsf::inline DSF_PREC
