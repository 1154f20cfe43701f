#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dsf/array.hpp"
#include "dsf/pointcloud.hpp"
#include "dsf/rng.hpp"

namespace dsf::inline DSF_PREC {

enum class ScheduleKind { cosine, linear };
enum class SamplerKind { ddpm, ddim };
/// Noise added by the stochastic reverse step: identity covariance, or the
/// posterior variance beta_tilde_t.
enum class ReverseVariance { unit, posterior };

ScheduleKind parse_schedule_kind(const std::string& s);
SamplerKind parse_sampler_kind(const std::string& s);
ReverseVariance parse_reverse_variance(const std::string& s);
std::string to_string(ScheduleKind k);
std::string to_string(SamplerKind k);
std::string to_string(ReverseVariance v);

/// Tables indexed by time step t = 0..T. Entry 0 holds alpha_bar = 1 and
/// zero beta; beta/alpha/beta_tilde are meaningful for t >= 1.
struct NoiseSchedule {
  std::size_t steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> beta_tilde;

  /// Coefficient of v0_hat in the posterior mean at step t.
  double posterior_v0_coef(std::size_t t) const;
  /// Coefficient of v_t in the posterior mean at step t.
  double posterior_vt_coef(std::size_t t) const;
};

NoiseSchedule make_schedule(std::size_t steps, ScheduleKind kind = ScheduleKind::cosine);

struct DiffusionConfig {
  std::size_t t_train = 20;
  std::size_t t_sample = 2;
  SamplerKind sampler = SamplerKind::ddim;
  /// Meters per diffusion unit: the denoiser sees V_t * flow_scale.
  double flow_scale = 1.0;
  ScheduleKind schedule = ScheduleKind::cosine;
  ReverseVariance variance = ReverseVariance::unit;

  void validate() const;
};

/// sqrt(alpha_bar_t) v0 + sqrt(1 - alpha_bar_t) eps, with v0 in diffusion units.
Array q_sample(const Array& v0, std::size_t t, const NoiseSchedule& sched, const Array& eps);

/// Mean of q(V_{t-1} | V_t, V_0 = v0_hat).
Array posterior_mean(const Array& v_t, const Array& v0_hat, std::size_t t,
                     const NoiseSchedule& sched);

/// Maps the current noisy flow (meters) to a clean-flow prediction (meters).
using FlowPredictor = std::function<Array(const Array& v_t, const ScenePair& pair)>;

/// Ancestral sampling over every step of `sched`.
Array sample_ddpm(const ScenePair& pair, const FlowPredictor& predict, const DiffusionConfig& cfg,
                  const NoiseSchedule& sched, RngStream& rng);

/// Descending DDIM time steps: ceil(i * T / n) for i = n .. 1.
std::vector<std::size_t> ddim_timesteps(std::size_t t_train, std::size_t n_steps);

/// Deterministic (eta = 0) DDIM over an evenly spaced subsequence of the
/// training schedule, finishing with a jump to alpha_bar = 1.
Array sample_ddim(const ScenePair& pair, const FlowPredictor& predict, const DiffusionConfig& cfg,
                  const NoiseSchedule& train_sched, RngStream& rng, std::size_t n_steps);

/// Runs the configured sampler: DDIM with t_sample of t_train steps, or DDPM
/// on a t_sample-step schedule.
Array sample_flow(const ScenePair& pair, const FlowPredictor& predict, const DiffusionConfig& cfg,
                  RngStream& rng);

}  // namespace dsf::inline DSF_PREC
