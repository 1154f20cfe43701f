#include "dsf/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dsf::inline DSF_PREC {

ScheduleKind parse_schedule_kind(const std::string& s) {
  if (s == "cosine") return ScheduleKind::cosine;
  if (s == "linear") return ScheduleKind::linear;
  throw std::invalid_argument("unknown schedule: " + s);
}

SamplerKind parse_sampler_kind(const std::string& s) {
  if (s == "ddpm") return SamplerKind::ddpm;
  if (s == "ddim") return SamplerKind::ddim;
  throw std::invalid_argument("unknown sampler: " + s);
}

ReverseVariance parse_reverse_variance(const std::string& s) {
  if (s == "unit") return ReverseVariance::unit;
  if (s == "posterior") return ReverseVariance::posterior;
  throw std::invalid_argument("unknown reverse variance: " + s);
}

std::string to_string(ScheduleKind k) { return k == ScheduleKind::cosine ? "cosine" : "linear"; }
std::string to_string(SamplerKind k) { return k == SamplerKind::ddpm ? "ddpm" : "ddim"; }
std::string to_string(ReverseVariance v) {
  return v == ReverseVariance::unit ? "unit" : "posterior";
}

double NoiseSchedule::posterior_v0_coef(std::size_t t) const {
  return std::sqrt(alpha_bar[t - 1]) * beta[t] / (1.0 - alpha_bar[t]);
}

double NoiseSchedule::posterior_vt_coef(std::size_t t) const {
  return std::sqrt(alpha[t]) * (1.0 - alpha_bar[t - 1]) / (1.0 - alpha_bar[t]);
}

NoiseSchedule make_schedule(std::size_t steps, ScheduleKind kind) {
  if (steps < 1) throw std::invalid_argument("make_schedule: need at least one step");
  constexpr double kMaxBeta = 0.999;
  NoiseSchedule s;
  s.steps = steps;
  s.beta.assign(steps + 1, 0.0);
  const double T = static_cast<double>(steps);
  if (kind == ScheduleKind::cosine) {
    constexpr double offset = 0.008;
    auto f = [&](double t) {
      const double c = std::cos((t / T + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
      return c * c;
    };
    for (std::size_t t = 1; t <= steps; ++t) {
      const double b = 1.0 - f(static_cast<double>(t)) / f(static_cast<double>(t - 1));
      s.beta[t] = std::min(b, kMaxBeta);
    }
  } else {
    // Linear schedule rescaled so that T steps cover the 1000-step range.
    const double lo = 1e-4 * 1000.0 / T, hi = 0.02 * 1000.0 / T;
    for (std::size_t t = 1; t <= steps; ++t) {
      const double frac = steps == 1 ? 1.0 : static_cast<double>(t - 1) / (T - 1.0);
      s.beta[t] = std::min(lo + frac * (hi - lo), kMaxBeta);
    }
  }
  s.alpha.assign(steps + 1, 1.0);
  s.alpha_bar.assign(steps + 1, 1.0);
  s.beta_tilde.assign(steps + 1, 0.0);
  for (std::size_t t = 1; t <= steps; ++t) {
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
    s.beta_tilde[t] = (1.0 - s.alpha_bar[t - 1]) / (1.0 - s.alpha_bar[t]) * s.beta[t];
  }
  return s;
}

void DiffusionConfig::validate() const {
  if (t_train < 1) throw std::invalid_argument("diffusion: t_train must be >= 1");
  if (t_sample < 1 || t_sample > t_train) {
    throw std::invalid_argument("diffusion: t_sample must be in [1, t_train]");
  }
  if (!(flow_scale > 0)) throw std::invalid_argument("diffusion: flow_scale must be positive");
}

namespace {

void check_step(std::size_t t, const NoiseSchedule& sched, const char* op) {
  if (t < 1 || t > sched.steps) {
    throw std::out_of_range(std::string(op) + ": t = " + std::to_string(t) + " outside [1, " +
                            std::to_string(sched.steps) + "]");
  }
}

Array scaled(const Array& a, double s) {
  Array out = a;
  for (auto& v : out.values()) v = static_cast<Real>(v * s);
  return out;
}

Array predict_v0(const FlowPredictor& predict, const Array& v_t, const ScenePair& pair,
                 double flow_scale) {
  Array v0 = predict(scaled(v_t, flow_scale), pair);
  expect_shape(v0, v_t.shape(), "flow predictor output");
  return scaled(v0, 1.0 / flow_scale);
}

}  // namespace

Array q_sample(const Array& v0, std::size_t t, const NoiseSchedule& sched, const Array& eps) {
  check_step(t, sched, "q_sample");
  expect_shape(eps, v0.shape(), "q_sample noise");
  const double a = std::sqrt(sched.alpha_bar[t]);
  const double b = std::sqrt(1.0 - sched.alpha_bar[t]);
  Array out(v0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<Real>(a * v0[i] + b * eps[i]);
  return out;
}

Array posterior_mean(const Array& v_t, const Array& v0_hat, std::size_t t,
                     const NoiseSchedule& sched) {
  check_step(t, sched, "posterior_mean");
  expect_shape(v0_hat, v_t.shape(), "posterior_mean v0_hat");
  const double c0 = sched.posterior_v0_coef(t);
  const double ct = sched.posterior_vt_coef(t);
  Array out(v_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<Real>(c0 * v0_hat[i] + ct * v_t[i]);
  }
  return out;
}

Array sample_ddpm(const ScenePair& pair, const FlowPredictor& predict, const DiffusionConfig& cfg,
                  const NoiseSchedule& sched, RngStream& rng) {
  const Shape shape{pair.source.size(), 3};
  Array v = gaussian(rng, shape);
  for (std::size_t t = sched.steps; t >= 1; --t) {
    const Array v0 = predict_v0(predict, v, pair, cfg.flow_scale);
    v = posterior_mean(v, v0, t, sched);
    if (t > 1) {
      const double sigma =
          cfg.variance == ReverseVariance::unit ? 1.0 : std::sqrt(sched.beta_tilde[t]);
      const Array z = gaussian(rng, shape);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] += static_cast<Real>(sigma * z[i]);
    }
  }
  return scaled(v, cfg.flow_scale);
}

std::vector<std::size_t> ddim_timesteps(std::size_t t_train, std::size_t n_steps) {
  if (n_steps < 1 || n_steps > t_train) {
    throw std::out_of_range("ddim: n_steps = " + std::to_string(n_steps) + " outside [1, " +
                            std::to_string(t_train) + "]");
  }
  std::vector<std::size_t> ts;
  for (std::size_t i = n_steps; i >= 1; --i) {
    ts.push_back((i * t_train + n_steps - 1) / n_steps);
  }
  return ts;
}

Array sample_ddim(const ScenePair& pair, const FlowPredictor& predict, const DiffusionConfig& cfg,
                  const NoiseSchedule& train_sched, RngStream& rng, std::size_t n_steps) {
  const auto ts = ddim_timesteps(train_sched.steps, n_steps);
  Array v = gaussian(rng, {pair.source.size(), 3});
  for (std::size_t s = 0; s < ts.size(); ++s) {
    const std::size_t t = ts[s];
    const Array v0 = predict_v0(predict, v, pair, cfg.flow_scale);
    const double ab = train_sched.alpha_bar[t];
    const double ab_next = s + 1 < ts.size() ? train_sched.alpha_bar[ts[s + 1]] : 1.0;
    if (ab_next == 1.0) {
      v = v0;
      break;
    }
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    const double an = std::sqrt(ab_next), bn = std::sqrt(1.0 - ab_next);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double eps_hat = (v[i] - a * v0[i]) / b;
      v[i] = static_cast<Real>(an * v0[i] + bn * eps_hat);
    }
  }
  return scaled(v, cfg.flow_scale);
}

Array sample_flow(const ScenePair& pair, const FlowPredictor& predict, const DiffusionConfig& cfg,
                  RngStream& rng) {
  cfg.validate();
  if (cfg.sampler == SamplerKind::ddim) {
    return sample_ddim(pair, predict, cfg, make_schedule(cfg.t_train, cfg.schedule), rng,
                       cfg.t_sample);
  }
  return sample_ddpm(pair, predict, cfg, make_schedule(cfg.t_sample, cfg.schedule), rng);
}

}  // namespace dsf::inline DSF_PREC
