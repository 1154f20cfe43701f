#include "dsf/config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "dsf/binary_io.hpp"

namespace dsf::inline DSF_PREC {

void TrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("train.iterations must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(peak_lr > 0)) throw ConfigError("train.peak_lr must be positive");
  if (weight_decay < 0) throw ConfigError("train.weight_decay must be >= 0");
  if (!(grad_clip > 0)) throw ConfigError("train.grad_clip must be positive");
  if (points_train < 1) throw ConfigError("train.points_train must be >= 1");
  if (log_every < 1) throw ConfigError("train.log_every must be >= 1");
}

void EvalConfig::validate() const {
  if (points_eval < 1) throw ConfigError("eval.points_eval must be >= 1");
  if (hypotheses < 2) throw ConfigError("eval.hypotheses must be >= 2");
  if (!(outlier_epe > 0)) throw ConfigError("eval.outlier_epe must be positive");
  if (average_hypotheses < 1) throw ConfigError("eval.average_hypotheses must be >= 1");
}

RunConfig RunConfig::toy() {
  RunConfig c;
  c.denoiser.feature_dim = 32;
  c.denoiser.knn_k = 8;
  c.denoiser.n_global_cross_layers = 1;
  c.diffusion.flow_scale = 0.05;
  return c;
}

RunConfig RunConfig::full_scale() {
  RunConfig c;
  c.scene.n1 = c.scene.n2 = 8192;
  c.train.iterations = 600000;
  c.train.batch_size = 24;
  c.train.points_train = 4096;
  c.eval.points_eval = 8192;
  return c;
}

void RunConfig::validate() const {
  try {
    scene.validate();
    diffusion.validate();
    denoiser.validate();
    loss.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  train.validate();
  eval.validate();
  if (train.points_train > scene.n1 || train.points_train > scene.n2) {
    throw ConfigError("train.points_train exceeds scene.n1/scene.n2");
  }
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) {
    throw ConfigError("config: bad value '" + v + "' for " + key);
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: bad boolean '" + v + "' for " + key);
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field size_field(T RunConfig::*group, std::size_t T::*member) {
  return {[=](RunConfig& c, const std::string& v) {
            (c.*group).*member = parse_number<std::size_t>("", v);
          },
          [=](const RunConfig& c) { return std::to_string((c.*group).*member); }};
}

template <typename T>
Field u64_field(T RunConfig::*group, std::uint64_t T::*member) {
  return {[=](RunConfig& c, const std::string& v) {
            (c.*group).*member = parse_number<std::uint64_t>("", v);
          },
          [=](const RunConfig& c) { return std::to_string((c.*group).*member); }};
}

template <typename T>
Field double_field(T RunConfig::*group, double T::*member) {
  return {[=](RunConfig& c, const std::string& v) {
            (c.*group).*member = parse_number<double>("", v);
          },
          [=](const RunConfig& c) { return fmt_double((c.*group).*member); }};
}

template <typename T>
Field bool_field(T RunConfig::*group, bool T::*member) {
  return {[=](RunConfig& c, const std::string& v) { (c.*group).*member = parse_bool("", v); },
          [=](const RunConfig& c) { return std::string((c.*group).*member ? "true" : "false"); }};
}

template <typename T, typename E>
Field enum_field(T RunConfig::*group, E T::*member, E (*parse)(const std::string&),
                 std::string (*show)(E)) {
  return {[=](RunConfig& c, const std::string& v) { (c.*group).*member = parse(v); },
          [=](const RunConfig& c) { return show((c.*group).*member); }};
}

Subsampling parse_subsampling(const std::string& s) {
  if (s == "fps") return Subsampling::fps;
  if (s == "random") return Subsampling::random;
  throw std::invalid_argument("unknown subsampling: " + s);
}

std::string subsampling_name(Subsampling s) { return s == Subsampling::fps ? "fps" : "random"; }
std::string shape_name(ShapeFamily f) { return to_string(f); }
std::string schedule_name(ScheduleKind k) { return to_string(k); }
std::string sampler_name(SamplerKind k) { return to_string(k); }
std::string variance_name(ReverseVariance v) { return to_string(v); }

const std::map<std::string, Field>& fields() {
  using R = RunConfig;
  static const std::map<std::string, Field> table = {
      {"scene.n1", size_field(&R::scene, &SceneGenConfig::n1)},
      {"scene.n2", size_field(&R::scene, &SceneGenConfig::n2)},
      {"scene.n_parts", size_field(&R::scene, &SceneGenConfig::n_parts)},
      {"scene.max_rotation_deg", double_field(&R::scene, &SceneGenConfig::max_rotation_deg)},
      {"scene.max_translation_m", double_field(&R::scene, &SceneGenConfig::max_translation_m)},
      {"scene.noise_sigma_m", double_field(&R::scene, &SceneGenConfig::noise_sigma_m)},
      {"scene.occlusion_fraction", double_field(&R::scene, &SceneGenConfig::occlusion_fraction)},
      {"scene.shape",
       enum_field(&R::scene, &SceneGenConfig::shape, &parse_shape_family, &shape_name)},
      {"diffusion.t_train", size_field(&R::diffusion, &DiffusionConfig::t_train)},
      {"diffusion.t_sample", size_field(&R::diffusion, &DiffusionConfig::t_sample)},
      {"diffusion.sampler",
       enum_field(&R::diffusion, &DiffusionConfig::sampler, &parse_sampler_kind, &sampler_name)},
      {"diffusion.flow_scale", double_field(&R::diffusion, &DiffusionConfig::flow_scale)},
      {"diffusion.schedule", enum_field(&R::diffusion, &DiffusionConfig::schedule,
                                        &parse_schedule_kind, &schedule_name)},
      {"diffusion.variance", enum_field(&R::diffusion, &DiffusionConfig::variance,
                                        &parse_reverse_variance, &variance_name)},
      {"denoiser.feature_dim", size_field(&R::denoiser, &DenoiserConfig::feature_dim)},
      {"denoiser.knn_k", size_field(&R::denoiser, &DenoiserConfig::knn_k)},
      {"denoiser.n_global_cross_layers",
       size_field(&R::denoiser, &DenoiserConfig::n_global_cross_layers)},
      {"denoiser.n_edgeconv_layers", size_field(&R::denoiser, &DenoiserConfig::n_edgeconv_layers)},
      {"denoiser.heads", size_field(&R::denoiser, &DenoiserConfig::heads)},
      {"loss.epsilon", double_field(&R::loss, &LossConfig::epsilon)},
      {"loss.q_exponent", double_field(&R::loss, &LossConfig::q_exponent)},
      {"loss.supervise_init", bool_field(&R::loss, &LossConfig::supervise_init)},
      {"loss.init_weight", double_field(&R::loss, &LossConfig::init_weight)},
      {"train.iterations", size_field(&R::train, &TrainConfig::iterations)},
      {"train.batch_size", size_field(&R::train, &TrainConfig::batch_size)},
      {"train.peak_lr", double_field(&R::train, &TrainConfig::peak_lr)},
      {"train.weight_decay", double_field(&R::train, &TrainConfig::weight_decay)},
      {"train.grad_clip", double_field(&R::train, &TrainConfig::grad_clip)},
      {"train.points_train", size_field(&R::train, &TrainConfig::points_train)},
      {"train.seed", u64_field(&R::train, &TrainConfig::seed)},
      {"train.checkpoint_every", size_field(&R::train, &TrainConfig::checkpoint_every)},
      {"train.log_every", size_field(&R::train, &TrainConfig::log_every)},
      {"train.subsampling", enum_field(&R::train, &TrainConfig::subsampling, &parse_subsampling,
                                       &subsampling_name)},
      {"eval.points_eval", size_field(&R::eval, &EvalConfig::points_eval)},
      {"eval.seed", u64_field(&R::eval, &EvalConfig::seed)},
      {"eval.average_hypotheses", size_field(&R::eval, &EvalConfig::average_hypotheses)},
      {"eval.hypotheses", size_field(&R::eval, &EvalConfig::hypotheses)},
      {"eval.outlier_epe", double_field(&R::eval, &EvalConfig::outlier_epe)},
      {"eval.hypothesis_sampler", enum_field(&R::eval, &EvalConfig::hypothesis_sampler,
                                             &parse_sampler_kind, &sampler_name)},
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError(where + "unknown key '" + key + "'");
    try {
      it->second.set(base, value);
    } catch (const std::exception&) {
      throw ConfigError(where + "bad value '" + value + "' for " + key);
    }
  }
  base.validate();
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  const auto bytes = read_file(path);
  return parse_config(std::string(bytes.begin(), bytes.end()), base);
}

std::string to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(cfg) + "\n";
  return out;
}

StepSpec parse_step_spec(const std::string& s) {
  const auto at = s.find('@');
  if (at == std::string::npos) throw ConfigError("steps: expected a@b, got '" + s + "'");
  StepSpec spec;
  try {
    spec.sample_steps = parse_number<std::size_t>("steps", trim(s.substr(0, at)));
    spec.train_steps = parse_number<std::size_t>("steps", trim(s.substr(at + 1)));
  } catch (const ConfigError&) {
    throw ConfigError("steps: expected a@b, got '" + s + "'");
  }
  if (spec.sample_steps < 1 || spec.sample_steps > spec.train_steps) {
    throw ConfigError("steps: need 1 <= a <= b, got '" + s + "'");
  }
  return spec;
}

std::string to_string(const StepSpec& s) {
  return std::to_string(s.sample_steps) + "@" + std::to_string(s.train_steps);
}

}  // namespace dsf::inline DSF_PREC
