#pragma once
// Run configuration: flat "key = value" text with namespaced keys
// (scene.*, diffusion.*, denoiser.*, loss.*, train.*, eval.*).

#include <cstdint>
#include <filesystem>
#include <string>

#include "dsf/denoiser.hpp"
#include "dsf/diffusion.hpp"
#include "dsf/objective.hpp"
#include "dsf/pointcloud.hpp"
#include "dsf/scene_gen.hpp"

namespace dsf::inline DSF_PREC {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TrainConfig {
  std::size_t iterations = 5000;
  std::size_t batch_size = 4;
  double peak_lr = 4e-4;
  double weight_decay = 1e-4;
  double grad_clip = 1.0;
  std::size_t points_train = 256;  // n1 = n2
  std::uint64_t seed = 1;
  std::size_t checkpoint_every = 1000;  // 0 = only at the end
  std::size_t log_every = 10;
  Subsampling subsampling = Subsampling::fps;

  void validate() const;
};

struct EvalConfig {
  std::size_t points_eval = 256;
  std::uint64_t seed = 7;
  std::size_t hypotheses = 20;
  double outlier_epe = 0.30;
  SamplerKind hypothesis_sampler = SamplerKind::ddpm;
  /// Point estimate: 1 = a single sampled flow, K >= 2 = mean of K samples.
  std::size_t average_hypotheses = 1;

  void validate() const;
};

struct RunConfig {
  SceneGenConfig scene;
  DiffusionConfig diffusion;
  DenoiserConfig denoiser;
  LossConfig loss;
  TrainConfig train;
  EvalConfig eval;

  /// Small network and flow scale that train on one CPU core in minutes.
  static RunConfig toy();
  /// Values named for the full-size setup (4096/8192 points, 14 blocks, ...).
  static RunConfig full_scale();

  void validate() const;
};

/// Applies `key = value` lines on top of `base`. '#' starts a comment.
RunConfig parse_config(const std::string& text, RunConfig base = RunConfig::toy());
RunConfig load_config(const std::filesystem::path& path, RunConfig base = RunConfig::toy());
/// Every key, one per line, in a form parse_config reads back exactly.
std::string to_text(const RunConfig& cfg);

struct StepSpec {
  std::size_t sample_steps = 0;
  std::size_t train_steps = 0;
};
/// "a@b": a sampling steps of a model trained with b diffusion steps.
StepSpec parse_step_spec(const std::string& s);
std::string to_string(const StepSpec& s);

}  // namespace dsf::inline DSF_PREC
