#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>

#include "dsf/checkpoint.hpp"
#include "dsf/scene_io.hpp"
#include "dsf/uncertainty.hpp"

namespace dsf::inline DSF_PREC {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fresh parameters and optimizer for `cfg` (seeded by train.seed).
Checkpoint init_checkpoint(const RunConfig& cfg);

struct TrainSample {
  std::size_t scene_index = 0;
  std::size_t t = 0;
  ScenePair pair;  // subsampled to points_train
  Array v_t;       // noisy flow in meters
};

/// Batch slot `slot` of iteration `iteration`: scene, time step and noise all
/// come from a stream derived from (seed, iteration, slot).
TrainSample draw_train_sample(const RunConfig& cfg, const Dataset& data, std::size_t iteration,
                              std::size_t slot);

/// Per-point mean of the total loss for one sample; adds its gradient,
/// scaled by `grad_scale`, into params.
double accumulate_sample_gradient(ParamStore& params, const RunConfig& cfg,
                                  const TrainSample& sample, double grad_scale);

struct TrainOptions {
  /// Stop after this iteration (exclusive) instead of train.iterations;
  /// the schedule still spans train.iterations.
  std::optional<std::size_t> stop_at;
  std::ostream* progress = nullptr;
};

/// Runs (or resumes) training, writing train_log.csv, periodic
/// ckpt_<iter>.dsfc and final.dsfc into out_dir.
Checkpoint train(const RunConfig& cfg, const Dataset& data, const std::filesystem::path& out_dir,
                 std::optional<Checkpoint> resume = std::nullopt, const TrainOptions& opts = {});

/// Inference closure over `params`, which must outlive it.
FlowPredictor network_predictor(ParamStore& params, const DenoiserConfig& cfg);
/// Returns the ground-truth flow of the scene it is given.
FlowPredictor oracle_predictor();

/// FPS-subsamples scene `index` to `points` per cloud when it is larger.
ScenePair prepare_eval_scene(const ScenePair& pair, std::size_t points, std::uint64_t seed,
                             std::size_t index);

struct SceneResult {
  std::string name;
  MetricReport report;
};

struct EvalResult {
  std::vector<SceneResult> scenes;
  MetricReport aggregate;
};

/// Samples every scene with `steps` (a@b) and the configured sampler.
EvalResult evaluate(const FlowPredictor& predict, const Dataset& data, const RunConfig& cfg,
                    const StepSpec& steps);
/// As above with the checkpoint's network; b must equal its t_train.
EvalResult evaluate(Checkpoint& ckpt, const Dataset& data, const StepSpec& steps);

std::string eval_csv(const EvalResult& r);

struct UncertaintyResult {
  std::vector<UncertaintyBin> bins;
  std::vector<PRPoint> pr;
  double spearman = 0;
  std::vector<double> epe;  // per point, against the hypothesis mean
  std::vector<double> unc;  // per point std
};

/// K hypotheses per scene, pooled over all scenes.
UncertaintyResult uncertainty_study(const FlowPredictor& predict, const Dataset& data,
                                    const RunConfig& cfg, std::size_t k);

/// Scenes from the generator with per-scene derived streams.
Dataset generate_dataset(const SceneGenConfig& cfg, std::size_t n, std::uint64_t seed);

}  // namespace dsf::inline DSF_PREC
