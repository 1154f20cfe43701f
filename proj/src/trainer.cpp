#include "dsf/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "dsf/binary_io.hpp"
#include "dsf/scene_gen.hpp"

namespace dsf::inline DSF_PREC {

Checkpoint init_checkpoint(const RunConfig& cfg) {
  cfg.validate();
  Checkpoint c;
  c.config = cfg;
  c.params = make_denoiser_params(cfg.denoiser, splitmix64(cfg.train.seed ^ 0x5eedULL));
  c.optimizer = AdamW(cfg.train.weight_decay);
  c.rng = RngStream(cfg.train.seed, 0);
  return c;
}

TrainSample draw_train_sample(const RunConfig& cfg, const Dataset& data, std::size_t iteration,
                              std::size_t slot) {
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
  RngStream rng = RngStream::derive(cfg.train.seed, iteration * cfg.train.batch_size + slot);
  TrainSample s;
  s.scene_index = rng.uniform_index(data.size());
  const ScenePair& full = data.scenes[s.scene_index];
  const std::size_t p = cfg.train.points_train;
  if (full.source.size() < p || full.target.size() < p) {
    throw std::invalid_argument("train: scene " + data.names[s.scene_index] + " has fewer than " +
                                std::to_string(p) + " points");
  }
  s.pair = (full.source.size() == p && full.target.size() == p)
               ? full
               : subsample(full, p, p, cfg.train.subsampling, rng);
  const auto sched = make_schedule(cfg.diffusion.t_train, cfg.diffusion.schedule);
  s.t = 1 + rng.uniform_index(cfg.diffusion.t_train);
  const double scale = cfg.diffusion.flow_scale;
  Array v0 = s.pair.gt_flow.vectors;
  for (auto& v : v0.values()) v = static_cast<Real>(v / scale);
  const Array eps = gaussian(rng, v0.shape());
  s.v_t = q_sample(v0, s.t, sched, eps);
  for (auto& v : s.v_t.values()) v = static_cast<Real>(v * scale);
  return s;
}

double accumulate_sample_gradient(ParamStore& params, const RunConfig& cfg,
                                  const TrainSample& sample, double grad_scale) {
  ad::Graph g;
  const auto out = denoise_forward(g, params, cfg.denoiser, g.constant(sample.v_t), sample.pair);
  const auto gt = g.constant(sample.pair.gt_flow.vectors);
  const double n = static_cast<double>(sample.pair.source.size());
  ad::Var loss = total_loss(out.v_init, out.v_pred, gt, cfg.loss);
  const double value = g.value(loss)[0] / n;
  if (!std::isfinite(value)) return value;
  g.backward(ad::scale(loss, static_cast<Real>(grad_scale / n)));
  return value;
}

namespace {

std::string ckpt_name(std::size_t iter) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%07zu.dsfc", iter);
  return buf;
}

}  // namespace

Checkpoint train(const RunConfig& cfg, const Dataset& data, const std::filesystem::path& out_dir,
                 std::optional<Checkpoint> resume, const TrainOptions& opts) {
  cfg.validate();
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
  Checkpoint ck = resume ? std::move(*resume) : init_checkpoint(cfg);
  if (resume) {
    if (to_text(ck.config) != to_text(cfg)) {
      throw std::invalid_argument("train: resume checkpoint was written with a different config");
    }
  }
  check_denoiser_params(ck.params, cfg.denoiser);
  std::filesystem::create_directories(out_dir);
  const auto log_path = out_dir / "train_log.csv";
  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write " + log_path.string());
  if (!resume) log << "iteration,lr,loss,grad_norm,seconds\n";

  const std::size_t total = cfg.train.iterations;
  const std::size_t stop = std::min(opts.stop_at.value_or(total), total);
  const std::size_t batch = cfg.train.batch_size;
  const auto t0 = std::chrono::steady_clock::now();
  double window_loss = 0;
  std::size_t window = 0;
  for (std::size_t it = ck.iteration; it < stop; ++it) {
    ck.params.zero_grad();
    double batch_loss = 0;
    for (std::size_t b = 0; b < batch; ++b) {
      const TrainSample s = draw_train_sample(cfg, data, it, b);
      const std::string where =
          " at iteration " + std::to_string(it) + ", scene " + data.names[s.scene_index];
      double l = 0;
      try {
        l = accumulate_sample_gradient(ck.params, cfg, s, 1.0 / batch);
      } catch (const std::exception& e) {
        // NaN inputs usually trip a kernel check before the loss is formed
        throw TrainingError(std::string(e.what()) + where);
      }
      if (!std::isfinite(l)) throw TrainingError("non-finite loss" + where);
      batch_loss += l / batch;
    }
    const double lr = one_cycle_lr(it, total, cfg.train.peak_lr);
    const double gnorm = clip_grad_norm(ck.params, cfg.train.grad_clip);
    if (!std::isfinite(gnorm)) {
      throw TrainingError("non-finite gradient at iteration " + std::to_string(it));
    }
    ck.optimizer.step(ck.params, lr);
    ck.iteration = it + 1;
    ck.rng = RngStream(cfg.train.seed, ck.iteration);
    window_loss += batch_loss;
    ++window;
    if (ck.iteration % cfg.train.log_every == 0 || ck.iteration == stop) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      char line[160];
      std::snprintf(line, sizeof line, "%zu,%.8g,%.8g,%.8g,%.3f\n", ck.iteration, lr,
                    window_loss / window, gnorm, secs);
      log << line << std::flush;
      if (opts.progress) *opts.progress << line << std::flush;
      window_loss = 0;
      window = 0;
    }
    if (cfg.train.checkpoint_every && ck.iteration % cfg.train.checkpoint_every == 0 &&
        ck.iteration != total) {
      save_checkpoint(out_dir / ckpt_name(ck.iteration), ck);
    }
  }
  save_checkpoint(out_dir / (ck.iteration == total ? std::string("final.dsfc")
                                                   : ckpt_name(ck.iteration)),
                  ck);
  return ck;
}

FlowPredictor network_predictor(ParamStore& params, const DenoiserConfig& cfg) {
  return [&params, cfg](const Array& v_t, const ScenePair& pair) {
    return predict_flow(params, cfg, v_t, pair);
  };
}

FlowPredictor oracle_predictor() {
  return [](const Array&, const ScenePair& pair) { return pair.gt_flow.vectors; };
}

ScenePair prepare_eval_scene(const ScenePair& pair, std::size_t points, std::uint64_t seed,
                             std::size_t index) {
  const std::size_t n1 = std::min(points, pair.source.size());
  const std::size_t n2 = std::min(points, pair.target.size());
  if (n1 == pair.source.size() && n2 == pair.target.size()) return pair;
  RngStream rng = RngStream::derive(seed, 2 * index);
  return subsample(pair, n1, n2, Subsampling::fps, rng);
}

EvalResult evaluate(const FlowPredictor& predict, const Dataset& data, const RunConfig& cfg,
                    const StepSpec& steps) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  DiffusionConfig dc = cfg.diffusion;
  dc.t_train = steps.train_steps;
  dc.t_sample = steps.sample_steps;
  dc.validate();
  EvalResult r;
  r.scenes.resize(data.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < data.size(); ++i) {
    try {
      const ScenePair pair = prepare_eval_scene(data.scenes[i], cfg.eval.points_eval, cfg.eval.seed, i);
      Array flow;
      if (cfg.eval.average_hypotheses > 1) {
        flow = sample_hypotheses(pair, predict, dc, cfg.eval.average_hypotheses,
                                 splitmix64(cfg.eval.seed + 2 * i + 1))
                   .mean;
      } else {
        RngStream rng = RngStream::derive(cfg.eval.seed, 2 * i + 1);
        flow = sample_flow(pair, predict, dc, rng);
      }
      r.scenes[i] = {data.names[i], metrics(flow, pair)};
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<MetricReport> reps;
  for (const auto& s : r.scenes) reps.push_back(s.report);
  r.aggregate = average_reports(reps);
  return r;
}

EvalResult evaluate(Checkpoint& ckpt, const Dataset& data, const StepSpec& steps) {
  if (steps.train_steps != ckpt.config.diffusion.t_train) {
    throw std::invalid_argument("evaluate: steps " + to_string(steps) +
                                " do not match the checkpoint's t_train = " +
                                std::to_string(ckpt.config.diffusion.t_train));
  }
  check_denoiser_params(ckpt.params, ckpt.config.denoiser);
  return evaluate(network_predictor(ckpt.params, ckpt.config.denoiser), data, ckpt.config, steps);
}

std::string eval_csv(const EvalResult& r) {
  std::string s = "scene," + metrics_csv_header() + "\n";
  for (const auto& sc : r.scenes) s += sc.name + "," + to_csv_row(sc.report) + "\n";
  s += "mean," + to_csv_row(r.aggregate) + "\n";
  return s;
}

UncertaintyResult uncertainty_study(const FlowPredictor& predict, const Dataset& data,
                                    const RunConfig& cfg, std::size_t k) {
  if (data.size() == 0) throw std::invalid_argument("uncertainty: empty dataset");
  DiffusionConfig dc = cfg.diffusion;
  dc.sampler = cfg.eval.hypothesis_sampler;
  std::vector<std::vector<double>> epe(data.size()), unc(data.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < data.size(); ++i) {
    try {
      const ScenePair pair = prepare_eval_scene(data.scenes[i], cfg.eval.points_eval, cfg.eval.seed, i);
      const auto hyp = sample_hypotheses(pair, predict, dc, k, splitmix64(cfg.eval.seed + 977 * i));
      epe[i] = per_point_epe(hyp.mean, pair.gt_flow.vectors);
      unc[i] = hyp.std;
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  UncertaintyResult r;
  for (std::size_t i = 0; i < data.size(); ++i) {
    r.epe.insert(r.epe.end(), epe[i].begin(), epe[i].end());
    r.unc.insert(r.unc.end(), unc[i].begin(), unc[i].end());
  }
  const auto edges = default_bin_edges();
  r.bins = uncertainty_error_bins(r.epe, r.unc, edges);
  const auto thresholds = default_pr_thresholds(cfg.diffusion.flow_scale);
  r.pr = outlier_pr_curve(r.epe, r.unc, cfg.eval.outlier_epe, thresholds);
  r.spearman = spearman(r.epe, r.unc);
  return r;
}

Dataset generate_dataset(const SceneGenConfig& cfg, std::size_t n, std::uint64_t seed) {
  cfg.validate();
  Dataset d;
  d.names.resize(n);
  d.scenes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    RngStream rng = RngStream::derive(seed, i);
    d.scenes[i] = generate_scene(cfg, rng);
    char buf[32];
    std::snprintf(buf, sizeof buf, "scene_%05zu.dsf", i);
    d.names[i] = buf;
  }
  return d;
}

}  // namespace dsf::inline DSF_PREC
