// Command line driver: data generation, training, evaluation, sampling,
// uncertainty study and step ablation.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include "dsf/trainer.hpp"

using namespace dsf;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string flow_csv(const Array& flow) {
  std::string s = "x,y,z\n";
  char buf[96];
  for (std::size_t i = 0; i < flow.rows(); ++i) {
    std::snprintf(buf, sizeof buf, "%.8g,%.8g,%.8g\n", double(flow(i, 0)), double(flow(i, 1)),
                  double(flow(i, 2)));
    s += buf;
  }
  return s;
}

RunConfig config_or_default(const std::string& path) {
  return path.empty() ? RunConfig::toy() : load_config(path);
}

// final.dsfc files under dir, keyed by t_train.
std::map<std::size_t, fs::path> checkpoints_by_t(const fs::path& dir) {
  std::map<std::size_t, fs::path> found;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() != "final.dsfc") continue;
    const Checkpoint c = load_checkpoint(e.path());
    const std::size_t t = c.config.diffusion.t_train;
    if (found.count(t)) {
      throw std::runtime_error("two checkpoints with t_train = " + std::to_string(t) + ": " +
                               found[t].string() + ", " + e.path().string());
    }
    found[t] = e.path();
  }
  return found;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion scene flow estimation"};
  app.require_subcommand(1);

  std::string out, config_path, data_dir, ckpt_path, resume, steps = "", scene_path, grid,
                                                              ckpt_dir;
  std::size_t scenes = 100, k = 20;
  std::uint64_t seed = 1;

  auto* gen = app.add_subcommand("gen-data", "Write synthetic scenes");
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--scenes", scenes, "Number of scenes")->required();
  gen->add_option("--config", config_path, "Config file (scene.* keys)");
  gen->add_option("--seed", seed, "Generator seed");

  auto* tr = app.add_subcommand("train", "Train the denoiser");
  tr->add_option("--data", data_dir, "Dataset directory")->required();
  tr->add_option("--out", out, "Output directory")->required();
  tr->add_option("--config", config_path, "Config file");
  tr->add_option("--resume", resume, "Checkpoint to resume from");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  ev->add_option("--data", data_dir, "Dataset directory")->required();
  ev->add_option("--steps", steps, "Sampling steps a@b (default: from the checkpoint config)");
  ev->add_option("--out", out, "Output CSV")->required();

  auto* sm = app.add_subcommand("sample", "Sample flow hypotheses for one scene");
  sm->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  sm->add_option("--scene", scene_path, "Scene file")->required();
  sm->add_option("--hypotheses", k, "Number of hypotheses (>= 2)");
  sm->add_option("--out", out, "Output directory")->required();

  auto* un = app.add_subcommand("uncertainty", "Uncertainty vs error study");
  un->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  un->add_option("--data", data_dir, "Dataset directory")->required();
  un->add_option("--k", k, "Hypotheses per scene");
  un->add_option("--out", out, "Output directory")->required();

  auto* ab = app.add_subcommand("ablate-steps", "Evaluate a grid of a@b settings");
  ab->add_option("--ckpt-dir", ckpt_dir, "Directory searched for final.dsfc files")->required();
  ab->add_option("--data", data_dir, "Dataset directory")->required();
  ab->add_option("--grid", grid, "Comma separated a@b list")
      ->default_val("1@5,2@5,5@5,1@20,2@20,5@20,20@20");
  ab->add_option("--out", out, "Output CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const RunConfig cfg = config_or_default(config_path);
      save_dataset(out, generate_dataset(cfg.scene, scenes, seed));
      std::cout << "wrote " << scenes << " scenes to " << out << "\n";
    } else if (*tr) {
      const RunConfig cfg = config_or_default(config_path);
      const Dataset data = load_dataset(data_dir);
      std::optional<Checkpoint> start;
      if (!resume.empty()) start = load_checkpoint(resume);
      TrainOptions opts;
      opts.progress = &std::cout;
      const Checkpoint c = train(cfg, data, out, std::move(start), opts);
      std::cout << "finished at iteration " << c.iteration << "\n";
    } else if (*ev) {
      Checkpoint c = load_checkpoint(ckpt_path);
      const StepSpec spec = steps.empty() ? StepSpec{c.config.diffusion.t_sample,
                                                     c.config.diffusion.t_train}
                                          : parse_step_spec(steps);
      const EvalResult r = evaluate(c, load_dataset(data_dir), spec);
      write_text(out, eval_csv(r));
      std::cout << metrics_csv_header() << "\n" << to_csv_row(r.aggregate) << "\n";
    } else if (*sm) {
      Checkpoint c = load_checkpoint(ckpt_path);
      const ScenePair pair =
          prepare_eval_scene(load_scene(scene_path), c.config.eval.points_eval, c.config.eval.seed, 0);
      DiffusionConfig dc = c.config.diffusion;
      dc.sampler = c.config.eval.hypothesis_sampler;
      const auto hyp = sample_hypotheses(pair, network_predictor(c.params, c.config.denoiser), dc,
                                         k, c.config.eval.seed);
      for (std::size_t j = 0; j < hyp.size(); ++j) {
        char name[32];
        std::snprintf(name, sizeof name, "hypothesis_%03zu.csv", j);
        write_text(fs::path(out) / name, flow_csv(hyp.hypotheses[j]));
      }
      write_text(fs::path(out) / "mean.csv", flow_csv(hyp.mean));
      std::string s = "std\n";
      for (double v : hyp.std) s += std::to_string(v) + "\n";
      write_text(fs::path(out) / "std.csv", s);
      std::cout << "wrote " << hyp.size() << " hypotheses to " << out << "\n";
    } else if (*un) {
      Checkpoint c = load_checkpoint(ckpt_path);
      const auto r = uncertainty_study(network_predictor(c.params, c.config.denoiser),
                                       load_dataset(data_dir), c.config, k);
      write_text(fs::path(out) / "bins.csv", bins_csv(r.bins));
      write_text(fs::path(out) / "pr.csv", pr_csv(r.pr));
      std::cout << "spearman " << r.spearman << "\n";
    } else if (*ab) {
      const auto ckpts = checkpoints_by_t(ckpt_dir);
      const Dataset data = load_dataset(data_dir);
      std::string csv = "steps," + metrics_csv_header() + "\n";
      std::map<std::size_t, Checkpoint> loaded;
      std::size_t start = 0;
      while (start <= grid.size()) {
        const auto comma = grid.find(',', start);
        const std::string item =
            grid.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        start = comma == std::string::npos ? grid.size() + 1 : comma + 1;
        if (item.empty()) continue;
        const StepSpec spec = parse_step_spec(item);
        const auto it = ckpts.find(spec.train_steps);
        if (it == ckpts.end()) {
          throw std::runtime_error("no checkpoint with t_train = " +
                                   std::to_string(spec.train_steps) + " under " + ckpt_dir);
        }
        if (!loaded.count(spec.train_steps)) loaded[spec.train_steps] = load_checkpoint(it->second);
        const EvalResult r = evaluate(loaded[spec.train_steps], data, spec);
        csv += to_string(spec) + "," + to_csv_row(r.aggregate) + "\n";
        std::cout << to_string(spec) << " epe " << r.aggregate.all.epe3d << "\n";
      }
      write_text(out, csv);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
