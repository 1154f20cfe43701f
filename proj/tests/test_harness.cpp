#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "dsf/trainer.hpp"
#include "test_util.hpp"

using namespace dsf;
namespace fs = std::filesystem;

namespace {

// Fresh directory under the system temp dir, removed on scope exit.
struct TempDir {
  fs::path path;
  TempDir() {
    const auto* info = testing::UnitTest::GetInstance()->current_test_info();
    path = fs::temp_directory_path() /
           ("dsf_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

RunConfig tiny_config() {
  RunConfig c = RunConfig::toy();
  c.scene.n1 = c.scene.n2 = 48;
  c.train.points_train = 32;
  c.eval.points_eval = 32;
  c.denoiser.feature_dim = 8;
  c.denoiser.knn_k = 4;
  c.denoiser.n_edgeconv_layers = 2;
  c.train.iterations = 200;
  c.train.batch_size = 2;
  c.train.checkpoint_every = 0;
  c.train.log_every = 50;
  c.eval.hypotheses = 3;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Config, RoundTripsThroughText) {
  RunConfig c = RunConfig::toy();
  c.diffusion.flow_scale = 0.1 / 3.0;
  c.diffusion.sampler = SamplerKind::ddpm;
  c.loss.supervise_init = false;
  c.train.seed = 123456789012345ull;
  c.scene.shape = ShapeFamily::box;
  const RunConfig back = parse_config(to_text(c));
  EXPECT_EQ(to_text(back), to_text(c));
  EXPECT_EQ(back.diffusion.flow_scale, c.diffusion.flow_scale);
  EXPECT_EQ(back.train.seed, c.train.seed);
  EXPECT_FALSE(back.loss.supervise_init);
}

TEST(Config, ParsesCommentsAndOverrides) {
  const RunConfig c = parse_config(
      "# toy\n"
      "diffusion.t_train = 5   # fewer steps\n"
      "\n"
      "  diffusion.t_sample=1\n"
      "train.peak_lr = 1e-3\n");
  EXPECT_EQ(c.diffusion.t_train, 5u);
  EXPECT_EQ(c.diffusion.t_sample, 1u);
  EXPECT_EQ(c.train.peak_lr, 1e-3);
  EXPECT_EQ(c.denoiser.feature_dim, RunConfig::toy().denoiser.feature_dim);
}

TEST(Config, UnknownKeyNamesTheLine) {
  try {
    parse_config("train.iterations = 3\ntrain.iteratons = 4\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("train.iteratons"), std::string::npos);
  }
}

TEST(Config, RejectsBadValues) {
  EXPECT_THROW(parse_config("train.batch_size = four\n"), ConfigError);
  EXPECT_THROW(parse_config("train.batch_size = 0\n"), ConfigError);
  EXPECT_THROW(parse_config("diffusion.t_sample = 30\n"), ConfigError);
  EXPECT_THROW(parse_config("loss.q_exponent = 2\n"), ConfigError);
  EXPECT_THROW(parse_config("diffusion.sampler = euler\n"), ConfigError);
  EXPECT_THROW(parse_config("no equals sign\n"), ConfigError);
  EXPECT_THROW(parse_config("train.points_train = 4096\n"), ConfigError);
}

TEST(Config, StepSpec) {
  const StepSpec s = parse_step_spec("2@20");
  EXPECT_EQ(s.sample_steps, 2u);
  EXPECT_EQ(s.train_steps, 20u);
  EXPECT_EQ(to_string(s), "2@20");
  EXPECT_THROW(parse_step_spec("3@2"), ConfigError);
  EXPECT_THROW(parse_step_spec("0@2"), ConfigError);
  EXPECT_THROW(parse_step_spec("2"), ConfigError);
  EXPECT_THROW(parse_step_spec("a@b"), ConfigError);
}

TEST(OneCycle, Examples) {
  const double peak = 4e-4;
  EXPECT_NEAR(one_cycle_lr(0, 1000, peak), peak / 25, 1e-18);
  EXPECT_NEAR(one_cycle_lr(100, 1000, peak), peak, 1e-18);
  EXPECT_NEAR(one_cycle_lr(999, 1000, peak), peak / 1e4, 1e-12 * peak / 1e4);
  EXPECT_THROW(one_cycle_lr(1000, 1000, peak), std::out_of_range);
  EXPECT_NO_THROW(one_cycle_lr(0, 1, peak));
  double prev = 0;
  for (std::size_t s = 0; s <= 100; ++s) {
    EXPECT_GE(one_cycle_lr(s, 1000, peak), prev);
    prev = one_cycle_lr(s, 1000, peak);
  }
  for (std::size_t s = 101; s < 1000; ++s) {
    EXPECT_LE(one_cycle_lr(s, 1000, peak), prev);
    prev = one_cycle_lr(s, 1000, peak);
  }
}

TEST(AdamW, FirstStepMovesBySignTimesLr) {
  ParamStore p;
  p.add("w", Array({2, 2}, std::vector<Real>{1, -1, 2, 0.5}));
  p.add("b", Array({2}, std::vector<Real>{1, 1}));
  p.at("w").grad = Array({2, 2}, std::vector<Real>{0.3, -2, 1e-3, 0});
  p.at("b").grad = Array({2}, std::vector<Real>{-5, 5});
  AdamW opt(0.1);
  opt.step(p, 0.01);
  // bias-corrected first step: m_hat / sqrt(v_hat) = sign(g); decay on matrices only
  const auto& w = p.at("w").value;
  EXPECT_NEAR(w[0], 1 - 0.01 * 0.1 * 1 - 0.01, 1e-6);
  EXPECT_NEAR(w[1], -1 + 0.01 * 0.1 * 1 + 0.01, 1e-6);
  EXPECT_NEAR(w[3], 0.5 - 0.01 * 0.1 * 0.5, 1e-6);
  EXPECT_NEAR(p.at("b").value[0], 1 + 0.01, 1e-6);
  EXPECT_NEAR(p.at("b").value[1], 1 - 0.01, 1e-6);
  EXPECT_EQ(opt.steps(), 1u);
  EXPECT_EQ(opt.state().size(), 2u);
}

TEST(AdamW, MinimizesQuadratic) {
  ParamStore p;
  p.add("x", Array({3}, std::vector<Real>{3, -2, 1}));
  AdamW opt;
  for (int i = 0; i < 2000; ++i) {
    auto& e = p.at("x");
    for (std::size_t k = 0; k < 3; ++k) e.grad[k] = 2 * e.value[k];
    opt.step(p, 0.01);
  }
  for (auto v : p.at("x").value.values()) EXPECT_NEAR(v, 0.0, 1e-2);
}

TEST(ClipGradNorm, ScalesToMax) {
  ParamStore p;
  p.add("a", Array({2}, std::vector<Real>{0, 0}));
  p.at("a").grad = Array({2}, std::vector<Real>{3, 4});
  EXPECT_NEAR(clip_grad_norm(p, 1.0), 5.0, 1e-6);
  EXPECT_NEAR(p.at("a").grad[0], 0.6, 1e-6);
  EXPECT_NEAR(p.at("a").grad[1], 0.8, 1e-6);
  EXPECT_NEAR(clip_grad_norm(p, 10.0), 1.0, 1e-6);
  EXPECT_NEAR(p.at("a").grad[1], 0.8, 1e-6);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const RunConfig cfg = tiny_config();
  Checkpoint c = init_checkpoint(cfg);
  c.iteration = 42;
  c.rng = RngStream(9, 1234);
  for (auto& [name, e] : c.params.entries()) e.grad = e.value;
  c.optimizer.step(c.params, 1e-3);
  const auto bytes = encode_checkpoint(c);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "DSFC");
  const Checkpoint d = decode_checkpoint(bytes);
  EXPECT_EQ(d.iteration, 42u);
  EXPECT_EQ(d.rng, c.rng);
  EXPECT_EQ(to_text(d.config), to_text(c.config));
  EXPECT_EQ(d.optimizer.steps(), 1u);
  ASSERT_EQ(d.params.size(), c.params.size());
  for (const auto& [name, e] : c.params.entries()) {
    EXPECT_EQ(d.params.at(name).value, e.value) << name;
    EXPECT_EQ(d.optimizer.state().at(name).m, c.optimizer.state().at(name).m);
    EXPECT_EQ(d.optimizer.state().at(name).v, c.optimizer.state().at(name).v);
  }
  EXPECT_EQ(encode_checkpoint(d), bytes);
}

TEST(Checkpoint, RejectsCorruptInput) {
  const Checkpoint c = init_checkpoint(tiny_config());
  auto bytes = encode_checkpoint(c);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), ParseError);
  bad = bytes;
  bad[4] = 99;
  EXPECT_THROW(decode_checkpoint(bad), ParseError);
  bad = bytes;
  bad.resize(bytes.size() / 2);
  EXPECT_THROW(decode_checkpoint(bad), ParseError);
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(decode_checkpoint(bad), ParseError);
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/x.dsfc"), std::exception);
}

TEST(Train, SmokeRunIsFiniteAndRoundTrips) {
  TempDir dir;
  RunConfig cfg = tiny_config();
  cfg.train.iterations = 10;
  cfg.train.log_every = 5;
  const Dataset data = generate_dataset(cfg.scene, 6, 3);
  const Checkpoint ck = train(cfg, data, dir.path);
  EXPECT_EQ(ck.iteration, 10u);
  const std::string log = slurp(dir.path / "train_log.csv");
  EXPECT_TRUE(log.starts_with("iteration,lr,loss,grad_norm,seconds\n"));
  std::istringstream lines(log);
  std::string line;
  std::getline(lines, line);
  int rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    const auto a = line.find(','), b = line.find(',', a + 1);
    EXPECT_TRUE(std::isfinite(std::stod(line.substr(b + 1))));
  }
  EXPECT_EQ(rows, 2);
  const Checkpoint back = load_checkpoint(dir.path / "final.dsfc");
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(ck));
}

TEST(Train, ResumeMatchesUninterrupted) {
  TempDir dir;
  const RunConfig cfg = tiny_config();
  const Dataset data = generate_dataset(cfg.scene, 8, 4);
  const Checkpoint straight = train(cfg, data, dir.path / "a");
  TrainOptions half;
  half.stop_at = 100;
  const Checkpoint mid = train(cfg, data, dir.path / "b", std::nullopt, half);
  EXPECT_EQ(mid.iteration, 100u);
  EXPECT_TRUE(fs::exists(dir.path / "b" / "ckpt_0000100.dsfc"));
  Checkpoint loaded = load_checkpoint(dir.path / "b" / "ckpt_0000100.dsfc");
  const Checkpoint resumed = train(cfg, data, dir.path / "b", std::move(loaded));
  EXPECT_EQ(resumed.iteration, 200u);
  EXPECT_EQ(encode_checkpoint(resumed), encode_checkpoint(straight));
  EXPECT_EQ(slurp(dir.path / "a" / "final.dsfc"), slurp(dir.path / "b" / "final.dsfc"));
}

TEST(Train, ResumeRejectsDifferentConfig) {
  TempDir dir;
  RunConfig cfg = tiny_config();
  const Dataset data = generate_dataset(cfg.scene, 2, 4);
  Checkpoint c = init_checkpoint(cfg);
  cfg.train.peak_lr *= 2;
  EXPECT_THROW(train(cfg, data, dir.path, std::move(c)), std::invalid_argument);
}

TEST(Train, EmptyDatasetRejected) {
  TempDir dir;
  EXPECT_THROW(train(tiny_config(), Dataset{}, dir.path), std::invalid_argument);
}

TEST(Train, NonFiniteLossNamesIterationAndScene) {
  TempDir dir;
  RunConfig cfg = tiny_config();
  Dataset data = generate_dataset(cfg.scene, 1, 4);
  data.scenes[0].gt_flow.vectors(0, 0) = std::numeric_limits<Real>::quiet_NaN();
  try {
    train(cfg, data, dir.path);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("iteration 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find(data.names[0]), std::string::npos) << msg;
  }
}

TEST(Train, SamplesAreDeterministicPerSlot) {
  const RunConfig cfg = tiny_config();
  const Dataset data = generate_dataset(cfg.scene, 5, 4);
  const TrainSample a = draw_train_sample(cfg, data, 17, 1);
  const TrainSample b = draw_train_sample(cfg, data, 17, 1);
  const TrainSample c = draw_train_sample(cfg, data, 17, 0);
  EXPECT_EQ(a.v_t, b.v_t);
  EXPECT_EQ(a.t, b.t);
  EXPECT_NE(a.v_t, c.v_t);
  EXPECT_GE(a.t, 1u);
  EXPECT_LE(a.t, cfg.diffusion.t_train);
  EXPECT_EQ(a.pair.source.size(), cfg.train.points_train);
}

TEST(Evaluate, OracleGivesZeroError) {
  RunConfig cfg = tiny_config();
  const Dataset data = generate_dataset(cfg.scene, 4, 5);
  for (auto sampler : {SamplerKind::ddim, SamplerKind::ddpm}) {
    cfg.diffusion.sampler = sampler;
    const EvalResult r = evaluate(oracle_predictor(), data, cfg, parse_step_spec("2@20"));
    ASSERT_EQ(r.scenes.size(), 4u);
    EXPECT_LT(r.aggregate.all.epe3d, 1e-6);
    EXPECT_EQ(r.aggregate.all.acc_s, 1.0);
  }
}

TEST(Evaluate, RepeatableCsv) {
  TempDir dir;
  RunConfig cfg = tiny_config();
  cfg.train.iterations = 5;
  const Dataset data = generate_dataset(cfg.scene, 3, 6);
  Checkpoint ck = train(cfg, data, dir.path);
  const std::string a = eval_csv(evaluate(ck, data, parse_step_spec("2@20")));
  const std::string b = eval_csv(evaluate(ck, data, parse_step_spec("2@20")));
  EXPECT_EQ(a, b);
  EXPECT_TRUE(a.starts_with("scene," + metrics_csv_header() + "\n")) << a;
  EXPECT_NE(a.find("\nmean,"), std::string::npos);
  EXPECT_THROW(evaluate(ck, data, parse_step_spec("2@10")), std::invalid_argument);
}

TEST(Uncertainty, StudyOnOracleHasZeroSpread) {
  RunConfig cfg = tiny_config();
  const Dataset data = generate_dataset(cfg.scene, 2, 8);
  const UncertaintyResult r = uncertainty_study(oracle_predictor(), data, cfg, 3);
  EXPECT_EQ(r.epe.size(), 2 * cfg.eval.points_eval);
  for (double u : r.unc) EXPECT_LT(u, 1e-6);
  EXPECT_EQ(r.pr.size(), default_pr_thresholds(cfg.diffusion.flow_scale).size());
}

TEST(Dataset, GenerationIsSeeded) {
  SceneGenConfig sc;
  sc.n1 = sc.n2 = 20;
  const Dataset a = generate_dataset(sc, 3, 11), b = generate_dataset(sc, 3, 11);
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a.names[2], "scene_00002.dsf");
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.scenes[i].source.points, b.scenes[i].source.points);
  }
  EXPECT_NE(a.scenes[0].source.points, a.scenes[1].source.points);
}
