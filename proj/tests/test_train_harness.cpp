#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ddn/data.hpp"
#include "ddn/train.hpp"

using namespace ddn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("ddn_train_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

// small corpus + arch shared by the harness tests
Corpus tiny_corpus(const fs::path& dir) {
  SynthSpec s;
  s.height = 16;
  s.width = 16;
  s.num_classes = 3;
  s.count = 15;
  s.freq_ratio = {12, 3, 1};
  synth_dataset(s, 5, dir.string());
  return load_corpus(dir.string(),
                     read_palette((dir / "palette.txt").string()));
}

ArchSpec tiny_arch() {
  ArchSpec a = tiny_preset();
  a.in_height = 16;
  a.in_width = 16;
  a.num_classes = 3;
  return a;
}

TrainConfig fast_cfg() {
  TrainConfig cfg;
  cfg.iterations = 4;
  cfg.eval_interval = 2;
  cfg.batch = 2;
  cfg.seed = 9;
  cfg.lr0 = 1e-3;
  return cfg;
}

}  // namespace

TEST_CASE("adam: zero gradients leave params unchanged") {
  ParamSet p;
  p.add("w", Tensor(Shape4{1, 1, 1, 2}, 0.5));
  AdamState st = AdamState::make(p);
  std::unordered_map<std::string, Var> grads;  // empty = all-zero gradients
  CHECK(adam_step(p, grads, st, 1e-3, 0.0));
  CHECK(p.at("w").data[0] == 0.5);
  CHECK(p.at("w").data[1] == 0.5);
}

TEST_CASE("adam: first step with unit gradient moves by ~lr") {
  ParamSet p;
  p.add("w", Tensor(Shape4{1, 1, 1, 1}, 1.0));
  AdamState st = AdamState::make(p);
  Tape t;
  Var g = t.leaf(Tensor(Shape4{1, 1, 1, 1}, 0.0), true);
  g->ensure_grad();
  g->grad.data[0] = 1.0;
  std::unordered_map<std::string, Var> grads{{"w", g}};
  CHECK(adam_step(p, grads, st, 1e-3, 0.0));
  // bias-corrected m̂/√v̂ = 1 on the first step
  CHECK(p.at("w").data[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-9));
}

TEST_CASE("adam: decoupled decay shrinks params geometrically") {
  ParamSet p;
  p.add("w", Tensor(Shape4{1, 1, 1, 1}, 2.0));
  AdamState st = AdamState::make(p);
  std::unordered_map<std::string, Var> grads;
  const double lr = 0.1, wd = 0.5;
  adam_step(p, grads, st, lr, wd);
  CHECK(p.at("w").data[0] == doctest::Approx(2.0 * (1 - lr * wd)));
  adam_step(p, grads, st, lr, wd);
  CHECK(p.at("w").data[0] == doctest::Approx(2.0 * (1 - lr * wd) * (1 - lr * wd)));
}

TEST_CASE("adam: non-finite gradient aborts the step") {
  ParamSet p;
  p.add("w", Tensor(Shape4{1, 1, 1, 1}, 1.0));
  AdamState st = AdamState::make(p);
  Tape t;
  Var g = t.leaf(Tensor(Shape4{1, 1, 1, 1}, 0.0), true);
  g->ensure_grad();
  g->grad.data[0] = std::numeric_limits<double>::quiet_NaN();
  std::unordered_map<std::string, Var> grads{{"w", g}};
  CHECK_FALSE(adam_step(p, grads, st, 1e-3, 0.0));
  CHECK(p.at("w").data[0] == 1.0);
}

TEST_CASE("lr schedule: 10x decay every interval") {
  TrainConfig cfg;
  cfg.lr0 = 2e-4;
  cfg.decay_factor = 0.1;
  cfg.decay_interval = 1000;
  CHECK(cfg.lr_at(0) == doctest::Approx(2e-4));
  CHECK(cfg.lr_at(999) == doctest::Approx(2e-4));
  CHECK(cfg.lr_at(1000) == doctest::Approx(2e-5));
  CHECK(cfg.lr_at(2000) == doctest::Approx(2e-6));  // lr0 / 100
}

TEST_CASE("train: zero iterations yields only the initial evaluation") {
  TempDir data("zero_iters");
  Corpus c = tiny_corpus(data.path);
  TempDir out("zero_out");
  TrainConfig cfg = fast_cfg();
  cfg.iterations = 0;
  RunReport r = train(tiny_arch(), c, cfg, out.str());
  CHECK(r.records.size() == 1);
  CHECK(r.records[0].iteration == 0);
  CHECK(fs::exists(out.path / "checkpoint.ddnp"));
  CHECK(fs::exists(out.path / "report.jsonl"));
  CHECK(fs::exists(out.path / "summary.json"));
}

TEST_CASE("train: same seed twice is bit-identical") {
  TempDir data("det");
  Corpus c = tiny_corpus(data.path);
  TempDir o1("det1"), o2("det2");
  train(tiny_arch(), c, fast_cfg(), o1.str());
  train(tiny_arch(), c, fast_cfg(), o2.str());
  CHECK(slurp(o1.path / "report.jsonl") == slurp(o2.path / "report.jsonl"));
  CHECK(slurp(o1.path / "checkpoint.ddnp") == slurp(o2.path / "checkpoint.ddnp"));
}

TEST_CASE("train: finite loss in every record; iterations strictly increase") {
  TempDir data("records");
  Corpus c = tiny_corpus(data.path);
  TempDir out("records_out");
  TrainConfig cfg = fast_cfg();
  cfg.iterations = 6;
  RunReport r = train(tiny_arch(), c, cfg, out.str());
  CHECK_FALSE(r.diverged);
  long prev = -1;
  for (const auto& rec : r.records) {
    CHECK(std::isfinite(rec.loss));
    CHECK(rec.iteration > prev);
    prev = rec.iteration;
  }
  CHECK(r.records.back().iteration == 6);
}

TEST_CASE("train: save/restore mid-run resumes bit-exactly at wd=0") {
  TempDir data("resume");
  Corpus c = tiny_corpus(data.path);
  ArchSpec arch = tiny_arch();
  TrainConfig cfg = fast_cfg();
  cfg.weight_decay = 0.0;
  cfg.iterations = 6;

  // uninterrupted run
  TrainSession full(arch, c, cfg);
  full.run_steps(6);

  // interrupted twin: snapshot at 3, reload into a fresh session
  TrainSession first(arch, c, cfg);
  first.run_steps(3);
  TempDir snap("resume_snap");
  const std::string state = (snap.path / "state.ddnp").string();
  first.save_state(state);

  TrainSession second(arch, c, cfg);
  second.load_state(state);
  CHECK(second.iteration() == 3);
  second.run_steps(3);

  const auto& a = full.graph().params().entries();
  const auto& b = second.graph().params().entries();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].name == b[i].name);
    CHECK(a[i].value.data == b[i].value.data);  // bit-exact
  }
}

TEST_CASE("checkpoint: graph save/load round-trips parameters") {
  ArchSpec arch = tiny_arch();
  Graph g1 = build(arch, 3);
  TempDir d("graph_ckpt");
  const std::string path = (d.path / "m.ddnp").string();
  save_graph_checkpoint(g1, path);

  Graph g2 = build(arch, 99);  // different init
  load_graph_checkpoint(g2, path);
  const auto& a = g1.params().entries();
  const auto& b = g2.params().entries();
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a[i].value.data == b[i].value.data);
}

TEST_CASE("divergence: non-finite loss aborts with a flagged report") {
  TempDir data("diverge");
  Corpus c = tiny_corpus(data.path);
  TempDir out("diverge_out");
  TrainConfig cfg = fast_cfg();
  cfg.lr0 = 1e18;  // guaranteed blow-up
  cfg.iterations = 30;
  RunReport r = train(tiny_arch(), c, cfg, out.str());
  CHECK(r.diverged);
  CHECK(r.iterations_run < 30);
}
