// Command-line front end: dataset synthesis, training, evaluation,
// gradient checking, parameter summaries, and graph export.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "ddn/archspec.hpp"
#include "ddn/data.hpp"
#include "ddn/gradcheck.hpp"
#include "ddn/graph.hpp"
#include "ddn/metrics.hpp"
#include "ddn/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace ddn;

namespace {

struct ArchFlags {
  std::string arch_file;
  int depth = 0;                  // 0 = keep arch-file value
  std::string skips;              // "", "f", "fb", "fr", "fbr"
  std::string decoder_block;      // "", "none", "conv", "dense"
  long classes = 0;
  long height = 0, width = 0, channels = 0;
};

void add_arch_flags(CLI::App* cmd, ArchFlags& f) {
  cmd->add_option("--arch", f.arch_file, "architecture description file");
  cmd->add_option("--depth", f.depth, "number of decoder units")
      ->check(CLI::Range(1, 3));
  cmd->add_option("--skips", f.skips,
                  "skip families: f, fb, fr, or fbr "
                  "(forward / +backward / +stacked-residual)")
      ->check(CLI::IsMember({"f", "fb", "fr", "fbr"}));
  cmd->add_option("--decoder-block", f.decoder_block, "decoder block kind")
      ->check(CLI::IsMember({"none", "conv", "dense"}));
  cmd->add_option("--classes", f.classes, "number of classes");
  cmd->add_option("--height", f.height, "input height");
  cmd->add_option("--width", f.width, "input width");
  cmd->add_option("--channels", f.channels, "input channels");
}

// Flag values override whatever the arch file declares.
ArchSpec resolve_arch(const ArchFlags& f) {
  ArchSpec a = f.arch_file.empty() ? tiny_preset() : load_archspec(f.arch_file);
  if (f.depth) a.decoder_units = f.depth;
  if (!f.skips.empty()) {
    a.backward_skips = f.skips.find('b') != std::string::npos;
    a.stacked_residual = f.skips.find('r') != std::string::npos;
  }
  if (f.decoder_block == "none") a.decoder_block = ArchSpec::DecoderBlock::None;
  if (f.decoder_block == "conv") a.decoder_block = ArchSpec::DecoderBlock::Conv;
  if (f.decoder_block == "dense") a.decoder_block = ArchSpec::DecoderBlock::Dense;
  if (f.classes) a.num_classes = f.classes;
  if (f.height) a.in_height = f.height;
  if (f.width) a.in_width = f.width;
  if (f.channels) a.in_channels = f.channels;
  a.validate();
  return a;
}

Corpus load_data_dir(const std::string& dir, long num_classes) {
  Palette p;
  if (fs::exists(fs::path(dir) / "palette.txt"))
    p = read_palette((fs::path(dir) / "palette.txt").string());
  else
    p = default_palette(num_classes);
  Corpus c = load_corpus(dir, p);
  if (c.unknown_color_warnings)
    std::cerr << "warning: " << c.unknown_color_warnings
              << " label pixels had unknown colors (mapped to void)\n";
  return c;
}

int cmd_synth(const std::string& out, std::uint64_t seed, SynthSpec spec,
              const std::vector<double>& ratio) {
  spec.freq_ratio = ratio;
  Manifest m = synth_dataset(spec, seed, out);
  std::cout << "wrote " << m.count << " images (" << m.height << "x" << m.width
            << ", " << m.num_classes << " classes) to " << out << "\n";
  std::cout << "class pixel totals:";
  for (long t : m.totals) std::cout << " " << t;
  std::cout << "\n";
  return 0;
}

int cmd_train(const ArchFlags& af, const std::string& data,
              const std::string& out, TrainConfig cfg,
              const std::string& weights) {
  ArchSpec arch = resolve_arch(af);
  cfg.strategy = parse_weight_strategy(weights);
  Corpus corpus = load_data_dir(data, arch.num_classes);
  if (corpus.samples.empty()) throw std::runtime_error("train: empty corpus");
  if (cfg.crop) arch.in_height = arch.in_width = cfg.crop;
  fs::create_directories(out);
  RunReport report = train(arch, corpus, cfg, out);
  const EvalRecord& fin = report.final_record();
  std::cout << "iterations: " << report.iterations_run
            << (report.diverged ? " (diverged)" : "") << "\n"
            << "final mIoU: " << fin.mean_iou << "  accuracy: " << fin.accuracy
            << "  eval loss: " << fin.loss << "\n"
            << "artifacts: " << out << "\n";
  return 0;
}

int cmd_eval(const ArchFlags& af, const std::string& data,
             const std::string& ckpt, const std::string& out,
             const std::string& split) {
  ArchSpec arch = resolve_arch(af);
  Corpus corpus = load_data_dir(data, arch.num_classes);
  Graph g = build(arch, 1);
  load_graph_checkpoint(g, ckpt);
  ConfusionMatrix cm(arch.num_classes);
  Rng rng(0);
  long used = 0;
  for (const Sample& s : corpus.samples) {
    if (split == "eval" && !is_eval_id(s.id)) continue;
    if (split == "train" && is_eval_id(s.id)) continue;
    Sample in = s;
    AugPolicy p;
    p.flip_vertical = false;
    Rng r0(0);
    in = augment(in, p, r0);  // mean subtraction only
    Tape tape;
    ForwardResult fr = graph_forward(g, tape, in.image, Mode::Eval, rng, false);
    cm.accumulate(argmax_channels(fr.heads.main()->value, 0), s.label);
    ++used;
  }
  std::cout << "samples: " << used << " (" << split << " split)\n"
            << cm.report_text();
  if (!out.empty()) {
    std::ofstream os(out);
    os << cm.report_json() << "\n";
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& out) {
  auto cases = run_gradcheck_suite(seed);
  bool all = true;
  json j = json::array();
  for (const auto& c : cases) {
    std::printf("%-28s rel_err=%.3e tol=%.0e %s\n", c.name.c_str(), c.rel_err,
                c.tol, c.pass ? "pass" : "FAIL");
    all = all && c.pass;
    j.push_back({{"name", c.name},
                 {"rel_err", c.rel_err},
                 {"tol", c.tol},
                 {"pass", c.pass}});
  }
  if (!out.empty()) {
    std::ofstream os(out);
    os << j.dump(2) << "\n";
  }
  std::cout << (all ? "all gradient checks passed" : "gradient checks FAILED")
            << "\n";
  return all ? 0 : 2;
}

int cmd_params(const ArchFlags& af) {
  ArchSpec arch = resolve_arch(af);
  Graph g = build(arch, 1);
  std::map<std::string, std::size_t> by_module;
  std::size_t total = 0;
  for (const auto& e : g.params().entries()) {
    if (!e.trainable) continue;
    std::string mod = e.name.substr(0, e.name.find('.'));
    by_module[mod] += e.value.size();
    total += e.value.size();
  }
  std::cout << "trainable parameters: " << total << "\n";
  for (const auto& [mod, n] : by_module)
    std::cout << "  " << mod << ": " << n << "\n";
  return 0;
}

int cmd_export(const ArchFlags& af, const std::string& format,
               const std::string& out) {
  ArchSpec arch = resolve_arch(af);
  Graph g = build(arch, 1);
  const std::string text = format == "dot" ? export_dot(g) : export_json(g);
  if (out.empty()) {
    std::cout << text;
  } else {
    std::ofstream os(out);
    os << text;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deep-decoder segmentation toolkit"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic shape corpus");
  std::string synth_out = "data";
  std::uint64_t synth_seed = 1;
  SynthSpec sspec;
  std::vector<double> ratio;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_seed, "RNG seed");
  synth->add_option("--count", sspec.count, "number of images");
  synth->add_option("--classes", sspec.num_classes, "number of classes");
  synth->add_option("--height", sspec.height, "image height");
  synth->add_option("--width", sspec.width, "image width");
  synth->add_option("--noise", sspec.noise_std, "image noise std (0..1 scale)");
  synth->add_option("--ratio", ratio,
                    "per-class relative pixel frequencies (background first)");

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  ArchFlags tr_arch;
  add_arch_flags(tr, tr_arch);
  std::string tr_data, tr_out = "run", tr_weights = "dynamic";
  TrainConfig cfg;
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--out", tr_out, "output directory for artifacts");
  tr->add_option("--seed", cfg.seed, "RNG seed");
  tr->add_option("--iterations", cfg.iterations, "training iterations");
  tr->add_option("--weights", tr_weights, "class weighting strategy")
      ->check(CLI::IsMember({"none", "medfreq", "dynamic", "focal",
                             "focal-dynamic"}));
  tr->add_option("--L", cfg.L, "dynamic-weight bound");
  tr->add_option("--gamma", cfg.gamma, "focal exponent")
      ->check(CLI::Range(0.0, 5.0));
  tr->add_option("--aux-weight", cfg.aux_weight, "auxiliary head loss weight");
  tr->add_option("--lr", cfg.lr0, "initial learning rate");
  tr->add_option("--lr-decay-factor", cfg.decay_factor, "step decay factor");
  tr->add_option("--lr-decay-interval", cfg.decay_interval,
                 "iterations between decays");
  tr->add_option("--weight-decay", cfg.weight_decay, "decoupled weight decay");
  tr->add_option("--dropout", cfg.dropout, "dropout rate");
  tr->add_option("--batch", cfg.batch, "batch size");
  tr->add_option("--crop", cfg.crop, "square crop size (0 = full image)");
  tr->add_option("--eval-interval", cfg.eval_interval,
                 "iterations between held-out evaluations");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ArchFlags ev_arch;
  add_arch_flags(ev, ev_arch);
  std::string ev_data, ev_ckpt, ev_out, ev_split = "eval";
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--out", ev_out, "write JSON report here");
  ev->add_option("--split", ev_split, "which samples to use")
      ->check(CLI::IsMember({"eval", "train", "all"}));

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck",
                                "finite-difference gradient verification");
  std::uint64_t gc_seed = 42;
  std::string gc_out;
  std::string gc_precision = "double";
  gc->add_option("--seed", gc_seed, "RNG seed");
  gc->add_option("--out", gc_out, "write JSON results here");
  gc->add_option("--precision", gc_precision, "numeric precision")
      ->check(CLI::IsMember({"double"}));

  // params
  auto* pa = app.add_subcommand("params", "trainable parameter summary");
  ArchFlags pa_arch;
  add_arch_flags(pa, pa_arch);

  // export-graph
  auto* ex = app.add_subcommand("export-graph", "emit the computation graph");
  ArchFlags ex_arch;
  add_arch_flags(ex, ex_arch);
  std::string ex_format = "dot", ex_out;
  ex->add_option("--format", ex_format, "output format")
      ->check(CLI::IsMember({"dot", "json"}));
  ex->add_option("--out", ex_out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_out, synth_seed, sspec, ratio);
    if (tr->parsed()) return cmd_train(tr_arch, tr_data, tr_out, cfg, tr_weights);
    if (ev->parsed()) return cmd_eval(ev_arch, ev_data, ev_ckpt, ev_out, ev_split);
    if (gc->parsed()) return cmd_gradcheck(gc_seed, gc_out);
    if (pa->parsed()) return cmd_params(pa_arch);
    if (ex->parsed()) return cmd_export(ex_arch, ex_format, ex_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
