#include "sttrack/harness/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "sttrack/eval/eval.hpp"
#include "sttrack/harness/checks.hpp"
#include "sttrack/harness/train.hpp"

namespace sttrack::harness {

namespace {

namespace fs = std::filesystem;

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", path, "key = value config file")->check(CLI::ExistingFile);
    app->add_option("-s,--set", overrides, "override a config key (key=value), repeatable");
  }

  RunConfig load(RunConfig cfg = {}) const {
    if (!path.empty()) cfg = load_config(path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.finalize();
    return cfg;
  }
};

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write " + path.string());
  return os;
}

std::string sequence_name(const fs::path& dir) {
  auto p = dir;
  if (p.filename().empty()) p = p.parent_path();
  return p.filename().string();
}

int cmd_synth(const ConfigArgs& ca, const std::string& out_dir, long long seed, std::size_t stride,
              std::ostream& out) {
  auto cfg = ca.load();
  if (seed >= 0) cfg.scene.seed = static_cast<std::uint64_t>(seed);
  const auto seq = subsample_sequence(generate_sequence(cfg.scene), stride);
  save_sequence(out_dir, seq);
  auto os = open_out(fs::path(out_dir) / "config.txt");
  write_config(os, cfg);
  out << "wrote " << seq.size() << " frames to " << out_dir << '\n';
  return kExitOk;
}

int cmd_track(const ConfigArgs& ca, const std::string& checkpoint, const std::vector<std::string>& sequences,
              const std::string& out_dir, const std::string& heatmap_dir, std::ostream& out) {
  const auto cfg = ca.load();
  const auto params = checkpoint.empty() ? initial_params(cfg) : num::load_checkpoint(checkpoint);
  for (const auto& [name, t] : initial_params(cfg)) {
    if (!params.contains(name) || params.at(name).shape() != t.shape()) {
      throw ConfigError("checkpoint does not match the config at parameter '" + name + "'");
    }
  }
  fs::create_directories(out_dir);
  const auto n = static_cast<long>(sequences.size());
  std::vector<std::string> errors(sequences.size());
  std::vector<std::size_t> coasted(sequences.size(), 0);
  // Sequences are independent; each writes only its own slots and files.
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    try {
      const auto seq = load_sequence(sequences[i]);
      const auto name = sequence_name(sequences[i]);
      track::RunOptions opts;
      opts.on_step = [&](std::size_t frame, const track::StepResult& r) {
        coasted[i] += r.coasted;
        if (heatmap_dir.empty() || !r.heatmap.defined()) return;
        char stem[64];
        std::snprintf(stem, sizeof stem, "%s_%06zu", name.c_str(), frame);
        auto pgm = open_out(fs::path(heatmap_dir) / (std::string(stem) + ".pgm"));
        head::write_heatmap_pgm(pgm, r.heatmap);
        auto csv = open_out(fs::path(heatmap_dir) / (std::string(stem) + ".csv"));
        head::write_heatmap_csv(csv, r.heatmap);
      };
      const auto boxes = track::run_sequence(
          seq.clouds, [&](std::size_t) { return seq.boxes.front(); }, params, cfg.pipeline, opts);
      auto os = open_out(fs::path(out_dir) / (name + ".txt"));
      geom::write_boxes(os, boxes);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (!errors[i].empty()) throw std::runtime_error(sequences[i] + ": " + errors[i]);
    out << sequence_name(sequences[i]) << ": tracked";
    if (coasted[i]) out << " (" << coasted[i] << " coasted frames)";
    out << '\n';
  }
  return kExitOk;
}

int cmd_eval(const std::vector<std::string>& sequences, const std::string& results, const std::string& category,
             const std::string& report_path, const std::string& curves_path, std::ostream& out) {
  std::vector<eval::SequenceInput> inputs;
  for (const auto& dir : sequences) {
    eval::SequenceInput in;
    in.category = category;
    if (std::ifstream cat(fs::path(dir) / "category.txt"); cat) std::getline(cat, in.category);
    std::ifstream gt(fs::path(dir) / "gt.txt");
    if (!gt) throw FormatError("cannot read " + (fs::path(dir) / "gt.txt").string());
    in.ground_truth = geom::read_boxes(gt);
    const auto pred_path = fs::path(results) / (sequence_name(dir) + ".txt");
    std::ifstream pred(pred_path);
    if (!pred) throw FormatError("cannot read " + pred_path.string());
    in.predictions = geom::read_boxes(pred);
    inputs.push_back(std::move(in));
  }
  const auto report = eval::evaluate_sequences(inputs);
  if (report_path.empty()) {
    eval::write_report_csv(out, report);
  } else {
    auto os = open_out(report_path);
    eval::write_report_csv(os, report);
    eval::write_report_csv(out, report);
  }
  if (!curves_path.empty()) {
    eval::SequenceEval all;
    for (const auto& in : inputs) {
      const auto e = eval::evaluate_sequence(in.predictions, in.ground_truth);
      all.ious.insert(all.ious.end(), e.ious.begin(), e.ious.end());
      all.bev_ious.insert(all.bev_ious.end(), e.bev_ious.begin(), e.bev_ious.end());
      all.dists.insert(all.dists.end(), e.dists.begin(), e.dists.end());
      all.bev_dists.insert(all.bev_dists.end(), e.bev_dists.begin(), e.bev_dists.end());
    }
    auto os = open_out(curves_path);
    eval::write_curves_csv(os, all);
  }
  return kExitOk;
}

int cmd_train(const ConfigArgs& ca, const std::string& ckpt, const std::string& trace_path, bool quiet,
              std::ostream& out) {
  const auto cfg = ca.load();
  char line[160];
  const auto result = train_toy(cfg, cfg.scene, [&](std::size_t step, const head::LossTerms& t) {
    if (quiet || (step % 50 != 0 && step + 1 != cfg.train.steps)) return;
    std::snprintf(line, sizeof line, "step %4zu  loss %.5f  heatmap %.5f  offset %.5f  height %.5f  orient %.5f\n",
                  step, t.total.item(), t.heatmap, t.offset, t.height, t.orientation);
    out << line << std::flush;
  });
  num::save_checkpoint(ckpt, result.params);
  if (!trace_path.empty()) {
    auto os = open_out(trace_path);
    os << "step,loss\n";
    for (std::size_t k = 0; k < result.losses.size(); ++k) {
      std::snprintf(line, sizeof line, "%zu,%.17g\n", k, result.losses[k]);
      os << line;
    }
  }
  out << "saved " << result.params.size() << " tensors (" << result.params.scalar_count() << " values) to " << ckpt
      << '\n';
  return kExitOk;
}

int cmd_gradcheck(const ConfigArgs& ca, std::size_t max_elements, bool ops_only, bool reduced, std::ostream& out) {
  const auto cfg = ca.load(reduced ? reduced_config() : RunConfig{});
  bool ok = true;
  auto run = [&](GradCase& c, const num::GradCheckOptions& opt) {
    const auto report = num::finite_diff_check(c.fn, c.params, opt);
    char line[200];
    std::snprintf(line, sizeof line, "%-28s %s  max_rel %.3e  checked %zu  skipped %zu\n", c.name.c_str(),
                  report.passed() ? "ok  " : "FAIL", report.max_rel_error(), report.checked(), report.skipped());
    out << line << std::flush;
    if (!report.passed()) {
      ok = false;
      out << num::format_report(report);
    }
  };
  for (auto& c : op_grad_cases()) run(c, {});
  if (!ops_only) {
    auto c = pipeline_grad_case(cfg);
    num::GradCheckOptions opt;
    opt.max_elements = max_elements;
    run(c, opt);
  }
  out << (ok ? "gradcheck passed\n" : "gradcheck FAILED\n");
  return ok ? kExitOk : kExitRuntime;
}

int cmd_goldens(const std::string& out_path, const std::string& check_path, std::ostream& out) {
  const auto goldens = compute_goldens();
  if (!check_path.empty()) {
    const auto expected = read_goldens(check_path);
    std::size_t bad = 0;
    for (const auto& [name, hash] : goldens) {
      const auto it = expected.find(name);
      if (it == expected.end() || it->second != hash) {
        out << "mismatch " << name << ' ' << hash << " expected " << (it == expected.end() ? "-" : it->second)
            << '\n';
        ++bad;
      }
    }
    out << goldens.size() - bad << '/' << goldens.size() << " goldens match\n";
    return bad ? kExitRuntime : kExitOk;
  }
  write_goldens(out_path, goldens);
  out << "wrote " << goldens.size() << " goldens to " << out_path << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Point-cloud single-object tracker: data synthesis, training, tracking and evaluation"};
  app.require_subcommand(1);

  ConfigArgs synth_cfg, track_cfg, train_cfg, grad_cfg;

  auto* synth = app.add_subcommand("synth", "generate a synthetic sequence");
  synth_cfg.attach(synth);
  std::string synth_out;
  long long synth_seed = -1;
  std::size_t synth_stride = 1;
  synth->add_option("-o,--out", synth_out, "output sequence directory")->required();
  synth->add_option("--seed", synth_seed, "scene seed (overrides scene.seed)");
  synth->add_option("--stride", synth_stride, "keep every n-th frame")->check(CLI::PositiveNumber);

  auto* trk = app.add_subcommand("track", "run the tracker over sequences");
  track_cfg.attach(trk);
  std::string checkpoint, track_out, heatmaps;
  std::vector<std::string> track_seqs;
  trk->add_option("-k,--checkpoint", checkpoint, "trained parameters")->check(CLI::ExistingFile);
  trk->add_option("--sequence", track_seqs, "sequence directory, repeatable")->required()->check(CLI::ExistingDirectory);
  trk->add_option("-o,--out", track_out, "results directory")->required();
  trk->add_option("--heatmaps", heatmaps, "dump per-frame heatmaps (PGM + CSV) here");

  auto* ev = app.add_subcommand("eval", "score tracking results");
  std::vector<std::string> eval_seqs;
  std::string results, category = "target", report_path, curves_path;
  ev->add_option("--sequence", eval_seqs, "ground-truth sequence directory, repeatable")
      ->required()
      ->check(CLI::ExistingDirectory);
  ev->add_option("-r,--results", results, "directory written by track")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--category", category, "category when the sequence has no category.txt");
  ev->add_option("-o,--out", report_path, "report CSV");
  ev->add_option("--curves", curves_path, "per-threshold curve CSV");

  auto* tr = app.add_subcommand("train-toy", "train on generated sequences");
  train_cfg.attach(tr);
  std::string ckpt, trace;
  bool quiet = false;
  tr->add_option("-o,--out", ckpt, "checkpoint path")->required();
  tr->add_option("--trace", trace, "loss trace CSV");
  tr->add_flag("-q,--quiet", quiet, "no progress lines");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  grad_cfg.attach(gc);
  std::size_t max_elements = 4;
  bool ops_only = false, reduced = false;
  gc->add_option("--max-elements", max_elements, "sampled elements per pipeline tensor (0 = all)");
  gc->add_flag("--ops-only", ops_only, "skip the composed pipeline check");
  gc->add_flag("--reduced", reduced, "small grid and channel counts");

  auto* gd = app.add_subcommand("goldens", "regenerate or verify golden hashes");
  std::string golden_out, golden_check;
  auto* go = gd->add_option("-o,--out", golden_out, "write hashes here");
  auto* gk = gd->add_option("--check", golden_check, "compare against this file")->check(CLI::ExistingFile);
  go->excludes(gk);
  gd->require_option(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(synth_cfg, synth_out, synth_seed, synth_stride, out);
    if (*trk) return cmd_track(track_cfg, checkpoint, track_seqs, track_out, heatmaps, out);
    if (*ev) return cmd_eval(eval_seqs, results, category, report_path, curves_path, out);
    if (*tr) return cmd_train(train_cfg, ckpt, trace, quiet, out);
    if (*gc) return cmd_gradcheck(grad_cfg, max_elements, ops_only, reduced, out);
    if (*gd) return cmd_goldens(golden_out, golden_check, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace sttrack::harness
