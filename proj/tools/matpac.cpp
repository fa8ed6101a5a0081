// matpac command-line tool.
//
//   matpac pretrain  [--config FILE] [--set key=value ...] [--out DIR] [--resume CKPT] [--stop-after-epoch N]
//   matpac probe     [--config FILE] [--set key=value ...] [--out DIR] [--checkpoint CKPT]
//   matpac ablate    [--config FILE] [--set key=value ...] [--out DIR]
//   matpac diagnose  --log steps.csv [--out FILE] [--threshold 0.5] [--window 100]
//   matpac gen-toy   --dir DIR [--clips 200] [--seconds 2] [--seed 0] [--folds 5]
//
// Exit codes: 0 success, 2 configuration or usage error, 3 runtime error.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "matpac/matpac.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "JSON configuration file");
  cmd->add_option("-s,--set", c.sets, "override, e.g. train.alpha=0.25 (repeatable)");
  cmd->add_option("-o,--out", c.out, "output directory (overrides output_dir)");
}

matpac::RunConfig load(const Common& c) {
  auto sets = c.sets;
  if (!c.out.empty()) sets.push_back("output_dir=\"" + c.out + "\"");
  return matpac::parse_config(c.config, sets);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"matpac: masked latent prediction and unsupervised classification for audio"};
  app.require_subcommand(1);

  Common pre_opts, probe_opts, ablate_opts;
  std::string resume;
  int stop_after = -1;
  auto* pre = app.add_subcommand("pretrain", "pretrain an encoder; writes checkpoints and steps.csv");
  add_common(pre, pre_opts);
  pre->add_option("--resume", resume, "checkpoint to resume from");
  pre->add_option("--stop-after-epoch", stop_after, "stop once this many epochs are complete");

  std::string checkpoint;
  auto* prb = app.add_subcommand("probe", "linear-probe the configured tasks; writes results.csv");
  add_common(prb, probe_opts);
  prb->add_option("--checkpoint", checkpoint, "encoder checkpoint (overrides the config)");

  auto* abl = app.add_subcommand("ablate", "pretrain + probe over the ablate grid; writes ablation_results.csv");
  add_common(abl, ablate_opts);

  std::string log_path, diag_out;
  double threshold = 0.5;
  int window = 100;
  auto* dia = app.add_subcommand("diagnose", "entropy / dominance series and collapse check from a step log");
  dia->add_option("--log", log_path, "steps.csv written by pretrain")->required();
  dia->add_option("-o,--out", diag_out, "output CSV (default: diagnose.csv next to the log)");
  dia->add_option("--threshold", threshold, "dominance threshold");
  dia->add_option("--window", window, "consecutive steps above threshold that count as collapse");

  matpac::synth::ToyDatasetOptions toy;
  std::string toy_dir;
  auto* gen = app.add_subcommand("gen-toy", "write the synthetic four-class dataset and its manifests");
  gen->add_option("--dir", toy_dir, "output directory")->required();
  gen->add_option("--clips", toy.n_clips, "number of clips");
  gen->add_option("--seconds", toy.duration_s, "clip duration");
  gen->add_option("--seed", toy.seed, "generator seed");
  gen->add_option("--folds", toy.folds, "folds in kfold.csv");
  gen->add_option("--prefix", toy.prefix, "file name prefix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (pre->parsed()) {
      const auto cfg = load(pre_opts);
      const auto dir = matpac::resolve_output_dir(cfg);
      matpac::TrainLoopOptions opts;
      if (!resume.empty()) opts.resume_from = resume;
      if (stop_after >= 0) opts.stop_after_epoch = stop_after;
      opts.on_step = [](const matpac::TrainStepLog& l) {
        if (l.step % 50 == 0)
          std::fprintf(stderr, "step %lld epoch %d total %.4f pred %.4f cls %.4f dom %.3f\n",
                       static_cast<long long>(l.step), l.epoch, l.total, l.l_pred, l.l_cls, l.dominance);
      };
      const auto out = matpac::pretrain(cfg, dir, opts);
      std::cout << "checkpoint: " << out.final_checkpoint.string() << "\nstep log: " << out.train.log_path.string()
                << "\n";
    } else if (prb->parsed()) {
      auto cfg = load(probe_opts);
      if (!checkpoint.empty()) cfg.checkpoint = checkpoint;
      const auto dir = matpac::resolve_output_dir(cfg);
      const auto reports = matpac::probe(cfg, dir);
      for (const auto& r : reports) std::cout << matpac::summarize(r) << "\n";
      std::cout << "results: " << (dir / "results.csv").string() << "\n";
    } else if (abl->parsed()) {
      const auto cfg = load(ablate_opts);
      const auto dir = matpac::resolve_output_dir(cfg);
      const auto res =
          matpac::ablate(cfg, dir, [](const std::string& p) { std::fprintf(stderr, "grid point %s\n", p.c_str()); });
      std::cout << "results: " << res.csv.string() << "\n";
    } else if (dia->parsed()) {
      const std::filesystem::path log(log_path);
      const std::filesystem::path out = diag_out.empty() ? log.parent_path() / "diagnose.csv" : std::filesystem::path(diag_out);
      const auto r = matpac::diagnose(log, out, threshold, window);
      std::cout << "steps: " << r.steps << "\nmax dominance: " << r.max_dominance
                << "\nfinal entropy: " << r.final_entropy << "\ncollapse: ";
      if (r.collapse_step) std::cout << "yes (predicate met at step index " << *r.collapse_step << ")\n";
      else std::cout << "no\n";
      std::cout << "series: " << out.string() << "\n";
    } else if (gen->parsed()) {
      const auto ds = matpac::synth::generate_toy_dataset(toy_dir, toy);
      std::cout << "pretrain manifest: " << ds.pretrain_manifest.string()
                << "\ntvt manifest: " << ds.tvt_manifest.string()
                << "\nkfold manifest: " << ds.kfold_manifest.string() << "\n";
    }
  } catch (const matpac::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
