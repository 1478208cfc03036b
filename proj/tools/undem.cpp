// undem: command-line driver for the unpaired demoireing pipeline.
//
//   undem preprocess    --config run.json
//   undem train-synth   --config run.json --group 2
//   undem calibrate     --config run.json
//   undem gen-pairs     --config run.json
//   undem train-demoire --config run.json
//   undem evaluate      --config run.json
//   undem report        --out reports/ runs/a runs/b
//   undem make-toy      --out data/toy
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 training failure.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "undem/config.hpp"
#include "undem/pipeline.hpp"
#include "undem/toy_corpus.hpp"

namespace {

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> crop_size;
  std::optional<std::string> out;
};

undem::RunConfig resolve_config(const GlobalOptions& g) {
  undem::RunConfig cfg = g.config.empty() ? undem::RunConfig{} : undem::RunConfig::load(g.config);
  if (g.seed) cfg.set("/seed"_json_pointer, *g.seed);
  if (g.crop_size) cfg.set("/crop_size"_json_pointer, *g.crop_size);
  if (g.out) cfg.set("/out"_json_pointer, *g.out);
  return cfg;
}

void progress(const std::string& msg) { std::cerr << msg << std::endl; }

void add_common(CLI::App* cmd, GlobalOptions& g) {
  cmd->add_option("--config", g.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", g.seed, "random seed (overrides config)");
  cmd->add_option("--crop-size", g.crop_size, "training crop size (overrides config)")
      ->check(CLI::IsMember({192, 384, 768}));
  cmd->add_option("--out", g.out, "run output directory (overrides config)");
}

int run(int argc, char** argv) {
  CLI::App app{"Unpaired demoireing pipeline"};
  app.require_subcommand(1);
  GlobalOptions g;

  auto* pre = app.add_subcommand("preprocess", "split images into patches and group moire patches");
  add_common(pre, g);

  auto* synth = app.add_subcommand("train-synth", "train the moire synthesis network of one or all groups");
  add_common(synth, g);
  std::optional<int> group;
  int stop_after = 0;
  synth->add_option("--group", group, "complexity group 1..4 (default: all)");
  synth->add_option("--stop-after-epoch", stop_after, "stop early after this epoch (resumable)");

  auto* cal = app.add_subcommand("calibrate", "calibrate per-group denoise thresholds");
  add_common(cal, g);

  auto* gen = app.add_subcommand("gen-pairs", "synthesize and filter the pseudo pair store");
  add_common(gen, g);

  auto* train = app.add_subcommand("train-demoire", "train the demoireing model on the pair store");
  add_common(train, g);

  auto* eval = app.add_subcommand("evaluate", "evaluate the trained model on aligned test pairs");
  add_common(eval, g);

  auto* report = app.add_subcommand("report", "comparison table and bar charts across runs");
  std::string report_out = "report";
  std::vector<std::string> runs;
  report->add_option("--out", report_out, "report output directory");
  report->add_option("runs", runs, "run directories")->required();

  auto* toy = app.add_subcommand("make-toy", "write a procedural toy corpus");
  std::string toy_out = "data/toy";
  undem::ToyCorpusSpec spec;
  toy->add_option("--out", toy_out, "corpus root");
  toy->add_option("--train-moire", spec.train_moire, "moire training images");
  toy->add_option("--train-free", spec.train_free, "moire-free training images");
  toy->add_option("--test", spec.test_pairs, "aligned test pairs");
  toy->add_option("--seed", spec.seed, "corpus seed");
  toy->add_option("--amp-min", spec.stripe_amplitude_min, "smallest stripe amplitude")->check(CLI::Range(0.0, 1.0));
  toy->add_option("--amp-max", spec.stripe_amplitude_max, "largest stripe amplitude")->check(CLI::Range(0.0, 1.0));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (*toy) {
    if (spec.stripe_amplitude_min > spec.stripe_amplitude_max) {
      std::cerr << "error: --amp-min exceeds --amp-max\n";
      return 1;
    }
    undem::write_toy_corpus(toy_out, spec);
    progress("make-toy: wrote corpus to " + toy_out);
    return 0;
  }
  if (*report) {
    std::vector<undem::fs::path> dirs(runs.begin(), runs.end());
    undem::run_report(dirs, report_out, progress);
    return 0;
  }

  const undem::RunConfig cfg = resolve_config(g);
  if (*pre) {
    undem::run_preprocess(cfg, progress);
  } else if (*synth) {
    if (group) {
      undem::run_train_synth(cfg, *group, progress, stop_after);
    } else {
      for (int k = 1; k <= undem::kGroupCount; ++k) undem::run_train_synth(cfg, k, progress, stop_after);
    }
  } else if (*cal) {
    undem::run_calibrate(cfg, progress);
  } else if (*gen) {
    undem::run_gen_pairs(cfg, progress);
  } else if (*train) {
    undem::run_train_demoire(cfg, progress);
  } else if (*eval) {
    undem::run_evaluate(cfg, {}, progress);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const undem::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const undem::TrainingError& e) {
    std::cerr << "training failure: " << e.what() << "\n";
    return 3;
  } catch (const undem::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
