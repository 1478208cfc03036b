#ifndef UNDEM_PIPELINE_HPP
#define UNDEM_PIPELINE_HPP

// Stage functions behind the command-line tool. Each stage reads its inputs
// from the run directory, checks they were produced under the same config
// hash, and writes its own artifacts plus a config_hash stamp.
//
// <out>/patches/       patch store, grouping.json
// <out>/synth/group_G/ epoch checkpoints, final/, train_log.jsonl
// <out>/calibration/   thresholds.txt
// <out>/pairs/         pair store
// <out>/demoire/       checkpoints, final/, train_log.jsonl
// <out>/eval/          metrics_<model>.csv / .json

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "undem/config.hpp"
#include "undem/data_pipeline.hpp"
#include "undem/demoire.hpp"
#include "undem/denoise.hpp"
#include "undem/metrics.hpp"
#include "undem/moire_prior.hpp"
#include "undem/pair_factory.hpp"
#include "undem/synthesis.hpp"

namespace undem {

using Real = float;
using ProgressSink = std::function<void(const std::string&)>;

inline void note(const ProgressSink& sink, const std::string& msg) {
  if (sink) sink(msg);
}

inline constexpr const char* kStampFile = "config_hash";

inline void write_stamp(const fs::path& dir, const std::string& hash) {
  fs::create_directories(dir);
  std::ofstream os(dir / kStampFile, std::ios::trunc);
  if (!os) throw DataError("cannot write " + (dir / kStampFile).string());
  os << hash << "\n";
}

/// Throws a DataError naming the stage that should have produced `dir`.
inline void require_stamp(const fs::path& dir, const std::string& hash, const std::string& producer) {
  std::ifstream is(dir / kStampFile);
  if (!is) throw DataError("missing artifact " + dir.string() + " (run '" + producer + "' first)");
  std::string found;
  is >> found;
  if (found != hash) {
    throw DataError("artifact " + dir.string() + " was produced under config hash " + found +
                    " but the current config hashes to " + hash + " (re-run '" + producer + "')");
  }
}

struct RunLayout {
  fs::path root;
  fs::path patches() const { return root / "patches"; }
  fs::path grouping() const { return patches() / "grouping.json"; }
  fs::path synth(int group_id) const { return root / "synth" / ("group_" + std::to_string(group_id)); }
  fs::path calibration() const { return root / "calibration"; }
  fs::path thresholds() const { return calibration() / "thresholds.txt"; }
  fs::path pairs() const { return root / "pairs"; }
  fs::path demoire() const { return root / "demoire"; }
  fs::path eval() const { return root / "eval"; }
};

inline void check_group_id(int group_id) {
  if (group_id < 1 || group_id > kGroupCount) {
    throw UsageError("group must be in 1..4, got " + std::to_string(group_id));
  }
}

// --- preprocess ------------------------------------------------------------------------

struct PreprocessResult {
  std::size_t moire_patches = 0;
  std::size_t free_patches = 0;
  std::array<std::size_t, kGroupCount> group_sizes{};
};

inline PreprocessResult run_preprocess(const RunConfig& cfg, const ProgressSink& sink = {}) {
  const RunLayout run{cfg.out_dir()};
  const std::string hash = cfg.hash();
  PatchStore store;
  store.config_hash = hash;
  for (const auto& rec : load_image_set(cfg.moire_dir(), Role::moire)) {
    for (auto& p : split_into_patches(rec, cfg.grid_cells())) store.moire.push_back(std::move(p));
  }
  for (const auto& rec : load_image_set(cfg.free_dir(), Role::moire_free)) {
    for (auto& p : split_into_patches(rec, cfg.grid_cells())) store.free.push_back(std::move(p));
  }
  for (const auto* set : {&store.moire, &store.free}) {
    for (const auto& p : *set) {
      if (p.height() < cfg.crop_size() || p.width() < cfg.crop_size()) {
        throw DataError("patch " + p.id() + " (" + p.pixels.shape_str() + ") is smaller than crop size " +
                        std::to_string(cfg.crop_size()));
      }
    }
  }
  std::vector<ComplexityScore> scores;
  scores.reserve(store.moire.size());
  for (const auto& p : store.moire) scores.push_back(score_patch(p));
  const auto groups = group_patches(scores);

  fs::remove_all(run.patches());
  save_patch_store(run.patches(), store);
  {
    std::ofstream os(run.grouping(), std::ios::trunc);
    if (!os) throw DataError("cannot write " + run.grouping().string());
    os << grouping_manifest(scores, groups, hash).dump(1) << "\n";
  }
  write_stamp(run.patches(), hash);

  PreprocessResult r{store.moire.size(), store.free.size(), {}};
  for (const auto& g : groups) ++r.group_sizes[static_cast<std::size_t>(g.group_id - 1)];
  note(sink, "preprocess: " + std::to_string(r.moire_patches) + " moire / " + std::to_string(r.free_patches) +
                 " moire-free patches");
  return r;
}

struct LoadedPatches {
  PatchStore store;
  std::vector<GroupAssignment> groups;
};

inline LoadedPatches load_preprocessed(const RunConfig& cfg) {
  const RunLayout run{cfg.out_dir()};
  require_stamp(run.patches(), cfg.hash(), "preprocess");
  LoadedPatches out{load_patch_store(run.patches()), parse_grouping_manifest(read_json(run.grouping()))};
  return out;
}

// --- train-synth -----------------------------------------------------------------------

inline void run_train_synth(const RunConfig& cfg, int group_id, const ProgressSink& sink = {},
                            int stop_after_epoch = 0) {
  check_group_id(group_id);
  const RunLayout run{cfg.out_dir()};
  const auto data = load_preprocessed(cfg);
  const auto group = select_group(data.store.moire, data.groups, group_id);
  SynthesisTrainConfig tc = cfg.synthesis(group_id);
  tc.stop_after_epoch = stop_after_epoch;
  const fs::path dir = run.synth(group_id);
  fs::create_directories(dir);
  write_stamp(dir, tc.config_hash);

  std::ofstream log(dir / "train_log.jsonl", std::ios::app);
  int last_epoch = 0;
  train_group<Real>(group_id, group, data.store.free, tc, dir, [&](const StepRecord& r) {
    log << nlohmann::json{{"epoch", r.epoch},
                          {"iteration", r.iteration},
                          {"lr", r.lr},
                          {"dis_g", r.loss.dis_g},
                          {"dis_d", r.loss.dis_d},
                          {"fea", r.loss.fea},
                          {"con", r.loss.con},
                          {"total", r.loss.total}}
               .dump()
        << "\n";
    if (r.epoch != last_epoch) {
      last_epoch = r.epoch;
      note(sink, "train-synth group " + std::to_string(group_id) + ": epoch " + std::to_string(r.epoch) +
                     " lr " + std::to_string(r.lr));
    }
  });
}

inline std::shared_ptr<const SynthesisBundle<Real>> load_final_bundle(const RunConfig& cfg, int group_id) {
  const RunLayout run{cfg.out_dir()};
  const fs::path dir = run.synth(group_id) / "final";
  if (!fs::exists(dir / "state.json")) {
    throw DataError("no trained synthesis bundle for group " + std::to_string(group_id) + " (expected " +
                    dir.string() + "; run 'train-synth --group " + std::to_string(group_id) + "')");
  }
  nlohmann::json state;
  auto bundle = std::make_shared<SynthesisBundle<Real>>(load_bundle<Real>(dir, &state));
  if (state.value("config_hash", "") != cfg.hash()) {
    throw DataError("synthesis bundle for group " + std::to_string(group_id) +
                    " was trained under a different config hash");
  }
  return bundle;
}

// --- calibrate -------------------------------------------------------------------------

inline ThresholdTable run_calibrate(const RunConfig& cfg, const ProgressSink& sink = {}) {
  const RunLayout run{cfg.out_dir()};
  const auto data = load_preprocessed(cfg);
  ThresholdTable table;
  for (int g = 1; g <= kGroupCount; ++g) {
    const auto bundle = load_final_bundle(cfg, g);
    const auto group = select_group(data.store.moire, data.groups, g);
    std::mt19937_64 rng(cfg.seed() * 1000003ULL + 200 + static_cast<std::uint64_t>(g));
    const auto entry = calibrate_threshold(*bundle, group, data.store.free, cfg.gamma(g), cfg.n_calibration(), rng);
    table.set(g, cfg.crop_size(), entry);
    note(sink, "calibrate group " + std::to_string(g) + ": gamma " + std::to_string(entry.gamma_percent) +
                   " threshold " + std::to_string(entry.threshold_value));
  }
  fs::create_directories(run.calibration());
  table.save(run.thresholds());
  write_stamp(run.calibration(), cfg.hash());
  return table;
}

inline PairFactory<Real> build_pair_factory(const RunConfig& cfg) {
  const RunLayout run{cfg.out_dir()};
  auto data = load_preprocessed(cfg);
  require_stamp(run.calibration(), cfg.hash(), "calibrate");
  ThresholdTable table = ThresholdTable::load(run.thresholds());
  std::array<std::shared_ptr<const SynthesisBundle<Real>>, kGroupCount> bundles;
  std::array<std::vector<Patch>, kGroupCount> groups;
  for (int g = 1; g <= kGroupCount; ++g) {
    bundles[static_cast<std::size_t>(g - 1)] = load_final_bundle(cfg, g);
    groups[static_cast<std::size_t>(g - 1)] = select_group(data.store.moire, data.groups, g);
    table.at(g, cfg.crop_size());
  }
  return PairFactory<Real>(bundles, std::move(groups), std::move(data.store.free), std::move(table),
                           cfg.retry_cap());
}

// --- gen-pairs -------------------------------------------------------------------------

inline nlohmann::json run_gen_pairs(const RunConfig& cfg, const ProgressSink& sink = {}) {
  const RunLayout run{cfg.out_dir()};
  const auto factory = build_pair_factory(cfg);
  std::mt19937_64 rng(cfg.seed() * 1000003ULL + 300);
  auto manifest = generate_dataset(factory, cfg.pair_count(), run.pairs(), rng, cfg.hash());
  write_stamp(run.pairs(), cfg.hash());
  int fallbacks = 0;
  for (const auto& p : manifest.at("pairs")) fallbacks += p.at("fallback").get<bool>() ? 1 : 0;
  note(sink, "gen-pairs: " + std::to_string(cfg.pair_count()) + " pairs, " + std::to_string(fallbacks) +
                 " via retry fallback");
  return manifest;
}

// --- train-demoire ---------------------------------------------------------------------

inline std::vector<double> run_train_demoire(const RunConfig& cfg, const ProgressSink& sink = {}) {
  const RunLayout run{cfg.out_dir()};
  require_stamp(run.pairs(), cfg.hash(), "gen-pairs");
  OfflinePairStore store(run.pairs());
  if (store.config_hash() != cfg.hash()) throw DataError("pair store manifest has a different config hash");
  const auto tc = cfg.demoire();
  std::mt19937_64 init_rng(tc.seed);
  auto model = ModelRegistry::instance().create(cfg.demoire_model(), init_rng);
  fs::remove_all(run.demoire());
  fs::create_directories(run.demoire());
  std::ofstream log(run.demoire() / "train_log.jsonl", std::ios::trunc);
  const auto losses = train_demoire(*model, store, tc, run.demoire(), [&](const DemoireStepRecord& r) {
    log << nlohmann::json{{"step", r.step}, {"loss", r.loss}, {"running_loss", r.running_loss}}.dump() << "\n";
    if (r.step % 100 == 0) {
      note(sink, "train-demoire step " + std::to_string(r.step) + " running L1 " + std::to_string(r.running_loss));
    }
  });
  write_stamp(run.demoire(), cfg.hash());
  return losses;
}

// --- evaluate --------------------------------------------------------------------------

/// Aligned (moire, clean) pairs: files with the same name in both directories.
inline std::vector<TrainingPair> load_test_pairs(const fs::path& moire_dir, const fs::path& free_dir) {
  std::vector<TrainingPair> pairs;
  for (const auto& file : list_images(moire_dir)) {
    const fs::path clean = free_dir / file.filename();
    if (!fs::exists(clean)) throw DataError("test image " + file.string() + " has no counterpart in " + free_dir.string());
    pairs.push_back({read_image(file), read_image(clean), file.stem().string()});
  }
  return pairs;
}

inline std::unique_ptr<DemoireModel> load_trained_model(const RunConfig& cfg) {
  const RunLayout run{cfg.out_dir()};
  require_stamp(run.demoire(), cfg.hash(), "train-demoire");
  std::mt19937_64 scratch(0);
  auto model = ModelRegistry::instance().create(cfg.demoire_model(), scratch);
  load_parameters<float>((run.demoire() / "final" / "model.bin").string(), model->parameters());
  return model;
}

struct EvaluationOutcome {
  EvaluationReport trained;
  EvaluationReport identity;
};

inline EvaluationOutcome run_evaluate(const RunConfig& cfg, const Evaluator& evaluator = {},
                                      const ProgressSink& sink = {}) {
  const RunLayout run{cfg.out_dir()};
  const auto model = load_trained_model(cfg);
  const auto pairs = load_test_pairs(cfg.test_moire_dir(), cfg.test_free_dir());
  EvaluationOutcome out{evaluate(*model, pairs, evaluator), evaluate(IdentityModel{}, pairs, evaluator)};
  fs::create_directories(run.eval());
  for (const auto* r : {&out.trained, &out.identity}) {
    std::ofstream(run.eval() / ("metrics_" + r->model + ".csv"), std::ios::trunc) << report_csv(*r);
    std::ofstream(run.eval() / ("metrics_" + r->model + ".json"), std::ios::trunc)
        << report_json(*r, cfg.hash()).dump(1) << "\n";
    for (const auto& w : r->warnings) note(sink, "warning: " + w);
  }
  nlohmann::json summary{{"config_hash", cfg.hash()},
                         {"model", out.trained.model},
                         {"psnr_db", out.trained.mean.psnr_db},
                         {"ssim", out.trained.mean.ssim},
                         {"identity_psnr_db", out.identity.mean.psnr_db},
                         {"identity_ssim", out.identity.mean.ssim},
                         {"test_pairs", pairs.size()}};
  if (out.trained.mean.lpips) summary["lpips"] = *out.trained.mean.lpips;
  std::ofstream(run.eval() / "summary.json", std::ios::trunc) << summary.dump(1) << "\n";
  write_stamp(run.eval(), cfg.hash());
  note(sink, "evaluate: " + out.trained.model + " PSNR " + std::to_string(out.trained.mean.psnr_db) + " dB, SSIM " +
                 std::to_string(out.trained.mean.ssim) + " (identity " + std::to_string(out.identity.mean.psnr_db) +
                 " dB)");
  return out;
}

// --- report ----------------------------------------------------------------------------

struct ReportRow {
  std::string run;
  std::string model;
  double psnr_db = 0;
  double ssim = 0;
  double identity_psnr_db = 0;
  double identity_ssim = 0;
};

inline std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& labels,
                                 const std::vector<double>& values, const std::string& unit) {
  const int bar_w = 60, gap = 30, left = 60, top = 40, plot_h = 200;
  const int width = left + static_cast<int>(labels.size()) * (bar_w + gap) + gap;
  const int height = top + plot_h + 60;
  double vmax = 0;
  for (double v : values) vmax = std::max(vmax, v);
  if (vmax <= 0) vmax = 1;
  std::ostringstream os;
  char buf[256];
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  os << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\">" << title
     << "</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << width << "\" y2=\"" << top + plot_h
     << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double h = plot_h * values[i] / vmax;
    const int x = left + gap + static_cast<int>(i) * (bar_w + gap);
    std::snprintf(buf, sizeof buf, "<rect x=\"%d\" y=\"%.2f\" width=\"%d\" height=\"%.2f\" fill=\"#4878a8\"/>\n", x,
                  top + plot_h - h, bar_w, h);
    os << buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%d\" y=\"%.2f\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
                  "%.4g%s</text>\n",
                  x + bar_w / 2, top + plot_h - h - 4, values[i], unit.c_str());
    os << buf;
    os << "<text x=\"" << x + bar_w / 2 << "\" y=\"" << top + plot_h + 16
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << labels[i] << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

/// One table row per run directory, plus PSNR/SSIM bar charts.
inline std::vector<ReportRow> run_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir,
                                         const ProgressSink& sink = {}) {
  if (run_dirs.empty()) throw UsageError("report needs at least one run directory");
  std::vector<ReportRow> rows;
  for (const auto& dir : run_dirs) {
    const fs::path summary = RunLayout{dir}.eval() / "summary.json";
    if (!fs::exists(summary)) throw DataError("missing artifact " + summary.string() + " (run 'evaluate' first)");
    const auto j = read_json(summary);
    rows.push_back({dir.filename().string(), j.at("model").get<std::string>(), j.at("psnr_db").get<double>(),
                    j.at("ssim").get<double>(), j.at("identity_psnr_db").get<double>(),
                    j.at("identity_ssim").get<double>()});
  }
  fs::create_directories(out_dir);
  std::ostringstream md;
  md << "| run | model | PSNR (dB) | SSIM | identity PSNR (dB) | identity SSIM |\n";
  md << "|---|---|---|---|---|---|\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "| %s | %s | %.3f | %.4f | %.3f | %.4f |\n", r.run.c_str(), r.model.c_str(),
                  r.psnr_db, r.ssim, r.identity_psnr_db, r.identity_ssim);
    md << buf;
  }
  std::ofstream(out_dir / "report.md", std::ios::trunc) << md.str();
  std::vector<std::string> labels;
  std::vector<double> psnrs, ssims;
  for (const auto& r : rows) {
    labels.push_back(r.run);
    psnrs.push_back(r.psnr_db);
    ssims.push_back(r.ssim);
  }
  std::ofstream(out_dir / "psnr.svg", std::ios::trunc) << bar_chart_svg("PSNR by run", labels, psnrs, "");
  std::ofstream(out_dir / "ssim.svg", std::ios::trunc) << bar_chart_svg("SSIM by run", labels, ssims, "");
  note(sink, "report: " + std::to_string(rows.size()) + " runs -> " + (out_dir / "report.md").string());
  return rows;
}

}  // namespace undem

#endif  // UNDEM_PIPELINE_HPP
