// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   acceptance                 run everything
//   acceptance 1 4 8           run a subset (9 implies 7)
//   UNDEM_ACCEPTANCE_WORKDIR   keep the toy pipeline runs under this directory

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "test_util.hpp"
#include "undem/denoise.hpp"
#include "undem/metrics.hpp"
#include "undem/moire_prior.hpp"
#include "undem/optim.hpp"
#include "undem/pipeline.hpp"
#include "undem/synthesis.hpp"
#include "undem/toy_corpus.hpp"

using namespace undem;
using undem::test::constant_image;
using undem::test::random_image;
using undem::test::random_tensor;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Collects check failures; the first few are reported.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    if (failures_ < 5) detail_ += (detail_.empty() ? "" : "; ") + what;
    ++failures_;
  }
  void note(const std::string& s) { notes_ += (notes_.empty() ? "" : "; ") + s; }
  Outcome outcome() const {
    if (failures_ == 0) return {true, notes_};
    return {false, detail_ + (failures_ > 5 ? " (+" + std::to_string(failures_ - 5) + " more)" : "")};
  }

 private:
  int failures_ = 0;
  std::string detail_, notes_;
};

std::string fmt(double v, int digits = 6) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

// --- 1: colorfulness closed forms ----------------------------------------------------

Outcome colorfulness_closed_forms() {
  Checker c;
  const double gray = colorfulness(constant_image(16, 16, 0.4f, 0.4f, 0.4f));
  c.expect(gray == 0.0, "gray gives " + fmt(gray));
  const double red = colorfulness(constant_image(16, 16, 1, 0, 0));
  c.expect(std::abs(red - 0.3 * std::sqrt(1.25)) <= 1e-9, "pure red gives " + fmt(red, 12));
  Image split = constant_image(16, 16, 1, 0, 0);
  for (int y = 0; y < 16; ++y)
    for (int x = 8; x < 16; ++x) {
      split.at(0, y, x) = 0;
      split.at(1, y, x) = 1;
    }
  const double half = colorfulness(split);
  c.expect(std::abs(half - 1.15) <= 1e-9, "half red/green gives " + fmt(half, 12));
  c.note("red " + fmt(red, 10) + ", half " + fmt(half, 10));
  return c.outcome();
}

// --- 2: grouping oracle --------------------------------------------------------------

std::vector<int> brute_force_groups(const std::vector<ComplexityScore>& s) {
  const std::size_t n = s.size(), q = n / 4;
  std::vector<std::pair<double, std::size_t>> by_product;
  for (std::size_t i = 0; i < n; ++i) by_product.emplace_back(s[i].frequency * s[i].colorfulness, i);
  std::sort(by_product.begin(), by_product.end());
  std::vector<int> g(n, 0);
  for (std::size_t i = 0; i < q; ++i) g[by_product[i].second] = 1;
  std::vector<std::pair<double, std::size_t>> by_ratio;
  for (std::size_t i = 0; i < n; ++i) {
    if (g[i] != 0) continue;
    const double r = s[i].colorfulness == 0 ? std::numeric_limits<double>::infinity() : s[i].frequency / s[i].colorfulness;
    by_ratio.emplace_back(r, i);
  }
  std::sort(by_ratio.begin(), by_ratio.end());
  for (std::size_t k = 0; k < by_ratio.size(); ++k) g[by_ratio[k].second] = k < q ? 2 : (k < 2 * q ? 3 : 4);
  return g;
}

Outcome grouping_oracle() {
  Checker c;
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> coarse(0, 6);
  std::uniform_real_distribution<double> fine(0.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 4 + rng() % 997;
    const bool tied = trial % 2 == 0;
    std::vector<ComplexityScore> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i].frequency = tied ? coarse(rng) : fine(rng);
      s[i].colorfulness = tied ? coarse(rng) / 2.0 : (rng() % 17 == 0 ? 0.0 : fine(rng));
      s[i].patch_ref = "t" + std::to_string(trial) + "_" + std::to_string(i);
    }
    const auto got = group_patches(s);
    const auto want = brute_force_groups(s);
    std::array<std::size_t, 5> sizes{};
    std::set<std::string> seen;
    bool match = got.size() == n;
    for (std::size_t i = 0; match && i < n; ++i) {
      match = got[i].group_id == want[i] && got[i].patch_ref == s[i].patch_ref;
      if (got[i].group_id >= 1 && got[i].group_id <= 4) ++sizes[static_cast<std::size_t>(got[i].group_id)];
      seen.insert(got[i].patch_ref);
    }
    c.expect(match, "trial " + std::to_string(trial) + " (N=" + std::to_string(n) + ") differs from oracle");
    c.expect(seen.size() == n, "trial " + std::to_string(trial) + " is not a partition");
    const std::size_t q = n / 4;
    c.expect(sizes[1] == q && sizes[2] == q && sizes[3] == q && sizes[4] == n - 3 * q,
             "trial " + std::to_string(trial) + " group sizes");
  }
  c.note("200 score sets, N in [4, 1000]");
  return c.outcome();
}

// --- 3: loss closed forms and additivity -------------------------------------------

Var<double> scores(std::initializer_list<double> v) {
  return Var<double>(Tensor<double>(Shape{static_cast<int>(v.size()), 1, 1, 1}, std::vector<double>(v)));
}

Var<double> filled(Shape s, double v) { return Var<double>(Tensor<double>(s, v)); }

std::vector<Patch> striped(int count, int size, const std::string& prefix, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<Patch> out;
  for (int i = 0; i < count; ++i) {
    Image img(size, size, 3);
    const double period = 3 + 4 * u(rng), base = 0.3 + 0.4 * u(rng);
    for (int ch = 0; ch < 3; ++ch)
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
          img.at(ch, y, x) = static_cast<float>(base + 0.2 * std::sin(6.283 * x / period + ch));
    out.push_back(Patch{img, prefix + std::to_string(i), 0, Role::moire});
  }
  return out;
}

std::vector<Patch> smooth(int count, int size, const std::string& prefix, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Patch> out;
  for (int i = 0; i < count; ++i) {
    Image img = random_image(size, size, rng);
    for (auto& v : img.values()) v = 0.25f + 0.5f * v;
    out.push_back(Patch{img, prefix + std::to_string(i), 0, Role::moire_free});
  }
  return out;
}

Outcome loss_closed_forms() {
  Checker c;
  auto exact = [&](double got, double want, const std::string& what) {
    c.expect(got == want, what + " = " + fmt(got) + ", expected " + fmt(want));
  };
  exact(loss_dis_g_from_scores(scores({1, 1})).item(), 0.0, "dis-G(D=1)");
  exact(loss_dis_g_from_scores(scores({0.5, 0.5})).item(), 0.25, "dis-G(D=0.5)");
  exact(loss_dis_g_from_scores(scores({0, 0})).item(), 1.0, "dis-G(D=0)");
  exact(loss_dis_d_from_scores(scores({0}), scores({1})).item(), 0.0, "dis-D(0,1)");
  exact(loss_dis_d_from_scores(scores({0.5}), scores({0.5})).item(), 0.5, "dis-D(0.5,0.5)");
  exact(loss_dis_d_from_scores(scores({1}), scores({0})).item(), 2.0, "dis-D(1,0)");
  const Shape s{2, 16, 4, 4};
  exact(loss_fea(filled(s, 0.7), filled(s, 0.7)).item(), 0.0, "fea(identical)");
  exact(loss_fea(filled(s, 0.0), filled(s, 1.0)).item(), 1.0, "fea(diff 1)");
  exact(loss_fea(filled(s, 0.5), filled(s, 0.0)).item(), 0.5, "fea(diff -0.5)");
  exact(l1_to_target(filled(s, 3.0), filled(s, 1.0)).item(), 2.0, "con(diff 2)");
  exact(l1_to_target(filled(s, 1.0), filled(s, 3.0)).item(), 2.0, "con(swapped)");

  SynthesisTrainConfig cfg;
  cfg.arch = SynthesisArch::reduced(4);
  cfg.arch.residual_blocks = 2;
  cfg.crop_size = 16;
  cfg.epochs = 2;
  cfg.iterations_per_epoch = 50;
  int steps = 0;
  train_group<float>(1, striped(12, 20, "m", 1), smooth(12, 20, "f", 2), cfg, {}, [&](const StepRecord& r) {
    ++steps;
    const auto& l = r.loss;
    bool finite = true;
    for (double v : {l.dis_g, l.dis_d, l.fea, l.con, l.total}) finite = finite && std::isfinite(v);
    c.expect(finite, "non-finite loss at step " + std::to_string(steps));
    c.expect(l.total == l.dis_g + l.dis_d + l.fea + l.con, "total != sum at step " + std::to_string(steps));
  });
  c.expect(steps == 100, "smoke run logged " + std::to_string(steps) + " steps");
  c.note("11 closed forms, " + std::to_string(steps) + " additive steps");
  return c.outcome();
}

// --- 4: gradient check ---------------------------------------------------------------

Outcome gradient_check() {
  Checker c;
  SynthesisArch arch = SynthesisArch::reduced(2);
  arch.init_std = 0.5;
  std::mt19937_64 rng(123);
  auto b = build_networks<double>(arch, 1, 8, rng);
  const Var<double> p_m(random_tensor(Shape{2, 3, 8, 8}, rng, 0.05, 0.95));
  const Var<double> p_f(random_tensor(Shape{2, 3, 8, 8}, rng, 0.05, 0.95));
  auto vars = [](const ParameterList<double>& ps) {
    std::vector<Var<double>*> out;
    for (auto* p : ps) out.push_back(&p->var);
    return out;
  };
  const Var<double> fea_target = constant(encode_moire(b, p_m).value());
  const Var<double> con_target = constant(b.content_encoder(p_f).value());
  const Var<double> fixed_fake = constant(synthesize(b, p_m.value(), p_f.value()));
  const std::vector<std::pair<std::string, test::GradCheckResult>> results{
      {"dis-G", test::check_gradients([&] { return loss_dis_g(b, generate(b, encode_moire(b, p_m), p_f)); },
                                      vars(b.generator_side_parameters()))},
      {"dis-D", test::check_gradients([&] { return loss_dis_d(b, fixed_fake, p_m); }, vars(b.discriminator_parameters()))},
      {"fea", test::check_gradients(
                  [&] { return loss_fea(fea_target, b.moire_encoder(generate(b, encode_moire(b, p_m), p_f))); },
                  vars(b.generator_side_parameters()))},
      {"con", test::check_gradients(
                  [&] { return l1_to_target(b.content_encoder(generate(b, encode_moire(b, p_m), p_f)), con_target); },
                  vars(b.generator_side_parameters()))}};
  std::string worst;
  for (const auto& [name, r] : results) {
    c.expect(r.worst_relative < 1e-3, name + " worst relative error " + fmt(r.worst_relative));
    c.expect(r.checked > 0, name + " checked nothing");
    worst += (worst.empty() ? "" : ", ") + name + " " + fmt(r.worst_relative, 3) + " over " + std::to_string(r.checked);
  }
  c.note(worst);
  return c.outcome();
}

// --- 5: denoise calibration ----------------------------------------------------------

Outcome denoise_calibration() {
  Checker c;
  std::vector<double> v(100);
  for (int i = 0; i < 100; ++i) v[static_cast<std::size_t>(i)] = 100 - i;
  for (int g : {50, 40, 30, 20}) {
    const double t = nearest_rank_percentile(v, g);
    c.expect(t == g, "percentile " + std::to_string(g) + " of 1..100 = " + fmt(t));
  }

  SynthesisArch arch = SynthesisArch::reduced(2);
  arch.residual_blocks = 1;
  arch.init_std = 0.5;
  std::mt19937_64 init(4);
  const auto bundle = build_networks<float>(arch, 1, 8, init);
  std::vector<Patch> moire, free;
  std::mt19937_64 prng(7);
  for (int i = 0; i < 40; ++i) moire.push_back(Patch{random_image(12, 12, prng), "m" + std::to_string(i), 0, Role::moire});
  for (int i = 0; i < 40; ++i) free.push_back(Patch{random_image(12, 12, prng), "f" + std::to_string(i), 0, Role::moire_free});
  std::string rates;
  for (int g : {50, 40, 30, 20}) {
    std::mt19937_64 rng(100 + static_cast<std::uint64_t>(g));
    ThresholdTable table;
    table.set(1, 8, calibrate_threshold(bundle, moire, free, g, kDefaultCalibrationSamples, rng));
    const auto fresh = synthesize_scored(bundle, moire, free, 10000, rng, 64);
    int kept = 0;
    for (const auto& s : fresh) kept += accept_pair({s.score, "", 1, 8}, table) ? 1 : 0;
    const double pct = kept / 100.0;
    c.expect(std::abs(pct - g) <= 2.0, "gamma " + std::to_string(g) + " accepted " + fmt(pct) + "%");
    rates += (rates.empty() ? "" : ", ") + std::to_string(g) + "->" + fmt(pct, 4) + "%";
  }
  c.note("acceptance " + rates);
  return c.outcome();
}

// --- 6: learning-rate schedule --------------------------------------------------------

Outcome lr_schedule() {
  Checker c;
  const LinearDecaySchedule s(2e-4, 100);
  c.expect(s.rate_after_epoch(50) == 2e-4, "epoch 50 rate " + fmt(s.rate_after_epoch(50)));
  c.expect(std::abs(s.rate_after_epoch(75) - 1e-4) <= 1e-18, "epoch 75 rate " + fmt(s.rate_after_epoch(75)));
  c.expect(s.rate_after_epoch(100) == 0.0, "epoch 100 rate " + fmt(s.rate_after_epoch(100)));
  c.expect(s.rate_for_epoch(100) == 2e-4 / 50, "epoch 100 trains at " + fmt(s.rate_for_epoch(100)));
  c.note("50/75/100 -> " + fmt(s.rate_after_epoch(50)) + " / " + fmt(s.rate_after_epoch(75)) + " / " +
         fmt(s.rate_after_epoch(100)));
  return c.outcome();
}

// --- 7 and 9: toy pipeline --------------------------------------------------------------

/// Toy corpus and model-size overrides used by the end-to-end run.
ToyCorpusSpec toy_corpus_spec() {
  ToyCorpusSpec s;
  s.train_moire = 600;
  s.train_free = 600;
  s.test_pairs = 8;
  s.stripe_amplitude_min = 0.15;
  s.stripe_amplitude_max = 0.35;
  return s;
}

nlohmann::json toy_overrides(const fs::path& corpus, const fs::path& out) {
  return {{"data", {{"moire_dir", (corpus / "train/moire").string()}, {"free_dir", (corpus / "train/free").string()}}},
          {"evaluate", {{"moire_dir", (corpus / "test/moire").string()}, {"free_dir", (corpus / "test/free").string()}}},
          {"crop_size", 64},
          {"n_calibration", 256},
          {"synthesis",
           {{"epochs", 2}, {"arch", {{"generator_channels", 32}, {"discriminator_channels", {32, 64, 128, 128}}}}}},
          {"pairs", {{"count", 200}}},
          {"demoire", {{"steps", 500}}},
          {"out", out.string()}};
}

struct ToyRun {
  fs::path out;
  double seconds = 0;
  EvaluationOutcome eval;
  std::vector<double> demoire_losses;
};

ToyRun run_toy_pipeline(const fs::path& corpus, const fs::path& out) {
  const RunConfig cfg = RunConfig::from_json(toy_overrides(corpus, out));
  const auto start = Clock::now();
  auto say = [](const std::string& m) { std::cerr << "  " << m << std::endl; };
  run_preprocess(cfg, say);
  for (int g = 1; g <= kGroupCount; ++g) run_train_synth(cfg, g, say);
  run_calibrate(cfg, say);
  run_gen_pairs(cfg, say);
  ToyRun r;
  r.out = out;
  r.demoire_losses = run_train_demoire(cfg, say);
  r.eval = run_evaluate(cfg, {}, say);
  r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return r;
}

bool all_finite_in_log(const fs::path& jsonl, const std::vector<std::string>& keys, int* rows) {
  std::ifstream is(jsonl);
  std::string line;
  bool ok = true;
  while (std::getline(is, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const auto& k : keys) ok = ok && std::isfinite(j.at(k).get<double>());
    ++*rows;
  }
  return ok;
}

Outcome check_toy_run(const ToyRun& r) {
  Checker c;
  const RunLayout run{r.out};
  int synth_rows = 0;
  for (int g = 1; g <= kGroupCount; ++g) {
    c.expect(all_finite_in_log(run.synth(g) / "train_log.jsonl", {"dis_g", "dis_d", "fea", "con", "total"}, &synth_rows),
             "non-finite synthesis loss in group " + std::to_string(g));
  }
  c.expect(synth_rows > 0, "no synthesis steps logged");
  bool demoire_finite = !r.demoire_losses.empty();
  for (double l : r.demoire_losses) demoire_finite = demoire_finite && std::isfinite(l);
  c.expect(demoire_finite, "non-finite demoire loss");
  c.expect(r.demoire_losses.size() == 500, "demoire ran " + std::to_string(r.demoire_losses.size()) + " steps");

  const auto manifest = read_json(run.pairs() / "manifest.json");
  int valid = 0;
  for (const auto& row : manifest.at("pairs")) {
    const Image pm = read_image(run.pairs() / row.at("pseudo_moire").get<std::string>());
    const Image pf = read_image(run.pairs() / row.at("moire_free").get<std::string>());
    const bool ok = pm.same_shape(pf) && pm.height() == 64 && pm.width() == 64 && pm.channels() == 3 &&
                    row.at("moire_source") != row.at("free_source");
    valid += ok ? 1 : 0;
  }
  c.expect(manifest.at("pairs").size() == 200 && valid == 200, std::to_string(valid) + "/200 pairs shape-valid");

  const double gain = r.eval.trained.mean.psnr_db - r.eval.identity.mean.psnr_db;
  c.expect(gain >= 1.0, "baseline " + fmt(r.eval.trained.mean.psnr_db, 5) + " dB vs identity " +
                            fmt(r.eval.identity.mean.psnr_db, 5) + " dB (gain " + fmt(gain, 3) + " dB < 1 dB)");
  c.expect(r.seconds <= 1800, "runtime " + fmt(r.seconds, 4) + " s exceeds 30 min");
  c.note("baseline " + fmt(r.eval.trained.mean.psnr_db, 5) + " dB, identity " + fmt(r.eval.identity.mean.psnr_db, 5) +
         " dB, gain " + fmt(gain, 3) + " dB, " + std::to_string(synth_rows) + " synthesis steps, " +
         fmt(r.seconds, 4) + " s");
  return c.outcome();
}

std::string file_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

Outcome compare_runs(const ToyRun& a, const ToyRun& b) {
  Checker c;
  const RunLayout ra{a.out}, rb{b.out};
  std::vector<fs::path> files{"patches/grouping.json", "patches/manifest.json", "calibration/thresholds.txt",
                              "pairs/manifest.json", "eval/summary.json", "demoire/final/model.bin"};
  for (int g = 1; g <= kGroupCount; ++g) {
    const fs::path final_dir = ra.synth(g) / "final";
    for (const auto& e : fs::directory_iterator(final_dir)) {
      if (e.path().extension() == ".bin") files.push_back(fs::relative(e.path(), a.out));
    }
  }
  int compared = 0;
  for (const auto& f : files) {
    const bool exists = fs::exists(a.out / f) && fs::exists(b.out / f);
    c.expect(exists, f.string() + " missing");
    if (!exists) continue;
    c.expect(file_bytes(a.out / f) == file_bytes(b.out / f), f.string() + " differs");
    ++compared;
  }
  c.note(std::to_string(compared) + " manifests and parameter files byte-identical");
  return c.outcome();
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  auto wanted = [&](int k) { return selected.empty() || selected.count(k) > 0; };

  std::map<int, std::pair<std::string, Outcome>> results;
  auto timed = [&](int id, const std::string& name, double budget_s, const std::function<Outcome()>& fn) {
    if (!wanted(id)) return;
    std::cerr << "criterion " << id << ": " << name << std::endl;
    const auto start = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(Clock::now() - start).count();
    if (budget_s > 0 && s > budget_s) {
      o.pass = false;
      o.detail += (o.detail.empty() ? "" : "; ") + std::string("over time budget");
    }
    o.detail += (o.detail.empty() ? "" : "; ") + fmt(s, 3) + " s";
    results[id] = {name, o};
  };

  timed(1, "colorfulness closed forms", 1, colorfulness_closed_forms);
  timed(2, "grouping matches brute-force oracle", 10, grouping_oracle);
  timed(3, "loss closed forms and additive smoke run", 60, loss_closed_forms);
  timed(4, "gradient check of the four losses", 120, gradient_check);
  timed(5, "denoise percentile and acceptance rates", 0, denoise_calibration);
  timed(6, "learning-rate schedule", 1, lr_schedule);

  if (wanted(7) || wanted(9)) {
    const char* keep = std::getenv("UNDEM_ACCEPTANCE_WORKDIR");
    std::unique_ptr<test::TempDir> tmp;
    fs::path root;
    if (keep && *keep) {
      root = keep;
      fs::create_directories(root);
    } else {
      tmp = std::make_unique<test::TempDir>("acceptance");
      root = tmp->path();
    }
    std::optional<ToyRun> first;
    timed(7, "end-to-end toy pipeline", 0, [&] {
      write_toy_corpus(root / "toy", toy_corpus_spec());
      first = run_toy_pipeline(root / "toy", root / "run_a");
      return check_toy_run(*first);
    });
    if (wanted(9)) {
      timed(9, "toy pipeline is deterministic", 0, [&] {
        if (!first) {
          write_toy_corpus(root / "toy", toy_corpus_spec());
          first = run_toy_pipeline(root / "toy", root / "run_a");
        }
        const ToyRun second = run_toy_pipeline(root / "toy", root / "run_b");
        return compare_runs(*first, second);
      });
    }
  }

  timed(8, "metric oracles", 10, [] {
    Checker c;
    std::mt19937_64 rng(1);
    Image a = random_image(64, 64, rng);
    for (auto& v : a.values()) v = std::round(v * 254.0f) / 255.0f;
    Image b = a;
    for (auto& v : b.values()) v += 1.0f / 255.0f;
    const double p = psnr(a, b);
    c.expect(std::abs(p - 20.0 * std::log10(255.0)) <= 0.01, "1/255 offset PSNR " + fmt(p, 8));
    const double s = ssim(a, a);
    c.expect(s == 1.0, "SSIM(x,x) = " + fmt(s, 17));
    double prev = std::numeric_limits<double>::infinity();
    std::string trail;
    for (double amp : {0.01, 0.05, 0.1, 0.2}) {
      std::mt19937_64 nrng(9);
      std::uniform_real_distribution<double> u(-amp, amp);
      Image noisy = a;
      for (auto& v : noisy.values()) v = static_cast<float>(std::clamp(v + u(nrng), 0.0, 1.0));
      const double q = psnr(noisy, a);
      c.expect(q < prev, "PSNR not decreasing at amplitude " + fmt(amp));
      prev = q;
      trail += (trail.empty() ? "" : " > ") + fmt(q, 4);
    }
    c.note("offset " + fmt(p, 6) + " dB; noise " + trail);
    return c.outcome();
  });

  bool all = true;
  for (const auto& [id, r] : results) {
    all = all && r.second.pass;
    std::cout << (r.second.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << r.first << "): " << r.second.detail
              << std::endl;
  }
  return all ? 0 : 1;
}
