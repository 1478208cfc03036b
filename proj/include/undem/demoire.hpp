#ifndef UNDEM_DEMOIRE_HPP
#define UNDEM_DEMOIRE_HPP

// Demoireing models behind a small interface, the built-in encoder-decoder
// baseline, L1 training on pseudo pairs and metric evaluation.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "undem/autograd.hpp"
#include "undem/error.hpp"
#include "undem/image.hpp"
#include "undem/metrics.hpp"
#include "undem/nn.hpp"
#include "undem/optim.hpp"
#include "undem/pair_factory.hpp"

namespace undem {

namespace fs = std::filesystem;

/// Image-to-image restoration model. forward maps [N,3,H,W] to the same shape
/// with values in [0,1]; H and W must be multiples of size_multiple().
class DemoireModel {
 public:
  virtual ~DemoireModel() = default;
  virtual std::string name() const = 0;
  virtual Var<float> forward(const Var<float>& x) const = 0;
  virtual ParameterList<float> parameters() = 0;
  virtual int size_multiple() const { return 1; }
};

/// Output equals input.
class IdentityModel : public DemoireModel {
 public:
  std::string name() const override { return "identity"; }
  Var<float> forward(const Var<float>& x) const override { return x; }
  ParameterList<float> parameters() override { return {}; }
};

struct BaselineWidths {
  int c0 = 32, c1 = 64, c2 = 128, c3 = 128;
};

/// Three stride-2 downsampling stages, three transposed-conv upsampling stages
/// with additive skips, and a residual output clamp(x + correction, 0, 1).
class BaselineModel : public DemoireModel {
 public:
  explicit BaselineModel(std::mt19937_64& rng, BaselineWidths w = {}, InitSpec init = {}) {
    in_ = Conv2d<float>("baseline.in", 3, w.c0, 3, 1, 1, init, rng);
    down1_ = Conv2d<float>("baseline.down1", w.c0, w.c1, 3, 2, 1, init, rng);
    down2_ = Conv2d<float>("baseline.down2", w.c1, w.c2, 3, 2, 1, init, rng);
    down3_ = Conv2d<float>("baseline.down3", w.c2, w.c3, 3, 2, 1, init, rng);
    mid_ = Conv2d<float>("baseline.mid", w.c3, w.c3, 3, 1, 1, init, rng);
    up3_ = ConvTranspose2d<float>("baseline.up3", w.c3, w.c2, 3, 2, 1, 1, init, rng);
    up2_ = ConvTranspose2d<float>("baseline.up2", w.c2, w.c1, 3, 2, 1, 1, init, rng);
    up1_ = ConvTranspose2d<float>("baseline.up1", w.c1, w.c0, 3, 2, 1, 1, init, rng);
    out_ = Conv2d<float>("baseline.out", w.c0, 3, 3, 1, 1, init, rng);
  }

  std::string name() const override { return "baseline"; }
  int size_multiple() const override { return 8; }

  Var<float> forward(const Var<float>& x) const override {
    const Shape s = x.shape();
    if (s.c != 3 || s.h % 8 != 0 || s.w % 8 != 0) {
      throw std::invalid_argument("baseline input " + s.str() + " must be RGB with sides divisible by 8");
    }
    const Var<float> e0 = relu(in_(x));
    const Var<float> e1 = relu(down1_(e0));
    const Var<float> e2 = relu(down2_(e1));
    const Var<float> e3 = relu(down3_(e2));
    const Var<float> m = relu(mid_(e3));
    const Var<float> d2 = add(relu(up3_(m)), e2);
    const Var<float> d1 = add(relu(up2_(d2)), e1);
    const Var<float> d0 = add(relu(up1_(d1)), e0);
    return clamp(add(x, out_(d0)), 0.0f, 1.0f);
  }

  ParameterList<float> parameters() override {
    ParameterList<float> out;
    in_.collect(out);
    down1_.collect(out);
    down2_.collect(out);
    down3_.collect(out);
    mid_.collect(out);
    up3_.collect(out);
    up2_.collect(out);
    up1_.collect(out);
    out_.collect(out);
    return out;
  }

 private:
  Conv2d<float> in_, down1_, down2_, down3_, mid_, out_;
  ConvTranspose2d<float> up3_, up2_, up1_;
};

inline std::unique_ptr<DemoireModel> build_baseline_model(std::mt19937_64& rng) {
  return std::make_unique<BaselineModel>(rng);
}

/// Name -> factory. "baseline" and "identity" are registered by default.
class ModelRegistry {
 public:
  using Factory = std::function<std::unique_ptr<DemoireModel>(std::mt19937_64&)>;

  static ModelRegistry& instance() {
    static ModelRegistry registry;
    return registry;
  }

  void add(const std::string& name, Factory f) { factories_[name] = std::move(f); }
  bool contains(const std::string& name) const { return factories_.count(name) > 0; }

  std::unique_ptr<DemoireModel> create(const std::string& name, std::mt19937_64& rng) const {
    const auto it = factories_.find(name);
    if (it == factories_.end()) throw UsageError("unknown demoire model '" + name + "'");
    return it->second(rng);
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& kv : factories_) out.push_back(kv.first);
    return out;
  }

 private:
  ModelRegistry() {
    add("baseline", build_baseline_model);
    add("identity", [](std::mt19937_64&) { return std::make_unique<IdentityModel>(); });
  }
  std::map<std::string, Factory> factories_;
};

/// Runs the model on one image, replicate-padding to the model's size multiple.
inline Image restore(const DemoireModel& model, const Image& input) {
  const int m = model.size_multiple();
  const int h = input.height();
  const int w = input.width();
  const int ph = (h + m - 1) / m * m;
  const int pw = (w + m - 1) / m * m;
  Image padded(ph, pw, input.channels());
  for (int c = 0; c < input.channels(); ++c) {
    for (int y = 0; y < ph; ++y) {
      for (int x = 0; x < pw; ++x) padded.at(c, y, x) = input.at(c, std::min(y, h - 1), std::min(x, w - 1));
    }
  }
  NoGradGuard guard;
  const Tensor<float> out = model.forward(constant(to_tensor<float>(padded))).value();
  Image full = from_tensor(out, 0);
  return (ph == h && pw == w) ? full : full.crop(0, 0, h, w);
}

// --- training ------------------------------------------------------------------------

struct DemoireTrainConfig {
  /// Optimizer steps; when 0, epochs x ceil(pairs / batch) for finite sources.
  int steps = 0;
  int epochs = 150;
  int batch_size = 4;
  /// Square random crop applied identically to input and target; 0 keeps full pairs.
  int crop_size = 0;
  AdamConfig adam{};
  std::uint64_t seed = 0;
  int checkpoint_every = 0;
  std::string config_hash;
};

struct DemoireStepRecord {
  int step = 0;
  double loss = 0.0;
  double running_loss = 0.0;
};

using DemoireLogger = std::function<void(const DemoireStepRecord&)>;

inline Var<float> l1_loss(const Var<float>& prediction, const Tensor<float>& target) {
  return mean(abs(sub(prediction, constant(target))));
}

/// Draws one batch, cropping each pair at a shared random offset when requested.
inline std::pair<Tensor<float>, Tensor<float>> draw_batch(PairSource& source, int batch_size, int crop,
                                                          std::mt19937_64& rng) {
  std::vector<Image> inputs, targets;
  for (int k = 0; k < batch_size; ++k) {
    TrainingPair p = source.draw(rng);
    if (!p.input.same_shape(p.target)) throw DataError("pair " + p.ref + " has mismatched shapes");
    if (crop > 0) {
      if (p.input.height() < crop || p.input.width() < crop) {
        throw DataError("pair " + p.ref + " (" + p.input.shape_str() + ") smaller than crop " + std::to_string(crop));
      }
      const int y0 = std::uniform_int_distribution<int>(0, p.input.height() - crop)(rng);
      const int x0 = std::uniform_int_distribution<int>(0, p.input.width() - crop)(rng);
      p.input = p.input.crop(y0, x0, crop, crop);
      p.target = p.target.crop(y0, x0, crop, crop);
    }
    inputs.push_back(std::move(p.input));
    targets.push_back(std::move(p.target));
  }
  return {to_tensor<float>(std::span<const Image>(inputs)), to_tensor<float>(std::span<const Image>(targets))};
}

inline void save_demoire_checkpoint(const fs::path& dir, DemoireModel& model, int step,
                                    const std::string& config_hash, double last_loss) {
  fs::create_directories(dir);
  save_parameters<float>((dir / "model.bin").string(), model.parameters());
  nlohmann::json state{{"model", model.name()}, {"step", step}, {"config_hash", config_hash}, {"loss", last_loss}};
  std::ofstream os(dir / "state.json", std::ios::trunc);
  if (!os) throw DataError("cannot write " + (dir / "state.json").string());
  os << state.dump(1) << "\n";
}

/// Returns the per-step losses. Mean L1 between model(input) and target, Adam.
inline std::vector<double> train_demoire(DemoireModel& model, PairSource& source, const DemoireTrainConfig& cfg,
                                         const fs::path& checkpoint_dir = {}, const DemoireLogger& log = {}) {
  if (source.empty()) throw DataError("no training pairs");
  if (cfg.batch_size < 1) throw UsageError("batch size must be positive");
  const auto params = model.parameters();
  if (params.empty()) throw UsageError("model '" + model.name() + "' has no trainable parameters");
  int steps = cfg.steps;
  if (steps <= 0) {
    if (source.size() == 0) throw UsageError("an unbounded pair source needs an explicit step count");
    const int per_epoch = static_cast<int>((source.size() + cfg.batch_size - 1) / cfg.batch_size);
    steps = cfg.epochs * per_epoch;
  }

  std::mt19937_64 rng(cfg.seed);
  Adam<float> opt(params, cfg.adam);
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(steps));
  double running = 0.0;
  for (int step = 1; step <= steps; ++step) {
    const auto [inputs, targets] = draw_batch(source, cfg.batch_size, cfg.crop_size, rng);
    opt.zero_grad();
    const Var<float> loss = l1_loss(model.forward(constant(inputs)), targets);
    const double v = static_cast<double>(loss.item());
    if (!std::isfinite(v)) throw TrainingError("non-finite demoire loss at step " + std::to_string(step));
    backward(loss);
    opt.step();
    losses.push_back(v);
    running = step == 1 ? v : 0.98 * running + 0.02 * v;
    if (log) log({step, v, running});
    if (!checkpoint_dir.empty() && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step < steps) {
      char name[32];
      std::snprintf(name, sizeof name, "step_%06d", step);
      save_demoire_checkpoint(checkpoint_dir / name, model, step, cfg.config_hash, v);
    }
  }
  if (!checkpoint_dir.empty()) {
    save_demoire_checkpoint(checkpoint_dir / "final", model, steps, cfg.config_hash, losses.back());
  }
  return losses;
}

// --- evaluation ------------------------------------------------------------------------

struct EvaluationRow {
  std::string ref;
  MetricResult metrics;
};

struct EvaluationReport {
  std::string model;
  std::vector<EvaluationRow> rows;
  MetricResult mean;
  std::vector<std::string> warnings;
};

/// Per-pair PSNR/SSIM (and LPIPS when a scorer is registered) of model(input) vs target.
inline EvaluationReport evaluate(const DemoireModel& model, const std::vector<TrainingPair>& pairs,
                                 const Evaluator& evaluator = {}) {
  EvaluationReport report;
  report.model = model.name();
  double sum_psnr = 0, sum_ssim = 0, sum_lpips = 0;
  std::size_t n_lpips = 0;
  for (const auto& p : pairs) {
    if (!p.input.same_shape(p.target)) {
      throw DataError("test pair '" + p.ref + "' has mismatched shapes " + p.input.shape_str() + " vs " +
                      p.target.shape_str());
    }
    std::string warning;
    const MetricResult m = evaluator.measure(restore(model, p.input), p.target, &warning);
    if (!warning.empty()) report.warnings.push_back(p.ref + ": " + warning);
    sum_psnr += m.psnr_db;
    sum_ssim += m.ssim;
    if (m.lpips) {
      sum_lpips += *m.lpips;
      ++n_lpips;
    }
    report.rows.push_back({p.ref, m});
  }
  if (!pairs.empty()) {
    report.mean.psnr_db = sum_psnr / static_cast<double>(pairs.size());
    report.mean.ssim = sum_ssim / static_cast<double>(pairs.size());
    if (n_lpips == pairs.size()) report.mean.lpips = sum_lpips / static_cast<double>(n_lpips);
  }
  return report;
}

inline std::string format_metric(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

/// CSV: header, one row per image, then a "mean" summary row.
inline std::string report_csv(const EvaluationReport& r) {
  std::ostringstream os;
  os << "image,psnr_db,ssim,lpips\n";
  auto row = [&](const std::string& name, const MetricResult& m) {
    os << name << "," << format_metric(m.psnr_db) << "," << format_metric(m.ssim) << ","
       << (m.lpips ? format_metric(*m.lpips) : "") << "\n";
  };
  for (const auto& e : r.rows) row(e.ref, e.metrics);
  row("mean", r.mean);
  return os.str();
}

inline nlohmann::json report_json(const EvaluationReport& r, const std::string& config_hash) {
  auto metric = [](const MetricResult& m) {
    nlohmann::json j{{"psnr_db", m.psnr_db}, {"ssim", m.ssim}};
    if (m.lpips) j["lpips"] = *m.lpips;
    return j;
  };
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : r.rows) {
    auto j = metric(e.metrics);
    j["image"] = e.ref;
    rows.push_back(j);
  }
  return {{"model", r.model}, {"config_hash", config_hash}, {"rows", rows}, {"mean", metric(r.mean)},
          {"warnings", r.warnings}};
}

}  // namespace undem

#endif  // UNDEM_DEMOIRE_HPP
