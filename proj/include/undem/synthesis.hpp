#ifndef UNDEM_SYNTHESIS_HPP
#define UNDEM_SYNTHESIS_HPP

// Moire synthesis network: moire feature encoder, generator, PatchGAN
// discriminator and content encoder, their least-squares / L1 losses, and the
// alternating adversarial training loop with per-epoch checkpoints.

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "undem/autograd.hpp"
#include "undem/data_pipeline.hpp"
#include "undem/nn.hpp"
#include "undem/optim.hpp"

namespace undem {

/// Channel widths and depth. Defaults are the full-size recipe.
struct SynthesisArch {
  int encoder_channels = 16;
  int generator_channels = 128;
  int residual_blocks = 9;
  std::array<int, 4> discriminator_channels{64, 128, 256, 256};
  /// Feed logit(p_f) into the generator's pre-tanh output so an untrained
  /// generator starts close to its content input.
  bool content_skip = true;
  double init_std = 0.02;

  /// Two-channel networks for tests and gradient checks.
  static SynthesisArch reduced(int channels = 2) {
    SynthesisArch a;
    a.encoder_channels = channels;
    a.generator_channels = channels;
    a.discriminator_channels = {channels, channels, channels, channels};
    return a;
  }

  bool operator==(const SynthesisArch&) const = default;
};

inline nlohmann::json to_json(const SynthesisArch& a) {
  return {{"encoder_channels", a.encoder_channels},
          {"generator_channels", a.generator_channels},
          {"residual_blocks", a.residual_blocks},
          {"discriminator_channels", a.discriminator_channels},
          {"content_skip", a.content_skip},
          {"init_std", a.init_std}};
}

inline SynthesisArch arch_from_json(const nlohmann::json& j) {
  SynthesisArch a;
  a.encoder_channels = j.value("encoder_channels", a.encoder_channels);
  a.generator_channels = j.value("generator_channels", a.generator_channels);
  a.residual_blocks = j.value("residual_blocks", a.residual_blocks);
  a.discriminator_channels = j.value("discriminator_channels", a.discriminator_channels);
  a.content_skip = j.value("content_skip", a.content_skip);
  a.init_std = j.value("init_std", a.init_std);
  return a;
}

/// Generator down/up-sampling factor; crop sizes must be multiples of it.
inline constexpr int kGeneratorStride = 4;

/// Stride-1 encoder: conv + IN + ReLU, then two residual blocks. h x w x 3 -> h x w x C.
template <typename T>
class FeatureEncoder {
 public:
  FeatureEncoder() = default;
  FeatureEncoder(const std::string& name, int channels, int blocks, const InitSpec& init, std::mt19937_64& rng)
      : stem_(name + ".stem", 3, channels, 3, 1, 1, init, rng) {
    for (int i = 0; i < blocks; ++i) blocks_.emplace_back(name + ".res" + std::to_string(i), channels, init, rng);
  }

  Var<T> operator()(const Var<T>& x) const {
    if (x.shape().c != 3) throw std::invalid_argument("encoder expects 3-channel input, got " + x.shape().str());
    Var<T> h = relu(instance_norm(stem_(x)));
    for (const auto& b : blocks_) h = b(h);
    return h;
  }

  void collect(ParameterList<T>& out) {
    stem_.collect(out);
    for (auto& b : blocks_) b.collect(out);
  }

 private:
  Conv2d<T> stem_;
  std::vector<ResidualBlock<T>> blocks_;
};

/// Three convolutions (stem + two stride-2), residual bottleneck, two stride-2
/// transposed convolutions and an output convolution; tanh mapped to [0, 1].
template <typename T>
class Generator {
 public:
  static constexpr T kSkipClamp = T(1e-3);

  Generator() = default;
  Generator(const SynthesisArch& arch, const InitSpec& init, std::mt19937_64& rng) : content_skip_(arch.content_skip) {
    const int c = arch.generator_channels;
    const int in = arch.encoder_channels + 3;
    stem_ = Conv2d<T>("generator.stem", in, c, 3, 1, 1, init, rng);
    down1_ = Conv2d<T>("generator.down1", c, c, 3, 2, 1, init, rng);
    down2_ = Conv2d<T>("generator.down2", c, c, 3, 2, 1, init, rng);
    for (int i = 0; i < arch.residual_blocks; ++i) {
      blocks_.emplace_back("generator.res" + std::to_string(i), c, init, rng);
    }
    up1_ = ConvTranspose2d<T>("generator.up1", c, c, 3, 2, 1, 1, init, rng);
    up2_ = ConvTranspose2d<T>("generator.up2", c, c, 3, 2, 1, 1, init, rng);
    head_ = Conv2d<T>("generator.head", c, 3, 3, 1, 1, init, rng);
  }

  Var<T> operator()(const Var<T>& features, const Var<T>& content) const {
    if (features.shape().n != content.shape().n || !features.shape().spatially_equal(content.shape())) {
      throw std::invalid_argument("generator inputs misaligned: features " + features.shape().str() + ", content " +
                                  content.shape().str());
    }
    if (content.shape().h % kGeneratorStride != 0 || content.shape().w % kGeneratorStride != 0) {
      throw std::invalid_argument("generator input " + content.shape().str() + " not divisible by 4");
    }
    Var<T> h = relu(instance_norm(stem_(concat_channels(features, content))));
    h = relu(instance_norm(down1_(h)));
    h = relu(instance_norm(down2_(h)));
    for (const auto& b : blocks_) h = b(h);
    h = relu(instance_norm(up1_(h)));
    h = relu(instance_norm(up2_(h)));
    Var<T> raw = head_(h);
    if (content_skip_) {
      Tensor<T> skip(content.shape());
      const auto& src = content.value();
      for (std::size_t i = 0; i < skip.size(); ++i) {
        const T v = std::min(std::max(src[i], kSkipClamp), T(1) - kSkipClamp);
        skip[i] = std::atanh(T(2) * v - T(1));
      }
      raw = add(raw, constant(std::move(skip)));
    }
    return affine(tanh(raw), T(0.5), T(0.5));
  }

  void collect(ParameterList<T>& out) {
    stem_.collect(out);
    down1_.collect(out);
    down2_.collect(out);
    for (auto& b : blocks_) b.collect(out);
    up1_.collect(out);
    up2_.collect(out);
    head_.collect(out);
  }

 private:
  Conv2d<T> stem_, down1_, down2_, head_;
  std::vector<ResidualBlock<T>> blocks_;
  ConvTranspose2d<T> up1_, up2_;
  bool content_skip_ = true;
};

/// PatchGAN: three 4x4 stride-2 convs, two 3x3 stride-1 convs, average pooled to one score per sample.
template <typename T>
class Discriminator {
 public:
  static constexpr T kSlope = T(0.2);

  Discriminator() = default;
  Discriminator(const SynthesisArch& arch, const InitSpec& init, std::mt19937_64& rng) {
    const auto& ch = arch.discriminator_channels;
    c1_ = Conv2d<T>("discriminator.c1", 3, ch[0], 4, 2, 1, init, rng);
    c2_ = Conv2d<T>("discriminator.c2", ch[0], ch[1], 4, 2, 1, init, rng);
    c3_ = Conv2d<T>("discriminator.c3", ch[1], ch[2], 4, 2, 1, init, rng);
    c4_ = Conv2d<T>("discriminator.c4", ch[2], ch[3], 3, 1, 1, init, rng);
    c5_ = Conv2d<T>("discriminator.c5", ch[3], 1, 3, 1, 1, init, rng);
  }

  /// [N, 3, H, W] -> [N, 1, 1, 1]
  Var<T> operator()(const Var<T>& x) const {
    Var<T> h = leaky_relu(c1_(x), kSlope);
    h = leaky_relu(instance_norm(c2_(h)), kSlope);
    h = leaky_relu(instance_norm(c3_(h)), kSlope);
    h = leaky_relu(instance_norm(c4_(h)), kSlope);
    return sample_mean(c5_(h));
  }

  void collect(ParameterList<T>& out) {
    for (auto* c : {&c1_, &c2_, &c3_, &c4_, &c5_}) c->collect(out);
  }

 private:
  Conv2d<T> c1_, c2_, c3_, c4_, c5_;
};

struct TrainingMeta {
  int epoch = 0;
  std::uint64_t seed = 0;
  std::string optimizer_state;  // checkpoint directory holding the Adam moments
};

/// The four networks trained for one complexity group.
template <typename T>
struct SynthesisBundle {
  int group_id = 1;
  int crop_size = 192;
  SynthesisArch arch;
  FeatureEncoder<T> moire_encoder;
  Generator<T> generator;
  Discriminator<T> discriminator;
  FeatureEncoder<T> content_encoder;
  TrainingMeta meta;

  /// E^m, G^m and E^c: the side minimizing the generator objective.
  ParameterList<T> generator_side_parameters() {
    ParameterList<T> out;
    moire_encoder.collect(out);
    generator.collect(out);
    content_encoder.collect(out);
    return out;
  }
  ParameterList<T> discriminator_parameters() {
    ParameterList<T> out;
    discriminator.collect(out);
    return out;
  }
  ParameterList<T> moire_encoder_parameters() {
    ParameterList<T> out;
    moire_encoder.collect(out);
    return out;
  }
  ParameterList<T> generator_parameters() {
    ParameterList<T> out;
    generator.collect(out);
    return out;
  }
  ParameterList<T> content_encoder_parameters() {
    ParameterList<T> out;
    content_encoder.collect(out);
    return out;
  }
  ParameterList<T> all_parameters() {
    ParameterList<T> out = generator_side_parameters();
    discriminator.collect(out);
    return out;
  }

  /// Deep copy: parameter storage is not shared with the original.
  SynthesisBundle clone() const {
    SynthesisBundle copy = *this;
    for (auto* p : copy.all_parameters()) p->var = Var<T>(p->var.value(), true);
    return copy;
  }
};

inline void validate_crop_size(int crop_size) {
  if (crop_size < 8 || crop_size % kGeneratorStride != 0) {
    throw UsageError("crop size " + std::to_string(crop_size) + " must be a multiple of " +
                     std::to_string(kGeneratorStride) + " and at least 8");
  }
}

/// Fresh networks with N(0, init_std) weights. Initialization order: E^m, G^m, D^m, E^c.
template <typename T>
SynthesisBundle<T> build_networks(const SynthesisArch& arch, int group_id, int crop_size, std::mt19937_64& rng) {
  validate_crop_size(crop_size);
  if (group_id < 1 || group_id > 4) throw UsageError("group id must be in 1..4");
  const InitSpec init{arch.init_std};
  SynthesisBundle<T> b;
  b.group_id = group_id;
  b.crop_size = crop_size;
  b.arch = arch;
  b.moire_encoder = FeatureEncoder<T>("moire_encoder", arch.encoder_channels, 2, init, rng);
  b.generator = Generator<T>(arch, init, rng);
  b.discriminator = Discriminator<T>(arch, init, rng);
  b.content_encoder = FeatureEncoder<T>("content_encoder", arch.encoder_channels, 2, init, rng);
  return b;
}

template <typename T>
void set_requires_grad(const ParameterList<T>& params, bool on) {
  for (auto* p : params) p->var.node()->requires_grad = on;
}

// --- forward helpers -------------------------------------------------------------

template <typename T>
void check_crop(const SynthesisBundle<T>& b, const Shape& s, const char* what) {
  if (s.c != 3 || s.h != b.crop_size || s.w != b.crop_size) {
    throw std::invalid_argument(std::string(what) + " " + s.str() + " does not match crop size " +
                                std::to_string(b.crop_size));
  }
}

/// F^m = E^m(p^m)
template <typename T>
Var<T> encode_moire(const SynthesisBundle<T>& b, const Var<T>& p_m) {
  check_crop(b, p_m.shape(), "moire patch");
  return b.moire_encoder(p_m);
}

/// p~ = G^m(Con(F^m, p^f))
template <typename T>
Var<T> generate(const SynthesisBundle<T>& b, const Var<T>& features, const Var<T>& p_f) {
  return b.generator(features, p_f);
}

/// Image-level synthesis without graph recording.
template <typename T>
Tensor<T> synthesize(const SynthesisBundle<T>& b, const Tensor<T>& moire, const Tensor<T>& content) {
  NoGradGuard guard;
  Var<T> f = encode_moire(b, constant(moire));
  return generate(b, f, constant(content)).value();
}

// --- losses --------------------------------------------------------------------

/// mean (D(p~) - 1)^2
template <typename T>
Var<T> loss_dis_g_from_scores(const Var<T>& d_fake) {
  return mean(square(affine(d_fake, T(1), T(-1))));
}

/// mean D(p~)^2 + mean (D(p^m) - 1)^2
template <typename T>
Var<T> loss_dis_d_from_scores(const Var<T>& d_fake, const Var<T>& d_real) {
  return add(mean(square(d_fake)), mean(square(affine(d_real, T(1), T(-1)))));
}

/// Mean absolute difference against a gradient-blocked target.
template <typename T>
Var<T> l1_to_target(const Var<T>& prediction, const Var<T>& target) {
  if (!(prediction.shape() == target.shape())) {
    throw std::invalid_argument("L1 shape mismatch " + prediction.shape().str() + " vs " + target.shape().str());
  }
  return mean(abs(sub(prediction, detach(target))));
}

/// || F~ - F^m ||_1 with F^m as the target.
template <typename T>
Var<T> loss_fea(const Var<T>& moire_features, const Var<T>& synthesized_features) {
  return l1_to_target(synthesized_features, moire_features);
}

template <typename T>
Var<T> loss_dis_g(const SynthesisBundle<T>& b, const Var<T>& p_tilde) {
  return loss_dis_g_from_scores(b.discriminator(p_tilde));
}

/// p~ enters detached: no gradient reaches E^m or G^m.
template <typename T>
Var<T> loss_dis_d(const SynthesisBundle<T>& b, const Var<T>& p_tilde, const Var<T>& p_m) {
  return loss_dis_d_from_scores(b.discriminator(detach(p_tilde)), b.discriminator(p_m));
}

/// || E^c(p~) - E^c(p^f) ||_1 with the moire-free branch as the target.
template <typename T>
Var<T> loss_con(const SynthesisBundle<T>& b, const Var<T>& p_tilde, const Var<T>& p_f) {
  if (!(p_tilde.shape() == p_f.shape())) {
    throw std::invalid_argument("content loss shape mismatch " + p_tilde.shape().str() + " vs " + p_f.shape().str());
  }
  return l1_to_target(b.content_encoder(p_tilde), b.content_encoder(p_f));
}

struct LossBreakdown {
  double dis_g = 0;
  double dis_d = 0;
  double fea = 0;
  double con = 0;
  double total = 0;
};

template <typename T>
struct SynthesisOptimizers {
  Adam<T> generator_side;
  Adam<T> discriminator;

  SynthesisOptimizers() = default;
  SynthesisOptimizers(SynthesisBundle<T>& b, const AdamConfig& cfg)
      : generator_side(b.generator_side_parameters(), cfg), discriminator(b.discriminator_parameters(), cfg) {}

  void set_lr(double lr) {
    generator_side.set_lr(lr);
    discriminator.set_lr(lr);
  }
};

namespace detail {
inline void require_finite(double v, const char* term) {
  if (!std::isfinite(v)) throw TrainingError(std::string("non-finite loss term ") + term);
}
}  // namespace detail

/// One alternating update: the discriminator on L^dis-D with the synthesis side
/// frozen, then E^m, G^m, E^c on L^dis-G + L^fea + L^con with the discriminator
/// frozen. Each term is reported as measured before its own update.
template <typename T>
LossBreakdown train_step(SynthesisBundle<T>& b, SynthesisOptimizers<T>& opt, const Tensor<T>& moire_batch,
                         const Tensor<T>& free_batch) {
  const Var<T> p_m = constant(moire_batch);
  const Var<T> p_f = constant(free_batch);
  check_crop(b, p_f.shape(), "moire-free patch");

  const Var<T> features = encode_moire(b, p_m);
  const Var<T> p_tilde = generate(b, features, p_f);

  LossBreakdown out;
  {
    const auto d_params = b.discriminator_parameters();
    set_requires_grad(d_params, true);
    opt.discriminator.zero_grad();
    const Var<T> l_d = loss_dis_d(b, p_tilde, p_m);
    out.dis_d = static_cast<double>(l_d.item());
    detail::require_finite(out.dis_d, "dis_d");
    backward(l_d);
    opt.discriminator.step();
  }
  {
    const auto d_params = b.discriminator_parameters();
    set_requires_grad(d_params, false);
    opt.generator_side.zero_grad();
    const Var<T> l_g = loss_dis_g(b, p_tilde);
    const Var<T> l_fea = loss_fea(features, b.moire_encoder(p_tilde));
    const Var<T> l_con = loss_con(b, p_tilde, p_f);
    out.dis_g = static_cast<double>(l_g.item());
    out.fea = static_cast<double>(l_fea.item());
    out.con = static_cast<double>(l_con.item());
    detail::require_finite(out.dis_g, "dis_g");
    detail::require_finite(out.fea, "fea");
    detail::require_finite(out.con, "con");
    backward(sum<T>({l_g, l_fea, l_con}));
    set_requires_grad(d_params, true);
    opt.generator_side.step();
  }
  out.total = out.dis_g + out.dis_d + out.fea + out.con;
  return out;
}

// --- checkpoints -----------------------------------------------------------------
//
// <dir>/epoch_NNN/ holds the four parameter files, both optimizer states and
// state.json; <dir>/latest names the newest epoch directory; <dir>/final holds
// the finished bundle.

inline std::string epoch_dir_name(int epoch) {
  std::ostringstream os;
  os << "epoch_" << std::setw(3) << std::setfill('0') << epoch;
  return os.str();
}

template <typename T>
void save_bundle(const fs::path& dir, SynthesisBundle<T>& b, const std::string& config_hash,
                 const std::string& rng_state = "") {
  fs::create_directories(dir);
  save_parameters<T>((dir / "moire_encoder.bin").string(), b.moire_encoder_parameters());
  save_parameters<T>((dir / "generator.bin").string(), b.generator_parameters());
  save_parameters<T>((dir / "discriminator.bin").string(), b.discriminator_parameters());
  save_parameters<T>((dir / "content_encoder.bin").string(), b.content_encoder_parameters());
  nlohmann::json state{{"group_id", b.group_id},
                       {"crop_size", b.crop_size},
                       {"arch", to_json(b.arch)},
                       {"epoch", b.meta.epoch},
                       {"seed", b.meta.seed},
                       {"optimizer_state", b.meta.optimizer_state},
                       {"config_hash", config_hash},
                       {"rng_state", rng_state}};
  std::ofstream os(dir / "state.json", std::ios::trunc);
  if (!os) throw DataError("cannot write " + (dir / "state.json").string());
  os << state.dump(1) << "\n";
}

template <typename T>
SynthesisBundle<T> load_bundle(const fs::path& dir, nlohmann::json* state_out = nullptr) {
  const auto state = read_json(dir / "state.json");
  std::mt19937_64 scratch(0);
  auto b = build_networks<T>(arch_from_json(state.at("arch")), state.at("group_id").get<int>(),
                             state.at("crop_size").get<int>(), scratch);
  load_parameters<T>((dir / "moire_encoder.bin").string(), b.moire_encoder_parameters());
  load_parameters<T>((dir / "generator.bin").string(), b.generator_parameters());
  load_parameters<T>((dir / "discriminator.bin").string(), b.discriminator_parameters());
  load_parameters<T>((dir / "content_encoder.bin").string(), b.content_encoder_parameters());
  b.meta.epoch = state.value("epoch", 0);
  b.meta.seed = state.value("seed", std::uint64_t{0});
  b.meta.optimizer_state = state.value("optimizer_state", "");
  if (state_out) *state_out = state;
  return b;
}

// --- training schedule -----------------------------------------------------------

struct SynthesisTrainConfig {
  SynthesisArch arch;
  int crop_size = 192;
  int epochs = 100;
  int batch_size = 4;
  AdamConfig adam{};
  std::uint64_t seed = 0;
  /// 0 -> ceil(group size / batch size).
  int iterations_per_epoch = 0;
  std::string config_hash;
  /// Stop after this epoch (simulated interruption); 0 runs to completion.
  int stop_after_epoch = 0;
};

struct StepRecord {
  int epoch = 0;
  int iteration = 0;
  double lr = 0;
  LossBreakdown loss;
  std::vector<std::string> moire_refs;
  std::vector<std::string> free_refs;
};

using StepLogger = std::function<void(const StepRecord&)>;

inline std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline void rng_from_string(std::mt19937_64& rng, const std::string& s) {
  std::istringstream is(s);
  is >> rng;
  if (!is) throw DataError("corrupt rng state in checkpoint");
}

/// Trains one group's bundle with the linear-decay schedule. When `checkpoint_dir`
/// already holds a checkpoint written under the same config hash, training resumes
/// after its epoch.
template <typename T>
SynthesisBundle<T> train_group(int group_id, const std::vector<Patch>& group_patches,
                               const std::vector<Patch>& free_patches, const SynthesisTrainConfig& cfg,
                               const fs::path& checkpoint_dir, const StepLogger& log = {}) {
  if (group_patches.empty()) throw DataError("group " + std::to_string(group_id) + " has no moire patches");
  if (free_patches.empty()) throw DataError("no moire-free patches");
  if (cfg.batch_size < 1) throw UsageError("batch size must be positive");
  const LinearDecaySchedule schedule(cfg.adam.lr, cfg.epochs);

  std::mt19937_64 rng(cfg.seed);
  SynthesisBundle<T> bundle = build_networks<T>(cfg.arch, group_id, cfg.crop_size, rng);
  bundle.meta.seed = cfg.seed;
  SynthesisOptimizers<T> opt(bundle, cfg.adam);
  int start_epoch = 1;

  if (!checkpoint_dir.empty() && fs::exists(checkpoint_dir / "latest")) {
    std::ifstream is(checkpoint_dir / "latest");
    std::string name;
    is >> name;
    const fs::path dir = checkpoint_dir / name;
    nlohmann::json state;
    SynthesisBundle<T> restored = load_bundle<T>(dir, &state);
    if (state.value("config_hash", "") != cfg.config_hash) {
      throw DataError("checkpoint " + dir.string() + " was written under config hash " +
                      state.value("config_hash", "") + ", current is " + cfg.config_hash);
    }
    if (restored.group_id != group_id || !(restored.arch == cfg.arch) || restored.crop_size != cfg.crop_size) {
      throw DataError("checkpoint " + dir.string() + " does not match the requested group/architecture");
    }
    bundle = std::move(restored);
    opt = SynthesisOptimizers<T>(bundle, cfg.adam);
    opt.generator_side.load((dir / "optim_generator_side.bin").string());
    opt.discriminator.load((dir / "optim_discriminator.bin").string());
    rng_from_string(rng, state.at("rng_state").get<std::string>());
    start_epoch = bundle.meta.epoch + 1;
  }

  const int iterations = cfg.iterations_per_epoch > 0
                             ? cfg.iterations_per_epoch
                             : static_cast<int>((group_patches.size() + cfg.batch_size - 1) / cfg.batch_size);
  std::vector<std::size_t> order(group_patches.size());

  for (int epoch = start_epoch; epoch <= cfg.epochs; ++epoch) {
    const double lr = schedule.rate_for_epoch(epoch);
    opt.set_lr(lr);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t cursor = 0;
    for (int it = 0; it < iterations; ++it) {
      std::vector<Image> moire, content;
      StepRecord rec;
      for (int k = 0; k < cfg.batch_size; ++k) {
        const Patch& m = group_patches[order[cursor++ % order.size()]];
        const long f = sample_free_partner(m, free_patches, rng);
        if (f < 0) throw DataError("moire patch " + m.id() + " has no moire-free patch from a different source");
        moire.push_back(random_crop(m, cfg.crop_size, rng).pixels);
        content.push_back(random_crop(free_patches[static_cast<std::size_t>(f)], cfg.crop_size, rng).pixels);
        rec.moire_refs.push_back(m.id());
        rec.free_refs.push_back(free_patches[static_cast<std::size_t>(f)].id());
      }
      rec.epoch = epoch;
      rec.iteration = it;
      rec.lr = lr;
      rec.loss = train_step(bundle, opt, to_tensor<T>(std::span<const Image>(moire)),
                            to_tensor<T>(std::span<const Image>(content)));
      if (log) log(rec);
    }
    bundle.meta.epoch = epoch;
    if (!checkpoint_dir.empty()) {
      const fs::path dir = checkpoint_dir / epoch_dir_name(epoch);
      bundle.meta.optimizer_state = epoch_dir_name(epoch);
      save_bundle(dir, bundle, cfg.config_hash, rng_to_string(rng));
      opt.generator_side.save((dir / "optim_generator_side.bin").string());
      opt.discriminator.save((dir / "optim_discriminator.bin").string());
      std::ofstream(checkpoint_dir / "latest", std::ios::trunc) << epoch_dir_name(epoch) << "\n";
    }
    if (cfg.stop_after_epoch > 0 && epoch >= cfg.stop_after_epoch && epoch < cfg.epochs) return bundle;
  }
  if (!checkpoint_dir.empty()) save_bundle(checkpoint_dir / "final", bundle, cfg.config_hash, rng_to_string(rng));
  return bundle;
}

}  // namespace undem

#endif  // UNDEM_SYNTHESIS_HPP
