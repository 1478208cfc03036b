#ifndef UNDEM_PAIR_FACTORY_HPP
#define UNDEM_PAIR_FACTORY_HPP

// Pseudo-pair generation: pick a complexity group, synthesize, score, filter.
// Online use draws pairs on demand; offline use writes a pair store to disk.

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "undem/data_pipeline.hpp"
#include "undem/denoise.hpp"
#include "undem/error.hpp"
#include "undem/image_io.hpp"
#include "undem/moire_prior.hpp"
#include "undem/synthesis.hpp"

namespace undem {

struct PseudoPair {
  Image pseudo_moire;
  Image moire_free;
  int group_id = 0;
  double score = 0.0;
  double threshold = 0.0;
  bool accepted = false;
  /// Every attempt was rejected; this is the lowest-score attempt.
  bool fallback = false;
  int attempts = 0;
  std::string moire_ref;
  std::string free_ref;
  std::string moire_source;
  std::string free_source;
};

inline constexpr int kDefaultRetryCap = 16;

template <typename T>
class PairFactory {
 public:
  PairFactory(std::array<std::shared_ptr<const SynthesisBundle<T>>, kGroupCount> bundles,
              std::array<std::vector<Patch>, kGroupCount> groups, std::vector<Patch> free_set, ThresholdTable table,
              int retry_cap = kDefaultRetryCap)
      : bundles_(std::move(bundles)),
        groups_(std::move(groups)),
        free_(std::move(free_set)),
        table_(std::move(table)),
        retry_cap_(retry_cap) {
    if (retry_cap_ < 1) throw UsageError("retry cap must be at least 1");
  }

  /// Uniform group in 1..4.
  static int draw_group(std::mt19937_64& rng) { return std::uniform_int_distribution<int>(1, kGroupCount)(rng); }

  PseudoPair generate_pair(std::mt19937_64& rng) const { return generate_for_group(draw_group(rng), rng); }

  /// Resamples (p^m, p^f) within `group_id` until the score passes, at most retry_cap times.
  PseudoPair generate_for_group(int group_id, std::mt19937_64& rng) const {
    const auto& bundle = bundle_for(group_id);
    const double threshold = table_.at(group_id, bundle.crop_size).threshold_value;
    const auto& patches = groups_[static_cast<std::size_t>(group_id - 1)];
    if (patches.empty()) throw DataError("group " + std::to_string(group_id) + " has no moire patches");

    PseudoPair best;
    best.score = std::numeric_limits<double>::infinity();
    for (int attempt = 1; attempt <= retry_cap_; ++attempt) {
      auto samples = synthesize_scored(bundle, patches, free_, 1, rng);
      ScoredSample& s = samples.front();
      if (s.score <= threshold) return to_pair(std::move(s), group_id, threshold, attempt, false);
      if (s.score < best.score) best = to_pair(std::move(s), group_id, threshold, attempt, false);
    }
    best.accepted = true;
    best.fallback = true;
    best.attempts = retry_cap_;
    return best;
  }

  const SynthesisBundle<T>& bundle_for(int group_id) const {
    if (group_id < 1 || group_id > kGroupCount) throw UsageError("group id must be in 1..4");
    const auto& b = bundles_[static_cast<std::size_t>(group_id - 1)];
    if (!b) throw DataError("no synthesis bundle for group " + std::to_string(group_id));
    return *b;
  }

  const ThresholdTable& table() const { return table_; }
  int retry_cap() const { return retry_cap_; }

 private:
  static PseudoPair to_pair(ScoredSample&& s, int group_id, double threshold, int attempts, bool fallback) {
    PseudoPair p;
    p.pseudo_moire = std::move(s.pseudo_moire);
    p.moire_free = std::move(s.moire_free);
    p.group_id = group_id;
    p.score = s.score;
    p.threshold = threshold;
    p.accepted = s.score <= threshold;
    p.fallback = fallback;
    p.attempts = attempts;
    p.moire_ref = std::move(s.moire_ref);
    p.free_ref = std::move(s.free_ref);
    p.moire_source = std::move(s.moire_source);
    p.free_source = std::move(s.free_source);
    return p;
  }

  std::array<std::shared_ptr<const SynthesisBundle<T>>, kGroupCount> bundles_;
  std::array<std::vector<Patch>, kGroupCount> groups_;
  std::vector<Patch> free_;
  ThresholdTable table_;
  int retry_cap_;
};

// --- pair store ------------------------------------------------------------------
//
// <dir>/pseudo/pair_NNNNN.png, <dir>/free/pair_NNNNN.png, <dir>/manifest.json.

inline std::string pair_file_stem(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "pair_%05d", index);
  return buf;
}

/// Writes `count` pairs into `out_dir`, replacing it. Output is staged in a
/// sibling directory and renamed on success; a failure leaves nothing behind.
template <typename T>
nlohmann::json generate_dataset(const PairFactory<T>& factory, int count, const fs::path& out_dir,
                                std::mt19937_64& rng, const std::string& config_hash) {
  if (count < 1) throw UsageError("pair count must be at least 1");
  fs::path staging = out_dir;
  staging += ".partial";
  fs::remove_all(staging);
  try {
    fs::create_directories(staging / "pseudo");
    fs::create_directories(staging / "free");
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < count; ++i) {
      const PseudoPair p = factory.generate_pair(rng);
      const std::string stem = pair_file_stem(i);
      write_png16(staging / "pseudo" / (stem + ".png"), p.pseudo_moire);
      write_png16(staging / "free" / (stem + ".png"), p.moire_free);
      rows.push_back({{"index", i},
                      {"pseudo_moire", "pseudo/" + stem + ".png"},
                      {"moire_free", "free/" + stem + ".png"},
                      {"group_id", p.group_id},
                      {"score", p.score},
                      {"threshold", p.threshold},
                      {"accepted", p.accepted},
                      {"fallback", p.fallback},
                      {"attempts", p.attempts},
                      {"moire_ref", p.moire_ref},
                      {"free_ref", p.free_ref},
                      {"moire_source", p.moire_source},
                      {"free_source", p.free_source},
                      {"height", p.pseudo_moire.height()},
                      {"width", p.pseudo_moire.width()}});
    }
    nlohmann::json manifest{{"config_hash", config_hash}, {"count", count}, {"pairs", rows}};
    {
      std::ofstream os(staging / "manifest.json", std::ios::trunc);
      os << manifest.dump(1) << "\n";
      if (!os) throw DataError("cannot write " + (staging / "manifest.json").string());
    }
    fs::remove_all(out_dir);
    if (out_dir.has_parent_path()) fs::create_directories(out_dir.parent_path());
    fs::rename(staging, out_dir);
    return manifest;
  } catch (const fs::filesystem_error& e) {
    fs::remove_all(staging);
    throw DataError(std::string("pair store write failed: ") + e.what());
  } catch (...) {
    fs::remove_all(staging);
    throw;
  }
}

/// A (degraded input, clean target) training or test example.
struct TrainingPair {
  Image input;
  Image target;
  std::string ref;
};

/// Source of pairs for the demoire trainer.
class PairSource {
 public:
  virtual ~PairSource() = default;
  virtual bool empty() const = 0;
  /// Number of distinct pairs; 0 for an unbounded source.
  virtual std::size_t size() const { return 0; }
  virtual TrainingPair draw(std::mt19937_64& rng) = 0;
};

/// Pairs read from a pair store; images are decoded on first use and cached.
class OfflinePairStore : public PairSource {
 public:
  explicit OfflinePairStore(const fs::path& dir) : dir_(dir), manifest_(read_json(dir / "manifest.json")) {
    for (const auto& row : manifest_.at("pairs")) {
      entries_.push_back({row.at("pseudo_moire").get<std::string>(), row.at("moire_free").get<std::string>()});
    }
  }

  bool empty() const override { return entries_.empty(); }
  std::size_t size() const override { return entries_.size(); }
  std::string config_hash() const { return manifest_.value("config_hash", ""); }
  const nlohmann::json& manifest() const { return manifest_; }

  TrainingPair get(std::size_t i) {
    if (i >= entries_.size()) throw std::out_of_range("pair index " + std::to_string(i));
    auto it = cache_.find(i);
    if (it == cache_.end()) {
      TrainingPair p{read_image(dir_ / entries_[i].first), read_image(dir_ / entries_[i].second), pair_file_stem(static_cast<int>(i))};
      if (!p.input.same_shape(p.target)) throw DataError("pair " + p.ref + " has mismatched shapes");
      it = cache_.emplace(i, std::move(p)).first;
    }
    return it->second;
  }

  TrainingPair draw(std::mt19937_64& rng) override {
    if (entries_.empty()) throw DataError("pair store " + dir_.string() + " is empty");
    return get(std::uniform_int_distribution<std::size_t>(0, entries_.size() - 1)(rng));
  }

 private:
  fs::path dir_;
  nlohmann::json manifest_;
  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::size_t, TrainingPair> cache_;
};

/// Pairs synthesized on demand.
template <typename T>
class OnlinePairSource : public PairSource {
 public:
  explicit OnlinePairSource(const PairFactory<T>& factory) : factory_(&factory) {}
  bool empty() const override { return false; }
  TrainingPair draw(std::mt19937_64& rng) override {
    PseudoPair p = factory_->generate_pair(rng);
    return {std::move(p.pseudo_moire), std::move(p.moire_free), p.moire_ref + "|" + p.free_ref};
  }

 private:
  const PairFactory<T>* factory_;
};

/// Fixed in-memory pairs.
class VectorPairSource : public PairSource {
 public:
  explicit VectorPairSource(std::vector<TrainingPair> pairs) : pairs_(std::move(pairs)) {}
  bool empty() const override { return pairs_.empty(); }
  std::size_t size() const override { return pairs_.size(); }
  TrainingPair draw(std::mt19937_64& rng) override {
    if (pairs_.empty()) throw DataError("no training pairs");
    return pairs_[std::uniform_int_distribution<std::size_t>(0, pairs_.size() - 1)(rng)];
  }

 private:
  std::vector<TrainingPair> pairs_;
};

}  // namespace undem

#endif  // UNDEM_PAIR_FACTORY_HPP
