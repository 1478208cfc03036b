#ifndef UNDEM_DENOISE_HPP
#define UNDEM_DENOISE_HPP

// Adaptive denoise: Laplacian edge-structure difference between a pseudo moire
// patch and its moire-free source, per-(group, crop) percentile thresholds, and
// the keep/reject rule.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "undem/data_pipeline.hpp"
#include "undem/image.hpp"
#include "undem/synthesis.hpp"

namespace undem {

inline constexpr int kDefaultCalibrationSamples = 6400;
inline constexpr int kMinCalibrationSamples = 100;

/// Luma Laplacian, same kernel and padding as the frequency prior.
inline Image edge_map(const Image& patch) { return laplacian(luma(patch)); }

/// Sum of absolute differences of two edge maps.
inline double edge_difference(const Image& edges_a, const Image& edges_b) {
  if (!edges_a.same_shape(edges_b)) {
    throw std::invalid_argument("edge maps differ in shape: " + edges_a.shape_str() + " vs " + edges_b.shape_str());
  }
  double acc = 0.0;
  const auto a = edges_a.values();
  const auto b = edges_b.values();
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
  return acc;
}

struct StructureScore {
  double value = 0.0;
  std::string pair_ref;
  int group_id = 0;
  int crop_size = 0;
};

inline double structure_score(const Image& pseudo_moire, const Image& moire_free) {
  if (!pseudo_moire.same_shape(moire_free)) {
    throw std::invalid_argument("structure score needs equal shapes: " + pseudo_moire.shape_str() + " vs " +
                                moire_free.shape_str());
  }
  return edge_difference(edge_map(pseudo_moire), edge_map(moire_free));
}

/// Value at 1-based rank ceil(gamma/100 * n) of the ascending sample.
inline double nearest_rank_percentile(std::vector<double> values, int gamma_percent) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty sample");
  if (gamma_percent <= 0 || gamma_percent > 100) {
    throw UsageError("gamma must be in (0, 100], got " + std::to_string(gamma_percent));
  }
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  std::size_t rank = (static_cast<std::size_t>(gamma_percent) * n + 99) / 100;
  rank = std::clamp<std::size_t>(rank, 1, n);
  return values[rank - 1];
}

struct ThresholdEntry {
  int gamma_percent = 0;
  double threshold_value = 0.0;
  int sample_count = 0;
};

/// (group_id, crop_size) -> threshold. Persisted as "key = value" lines.
class ThresholdTable {
 public:
  void set(int group_id, int crop_size, ThresholdEntry e) { entries_[{group_id, crop_size}] = e; }

  bool contains(int group_id, int crop_size) const { return entries_.count({group_id, crop_size}) > 0; }

  const ThresholdEntry& at(int group_id, int crop_size) const {
    const auto it = entries_.find({group_id, crop_size});
    if (it == entries_.end()) {
      throw DataError("no denoise threshold for group " + std::to_string(group_id) + " at crop " +
                      std::to_string(crop_size));
    }
    return it->second;
  }

  std::size_t size() const { return entries_.size(); }
  const std::map<std::pair<int, int>, ThresholdEntry>& entries() const { return entries_; }

  std::string to_text() const {
    std::ostringstream os;
    os << "# adaptive denoise thresholds\n";
    char buf[64];
    for (const auto& [key, e] : entries_) {
      const std::string prefix = "group." + std::to_string(key.first) + ".crop." + std::to_string(key.second) + ".";
      std::snprintf(buf, sizeof buf, "%.17g", e.threshold_value);
      os << prefix << "gamma_percent = " << e.gamma_percent << "\n";
      os << prefix << "threshold = " << buf << "\n";
      os << prefix << "sample_count = " << e.sample_count << "\n";
    }
    return os.str();
  }

  static ThresholdTable from_text(const std::string& text) {
    ThresholdTable t;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      const auto eq = line.find('=');
      int group = 0, crop = 0;
      char field[32] = {0};
      if (eq == std::string::npos ||
          std::sscanf(line.c_str(), "group.%d.crop.%d.%31[a-z_]", &group, &crop, field) != 3) {
        throw DataError("malformed threshold line " + std::to_string(lineno) + ": " + line);
      }
      const std::string value = line.substr(eq + 1);
      auto& e = t.entries_[{group, crop}];
      const std::string f(field);
      try {
        if (f == "gamma_percent") e.gamma_percent = std::stoi(value);
        else if (f == "threshold") e.threshold_value = std::stod(value);
        else if (f == "sample_count") e.sample_count = std::stoi(value);
        else throw DataError("unknown threshold field '" + f + "'");
      } catch (const std::logic_error&) {
        throw DataError("bad value on threshold line " + std::to_string(lineno) + ": " + line);
      }
    }
    return t;
  }

  void save(const fs::path& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot write " + path.string());
    os << to_text();
  }

  static ThresholdTable load(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("missing artifact: " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return from_text(ss.str());
  }

 private:
  std::map<std::pair<int, int>, ThresholdEntry> entries_;
};

/// Keep iff score <= threshold.
inline bool accept_pair(const StructureScore& score, const ThresholdTable& table) {
  return score.value <= table.at(score.group_id, score.crop_size).threshold_value;
}

/// One synthesized candidate pair with provenance.
struct ScoredSample {
  Image pseudo_moire;
  Image moire_free;
  std::string moire_ref;
  std::string free_ref;
  std::string moire_source;
  std::string free_source;
  double score = 0.0;
};

/// Draws `count` unpaired (p^m, p^f) crops in sequence, synthesizes them in
/// batches and scores each against its moire-free crop.
template <typename T>
std::vector<ScoredSample> synthesize_scored(const SynthesisBundle<T>& bundle, const std::vector<Patch>& moire_group,
                                            const std::vector<Patch>& free_set, int count, std::mt19937_64& rng,
                                            int batch = 8) {
  std::vector<ScoredSample> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  std::vector<Image> moire_crops;
  std::vector<Image> free_crops;
  auto flush = [&] {
    if (moire_crops.empty()) return;
    const Tensor<T> pseudo = synthesize(bundle, to_tensor<T>(std::span<const Image>(moire_crops)),
                                        to_tensor<T>(std::span<const Image>(free_crops)));
    const std::size_t base = out.size() - moire_crops.size();
    for (std::size_t i = 0; i < moire_crops.size(); ++i) {
      auto& s = out[base + i];
      s.pseudo_moire = from_tensor(pseudo, static_cast<int>(i));
      s.moire_free = std::move(free_crops[i]);
      s.score = structure_score(s.pseudo_moire, s.moire_free);
    }
    moire_crops.clear();
    free_crops.clear();
  };
  for (int i = 0; i < count; ++i) {
    const auto [m, f] = sample_unpaired_indices(moire_group, free_set, rng);
    moire_crops.push_back(random_crop(moire_group[m], bundle.crop_size, rng).pixels);
    free_crops.push_back(random_crop(free_set[f], bundle.crop_size, rng).pixels);
    ScoredSample s;
    s.moire_ref = moire_group[m].id();
    s.free_ref = free_set[f].id();
    s.moire_source = moire_group[m].source_id;
    s.free_source = free_set[f].source_id;
    out.push_back(std::move(s));
    if (static_cast<int>(moire_crops.size()) == batch) flush();
  }
  flush();
  return out;
}

/// Threshold at the gamma-th nearest-rank percentile of `n_samples` freshly
/// synthesized pair scores (drawn with replacement).
template <typename T>
ThresholdEntry calibrate_threshold(const SynthesisBundle<T>& bundle, const std::vector<Patch>& moire_group,
                                   const std::vector<Patch>& free_set, int gamma_percent, int n_samples,
                                   std::mt19937_64& rng) {
  if (n_samples < kMinCalibrationSamples) {
    throw UsageError("calibration needs at least " + std::to_string(kMinCalibrationSamples) + " samples, got " +
                     std::to_string(n_samples));
  }
  const auto samples = synthesize_scored(bundle, moire_group, free_set, n_samples, rng);
  std::vector<double> scores;
  scores.reserve(samples.size());
  for (const auto& s : samples) scores.push_back(s.score);
  return ThresholdEntry{gamma_percent, nearest_rank_percentile(std::move(scores), gamma_percent), n_samples};
}

}  // namespace undem

#endif  // UNDEM_DENOISE_HPP
