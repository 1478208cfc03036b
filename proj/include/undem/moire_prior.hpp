#ifndef UNDEM_MOIRE_PRIOR_HPP
#define UNDEM_MOIRE_PRIOR_HPP

// Moire complexity priors (Laplacian frequency, colorfulness) and the
// four-way grouping of moire patches built from them.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "undem/data_pipeline.hpp"
#include "undem/image.hpp"

namespace undem {

inline constexpr int kGroupCount = 4;

struct ComplexityScore {
  double frequency = 0.0;
  double colorfulness = 0.0;
  std::string patch_ref;

  double product() const { return frequency * colorfulness; }
  /// F / C, +inf when C == 0.
  double ratio() const {
    return colorfulness == 0.0 ? std::numeric_limits<double>::infinity() : frequency / colorfulness;
  }
};

struct GroupAssignment {
  int group_id = 0;
  std::string patch_ref;
};

/// Mean absolute 3x3 Laplacian response of the luma plane.
inline double laplacian_frequency(const Image& rgb) {
  const Image edges = laplacian(luma(rgb));
  double acc = 0.0;
  for (float v : edges.values()) acc += std::abs(static_cast<double>(v));
  return edges.empty() ? 0.0 : acc / static_cast<double>(edges.size());
}

/// sqrt(var(rg) + var(yb)) + 0.3 sqrt(mean(rg)^2 + mean(yb)^2), rg = R - G, yb = (R + G)/2 - B,
/// population statistics over all pixels.
inline double colorfulness(const Image& rgb) {
  if (rgb.channels() != 3) throw std::invalid_argument("colorfulness expects RGB");
  const std::size_t n = static_cast<std::size_t>(rgb.height()) * rgb.width();
  if (n == 0) return 0.0;
  const float* r = rgb.plane(0);
  const float* g = rgb.plane(1);
  const float* b = rgb.plane(2);
  double sum_rg = 0, sum_yb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sum_rg += static_cast<double>(r[i]) - g[i];
    sum_yb += 0.5 * (static_cast<double>(r[i]) + g[i]) - b[i];
  }
  const double mu_rg = sum_rg / static_cast<double>(n);
  const double mu_yb = sum_yb / static_cast<double>(n);
  double var_rg = 0, var_yb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double rg = static_cast<double>(r[i]) - g[i] - mu_rg;
    const double yb = 0.5 * (static_cast<double>(r[i]) + g[i]) - b[i] - mu_yb;
    var_rg += rg * rg;
    var_yb += yb * yb;
  }
  var_rg /= static_cast<double>(n);
  var_yb /= static_cast<double>(n);
  return std::sqrt(var_rg + var_yb) + 0.3 * std::sqrt(mu_rg * mu_rg + mu_yb * mu_yb);
}

inline ComplexityScore score_patch(const Patch& p) {
  return ComplexityScore{laplacian_frequency(p.pixels), colorfulness(p.pixels), p.id()};
}

/// Group 1: the floor(N/4) smallest F*C. The rest, ascending by F/C: group 2 takes the
/// first floor(N/4), group 3 the next floor(N/4), group 4 the remainder. Ties keep input order.
inline std::vector<GroupAssignment> group_patches(const std::vector<ComplexityScore>& scores) {
  const std::size_t n = scores.size();
  if (n < kGroupCount) {
    throw DataError("grouping needs at least " + std::to_string(kGroupCount) + " patches, got " + std::to_string(n));
  }
  const std::size_t quarter = n / kGroupCount;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a].product() < scores[b].product(); });

  std::vector<int> group(n, 0);
  for (std::size_t i = 0; i < quarter; ++i) group[order[i]] = 1;

  std::vector<std::size_t> rest;
  rest.reserve(n - quarter);
  for (std::size_t i = 0; i < n; ++i) {
    if (group[i] == 0) rest.push_back(i);
  }
  std::stable_sort(rest.begin(), rest.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a].ratio() < scores[b].ratio(); });
  for (std::size_t i = 0; i < rest.size(); ++i) {
    group[rest[i]] = i < quarter ? 2 : (i < 2 * quarter ? 3 : 4);
  }

  std::vector<GroupAssignment> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back({group[i], scores[i].patch_ref});
  return out;
}

/// Moire patches of one group, in store order.
inline std::vector<Patch> select_group(const std::vector<Patch>& moire, const std::vector<GroupAssignment>& groups,
                                       int group_id) {
  if (moire.size() != groups.size()) throw DataError("grouping manifest does not match the moire patch store");
  std::vector<Patch> out;
  for (std::size_t i = 0; i < moire.size(); ++i) {
    if (groups[i].patch_ref != moire[i].id()) {
      throw DataError("grouping manifest entry '" + groups[i].patch_ref + "' does not match patch '" + moire[i].id() + "'");
    }
    if (groups[i].group_id == group_id) out.push_back(moire[i]);
  }
  return out;
}

// --- grouping manifest ---------------------------------------------------------
// f_over_c is written as null when colorfulness is zero.

inline nlohmann::json grouping_manifest(const std::vector<ComplexityScore>& scores,
                                        const std::vector<GroupAssignment>& groups, const std::string& config_hash) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double ratio = scores[i].ratio();
    rows.push_back({{"patch", scores[i].patch_ref},
                    {"frequency", scores[i].frequency},
                    {"colorfulness", scores[i].colorfulness},
                    {"f_times_c", scores[i].product()},
                    {"f_over_c", std::isinf(ratio) ? nlohmann::json(nullptr) : nlohmann::json(ratio)},
                    {"group_id", groups[i].group_id}});
  }
  return {{"config_hash", config_hash}, {"groups", kGroupCount}, {"patches", rows}};
}

inline std::vector<GroupAssignment> parse_grouping_manifest(const nlohmann::json& manifest) {
  std::vector<GroupAssignment> out;
  for (const auto& row : manifest.at("patches")) {
    const int g = row.at("group_id").get<int>();
    if (g < 1 || g > kGroupCount) throw DataError("grouping manifest has group_id " + std::to_string(g));
    out.push_back({g, row.at("patch").get<std::string>()});
  }
  return out;
}

}  // namespace undem

#endif  // UNDEM_MOIRE_PRIOR_HPP
