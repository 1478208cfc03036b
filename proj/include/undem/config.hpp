#ifndef UNDEM_CONFIG_HPP
#define UNDEM_CONFIG_HPP

// Run configuration: a JSON document with every default inlined, user overrides
// merged on top, and a SHA-256 fingerprint stamped into every artifact.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "undem/demoire.hpp"
#include "undem/error.hpp"
#include "undem/synthesis.hpp"

namespace undem {

inline nlohmann::json default_config() {
  return nlohmann::json::parse(R"({
  "data": {
    "moire_dir": "data/train/moire",
    "free_dir": "data/train/free",
    "grid_cells": 8
  },
  "crop_size": 192,
  "groups": 4,
  "gamma": [50, 40, 30, 20],
  "n_calibration": 6400,
  "retry_cap": 16,
  "seed": 0,
  "synthesis": {
    "epochs": 100,
    "batch_size": 4,
    "iterations_per_epoch": 0,
    "lr": 0.0002,
    "beta1": 0.9,
    "beta2": 0.999,
    "arch": {
      "encoder_channels": 16,
      "generator_channels": 128,
      "residual_blocks": 9,
      "discriminator_channels": [64, 128, 256, 256],
      "content_skip": true,
      "init_std": 0.02
    }
  },
  "pairs": {
    "count": 1000
  },
  "demoire": {
    "model": "baseline",
    "epochs": 150,
    "steps": 0,
    "batch_size": 4,
    "crop_size": 0,
    "lr": 0.0002,
    "beta1": 0.9,
    "beta2": 0.999,
    "checkpoint_every": 0
  },
  "evaluate": {
    "moire_dir": "data/test/moire",
    "free_dir": "data/test/free"
  },
  "out": "runs/default"
})");
}

/// Crop sizes accepted from the command line.
inline constexpr std::array<int, 3> kStandardCropSizes{192, 384, 768};

namespace detail {

/// Recursively checks that `user` only names keys present in `defaults`.
inline void check_known_keys(const nlohmann::json& defaults, const nlohmann::json& user, const std::string& path) {
  if (!user.is_object()) return;
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!defaults.contains(it.key())) throw UsageError("unknown config key '" + key + "'");
    if (defaults.at(it.key()).is_object()) {
      if (!it.value().is_object()) throw UsageError("config key '" + key + "' must be an object");
      check_known_keys(defaults.at(it.key()), it.value(), key);
    }
  }
}

inline std::string sha256_hex(const std::string& text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

}  // namespace detail

class RunConfig {
 public:
  RunConfig() : json_(default_config()) {}

  /// Defaults with `overrides` merged on top; unknown keys are rejected.
  static RunConfig from_json(const nlohmann::json& overrides) {
    RunConfig c;
    if (!overrides.is_null()) {
      if (!overrides.is_object()) throw UsageError("config must be a JSON object");
      detail::check_known_keys(c.json_, overrides, "");
      c.json_.merge_patch(overrides);
    }
    c.validate();
    return c;
  }

  static RunConfig load(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw UsageError("cannot open config file " + path.string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
      throw UsageError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j);
  }

  void set(const nlohmann::json::json_pointer& key, nlohmann::json value) {
    json_[key] = std::move(value);
    validate();
  }

  const nlohmann::json& json() const { return json_; }

  /// SHA-256 of the canonical (sorted-key) dump, ignoring "out" and "evaluate".
  std::string hash() const {
    nlohmann::json j = json_;
    j.erase("out");
    j.erase("evaluate");
    return detail::sha256_hex(j.dump());
  }

  fs::path out_dir() const { return json_.at("out").get<std::string>(); }
  fs::path moire_dir() const { return json_.at("/data/moire_dir"_json_pointer).get<std::string>(); }
  fs::path free_dir() const { return json_.at("/data/free_dir"_json_pointer).get<std::string>(); }
  fs::path test_moire_dir() const { return json_.at("/evaluate/moire_dir"_json_pointer).get<std::string>(); }
  fs::path test_free_dir() const { return json_.at("/evaluate/free_dir"_json_pointer).get<std::string>(); }
  int grid_cells() const { return json_.at("/data/grid_cells"_json_pointer).get<int>(); }
  int crop_size() const { return json_.at("crop_size").get<int>(); }
  std::uint64_t seed() const { return json_.at("seed").get<std::uint64_t>(); }
  int gamma(int group_id) const { return json_.at("gamma").at(static_cast<std::size_t>(group_id - 1)).get<int>(); }
  int n_calibration() const { return json_.at("n_calibration").get<int>(); }
  int retry_cap() const { return json_.at("retry_cap").get<int>(); }
  int pair_count() const { return json_.at("/pairs/count"_json_pointer).get<int>(); }
  std::string demoire_model() const { return json_.at("/demoire/model"_json_pointer).get<std::string>(); }

  SynthesisTrainConfig synthesis(int group_id) const {
    const auto& s = json_.at("synthesis");
    SynthesisTrainConfig c;
    c.arch = arch_from_json(s.at("arch"));
    c.crop_size = crop_size();
    c.epochs = s.at("epochs").get<int>();
    c.batch_size = s.at("batch_size").get<int>();
    c.iterations_per_epoch = s.at("iterations_per_epoch").get<int>();
    c.adam = {s.at("lr").get<double>(), s.at("beta1").get<double>(), s.at("beta2").get<double>(), 1e-8};
    // Independent stream per group.
    c.seed = seed() * 1000003ULL + static_cast<std::uint64_t>(group_id);
    c.config_hash = hash();
    return c;
  }

  DemoireTrainConfig demoire() const {
    const auto& d = json_.at("demoire");
    DemoireTrainConfig c;
    c.steps = d.at("steps").get<int>();
    c.epochs = d.at("epochs").get<int>();
    c.batch_size = d.at("batch_size").get<int>();
    c.crop_size = d.at("crop_size").get<int>();
    c.adam = {d.at("lr").get<double>(), d.at("beta1").get<double>(), d.at("beta2").get<double>(), 1e-8};
    c.seed = seed() * 1000003ULL + 97;
    c.checkpoint_every = d.at("checkpoint_every").get<int>();
    c.config_hash = hash();
    return c;
  }

 private:
  void validate() const {
    try {
      validate_crop_size(crop_size());
      if (json_.at("groups").get<int>() != kGroupCount) throw UsageError("groups must be 4");
      const auto& g = json_.at("gamma");
      if (!g.is_array() || g.size() != kGroupCount) throw UsageError("gamma must list 4 percentiles");
      for (const auto& v : g) {
        const int p = v.get<int>();
        if (p <= 0 || p > 100) throw UsageError("gamma values must be in (0, 100]");
      }
      if (n_calibration() < kMinCalibrationSamples) {
        throw UsageError("n_calibration must be at least " + std::to_string(kMinCalibrationSamples));
      }
      if (retry_cap() < 1) throw UsageError("retry_cap must be at least 1");
      if (pair_count() < 1) throw UsageError("pairs.count must be at least 1");
      grid_for_cells(grid_cells());
      if (json_.at("/synthesis/epochs"_json_pointer).get<int>() < 1) throw UsageError("synthesis.epochs must be >= 1");
      if (json_.at("/synthesis/batch_size"_json_pointer).get<int>() < 1) throw UsageError("synthesis.batch_size must be >= 1");
      if (json_.at("/demoire/batch_size"_json_pointer).get<int>() < 1) throw UsageError("demoire.batch_size must be >= 1");
      seed();
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(std::string("bad config value: ") + e.what());
    }
  }

  nlohmann::json json_;
};

}  // namespace undem

#endif  // UNDEM_CONFIG_HPP
