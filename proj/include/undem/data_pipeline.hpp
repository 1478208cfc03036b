#ifndef UNDEM_DATA_PIPELINE_HPP
#define UNDEM_DATA_PIPELINE_HPP

// Corpus ingestion, grid splitting into patches, random crops and unpaired
// sampling, plus the on-disk patch store (PNG files + JSON manifest).

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "undem/error.hpp"
#include "undem/image.hpp"
#include "undem/image_io.hpp"

namespace undem {

namespace fs = std::filesystem;

enum class Role { moire, moire_free };

inline std::string to_string(Role r) { return r == Role::moire ? "moire" : "moire_free"; }

inline Role parse_role(const std::string& s) {
  if (s == "moire") return Role::moire;
  if (s == "moire_free") return Role::moire_free;
  throw DataError("unknown role '" + s + "'");
}

/// Smallest accepted side of an ingested image; equals the smallest standard crop size.
inline constexpr int kMinImageSide = 192;

struct ImageRecord {
  std::string id;
  Image pixels;
  Role role = Role::moire;
};

struct Patch {
  Image pixels;
  std::string source_id;
  int grid_index = 0;
  Role role = Role::moire;

  int height() const { return pixels.height(); }
  int width() const { return pixels.width(); }
  /// Stable identifier, unique within one role.
  std::string id() const { return source_id + "_g" + std::to_string(grid_index); }
};

inline bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

/// Image files of a directory in lexicographic filename order.
inline std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("image directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && has_image_extension(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  if (files.empty()) throw DataError("no PNG/JPEG images in " + dir.string());
  return files;
}

inline std::vector<ImageRecord> load_image_set(const fs::path& dir, Role role, int min_side = kMinImageSide) {
  std::vector<ImageRecord> records;
  for (const auto& file : list_images(dir)) {
    ImageRecord rec{file.stem().string(), read_image(file), role};
    if (rec.pixels.height() < min_side || rec.pixels.width() < min_side) {
      throw DataError("image " + file.string() + " is " + rec.pixels.shape_str() + ", smaller than the " +
                      std::to_string(min_side) + "px minimum");
    }
    if (!rec.pixels.in_unit_range()) throw DataError("image " + file.string() + " has values outside [0,1]");
    records.push_back(std::move(rec));
  }
  return records;
}

struct GridLayout {
  int cols = 0;
  int rows = 0;
};

/// 8 cells -> 4 x 2, 6 cells -> 3 x 2.
inline GridLayout grid_for_cells(int cells) {
  switch (cells) {
    case 8: return {4, 2};
    case 6: return {3, 2};
    default: throw UsageError("patch grid must have 6 or 8 cells, got " + std::to_string(cells));
  }
}

/// Non-overlapping row-major tiling; the right/bottom remainder is truncated.
inline std::vector<Patch> split_into_patches(const ImageRecord& image, int cells, int min_patch_side = 16) {
  const GridLayout g = grid_for_cells(cells);
  const int ph = image.pixels.height() / g.rows;
  const int pw = image.pixels.width() / g.cols;
  if (ph < min_patch_side || pw < min_patch_side) {
    throw DataError("image '" + image.id + "' (" + image.pixels.shape_str() + ") too small for a " +
                    std::to_string(g.cols) + "x" + std::to_string(g.rows) + " grid");
  }
  std::vector<Patch> patches;
  patches.reserve(static_cast<std::size_t>(cells));
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      patches.push_back(Patch{image.pixels.crop(r * ph, c * pw, ph, pw), image.id, r * g.cols + c, image.role});
    }
  }
  return patches;
}

/// size x size window at a uniformly random offset.
inline Patch random_crop(const Patch& patch, int size, std::mt19937_64& rng) {
  if (size < 1 || patch.height() < size || patch.width() < size) {
    throw DataError("patch " + patch.id() + " (" + patch.pixels.shape_str() + ") smaller than crop " +
                    std::to_string(size));
  }
  std::uniform_int_distribution<int> dy(0, patch.height() - size);
  std::uniform_int_distribution<int> dx(0, patch.width() - size);
  const int y0 = dy(rng);
  const int x0 = dx(rng);
  return Patch{patch.pixels.crop(y0, x0, size, size), patch.source_id, patch.grid_index, patch.role};
}

/// Index of a uniformly chosen moire-free patch whose source differs from `moire`'s,
/// or -1 when none exists.
inline long sample_free_partner(const Patch& moire, const std::vector<Patch>& free_set, std::mt19937_64& rng) {
  if (free_set.empty()) return -1;
  std::uniform_int_distribution<std::size_t> pick(0, free_set.size() - 1);
  for (int attempt = 0; attempt < 64; ++attempt) {
    const std::size_t f = pick(rng);
    if (free_set[f].source_id != moire.source_id) return static_cast<long>(f);
  }
  std::vector<std::size_t> partners;
  for (std::size_t j = 0; j < free_set.size(); ++j) {
    if (free_set[j].source_id != moire.source_id) partners.push_back(j);
  }
  if (partners.empty()) return -1;
  return static_cast<long>(partners[std::uniform_int_distribution<std::size_t>(0, partners.size() - 1)(rng)]);
}

/// Indices (moire, free) whose patches come from different source images.
inline std::pair<std::size_t, std::size_t> sample_unpaired_indices(const std::vector<Patch>& moire_group,
                                                                   const std::vector<Patch>& free_set,
                                                                   std::mt19937_64& rng) {
  if (moire_group.empty() || free_set.empty()) throw DataError("unpaired sampling from an empty patch set");
  const std::size_t m = std::uniform_int_distribution<std::size_t>(0, moire_group.size() - 1)(rng);
  if (const long f = sample_free_partner(moire_group[m], free_set, rng); f >= 0) {
    return {m, static_cast<std::size_t>(f)};
  }
  // `m` has no partner: draw uniformly among moire patches that do.
  std::vector<std::size_t> viable;
  for (std::size_t i = 0; i < moire_group.size(); ++i) {
    const bool ok = std::any_of(free_set.begin(), free_set.end(),
                                [&](const Patch& p) { return p.source_id != moire_group[i].source_id; });
    if (ok) viable.push_back(i);
  }
  if (viable.empty()) throw DataError("no moire/moire-free patches come from distinct source images");
  const std::size_t mi = viable[std::uniform_int_distribution<std::size_t>(0, viable.size() - 1)(rng)];
  return {mi, static_cast<std::size_t>(sample_free_partner(moire_group[mi], free_set, rng))};
}

inline std::pair<Patch, Patch> sample_unpaired(const std::vector<Patch>& moire_group,
                                               const std::vector<Patch>& free_set, std::mt19937_64& rng) {
  const auto [m, f] = sample_unpaired_indices(moire_group, free_set, rng);
  return {moire_group[m], free_set[f]};
}

// --- patch store ---------------------------------------------------------------

struct PatchStore {
  std::vector<Patch> moire;
  std::vector<Patch> free;
  std::string config_hash;
};

inline std::string role_dir(Role r) { return r == Role::moire ? "moire" : "free"; }

inline void save_patch_store(const fs::path& dir, const PatchStore& store) {
  fs::create_directories(dir / "moire");
  fs::create_directories(dir / "free");
  nlohmann::json records = nlohmann::json::array();
  for (const auto* set : {&store.moire, &store.free}) {
    for (const auto& p : *set) {
      const std::string file = role_dir(p.role) + "/" + p.id() + ".png";
      write_png16(dir / file, p.pixels);
      records.push_back({{"file", file},
                         {"source_id", p.source_id},
                         {"grid_index", p.grid_index},
                         {"role", to_string(p.role)},
                         {"height", p.height()},
                         {"width", p.width()}});
    }
  }
  nlohmann::json manifest{{"config_hash", store.config_hash}, {"patches", records}};
  std::ofstream os(dir / "manifest.json", std::ios::trunc);
  if (!os) throw DataError("cannot write " + (dir / "manifest.json").string());
  os << manifest.dump(1) << "\n";
}

inline nlohmann::json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("missing artifact: " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline PatchStore load_patch_store(const fs::path& dir) {
  const auto manifest = read_json(dir / "manifest.json");
  PatchStore store;
  store.config_hash = manifest.value("config_hash", "");
  for (const auto& rec : manifest.at("patches")) {
    Patch p{read_image(dir / rec.at("file").get<std::string>()), rec.at("source_id").get<std::string>(),
            rec.at("grid_index").get<int>(), parse_role(rec.at("role").get<std::string>())};
    (p.role == Role::moire ? store.moire : store.free).push_back(std::move(p));
  }
  return store;
}

}  // namespace undem

#endif  // UNDEM_DATA_PIPELINE_HPP
