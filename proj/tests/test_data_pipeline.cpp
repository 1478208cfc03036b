#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <set>

#include <opencv2/imgcodecs.hpp>

#include "test_util.hpp"
#include "undem/data_pipeline.hpp"

using namespace undem;
using undem::test::random_image;
using undem::test::TempDir;

namespace {

ImageRecord record(const std::string& id, int h, int w, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  return ImageRecord{id, random_image(h, w, rng), Role::moire};
}

std::vector<Patch> patches_from(const std::vector<std::string>& sources, Role role, int size = 8) {
  std::vector<Patch> out;
  std::mt19937_64 rng(5);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    out.push_back(Patch{random_image(size, size, rng), sources[i], static_cast<int>(i), role});
  }
  return out;
}

}  // namespace

TEST(LoadImageSet, ReturnsRecordsInFilenameOrder) {
  TempDir dir("load");
  std::mt19937_64 rng(2);
  for (const char* name : {"c.png", "a.png", "b.png"}) write_png8(dir.path() / name, random_image(200, 210, rng));
  std::ofstream(dir.path() / "notes.txt") << "ignored";
  const auto recs = load_image_set(dir.path(), Role::moire_free);
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].id, "a");
  EXPECT_EQ(recs[1].id, "b");
  EXPECT_EQ(recs[2].id, "c");
  for (const auto& r : recs) {
    EXPECT_EQ(r.role, Role::moire_free);
    EXPECT_TRUE(r.pixels.in_unit_range());
  }
}

TEST(LoadImageSet, EightBitValuesAreDividedBy255) {
  TempDir dir("scale");
  Image img(192, 192, 3, 0.0f);
  img.at(0, 0, 0) = 1.0f;
  img.at(1, 0, 0) = 128.0f / 255.0f;
  write_png8(dir.path() / "x.png", img);
  const auto recs = load_image_set(dir.path(), Role::moire);
  EXPECT_FLOAT_EQ(recs[0].pixels.at(0, 0, 0), 1.0f);
  EXPECT_FLOAT_EQ(recs[0].pixels.at(1, 0, 0), 128.0f / 255.0f);
  EXPECT_FLOAT_EQ(recs[0].pixels.at(2, 0, 0), 0.0f);
}

TEST(LoadImageSet, CorruptFileIsNamed) {
  TempDir dir("corrupt");
  std::mt19937_64 rng(3);
  write_png8(dir.path() / "a.png", random_image(192, 192, rng));
  std::ofstream(dir.path() / "b.png", std::ios::binary) << "not an image at all";
  write_png8(dir.path() / "c.png", random_image(192, 192, rng));
  try {
    load_image_set(dir.path(), Role::moire);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("b.png"), std::string::npos) << e.what();
  }
}

TEST(LoadImageSet, EmptyOrMissingDirectoryFails) {
  TempDir dir("empty");
  EXPECT_THROW(load_image_set(dir.path(), Role::moire), DataError);
  EXPECT_THROW(load_image_set(dir.path() / "nope", Role::moire), DataError);
}

TEST(LoadImageSet, UndersizedImageFails) {
  TempDir dir("small");
  std::mt19937_64 rng(4);
  write_png8(dir.path() / "a.png", random_image(191, 300, rng));
  EXPECT_THROW(load_image_set(dir.path(), Role::moire), DataError);
}

TEST(LoadImageSet, JpegShapePassesThrough) {
  TempDir dir("jpeg");
  cv::Mat m(1080, 1920, CV_8UC3, cv::Scalar(10, 200, 30));
  ASSERT_TRUE(cv::imwrite((dir.path() / "frame.jpg").string(), m));
  const auto recs = load_image_set(dir.path(), Role::moire);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].pixels.height(), 1080);
  EXPECT_EQ(recs[0].pixels.width(), 1920);
  // BGR on disk, RGB in memory.
  EXPECT_GT(recs[0].pixels.at(1, 5, 5), recs[0].pixels.at(0, 5, 5));
  EXPECT_GT(recs[0].pixels.at(0, 5, 5), recs[0].pixels.at(2, 5, 5));
}

TEST(SplitIntoPatches, EightCellsOfFullHd) {
  const auto patches = split_into_patches(record("img", 1080, 1920), 8);
  ASSERT_EQ(patches.size(), 8u);
  for (const auto& p : patches) {
    EXPECT_EQ(p.width(), 480);
    EXPECT_EQ(p.height(), 540);
  }
}

TEST(SplitIntoPatches, SixCellsOf4k) {
  const auto patches = split_into_patches(record("img", 216, 384), 6);
  ASSERT_EQ(patches.size(), 6u);
  EXPECT_EQ(patches[0].width(), 128);
  EXPECT_EQ(patches[0].height(), 108);
  // Full 3840x2160 case on the geometry alone.
  EXPECT_EQ(3840 / grid_for_cells(6).cols, 1280);
  EXPECT_EQ(2160 / grid_for_cells(6).rows, 1080);
}

TEST(SplitIntoPatches, RowMajorDisjointTilingOfTruncatedImage) {
  const ImageRecord img = record("img", 203, 410, 9);
  for (int cells : {6, 8}) {
    const GridLayout g = grid_for_cells(cells);
    const auto patches = split_into_patches(img, cells);
    const int ph = 203 / g.rows, pw = 410 / g.cols;
    long area = 0;
    for (std::size_t i = 0; i < patches.size(); ++i) {
      const auto& p = patches[i];
      EXPECT_EQ(p.grid_index, static_cast<int>(i));
      EXPECT_LT(p.grid_index, cells);
      EXPECT_EQ(p.source_id, "img");
      area += static_cast<long>(p.height()) * p.width();
      const int r = p.grid_index / g.cols, c = p.grid_index % g.cols;
      EXPECT_EQ(p.pixels, img.pixels.crop(r * ph, c * pw, ph, pw));
    }
    EXPECT_EQ(area, static_cast<long>(g.rows * ph) * (g.cols * pw));
  }
}

TEST(SplitIntoPatches, RejectsTinyImagesAndBadCellCounts) {
  EXPECT_THROW(split_into_patches(record("t", 20, 40), 8), DataError);
  EXPECT_THROW(split_into_patches(record("t", 400, 400), 5), UsageError);
}

TEST(RandomCrop, ShapeDeterminismAndZeroSlack) {
  const Patch p{record("s", 540, 480).pixels, "s", 0, Role::moire};
  std::mt19937_64 a(11), b(11);
  const Patch ca = random_crop(p, 384, a);
  const Patch cb = random_crop(p, 384, b);
  EXPECT_EQ(ca.height(), 384);
  EXPECT_EQ(ca.width(), 384);
  EXPECT_EQ(ca.pixels, cb.pixels);

  const Patch sq{record("q", 192, 192).pixels, "q", 1, Role::moire};
  std::mt19937_64 r(3);
  EXPECT_EQ(random_crop(sq, 192, r).pixels, sq.pixels);
  EXPECT_THROW(random_crop(sq, 384, r), DataError);
}

TEST(RandomCrop, OffsetsCoverEveryPosition) {
  Image img(10, 10, 3);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) img.at(0, y, x) = static_cast<float>(y * 10 + x) / 100.0f;
  const Patch p{img, "s", 0, Role::moire};
  std::mt19937_64 rng(4);
  std::set<float> corners;
  for (int i = 0; i < 2000; ++i) corners.insert(random_crop(p, 8, rng).pixels.at(0, 0, 0));
  EXPECT_EQ(corners.size(), 9u);
}

TEST(SampleUnpaired, SourcesAlwaysDiffer) {
  const auto moire = patches_from({"a", "a", "b", "c"}, Role::moire);
  const auto free = patches_from({"a", "b", "c", "d", "b"}, Role::moire_free);
  std::mt19937_64 rng(8);
  for (int i = 0; i < 10000; ++i) {
    const auto [m, f] = sample_unpaired(moire, free, rng);
    ASSERT_NE(m.source_id, f.source_id);
  }
}

TEST(SampleUnpaired, SingleSharedSourceFails) {
  const auto moire = patches_from({"x", "x"}, Role::moire);
  const auto free = patches_from({"x"}, Role::moire_free);
  std::mt19937_64 rng(1);
  EXPECT_THROW(sample_unpaired(moire, free, rng), DataError);
  EXPECT_THROW(sample_unpaired({}, free, rng), DataError);
}

TEST(SampleUnpaired, FallsBackToViableMoirePatches) {
  // Only the "b" moire patch has a partner.
  const auto moire = patches_from({"a", "b"}, Role::moire);
  const auto free = patches_from({"a"}, Role::moire_free);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_unpaired(moire, free, rng).first.source_id, "b");
}

TEST(SampleUnpaired, DeterministicForSameSeed) {
  const auto moire = patches_from({"a", "b", "c", "d"}, Role::moire);
  const auto free = patches_from({"a", "b", "c", "d"}, Role::moire_free);
  std::mt19937_64 r1(77), r2(77);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sample_unpaired_indices(moire, free, r1), sample_unpaired_indices(moire, free, r2));
}

TEST(PatchStore, RoundTripsLosslessly) {
  TempDir dir("store");
  PatchStore s;
  s.config_hash = "abc";
  const auto rec = record("src", 192, 256, 21);
  s.moire = split_into_patches(rec, 8);
  ImageRecord fr = record("free0", 192, 192, 22);
  fr.role = Role::moire_free;
  s.free = split_into_patches(fr, 6);
  // 8-bit-representable values survive the 16-bit store exactly.
  for (auto* set : {&s.moire, &s.free})
    for (auto& p : *set)
      for (auto& v : p.pixels.values()) v = std::round(v * 255.0f) / 255.0f;
  save_patch_store(dir.path(), s);
  const PatchStore back = load_patch_store(dir.path());
  EXPECT_EQ(back.config_hash, "abc");
  ASSERT_EQ(back.moire.size(), s.moire.size());
  ASSERT_EQ(back.free.size(), s.free.size());
  for (std::size_t i = 0; i < s.moire.size(); ++i) {
    EXPECT_EQ(back.moire[i].id(), s.moire[i].id());
    for (std::size_t j = 0; j < s.moire[i].pixels.size(); ++j) {
      ASSERT_NEAR(back.moire[i].pixels.values()[j], s.moire[i].pixels.values()[j], 1e-6f);
    }
  }
  EXPECT_EQ(back.free[0].role, Role::moire_free);
}

TEST(PatchStore, MissingManifestIsDataError) {
  TempDir dir("nostore");
  EXPECT_THROW(load_patch_store(dir.path()), DataError);
}
