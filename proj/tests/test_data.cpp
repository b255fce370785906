#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "oracles.hpp"
#include "resseg/augment.hpp"
#include "resseg/image_io.hpp"
#include "resseg/losses.hpp"
#include "resseg/patches.hpp"
#include "resseg/synth.hpp"
#include "resseg/tta.hpp"

using namespace resseg;
namespace fs = std::filesystem;

namespace {

Tensor<float> random_image(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return oracle::random_tensor(s, rng, 0, 1).cast<float>();
}

/// Replays a fixed list of draws, then returns `tail` forever.
class ScriptedSource final : public UniformSource {
 public:
  ScriptedSource(std::vector<double> script, double tail) : script_(std::move(script)), tail_(tail) {}
  double uniform() override { return next_ < script_.size() ? script_[next_++] : tail_; }

 private:
  std::vector<double> script_;
  std::size_t next_ = 0;
  double tail_;
};

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("resseg_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

class PatchRoundTrip : public ::testing::TestWithParam<std::tuple<int, int>> {};

TEST_P(PatchRoundTrip, StitchInvertsExtract) {
  const auto [h, w] = GetParam();
  const Tensor<float> x = random_image(Shape{1, 3, h, w}, h * 1000 + w);
  const PatchSet set = extract_patches(x);
  const int rows = (h + 223) / 224, cols = (w + 223) / 224;
  EXPECT_EQ(set.grid.count(), static_cast<std::size_t>(rows * cols));
  EXPECT_EQ(set.grid.padded_height, rows * 224);
  EXPECT_EQ(set.grid.padded_width, cols * 224);
  const Tensor<float> y = stitch_patches(set.patches, set.grid);
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_EQ(y.values(), x.values());
}

INSTANTIATE_TEST_SUITE_P(Extents, PatchRoundTrip,
                         ::testing::Combine(::testing::Values(1, 223, 224, 225, 448, 512),
                                            ::testing::Values(1, 223, 224, 225, 448, 512)));

TEST(Patches, FiveTwelveGivesNinePaddedTiles) {
  const Tensor<float> x = random_image(Shape{1, 1, 512, 512}, 1);
  const PatchSet set = extract_patches(x);
  EXPECT_EQ(set.grid.count(), 9u);
  EXPECT_EQ(set.grid.padded_height, 672);
  EXPECT_EQ(set.grid.origins[4], (std::pair{224, 224}));
  // Bottom-right tile holds 64x64 of image and zeros elsewhere.
  const Tensor<float>& last = set.patches[8];
  EXPECT_EQ(last(0, 0, 63, 63), x(0, 0, 511, 511));
  EXPECT_EQ(last(0, 0, 64, 0), 0.0f);
  EXPECT_EQ(last(0, 0, 0, 64), 0.0f);
}

TEST(Patches, TallImageSplitsIntoTwoStackedTiles) {
  const Tensor<float> x = random_image(Shape{1, 2, 448, 224}, 2);
  const PatchSet set = extract_patches(x);
  ASSERT_EQ(set.grid.count(), 2u);
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 448; ++y)
      for (int xx = 0; xx < 224; ++xx) ASSERT_EQ(set.patches[y / 224](0, c, y % 224, xx), x(0, c, y, xx));
}

TEST(Patches, SingleTileAndConstantPatches) {
  const Tensor<float> x = random_image(Shape{1, 3, 224, 224}, 3);
  const PatchSet one = extract_patches(x);
  ASSERT_EQ(one.grid.count(), 1u);
  EXPECT_EQ(one.patches[0].values(), x.values());

  const PatchGrid grid = PatchGrid::make(300, 500);
  std::vector<Tensor<float>> patches(grid.count(), Tensor<float>(Shape{1, 1, 224, 224}, 0.25f));
  const Tensor<float> y = stitch_patches(patches, grid);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 300, 500}));
  for (float v : y.values()) EXPECT_EQ(v, 0.25f);
}

TEST(Patches, StitchRejectsWrongCountOrShape) {
  const PatchGrid grid = PatchGrid::make(448, 224);
  std::vector<Tensor<float>> one(1, Tensor<float>(Shape{1, 1, 224, 224}));
  EXPECT_THROW(stitch_patches(one, grid), ShapeError);
  std::vector<Tensor<float>> bad{Tensor<float>(Shape{1, 1, 224, 224}), Tensor<float>(Shape{1, 1, 224, 223})};
  EXPECT_THROW(stitch_patches(bad, grid), ShapeError);
}

TEST(Dihedral, EveryTransformHasAnExactInverseInTheGroup) {
  const Tensor<float> x = random_image(Shape{2, 3, 5, 7}, 4);
  const auto& group = dihedral_group();
  for (const auto& d : group) {
    EXPECT_NE(std::find(group.begin(), group.end(), d.inverse()), group.end()) << d.name();
    EXPECT_EQ(apply_dihedral(apply_dihedral(x, d), d.inverse()).values(), x.values()) << d.name();
    EXPECT_EQ(apply_dihedral(apply_dihedral(x, d.inverse()), d).values(), x.values()) << d.name();
  }
}

TEST(Dihedral, GroupElementsAreDistinctAndNamed) {
  const Tensor<float> x = random_image(Shape{1, 1, 4, 4}, 5);
  std::vector<std::vector<float>> images;
  std::set<std::string> names;
  for (const auto& d : dihedral_group()) {
    images.push_back(apply_dihedral(x, d).values());
    names.insert(d.name());
  }
  std::sort(images.begin(), images.end());
  EXPECT_EQ(std::unique(images.begin(), images.end()), images.end());
  EXPECT_EQ(names.size(), 8u);
}

TEST(Dihedral, Rot90IsCounterClockwiseQuarterTurn) {
  const Tensor<float> x(Shape{1, 1, 2, 3}, {1, 2, 3, 4, 5, 6});
  const auto r = apply_dihedral(x, dihedral_group()[5]);
  EXPECT_EQ(r.shape(), (Shape{1, 1, 3, 2}));
  EXPECT_EQ(r.values(), (std::vector<float>{3, 6, 2, 5, 1, 4}));
  EXPECT_EQ(dihedral_group()[5].name(), "rot90");
}

TEST(MajorityVote, Counts) {
  const Tensor<float> one(Shape{1, 1, 1, 1}, 1.0f), zero(Shape{1, 1, 1, 1}, 0.0f);
  auto votes = [&](int fg, int total) {
    std::vector<Tensor<float>> v;
    for (int i = 0; i < total; ++i) v.push_back(i < fg ? one : zero);
    return majority_vote(v)[0];
  };
  EXPECT_EQ(votes(8, 8), 1.0f);
  EXPECT_EQ(votes(0, 8), 0.0f);
  EXPECT_EQ(votes(5, 8), 1.0f);
  EXPECT_EQ(votes(4, 8), 1.0f);  // tie goes to foreground
  EXPECT_EQ(votes(3, 8), 0.0f);
  EXPECT_EQ(votes(1, 3), 0.0f);
  EXPECT_EQ(votes(2, 3), 1.0f);
}

TEST(MajorityVote, IdenticalVotesAndPermutationInvariance) {
  std::mt19937_64 rng(6);
  std::vector<Tensor<float>> v;
  for (int i = 0; i < 7; ++i) {
    Tensor<float> t(Shape{1, 1, 6, 6});
    for (auto& x : t.span()) x = static_cast<float>(rng() % 2);
    v.push_back(t);
  }
  const Tensor<float> ref = majority_vote(v);
  for (int k = 0; k < 10; ++k) {
    std::shuffle(v.begin(), v.end(), rng);
    EXPECT_EQ(majority_vote(v).values(), ref.values());
  }
  std::vector<Tensor<float>> same(8, v[0]);
  EXPECT_EQ(majority_vote(same).values(), v[0].values());
}

TEST(MajorityVote, Errors) {
  EXPECT_THROW(majority_vote({}), ShapeError);
  std::vector<Tensor<float>> v{Tensor<float>(Shape{1, 1, 2, 2}), Tensor<float>(Shape{1, 1, 2, 3})};
  EXPECT_THROW(majority_vote(v), ShapeError);
}

TEST(Tta, IdentityEqualsPlainBinarizedPrediction) {
  const Tensor<float> x = random_image(Shape{1, 3, 300, 250}, 7);
  const Predictor model = [](const Tensor<float>& p) {
    Tensor<float> y(Shape{1, 1, p.shape().h, p.shape().w});
    for (int i = 0; i < p.shape().h; ++i)
      for (int j = 0; j < p.shape().w; ++j) y(0, 0, i, j) = p(0, 0, i, j) * 0.5f + p(0, 2, i, j) * 0.5f;
    return y;
  };
  const DihedralTransform id{};
  const Tensor<float> plain = binarize(predict_probabilities(model, x), 0.5);
  EXPECT_EQ(tta_predict(model, x, std::span(&id, 1)).values(), plain.values());
}

TEST(Tta, ConstantModelGivesAllForeground) {
  const Predictor model = [](const Tensor<float>& p) {
    return Tensor<float>(Shape{1, 1, p.shape().h, p.shape().w}, 0.9f);
  };
  const Tensor<float> x = random_image(Shape{1, 3, 230, 300}, 8);
  const Tensor<float> y = tta_predict(model, x, dihedral_group());
  EXPECT_EQ(y.shape(), (Shape{1, 1, 230, 300}));
  for (float v : y.values()) EXPECT_EQ(v, 1.0f);
  EXPECT_THROW(tta_predict(model, x, std::span<const DihedralTransform>{}), ConfigError);
}

TEST(Tta, PositionLookupModelMatchesHandVoteTable) {
  // The "model" marks the top-left 2x2 quadrant of whatever frame it sees.
  const Predictor model = [](const Tensor<float>& p) {
    Tensor<float> y(Shape{1, 1, 4, 4}, 0.1f);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) y(0, 0, i, j) = 0.9f;
    return y;
  };
  const Tensor<float> x(Shape{1, 3, 4, 4});
  const auto& g = dihedral_group();
  // identity votes TL, rot180 votes BR; a 1-1 tie counts as foreground.
  const std::vector<DihedralTransform> two{g[0], g[3]};
  const std::vector<float> two_expected{1, 1, 0, 0,  //
                                        1, 1, 0, 0,  //
                                        0, 0, 1, 1,  //
                                        0, 0, 1, 1};
  EXPECT_EQ(tta_predict(model, x, two, 0.5, 4).values(), two_expected);
  // identity (TL), flip_h (TR), transpose (TL): only TL reaches 2 of 3.
  const std::vector<DihedralTransform> three{g[0], g[2], g[4]};
  const std::vector<float> three_expected{1, 1, 0, 0,  //
                                          1, 1, 0, 0,  //
                                          0, 0, 0, 0,  //
                                          0, 0, 0, 0};
  EXPECT_EQ(tta_predict(model, x, three, 0.5, 4).values(), three_expected);
}

TEST(Tta, EquivariantModelIsUnchangedByFullGroup) {
  // Per-pixel model: dihedral-equivariant, so all 8 votes agree.
  const Predictor model = [](const Tensor<float>& p) {
    Tensor<float> y(Shape{1, 1, p.shape().h, p.shape().w});
    for (int i = 0; i < p.shape().h; ++i)
      for (int j = 0; j < p.shape().w; ++j) y(0, 0, i, j) = p(0, 1, i, j);
    return y;
  };
  const Tensor<float> x = random_image(Shape{1, 3, 224, 224}, 9);
  EXPECT_EQ(tta_predict(model, x, dihedral_group()).values(), binarize(predict_probabilities(model, x), 0.5).values());
}

TEST(Augment, AllGatesClosedIsIdentity) {
  Sample s{random_image(Shape{1, 3, 32, 32}, 10), Tensor<float>(Shape{1, 1, 32, 32})};
  for (int i = 0; i < 100; ++i) s.mask[i * 7] = 1.0f;
  ScriptedSource never({}, 1.0);
  const Sample out = augment_train(s, never);
  EXPECT_EQ(out.image.values(), s.image.values());
  EXPECT_EQ(out.mask.values(), s.mask.values());
}

TEST(Augment, HorizontalFlipReversesColumns) {
  Sample s{random_image(Shape{1, 3, 8, 9}, 11), Tensor<float>(Shape{1, 1, 8, 9})};
  s.mask(0, 0, 2, 1) = 1.0f;
  ScriptedSource flip_only({0.0}, 1.0);
  const Sample out = augment_train(s, flip_only);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 9; ++x) ASSERT_EQ(out.image(0, c, y, x), s.image(0, c, y, 8 - x));
  EXPECT_EQ(out.mask(0, 0, 2, 7), 1.0f);
  EXPECT_EQ(out.mask.sum(), 1.0f);
}

TEST(Augment, KeepsMaskBinaryAndImageInRange) {
  const SynthSample base = synth_sample(12, 64, 64);
  AugmentParams always;
  always.p_affine = always.p_hsv = always.p_blur = always.p_noise = 1.0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Mt64Uniform rng(seed);
    const Sample out = augment_train(base.sample, rng, seed % 2 ? always : AugmentParams{});
    EXPECT_EQ(out.image.shape(), base.sample.image.shape());
    EXPECT_EQ(out.mask.shape(), base.sample.mask.shape());
    for (float v : out.mask.values()) ASSERT_TRUE(v == 0.0f || v == 1.0f);
    for (float v : out.image.values()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
  }
}

TEST(Augment, MedianAndHsvHelpers) {
  Tensor<float> t(Shape{1, 1, 3, 3}, {0, 0, 0, 0, 9, 0, 0, 0, 0});
  EXPECT_EQ(median3x3(t)(0, 0, 1, 1), 0.0f);
  float h, s, v, r, g, b;
  rgb_to_hsv(0.8f, 0.4f, 0.2f, h, s, v);
  hsv_to_rgb(h, s, v, r, g, b);
  EXPECT_NEAR(r, 0.8f, 1e-6);
  EXPECT_NEAR(g, 0.4f, 1e-6);
  EXPECT_NEAR(b, 0.2f, 1e-6);
}

TEST(ImageIo, MaskRoundTripAndRejection) {
  const fs::path dir = scratch("io");
  Tensor<float> m(Shape{1, 1, 5, 4});
  m(0, 0, 1, 2) = 1.0f;
  save_mask(dir / "m.png", m);
  EXPECT_EQ(load_mask(dir / "m.png").values(), m.values());

  save_mask(dir / "black.png", Tensor<float>(Shape{1, 1, 3, 3}));
  EXPECT_EQ(load_mask(dir / "black.png").sum(), 0.0f);

  Raster bad{4, 2, 1, std::vector<std::uint8_t>(8, 0)};
  bad.pixels[6] = 128;
  write_png(dir / "bad.png", bad);
  try {
    load_mask(dir / "bad.png");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("128"), std::string::npos) << msg;
    EXPECT_NE(msg.find("y=1, x=2"), std::string::npos) << msg;
  }
}

TEST(ImageIo, KnownCornerPixelAndSampleErrors) {
  const fs::path dir = scratch("sample");
  Raster img{512, 512, 3, std::vector<std::uint8_t>(512 * 512 * 3, 0)};
  img.pixels[0] = 255;  // (0,0) = (255,0,0)
  write_png(dir / "img.png", img);
  save_mask(dir / "mask.png", Tensor<float>(Shape{1, 1, 512, 512}));
  const Sample s = load_sample(dir / "img.png", dir / "mask.png");
  EXPECT_EQ(s.image.shape(), (Shape{1, 3, 512, 512}));
  EXPECT_EQ(s.image(0, 0, 0, 0), 1.0f);
  EXPECT_EQ(s.image(0, 1, 0, 0), 0.0f);
  EXPECT_EQ(s.image(0, 2, 0, 0), 0.0f);

  EXPECT_THROW(load_sample(dir / "nope.png", dir / "mask.png"), IoError);
  save_mask(dir / "small.png", Tensor<float>(Shape{1, 1, 512, 511}));
  EXPECT_THROW(load_sample(dir / "img.png", dir / "small.png"), ShapeError);
}

TEST(ImageIo, EightBitImageRoundTripIsExact) {
  const fs::path dir = scratch("rgb");
  const SynthSample s = synth_sample(13, 40, 30);
  save_image(dir / "a.png", s.sample.image);
  EXPECT_EQ(load_image(dir / "a.png").values(), s.sample.image.values());
}

TEST(Synth, MaskMatchesAnalyticEllipsePredicate) {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const SynthSample s = synth_sample(seed, 224, 224);
    ASSERT_GE(s.ellipses.size(), 1u);
    ASSERT_LE(s.ellipses.size(), 3u);
    double fg = 0;
    for (int y = 0; y < 224; ++y)
      for (int x = 0; x < 224; ++x) {
        bool inside = false;
        for (const auto& e : s.ellipses) {
          // Independent form: rotate the pixel centre by -theta about the centre.
          const double px = x + 0.5 - e.cx, py = y + 0.5 - e.cy;
          const double u = px * std::cos(-e.theta) - py * std::sin(-e.theta);
          const double v = px * std::sin(-e.theta) + py * std::cos(-e.theta);
          inside = inside || (u / e.a) * (u / e.a) + (v / e.b) * (v / e.b) <= 1.0;
        }
        ASSERT_EQ(s.sample.mask(0, 0, y, x), inside ? 1.0f : 0.0f) << seed << " " << y << "," << x;
        fg += inside;
      }
    EXPECT_GT(fg, 0.0);
  }
}

TEST(Synth, CorpusIsByteIdenticalPerSeed) {
  const fs::path a = scratch("synth_a"), b = scratch("synth_b");
  write_synth_corpus(a, {3, 2, 64, 64}, 42);
  write_synth_corpus(b, {3, 2, 64, 64}, 42);
  int files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path twin = b / fs::relative(e.path(), a);
    std::ifstream fa(e.path(), std::ios::binary), fb(twin, std::ios::binary);
    const std::string ca((std::istreambuf_iterator<char>(fa)), {}), cb((std::istreambuf_iterator<char>(fb)), {});
    EXPECT_EQ(ca, cb) << e.path();
    ++files;
  }
  EXPECT_EQ(files, 10);
  for (const auto& e : fs::directory_iterator(a / "train" / "labels")) {
    const Tensor<float> m = load_mask(e.path());
    EXPECT_GT(m.sum(), 0.0f);
  }
}
