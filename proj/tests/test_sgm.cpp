#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "seamless/random.hpp"
#include "seamless/sgm.hpp"
#include "seamless/synth.hpp"
#include "support.hpp"

using namespace seamless;
using seamless::testing::code_of;

namespace {

GrayImage random_image(int w, int h, std::uint64_t seed, int levels = 256) {
  GrayImage img(w, h);
  Rng rng(seed);
  for (auto& v : img.data) v = static_cast<std::uint16_t>(rng.below(levels));
  return img;
}

// right(x) = left(x + shift); the leftmost `shift` columns of the left image
// have no counterpart and the right image's last columns are fresh noise.
std::pair<GrayImage, GrayImage> shifted_pair(int w, int h, int shift, std::uint64_t seed) {
  GrayImage left = random_image(w, h, seed);
  GrayImage right = random_image(w, h, seed + 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x + shift < w; ++x) right(x, y) = left(x + shift, y);
  return {left, right};
}

int popcount_naive(std::uint64_t v) {
  int n = 0;
  for (int i = 0; i < 64; ++i) n += (v >> i) & 1u;
  return n;
}

CostVolume random_volume(Rng& rng, int w, int h, int nd, int max_cost) {
  CostVolume v(w, h, 0, nd - 1, MatchBase::Left, static_cast<std::uint16_t>(max_cost));
  for (auto& c : v.cost) c = static_cast<std::uint16_t>(rng.below(max_cost + 1));
  return v;
}

int penalty(int a, int b, int p1, int p2) {
  const int jump = std::abs(a - b);
  return jump == 0 ? 0 : jump == 1 ? p1 : p2;
}

// Exhaustive-transition DP for a left-to-right scanline: E(p, d) is the least
// energy of any disparity sequence ending in d at p, considering every
// predecessor disparity explicitly. SGM's normalised L equals E minus the
// least energy at the previous pixel.
std::vector<std::vector<long>> dp_oracle(const CostVolume& v, int y, int p1, int p2) {
  const int w = v.width, nd = v.disparities();
  std::vector<std::vector<long>> e(w, std::vector<long>(nd));
  std::vector<std::vector<long>> l(w, std::vector<long>(nd));
  for (int d = 0; d < nd; ++d) e[0][d] = l[0][d] = v.at(0, y, d);
  for (int x = 1; x < w; ++x) {
    long prev_min = std::numeric_limits<long>::max();
    for (int k = 0; k < nd; ++k) prev_min = std::min(prev_min, e[x - 1][k]);
    for (int d = 0; d < nd; ++d) {
      long best = std::numeric_limits<long>::max();
      for (int k = 0; k < nd; ++k) best = std::min(best, e[x - 1][k] + penalty(k, d, p1, p2));
      e[x][d] = v.at(x, y, d) + best;
      l[x][d] = e[x][d] - prev_min;
    }
  }
  return l;
}

long sequence_energy(const CostVolume& v, const std::vector<int>& seq, int p1, int p2) {
  long e = 0;
  for (std::size_t x = 0; x < seq.size(); ++x) {
    e += v.at(static_cast<int>(x), 0, seq[x]);
    if (x > 0) e += penalty(seq[x - 1], seq[x], p1, p2);
  }
  return e;
}

// Minimum over every disparity sequence of the scanline, by enumeration.
long brute_force_min_energy(const CostVolume& v, int p1, int p2) {
  const int w = v.width, nd = v.disparities();
  std::vector<int> seq(w, 0);
  long best = std::numeric_limits<long>::max();
  while (true) {
    best = std::min(best, sequence_energy(v, seq, p1, p2));
    int i = 0;
    while (i < w && ++seq[i] == nd) seq[i++] = 0;
    if (i == w) break;
  }
  return best;
}

SgmParams params_for(int dmin, int dmax) {
  SgmParams p;
  p.d_min = dmin;
  p.d_max = dmax;
  return p;
}

int count_discontinuities(const DisparityMap& d) {
  int n = 0;
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      if (!d.valid(x, y)) continue;
      if (x + 1 < d.width && d.valid(x + 1, y) && std::abs(d.at(x + 1, y) - d.at(x, y)) > 1.0f) ++n;
      if (y + 1 < d.height && d.valid(x, y + 1) && std::abs(d.at(x, y + 1) - d.at(x, y)) > 1.0f) ++n;
    }
  }
  return n;
}

}  // namespace

TEST(Params, Validation) {
  EXPECT_NO_THROW(SgmParams{}.validate());
  auto p = SgmParams{};
  p.p1 = 0;
  EXPECT_EQ(code_of([&] { p.validate(); }), ErrorCode::InvalidArgument);
  p = SgmParams{};
  p.p1 = p.p2;
  EXPECT_EQ(code_of([&] { p.validate(); }), ErrorCode::InvalidArgument);
  p = SgmParams{};
  p.n_paths = 16;
  EXPECT_EQ(code_of([&] { p.validate(); }), ErrorCode::InvalidArgument);
  p = SgmParams{};
  p.d_max = p.d_min;
  EXPECT_EQ(code_of([&] { p.validate(); }), ErrorCode::InvalidArgument);
  p = SgmParams{};
  p.census_width = 4;
  EXPECT_EQ(code_of([&] { p.validate(); }), ErrorCode::InvalidArgument);
  p = SgmParams{};
  p.p2 = 9000;
  EXPECT_EQ(code_of([&] { p.validate(); }), ErrorCode::InvalidArgument);
}

TEST(Census, ConstantImageIsAllZero) {
  const auto c = census_transform(GrayImage(20, 10, 77), 5, 5);
  for (auto v : c.bits.data) EXPECT_EQ(v, 0u);
  EXPECT_EQ(c.n_bits, 24);
}

TEST(Census, HandEnumeratedBits) {
  // Neighbours in row-major order: 0 1 2 / 3 . 4 / 5 6 7. The four that
  // precede the centre in scan order are darker.
  GrayImage img(3, 3);
  const std::uint16_t values[9] = {10, 10, 10, 10, 50, 60, 60, 60, 60};
  std::copy(values, values + 9, img.data.begin());
  const auto c = census_transform(img, 3, 3);
  EXPECT_EQ(c.bits(1, 1), 0b00001111u);

  // Only the left column darker: bits 0, 3 and 5.
  const std::uint16_t left_dark[9] = {1, 9, 9, 1, 5, 9, 1, 9, 9};
  std::copy(left_dark, left_dark + 9, img.data.begin());
  EXPECT_EQ(census_transform(img, 3, 3).bits(1, 1), (1u << 0) | (1u << 3) | (1u << 5));
}

TEST(Census, BorderIsEdgeClamped) {
  GrayImage img(3, 3, 5);
  img(0, 0) = 9;
  const auto c = census_transform(img, 3, 3);
  // Clamped neighbours of the corner: (0,0) (0,0) (1,0) / (0,0) . (1,0) /
  // (0,1) (0,1) (1,1). Only the copies of the corner itself are not darker.
  EXPECT_EQ(c.bits(0, 0), (1u << 2) | (1u << 4) | (1u << 5) | (1u << 6) | (1u << 7));
}

TEST(Census, OffsetInvariant) {
  const auto img = random_image(40, 30, 3, 1000);
  GrayImage shifted = img;
  for (auto& v : shifted.data) v = static_cast<std::uint16_t>(v + 1234);
  EXPECT_EQ(census_transform(img, 5, 5).bits, census_transform(shifted, 5, 5).bits);
}

TEST(Census, Errors) {
  EXPECT_EQ(code_of([] { census_transform(GrayImage(4, 4), 5, 5); }), ErrorCode::ImageTooSmall);
  EXPECT_EQ(code_of([] { census_transform(GrayImage(10, 10), 4, 5); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { census_transform(GrayImage(20, 20), 9, 9); }), ErrorCode::InvalidArgument);
}

TEST(CostVolume, MatchesNaiveHamming) {
  const auto l = census_transform(random_image(30, 12, 4), 5, 5);
  const auto r = census_transform(random_image(30, 12, 5), 5, 5);
  const auto v = matching_cost_volume(l, r, -3, 9);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 30; ++x)
      for (int d = -3; d <= 9; ++d) {
        const int xr = x - d;
        const int expected = (xr < 0 || xr >= 30) ? 24 : popcount_naive(l.bits(x, y) ^ r.bits(xr, y));
        ASSERT_EQ(v.at(x, y, d), expected);
      }
}

TEST(CostVolume, IdenticalImagesZeroAtDisparityZero) {
  const auto c = census_transform(random_image(25, 15, 6), 5, 5);
  const auto v = matching_cost_volume(c, c, 0, 5);
  for (int y = 0; y < 15; ++y)
    for (int x = 0; x < 25; ++x) EXPECT_EQ(v.at(x, y, 0), 0);
}

TEST(CostVolume, ShiftBySevenIsFree) {
  const auto [left, right] = shifted_pair(60, 20, 7, 7);
  const auto v = matching_cost_volume(census_transform(left, 5, 5), census_transform(right, 5, 5), 0, 10);
  // Census windows touching the noise columns or the clamped border differ.
  for (int y = 2; y < 18; ++y)
    for (int x = 7 + 2; x < 60 - 2; ++x) EXPECT_EQ(v.at(x, y, 7), 0) << x << "," << y;
}

TEST(CostVolume, OutOfImageGetsMaximalCost) {
  const auto c = census_transform(random_image(10, 5, 8), 3, 3);
  const auto v = matching_cost_volume(c, c, 0, 6);
  EXPECT_EQ(v.at(2, 0, 5), 8);
  EXPECT_EQ(v.max_raw_cost, 8);
}

TEST(CostVolume, DimensionMismatch) {
  const auto a = census_transform(random_image(10, 5, 8), 3, 3);
  const auto b = census_transform(random_image(11, 5, 8), 3, 3);
  EXPECT_EQ(code_of([&] { matching_cost_volume(a, b, 0, 4); }), ErrorCode::DimensionMismatch);
}

TEST(Aggregation, ZeroPenaltiesScaleRawVolume) {
  Rng rng(9);
  const auto raw = random_volume(rng, 17, 11, 6, 24);
  SgmParams p;
  p.p1 = p.p2 = 0;
  for (int paths : {4, 8}) {
    p.n_paths = paths;
    const auto agg = aggregate_costs(raw, p);
    for (std::size_t i = 0; i < raw.cost.size(); ++i) ASSERT_EQ(agg.cost[i], paths * raw.cost[i]);
  }
}

TEST(Aggregation, ConstantVolume) {
  CostVolume raw(13, 9, 0, 4, MatchBase::Left, 24);
  std::fill(raw.cost.begin(), raw.cost.end(), 11);
  const auto agg = aggregate_costs(raw, SgmParams{});
  for (auto c : agg.cost) EXPECT_EQ(c, 8 * 11);
}

TEST(Aggregation, HandScanlineMatchesEnumeration) {
  // 1 x 4 scanline, 3 disparities.
  CostVolume raw(4, 1, 0, 2, MatchBase::Left, 24);
  const std::uint16_t costs[4][3] = {{5, 1, 7}, {3, 9, 0}, {8, 2, 6}, {0, 4, 9}};
  for (int x = 0; x < 4; ++x)
    for (int d = 0; d < 3; ++d) raw.at(x, 0, d) = costs[x][d];
  SgmParams p;
  p.p1 = 2;
  p.p2 = 5;
  const auto l = aggregate_path(raw, p, kPathDirections[0]);
  const auto oracle = dp_oracle(raw, 0, p.p1, p.p2);
  for (int x = 0; x < 4; ++x)
    for (int d = 0; d < 3; ++d) EXPECT_EQ(l.at(x, 0, d), oracle[x][d]);
  // L(0) = C(0); L(1, 0) = 3 + min(5, 1 + 2, 1 + 5) - 1 = 5.
  EXPECT_EQ(l.at(1, 0, 0), 5);
  long min_last = std::numeric_limits<long>::max();
  for (int d = 0; d < 3; ++d) min_last = std::min<long>(min_last, l.at(3, 0, d));
  // Undo the per-step normalisation to recover the least total energy.
  long offset = 0;
  for (int x = 0; x < 3; ++x) {
    long m = std::numeric_limits<long>::max();
    for (int d = 0; d < 3; ++d) m = std::min<long>(m, l.at(x, 0, d));
    offset += m;
  }
  EXPECT_EQ(min_last + offset, brute_force_min_energy(raw, p.p1, p.p2));
}

TEST(Aggregation, SinglePathEqualsExhaustiveDp) {
  Rng rng(10);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto raw = random_volume(rng, 12, 1, 4, 24);
    SgmParams p;
    p.p1 = static_cast<int>(rng.below(20)) + 1;
    p.p2 = p.p1 + static_cast<int>(rng.below(60)) + 1;
    const auto l = aggregate_path(raw, p, kPathDirections[0]);
    const auto oracle = dp_oracle(raw, 0, p.p1, p.p2);
    for (int x = 0; x < 12; ++x)
      for (int d = 0; d < 4; ++d) ASSERT_EQ(l.at(x, 0, d), oracle[x][d]) << "trial " << trial;
  }
}

TEST(Aggregation, EnergyNoWorseThanAnySequence) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int w = 4 + static_cast<int>(rng.below(5));
    const auto raw = random_volume(rng, w, 1, 4, 24);
    SgmParams p;
    p.p1 = static_cast<int>(rng.below(15)) + 1;
    p.p2 = p.p1 + static_cast<int>(rng.below(40)) + 1;
    const auto l = aggregate_path(raw, p, kPathDirections[0]);
    long offset = 0, min_last = std::numeric_limits<long>::max();
    for (int x = 0; x < w; ++x) {
      long m = std::numeric_limits<long>::max();
      for (int d = 0; d < 4; ++d) m = std::min<long>(m, l.at(x, 0, d));
      if (x + 1 < w) offset += m;
      else min_last = m;
    }
    const long sgm_energy = min_last + offset;
    EXPECT_EQ(sgm_energy, brute_force_min_energy(raw, p.p1, p.p2));
    std::vector<int> truth(w);
    for (auto& d : truth) d = static_cast<int>(rng.below(4));
    EXPECT_LE(sgm_energy, sequence_energy(raw, truth, p.p1, p.p2));
  }
}

TEST(Aggregation, ReversedDirectionMatchesMirroredOracle) {
  Rng rng(12);
  const auto raw = random_volume(rng, 12, 1, 4, 24);
  CostVolume mirrored = raw;
  for (int x = 0; x < 12; ++x)
    for (int d = 0; d < 4; ++d) mirrored.at(x, 0, d) = raw.at(11 - x, 0, d);
  SgmParams p;
  p.p1 = 3;
  p.p2 = 17;
  const auto l = aggregate_path(raw, p, kPathDirections[1]);
  const auto oracle = dp_oracle(mirrored, 0, p.p1, p.p2);
  for (int x = 0; x < 12; ++x)
    for (int d = 0; d < 4; ++d) EXPECT_EQ(l.at(x, 0, d), oracle[11 - x][d]);
}

TEST(Aggregation, EightPathsAreSumOfSinglePaths) {
  Rng rng(13);
  const auto raw = random_volume(rng, 23, 17, 7, 24);
  const SgmParams p;
  const auto agg = aggregate_costs(raw, p);
  std::vector<int> sum(raw.cost.size(), 0);
  for (const auto& dir : kPathDirections) {
    const auto single = aggregate_path(raw, p, dir);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += single.cost[i];
  }
  for (std::size_t i = 0; i < sum.size(); ++i) ASSERT_EQ(agg.cost[i], sum[i]);
}

TEST(Aggregation, DiagonalPathMatchesOracleAlongDiagonal) {
  Rng rng(14);
  const auto raw = random_volume(rng, 9, 9, 4, 24);
  SgmParams p;
  p.p1 = 4;
  p.p2 = 21;
  const auto l = aggregate_path(raw, p, kPathDirections[4]);  // (+1, +1)
  // The main diagonal starts at (0, 0), so it is a scanline of its own.
  CostVolume diag(9, 1, 0, 3, MatchBase::Left, 24);
  for (int i = 0; i < 9; ++i)
    for (int d = 0; d < 4; ++d) diag.at(i, 0, d) = raw.at(i, i, d);
  const auto oracle = dp_oracle(diag, 0, p.p1, p.p2);
  for (int i = 0; i < 9; ++i)
    for (int d = 0; d < 4; ++d) EXPECT_EQ(l.at(i, i, d), oracle[i][d]);
}

TEST(Selection, IdenticalImagesGiveZero) {
  const auto img = random_image(64, 48, 15);
  auto p = params_for(0, 16);
  const auto disp = compute_disparity(img, img, p);
  std::size_t valid = 0;
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x)
      if (disp.valid(x, y)) {
        ++valid;
        EXPECT_NEAR(disp.at(x, y), 0.0f, 0.5f);
      }
  EXPECT_GT(valid, 64u * 48u * 9 / 10);
}

TEST(Selection, RandomDotShiftBySeven) {
  const int w = 200, h = 120;
  const auto [left, right] = shifted_pair(w, h, 7, 16);
  const auto disp = compute_disparity(left, right, params_for(0, 24));
  std::size_t total = 0, good = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 7; x < w; ++x) {
      ++total;
      if (disp.valid(x, y) && std::abs(disp.at(x, y) - 7.0f) <= 0.5f) ++good;
    }
  EXPECT_GE(static_cast<double>(good) / total, 0.99);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (disp.valid(x, y)) {
        EXPECT_GE(disp.at(x, y), 0.0f);
        EXPECT_LE(disp.at(x, y), 24.0f);
      }
}

TEST(Selection, TexturelessPairIsInvalid) {
  const GrayImage flat(50, 40, 128);
  const auto disp = compute_disparity(flat, flat, params_for(0, 16));
  EXPECT_EQ(disp.valid_count(), 0u);
  for (auto f : disp.flags) EXPECT_TRUE(f & kUniquenessFailed);
}

TEST(Selection, LeftRightCheckFlagsOcclusion) {
  const int w = 120, h = 60;
  const auto depth = synth::two_plane_depth(w, h, 6.0, 3.0, 40, 10, 80, 50);
  const auto pair = synth::gen_stereo_pair(depth, 0.1, synth::stereo_default(), 3);
  auto p = params_for(0, 40);
  const auto with = compute_disparity(pair.left, pair.right, p);
  p.lr_check = false;
  const auto without = compute_disparity(pair.left, pair.right, p);
  std::size_t occluded = 0, occluded_rejected = 0;
  for (int y = 12; y < 48; ++y)
    for (int x = 0; x < w; ++x) {
      if (!pair.occluded(x, y) || x < 25) continue;
      ++occluded;
      if (with.flags[with.index(x, y)] & kLrFailed) ++occluded_rejected;
    }
  ASSERT_GT(occluded, 0u);
  EXPECT_GT(static_cast<double>(occluded_rejected) / occluded, 0.6);
  EXPECT_GT(without.valid_count(), with.valid_count());
}

TEST(Selection, RightBaseVolumeShapeMustMatch) {
  Rng rng(17);
  const auto a = random_volume(rng, 10, 5, 4, 24);
  const auto b = random_volume(rng, 11, 5, 4, 24);
  EXPECT_EQ(code_of([&] { select_disparity(a, SgmParams{}, &b); }), ErrorCode::DimensionMismatch);
}

TEST(Selection, SubpixelParabola) {
  CostVolume v(8, 1, 0, 4, MatchBase::Left, 100);
  for (int x = 0; x < 8; ++x) {
    const std::uint16_t c[5] = {90, 40, 10, 20, 90};
    for (int d = 0; d < 5; ++d) v.at(x, 0, d) = c[d];
  }
  SgmParams p;
  const auto disp = select_disparity(v, p);
  // Vertex of the parabola through (1, 40), (2, 10), (3, 20): 2 + (40 - 20) / (2 * 40).
  EXPECT_NEAR(disp.at(7, 0), 2.25f, 1e-6f);
}

TEST(Selection, Deterministic) {
  const auto [left, right] = shifted_pair(90, 70, 5, 18);
  const auto a = compute_disparity(left, right, params_for(0, 16));
  const auto b = compute_disparity(left, right, params_for(0, 16));
  ASSERT_EQ(a.value.size(), b.value.size());
  EXPECT_EQ(std::memcmp(a.value.data(), b.value.data(), a.value.size() * sizeof(float)), 0);
  EXPECT_EQ(a.flags, b.flags);
}

TEST(Selection, LargerP2NeverAddsDiscontinuities) {
  const std::vector<int> p2s{30, 60, 120, 240};
  std::vector<double> mean(p2s.size(), 0.0);
  for (int seed = 0; seed < 10; ++seed) {
    const auto depth = synth::two_plane_depth(96, 72, 6.0, 3.5, 30, 20, 70, 55);
    const auto pair = synth::gen_stereo_pair(depth, 0.1, synth::stereo_default(), 100 + seed);
    for (std::size_t i = 0; i < p2s.size(); ++i) {
      auto p = params_for(0, 32);
      p.p2 = p2s[i];
      mean[i] += count_discontinuities(compute_disparity(pair.left, pair.right, p)) / 10.0;
    }
  }
  for (std::size_t i = 1; i < mean.size(); ++i) EXPECT_LE(mean[i], mean[i - 1]) << "P2 " << p2s[i];
}

TEST(Cloud, ConstantDisparityGivesConstantDepth) {
  const auto cam = synth::stereo_default();
  const double baseline = 0.2, z0 = 5.0;
  const double d = cam.f_mm * baseline / (z0 * cam.pixel_pitch_mm);
  DisparityMap disp(40, 30, 0, 64);
  std::fill(disp.value.begin(), disp.value.end(), static_cast<float>(d));
  CameraIntrinsics small = cam;
  small.width_px = 40;
  small.height_px = 30;
  small.x0_px = 19.5;
  small.y0_px = 14.5;
  const Pose pose{Vec3(1, 2, 3), Vec3(0.1, 0.2, 0.3)};
  const auto cloud = disparity_to_cloud(disp, small, baseline, pose);
  ASSERT_EQ(cloud.size(), 40u * 30u);
  const double z_exact = small.focal_px() * baseline / static_cast<float>(d);
  for (const auto& p : cloud.points) {
    EXPECT_NEAR(-pose.world_to_camera(p.position).z(), z_exact, 1e-9);
    EXPECT_NEAR(z_exact, z0, 1e-5);  // float storage of d
  }
}

TEST(Cloud, InvalidAndTinyDisparitiesAreSkipped) {
  DisparityMap disp(4, 1, 0, 10);
  disp.value = {std::numeric_limits<float>::quiet_NaN(), 0.0f, 5e-4f, 3.0f};
  CameraIntrinsics cam = synth::stereo_default();
  cam.width_px = 4;
  cam.height_px = 1;
  cam.x0_px = 1.5;
  cam.y0_px = 0;
  RgbImage rgb(4, 1, Rgb{1, 2, 3});
  rgb(3, 0) = Rgb{9, 8, 7};
  const auto cloud = disparity_to_cloud(disp, cam, 0.1, Pose{}, &rgb, 12);
  ASSERT_EQ(cloud.size(), 1u);
  EXPECT_EQ(*cloud.points[0].color, (Rgb{9, 8, 7}));
  EXPECT_EQ(*cloud.points[0].frame_id, 12);
  EXPECT_EQ(code_of([&] { disparity_to_cloud(disp, cam, 0.0, Pose{}); }), ErrorCode::InvalidArgument);
}

TEST(Cloud, TwoPlaneSceneGivesTwoClusters) {
  const auto cam = synth::stereo_default();
  const double baseline = 0.2, far = 6.0, near = 3.0;
  const auto depth = synth::two_plane_depth(cam.width_px, cam.height_px, far, near, 220, 140, 420, 340);
  const auto pair = synth::gen_stereo_pair(depth, baseline, cam, 5);
  const auto disp = compute_disparity(pair.left, pair.right, params_for(0, 64));
  const auto cloud = disparity_to_cloud(disp, cam, baseline, Pose{});
  const double step_far = far * far * cam.pixel_pitch_mm / (cam.f_mm * baseline);   // depth per 1 px disparity
  const double step_near = near * near * cam.pixel_pitch_mm / (cam.f_mm * baseline);
  double se_far = 0, se_near = 0;
  int n_far = 0, n_near = 0;
  for (const auto& p : cloud.points) {
    const double z = -p.position.z();
    if (std::abs(z - far) < std::abs(z - near)) {
      se_far += (z - far) * (z - far);
      ++n_far;
    } else {
      se_near += (z - near) * (z - near);
      ++n_near;
    }
  }
  ASSERT_GT(n_far, 1000);
  ASSERT_GT(n_near, 1000);
  EXPECT_LT(std::sqrt(se_far / n_far), step_far);
  EXPECT_LT(std::sqrt(se_near / n_near), step_near);
}
