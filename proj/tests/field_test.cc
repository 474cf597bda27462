#include "pvote/field.h"

#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "pvote/error.h"
#include "pvote/voting.h"
#include "test_util.h"

namespace pvote {
namespace {

SegmentationMask full_mask(int w, int h) {
  SegmentationMask m(w, h);
  std::fill(m.labels.begin(), m.labels.end(), 1);
  return m;
}

double wrap_angle(double a) { return std::remainder(a, 2.0 * M_PI); }

double angle_of(const Vec2& v) { return std::atan2(v.y(), v.x()); }

TEST(GtField, VerticalDirection) {
  const SegmentationMask m = full_mask(10, 10);
  const VectorField f = gt_vector_field(m, {Vec2(3, 8)});
  EXPECT_EQ(f.at(4 * 10 + 3, 0), Vec2(0, 1));
}

TEST(GtField, ThreeFourFive) {
  const SegmentationMask m = full_mask(4, 4);
  const VectorField f = gt_vector_field(m, {Vec2(3, 4)});
  EXPECT_NEAR((f.at(0, 0) - Vec2(0.6, 0.8)).norm(), 0.0, 1e-15);
}

TEST(GtField, OffImageKeypoint) {
  const SegmentationMask m = full_mask(12, 9);
  const Vec2 kp(-10, 5);
  const VectorField f = gt_vector_field(m, {kp});
  for (int row = 0; row < 9; ++row) {
    for (int col = 0; col < 12; ++col) {
      const Vec2 d(kp.x() - col, kp.y() - row);
      const Vec2 expect = d / std::sqrt(d.x() * d.x() + d.y() * d.y());
      const Vec2 got = f.at(row * 12 + col, 0);
      EXPECT_NEAR((got - expect).norm(), 0.0, 1e-15);
      EXPECT_NEAR(got.norm(), 1.0, 1e-6);
    }
  }
}

TEST(GtField, BackgroundAndCoincidentPixels) {
  SegmentationMask m(5, 5);
  m.at(2, 2) = 1;
  m.at(1, 3) = 1;
  const VectorField f = gt_vector_field(m, {Vec2(2, 2), Vec2(0, 0)});
  EXPECT_EQ(f.at(2 * 5 + 2, 0), Vec2(0, 0));
  EXPECT_NE(f.at(2 * 5 + 2, 1), Vec2(0, 0));
  EXPECT_EQ(f.at(0, 0), Vec2(0, 0));
  EXPECT_EQ(f.at(0, 1), Vec2(0, 0));
  EXPECT_EQ(f.num_keypoints(), 2);
}

TEST(GtField, MaskSizeMismatch) {
  SegmentationMask m(4, 4);
  m.labels.pop_back();
  try {
    gt_vector_field(m, {Vec2(1, 1)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

TEST(GtField, RayIntersectionRecoversKeypoint) {
  Rng rng(21);
  const SegmentationMask m = full_mask(64, 48);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec2 kp(rng.uniform(-300, 400), rng.uniform(-300, 400));
    const VectorField f = gt_vector_field(m, {kp});
    const std::size_t a = rng.index(64 * 48), b = rng.index(64 * 48);
    const auto x = intersect_rays(pixel_position(a, 64), f.at(a, 0), pixel_position(b, 64), f.at(b, 0));
    if (!x) continue;  // collinear with the keypoint
    EXPECT_LT((*x - kp).norm(), 1e-6);
  }
}

TEST(Corrupt, NoiselessIsIdentity) {
  const SegmentationMask m = full_mask(20, 10);
  const VectorField f = gt_vector_field(m, {Vec2(3, 4), Vec2(50, -20)});
  EXPECT_EQ(corrupt_field(f, m, {0.0, 0.0, 99}), f);
}

TEST(Corrupt, Deterministic) {
  const SegmentationMask m = full_mask(30, 20);
  const VectorField f = gt_vector_field(m, {Vec2(3, 4)});
  const NoiseConfig cfg{0.1, 0.2, 5};
  EXPECT_EQ(corrupt_field(f, m, cfg), corrupt_field(f, m, cfg));
  EXPECT_FALSE(corrupt_field(f, m, cfg) == corrupt_field(f, m, {0.1, 0.2, 6}));
}

TEST(Corrupt, BackgroundUntouched) {
  SegmentationMask m(10, 10);
  m.at(5, 5) = 1;
  VectorField f = gt_vector_field(full_mask(10, 10), {Vec2(0, 0)});
  const VectorField g = corrupt_field(f, m, {0.3, 0.5, 1});
  for (std::size_t p = 0; p < 100; ++p) {
    if (p != 55) EXPECT_EQ(g.at(p, 0), f.at(p, 0));
  }
}

TEST(Corrupt, AngularSigmaStatistics) {
  const SegmentationMask m = full_mask(400, 300);
  const VectorField f = gt_vector_field(m, {Vec2(123.4, -56.7)});
  const VectorField g = corrupt_field(f, m, {0.1, 0.0, 7});
  double sum = 0, sum2 = 0;
  const std::size_t n = 400 * 300;
  for (std::size_t p = 0; p < n; ++p) {
    const double d = wrap_angle(angle_of(g.at(p, 0)) - angle_of(f.at(p, 0)));
    sum += d;
    sum2 += d * d;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sum2 / n - mean * mean);
  EXPECT_NEAR(sd, 0.1, 0.005);
  EXPECT_NEAR(mean, 0.0, 0.002);
}

TEST(Corrupt, OutliersAreUniform) {
  const SegmentationMask m = full_mask(400, 300);
  const VectorField f = gt_vector_field(m, {Vec2(200, 150.5)});
  const VectorField g = corrupt_field(f, m, {0.0, 1.0, 8});
  const std::size_t n = 400 * 300;
  std::size_t close = 0;
  for (std::size_t p = 0; p < n; ++p) {
    if (std::abs(wrap_angle(angle_of(g.at(p, 0)) - angle_of(f.at(p, 0)))) < 0.01) ++close;
  }
  const double baseline = 0.02 / (2 * M_PI);
  const double frac = static_cast<double>(close) / n;
  EXPECT_NEAR(frac, baseline, 4 * std::sqrt(baseline / n));
}

TEST(Corrupt, OutlierRateFraction) {
  const SegmentationMask m = full_mask(300, 300);
  const VectorField f = gt_vector_field(m, {Vec2(-40, 10)});
  const VectorField g = corrupt_field(f, m, {0.0, 0.3, 9});
  std::size_t changed = 0;
  for (std::size_t p = 0; p < 90000; ++p) changed += !(g.at(p, 0) == f.at(p, 0));
  EXPECT_NEAR(changed / 90000.0, 0.3, 0.01);
}

TEST(Corrupt, Validation) {
  const SegmentationMask m = full_mask(4, 4);
  const VectorField f = gt_vector_field(m, {Vec2(1, 1)});
  EXPECT_THROW(corrupt_field(f, m, {-0.1, 0.0, 1}), Error);
  EXPECT_THROW(corrupt_field(f, m, {0.0, 1.5, 1}), Error);
  EXPECT_THROW(corrupt_field(f, full_mask(5, 4), {0.1, 0.0, 1}), Error);
}

TEST(Loss, Examples) {
  SegmentationMask m(1, 1);
  m.at(0, 0) = 1;
  VectorField gt(1, 1, 1), pred(1, 1, 1);
  gt.set(0, 0, Vec2(0, 1));
  EXPECT_EQ(smooth_l1_loss(gt, gt, m), 0.0);
  pred.set(0, 0, Vec2(0.5, 1));
  EXPECT_DOUBLE_EQ(smooth_l1_loss(pred, gt, m), 0.125);
  pred.set(0, 0, Vec2(2, -2));
  EXPECT_DOUBLE_EQ(smooth_l1_loss(pred, gt, m), 4.0);
}

TEST(Loss, IgnoresBackgroundAndSumsKeypoints) {
  SegmentationMask m(2, 1);
  m.at(1, 0) = 1;
  VectorField gt(2, 1, 2), pred(2, 1, 2);
  pred.set(0, 0, Vec2(100, 100));
  pred.set(1, 0, Vec2(0.5, 0));
  pred.set(1, 1, Vec2(0, -3));
  EXPECT_DOUBLE_EQ(smooth_l1_loss(pred, gt, m), 0.125 + 2.5);
  EXPECT_THROW(smooth_l1_loss(VectorField(2, 1, 1), gt, m), Error);
}

TEST(Loss, NonNegativeAndZeroOnlyAtEquality) {
  Rng rng(22);
  const SegmentationMask m = full_mask(16, 16);
  const VectorField gt = gt_vector_field(m, {Vec2(3, 3), Vec2(30, -4)});
  for (int i = 0; i < 20; ++i) {
    const VectorField pred = corrupt_field(gt, m, {rng.uniform(0, 1), rng.uniform(0, 1), rng.next_u64()});
    const double loss = smooth_l1_loss(pred, gt, m);
    EXPECT_GE(loss, 0.0);
    EXPECT_EQ(loss == 0.0, pred == gt);
  }
}

TEST(FieldIo, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path();
  SegmentationMask m(7, 5);
  m.at(1, 1) = 1;
  m.at(6, 4) = 3;
  VectorField f = gt_vector_field(m, {Vec2(0.25, 10), Vec2(-3, -3), Vec2(2, 2)});
  const std::string fp = (dir / "pvote_field_test.pvf").string();
  const std::string mp = (dir / "pvote_mask_test.pgm").string();
  write_field(fp, f);
  write_mask_pgm(mp, m);
  const VectorField g = read_field(fp);
  const SegmentationMask n = read_mask_pgm(mp);
  EXPECT_EQ(std::filesystem::file_size(fp), 16u + 7 * 5 * 3 * 2 * 4);
  std::filesystem::remove(fp);
  std::filesystem::remove(mp);
  ASSERT_EQ(g.num_keypoints(), 3);
  for (std::size_t i = 0; i < f.data().size(); ++i) {
    EXPECT_EQ(g.data()[i], static_cast<double>(static_cast<float>(f.data()[i])));
  }
  EXPECT_EQ(n.labels, m.labels);
}

TEST(FieldIo, HeaderLayout) {
  VectorField f(2, 1, 1);
  f.set(1, 0, Vec2(1.0, -2.0));
  const std::vector<std::uint8_t> bytes = encode_field(f);
  ASSERT_EQ(bytes.size(), 16u + 16u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "PVF1");
  EXPECT_EQ(bytes[4], 2);
  EXPECT_EQ(bytes[8], 1);
  EXPECT_EQ(bytes[12], 1);
  // 1.0f little endian at the third float.
  EXPECT_EQ(bytes[16 + 8 + 3], 0x3f);
  EXPECT_EQ(bytes[16 + 8 + 2], 0x80);
  std::vector<std::uint8_t> bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_field(bad), Error);
  bad = bytes;
  bad.pop_back();
  EXPECT_THROW(decode_field(bad), Error);
}

}  // namespace
}  // namespace pvote
