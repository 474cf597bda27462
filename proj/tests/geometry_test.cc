#include "pvote/geometry.h"

#include <cmath>

#include <gtest/gtest.h>

#include "pvote/error.h"
#include "test_util.h"

namespace pvote {
namespace {

using testing::random_pose;
using testing::random_rotation;
using testing::random_unit;

TEST(Geometry, TransformIdentity) {
  EXPECT_EQ(transform_point(Pose::identity(), Vec3(1, 2, 3)), Vec3(1, 2, 3));
}

TEST(Geometry, TransformTranslation) {
  Pose p;
  p.translation = Vec3(0, 0, 5);
  EXPECT_EQ(transform_point(p, Vec3::Zero()), Vec3(0, 0, 5));
}

TEST(Geometry, TransformMatchesHandMultiply) {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const Pose p = random_pose(rng);
    const Vec3 x = testing::random_cloud(rng, 1, 10.0)[0];
    double expect[3];
    for (int r = 0; r < 3; ++r) {
      expect[r] = p.translation[r];
      for (int c = 0; c < 3; ++c) expect[r] += p.rotation(r, c) * x[c];
    }
    const Vec3 got = transform_point(p, x);
    for (int r = 0; r < 3; ++r) EXPECT_NEAR(got[r], expect[r], 1e-12);
  }
}

TEST(Geometry, ProjectUnitCamera) {
  CameraIntrinsics intr;
  const Vec2 uv = project(intr, Pose::identity(), Vec3(0, 0, 1));
  EXPECT_EQ(uv, Vec2(0, 0));
}

TEST(Geometry, ProjectFocalTwo) {
  CameraIntrinsics intr;
  intr.fx = intr.fy = 2;
  EXPECT_EQ(project(intr, Pose::identity(), Vec3(1, 2, 2)), Vec2(1, 2));
}

TEST(Geometry, ProjectBehindCamera) {
  CameraIntrinsics intr;
  try {
    project(intr, Pose::identity(), Vec3(0, 0, -1));
    FAIL() << "expected BehindCamera";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBehindCamera);
  }
  EXPECT_THROW(project(intr, Pose::identity(), Vec3(0, 0, 1e-9)), Error);
  EXPECT_NO_THROW(project(intr, Pose::identity(), Vec3(0, 0, 2e-9)));
}

TEST(Geometry, ProjectDoesNotClamp) {
  CameraIntrinsics intr{500, 500, 320, 240, 640, 480};
  const Vec2 uv = project(intr, Pose::identity(), Vec3(1, -1, 1));
  EXPECT_DOUBLE_EQ(uv.x(), 820);
  EXPECT_DOUBLE_EQ(uv.y(), -260);
}

TEST(Geometry, ProjectionEquivariance) {
  Rng rng(2);
  CameraIntrinsics intr{572.4, 573.6, 325.3, 242.0, 640, 480};
  for (int i = 0; i < 100; ++i) {
    const Pose pose = random_pose(rng);
    Pose g;
    g.rotation = random_rotation(rng);
    g.translation = testing::random_cloud(rng, 1, 20.0)[0];
    const Vec3 x = testing::random_cloud(rng, 1, 50.0)[0];
    // Move the point by g and compensate in the pose.
    const Vec2 a = project(intr, pose, x);
    const Vec2 b = project(intr, pose * g.inverse(), transform_point(g, x));
    EXPECT_NEAR((a - b).norm(), 0.0, 1e-9);
  }
}

TEST(Geometry, ExpZeroIsIdentity) {
  EXPECT_EQ(rotation_exp(Vec3::Zero()), Mat3::Identity());
}

TEST(Geometry, ExpQuarterTurnAboutZ) {
  const Mat3 r = rotation_exp(Vec3(0, 0, M_PI / 2));
  EXPECT_NEAR((r * Vec3(1, 0, 0) - Vec3(0, 1, 0)).norm(), 0.0, 1e-15);
}

TEST(Geometry, ExpLogRoundTripSmall) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 w = random_unit(rng) * rng.uniform(0.0, 0.5) * std::pow(10.0, -rng.uniform(0, 8));
    EXPECT_LT((rotation_log(rotation_exp(w)) - w).norm(), 1e-10);
  }
}

TEST(Geometry, ExpLogRoundTripLarge) {
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const double angle = rng.uniform(0.0, M_PI - 1e-6);
    const Vec3 w = random_unit(rng) * angle;
    const Mat3 r = rotation_exp(w);
    EXPECT_LT((rotation_exp(rotation_log(r)) - r).cwiseAbs().maxCoeff(), 1e-9);
  }
  // Close to a half turn the axis is recovered from the symmetric part.
  const Vec3 w = Vec3(1, 2, 2).normalized() * (M_PI - 1e-7);
  EXPECT_LT((rotation_exp(rotation_log(rotation_exp(w))) - rotation_exp(w)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Geometry, ExpProducesRotations) {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const Mat3 r = rotation_exp(random_unit(rng) * rng.uniform(0, 20));
    EXPECT_TRUE(is_rotation(r));
    EXPECT_NO_THROW(Pose::make(r, Vec3::Zero()));
  }
}

TEST(Geometry, LogRejectsNonRotation) {
  Mat3 reflect = Mat3::Identity();
  reflect(2, 2) = -1;
  try {
    rotation_log(reflect);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidRotation);
  }
  EXPECT_THROW(rotation_log(2.0 * Mat3::Identity()), Error);
  EXPECT_THROW(Pose::make(reflect, Vec3::Zero()), Error);
}

TEST(Geometry, PoseComposition) {
  Rng rng(6);
  const Pose a = random_pose(rng), b = random_pose(rng);
  const Vec3 x(1, -2, 3);
  EXPECT_LT((transform_point(a * b, x) - transform_point(a, transform_point(b, x))).norm(), 1e-9);
  EXPECT_LT((transform_point(a.inverse(), transform_point(a, x)) - x).norm(), 1e-9);
}

TEST(Geometry, AngleBetween) {
  const Mat3 a = rotation_exp(Vec3(0.1, 0.2, -0.3));
  const Mat3 b = rotation_exp(Vec3(0, 0.5, 0)) * a;
  EXPECT_NEAR(rotation_angle_between(a, b), 0.5, 1e-12);
  EXPECT_NEAR(rotation_angle_between(a, a), 0.0, 1e-12);
}

TEST(Geometry, IntrinsicsValidation) {
  CameraIntrinsics intr;
  EXPECT_NO_THROW(intr.validate());
  intr.fx = 0;
  EXPECT_THROW(intr.validate(), Error);
  intr.fx = 1;
  intr.width = 0;
  EXPECT_THROW(intr.validate(), Error);
}

TEST(Geometry, ShiftedIntrinsics) {
  CameraIntrinsics intr{500, 500, 320, 240, 640, 480};
  const Pose pose = Pose::identity();
  const Vec3 x(0.1, 0.2, 1.0);
  const CameraIntrinsics s = intr.shifted(Vec2(30, -10));
  EXPECT_LT((project(s, pose, x) - (project(intr, pose, x) - Vec2(30, -10))).norm(), 1e-12);
}

}  // namespace
}  // namespace pvote
