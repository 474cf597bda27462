#include "pvote/scene.h"

#include <gtest/gtest.h>

#include "pvote/error.h"
#include "pvote/voting.h"

namespace pvote {
namespace {

TEST(Builtin, Models) {
  for (const std::string& name : builtin_model_names()) {
    const ObjectModel m = builtin_model(name);
    EXPECT_GT(m.surface_points.size(), 1000u) << name;
    EXPECT_TRUE(m.solvable) << name;
    EXPECT_EQ(load_model_source("builtin:" + name).surface_points.size(), m.surface_points.size());
  }
  EXPECT_THROW(builtin_model("teapot"), Error);
  EXPECT_THROW(load_model_source("builtin:teapot"), Error);
}

TEST(PoseSampler, CenterInsideCentralWindow) {
  const CameraIntrinsics intr = default_intrinsics();
  const Vec3 center(1, 2, 3);
  Rng rng(1);
  PoseSamplerConfig cfg;
  for (int i = 0; i < 500; ++i) {
    const Pose p = sample_pose(center, intr, cfg, rng);
    const Vec3 c = transform_point(p, center);
    EXPECT_GE(c.z(), cfg.min_depth - 1e-9);
    EXPECT_LE(c.z(), cfg.max_depth + 1e-9);
    const Vec2 uv = project(intr, p, center);
    EXPECT_GE(uv.x(), 0.1 * intr.width - 1e-9);
    EXPECT_LE(uv.x(), 0.9 * intr.width + 1e-9);
    EXPECT_GE(uv.y(), 0.1 * intr.height - 1e-9);
    EXPECT_LE(uv.y(), 0.9 * intr.height + 1e-9);
    EXPECT_TRUE(is_rotation(p.rotation));
  }
}

TEST(PoseSampler, RotationsCoverTheSphere) {
  // The third column of a uniform rotation is uniform on the sphere.
  Rng rng(2);
  double mean_z = 0, mean_z2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = sample_pose(Vec3::Zero(), default_intrinsics(), {}, rng).rotation(2, 2);
    mean_z += z / n;
    mean_z2 += z * z / n;
  }
  EXPECT_NEAR(mean_z, 0.0, 0.02);
  EXPECT_NEAR(mean_z2, 1.0 / 3.0, 0.02);
}

TEST(Synth, NoiselessBasics) {
  const ObjectModel m = builtin_model("cube");
  const KeypointSet kps = fps_select(m, 8);
  SceneConfig cfg;
  cfg.seed = 4;
  const SceneSample s = synth_scene(m, kps.points3d, default_intrinsics(), cfg);
  EXPECT_EQ(s.mask.width, 640);
  EXPECT_GT(s.mask.count_on_object(), 1000u);
  EXPECT_NEAR(static_cast<double>(s.mask.count_on_object()), s.silhouette_pixels * s.visible_fraction, 1e-6);
  ASSERT_EQ(s.keypoints2d_gt.size(), 9u);
  for (int k = 0; k < 9; ++k) {
    EXPECT_LT((s.keypoints2d_gt[k] - project(s.original_intr, s.gt_pose, kps.points3d[k])).norm(), 1e-9);
    EXPECT_LT((s.keypoints2d[k] - project(s.intr, s.gt_pose, kps.points3d[k])).norm(), 1e-9);
  }
  EXPECT_FALSE(s.truncated);
  // The field is the exact ground truth.
  EXPECT_EQ(s.field, gt_vector_field(s.mask, s.keypoints2d));
}

TEST(Synth, Deterministic) {
  const ObjectModel m = builtin_model("blob");
  const KeypointSet kps = fps_select(m, 8);
  SceneConfig cfg;
  cfg.seed = 5;
  cfg.occlusion_frac = 0.3;
  cfg.truncation = TruncationConfig{};
  cfg.noise = {0.1, 0.1, 6};
  const SceneSample a = synth_scene(m, kps.points3d, default_intrinsics(), cfg);
  const SceneSample b = synth_scene(m, kps.points3d, default_intrinsics(), cfg);
  EXPECT_EQ(a.mask.labels, b.mask.labels);
  EXPECT_EQ(a.field, b.field);
  EXPECT_EQ(a.crop_offset, b.crop_offset);
}

TEST(Synth, TruncationVisibleFraction) {
  const ObjectModel m = builtin_model("lshape");
  const KeypointSet kps = fps_select(m, 8);
  for (int i = 0; i < 20; ++i) {
    SceneConfig cfg;
    cfg.seed = 100 + i;
    cfg.truncation = TruncationConfig{0.4, 0.6, 2};
    const SceneSample s = synth_scene(m, kps.points3d, default_intrinsics(), cfg);
    EXPECT_TRUE(s.truncated);
    const double frac = static_cast<double>(s.mask.count_on_object()) / s.silhouette_pixels;
    EXPECT_GE(frac, 0.4);
    EXPECT_LE(frac, 0.6);
    EXPECT_DOUBLE_EQ(frac, s.visible_fraction);
    EXPECT_GE(s.keypoints_outside, 2);
    int outside = 0;
    for (const Vec2& kp : s.keypoints2d) {
      outside += kp.x() < -0.5 || kp.y() < -0.5 || kp.x() > s.intr.width - 0.5 || kp.y() > s.intr.height - 0.5;
    }
    EXPECT_EQ(outside, s.keypoints_outside);
    EXPECT_EQ(s.intr.width, 640);
  }
}

TEST(Synth, OcclusionFraction) {
  const ObjectModel m = builtin_model("cube");
  const KeypointSet kps = fps_select(m, 8);
  for (double frac : {0.1, 0.3, 0.5, 0.7}) {
    SceneConfig cfg;
    cfg.seed = 7;
    cfg.occlusion_frac = frac;
    const SceneSample s = synth_scene(m, kps.points3d, default_intrinsics(), cfg);
    EXPECT_GE(s.occluded_fraction, frac);
    EXPECT_LT(s.occluded_fraction, frac + 0.05);
    const double kept = s.mask.count_on_object() / (s.silhouette_pixels * s.visible_fraction);
    EXPECT_NEAR(kept, 1.0 - s.occluded_fraction, 1e-12);
  }
}

TEST(Synth, FullOcclusion) {
  const ObjectModel m = builtin_model("cube");
  const KeypointSet kps = fps_select(m, 8);
  SceneConfig cfg;
  cfg.occlusion_frac = 1.0;
  try {
    synth_scene(m, kps.points3d, default_intrinsics(), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kObjectNotVisible);
  }
}

TEST(Occlusion, ContiguousRectangle) {
  SegmentationMask m(50, 50);
  for (int r = 10; r < 40; ++r) {
    for (int c = 5; c < 45; ++c) m.at(c, r) = 1;
  }
  const SegmentationMask before = m;
  Rng rng(8);
  const double removed = apply_occlusion(m, 0.25, rng);
  EXPECT_GE(removed, 0.25);
  int r0 = 50, r1 = -1, c0 = 50, c1 = -1;
  for (int r = 0; r < 50; ++r) {
    for (int c = 0; c < 50; ++c) {
      if (before.at(c, r) && !m.at(c, r)) {
        r0 = std::min(r0, r);
        r1 = std::max(r1, r);
        c0 = std::min(c0, c);
        c1 = std::max(c1, c);
      }
      EXPECT_FALSE(!before.at(c, r) && m.at(c, r));
    }
  }
  // Every object pixel inside the bounding box of the removed set is gone.
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) EXPECT_EQ(m.at(c, r), 0);
  }
}

}  // namespace
}  // namespace pvote
