#include "pvote/io.h"

#include <gtest/gtest.h>

#include "pvote/error.h"

namespace pvote {
namespace {

TEST(Io, KeypointsRoundTrip) {
  KeypointSet s;
  s.scheme = KeypointScheme::kBBoxCorners;
  s.points3d = {{0.5, 0.25, -1}, {1, 2, 3}, {4, 5, 6}};
  const Json j = keypoints_to_json(s);
  EXPECT_EQ(j["scheme"], "bbox");
  EXPECT_EQ(j["points3d"].size(), 3u);
  const KeypointSet t = keypoints_from_json(j);
  EXPECT_EQ(t.scheme, s.scheme);
  EXPECT_EQ(t.points3d, s.points3d);
  // Text round trip keeps every bit.
  const KeypointSet u = keypoints_from_json(parse_json_text(j.dump(), "kp"));
  EXPECT_EQ(u.points3d, s.points3d);
}

TEST(Io, KeypointsSchemaErrors) {
  EXPECT_THROW(keypoints_from_json(Json::array()), Error);
  EXPECT_THROW(keypoints_from_json(Json{{"scheme", "fps"}, {"points3d", {{1, 2}}}}), Error);
  EXPECT_THROW(keypoints_from_json(Json{{"scheme", "nope"}, {"points3d", {{1, 2, 3}}}}), Error);
}

TEST(Io, DistributionJson) {
  KeypointDistribution d;
  d.mean = Vec2(1.5, -2);
  d.covariance << 2, 0.5, 0.5, 3;
  d.hypotheses.resize(7);
  const Json j = distribution_to_json(d, 4);
  EXPECT_EQ(j["k"], 4);
  EXPECT_EQ(j["mean"][0], 1.5);
  EXPECT_EQ(j["cov"][0][1], 0.5);
  EXPECT_EQ(j["cov"][1][0], 0.5);
  EXPECT_EQ(j["n_hyps"], 7);
}

TEST(Io, PoseAndIntrinsics) {
  Pose p;
  p.rotation = rotation_exp(Vec3(0.1, 0.2, 0.3));
  p.translation = Vec3(1, 2, 3);
  const Pose q = pose_from_json(parse_json_text(pose_to_json(p).dump(), "pose"));
  EXPECT_EQ(q.rotation, p.rotation);
  EXPECT_EQ(q.translation, p.translation);
  const CameraIntrinsics intr{572.4114, 573.5704, 325.2611, 242.049, 640, 480};
  const CameraIntrinsics back = intrinsics_from_json(intrinsics_to_json(intr));
  EXPECT_EQ(back.fx, intr.fx);
  EXPECT_EQ(back.cy, intr.cy);
  EXPECT_EQ(back.height, 480);
}

TEST(Io, MissingFile) {
  try {
    read_json_file("/nonexistent/config.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIoError);
    EXPECT_NE(std::string(e.what()).find("/nonexistent/config.json"), std::string::npos);
  }
}

}  // namespace
}  // namespace pvote
