#pragma once

#include <Eigen/Core>

namespace pvote {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

// Depths at or below this value are treated as behind the camera.
inline constexpr double kMinDepth = 1e-9;

// Rigid transform from the object frame to the camera frame.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }

  // Throws InvalidRotation unless rotation is orthonormal with det +1
  // (tolerance 1e-9).
  static Pose make(const Mat3& rotation, const Vec3& translation);

  Pose inverse() const;
  // (this * other)(X) == this(other(X)).
  Pose operator*(const Pose& other) const;
};

bool is_rotation(const Mat3& r, double tol = 1e-9);

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  // Throws InvalidArgument on non-positive focal lengths or image size.
  void validate() const;
  // Intrinsics of the window whose top-left corner sits at `offset` in this
  // image's pixel frame.
  CameraIntrinsics shifted(const Vec2& offset) const;
};

// Axis-angle vector (radians * unit axis).
using RotationVector = Vec3;

Vec3 transform_point(const Pose& pose, const Vec3& x);

// Pinhole projection. Throws BehindCamera when the camera-frame depth is
// <= kMinDepth. Results are never clamped to the image.
Vec2 project(const CameraIntrinsics& intr, const Pose& pose, const Vec3& x);
Vec2 project_camera_point(const CameraIntrinsics& intr, const Vec3& xc);

Mat3 skew(const Vec3& w);
Mat3 rotation_exp(const RotationVector& w);
// Throws InvalidRotation when r is not a proper rotation.
RotationVector rotation_log(const Mat3& r);

// Geodesic angle between two rotations, radians.
double rotation_angle_between(const Mat3& a, const Mat3& b);

}  // namespace pvote
