#include "pvote/geometry.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "pvote/error.h"

namespace pvote {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kBehindCamera: return "BehindCamera";
    case ErrorCode::kInvalidRotation: return "InvalidRotation";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kTooFewPoints: return "TooFewPoints";
    case ErrorCode::kKTooLarge: return "KTooLarge";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kTooFewPixels: return "TooFewPixels";
    case ErrorCode::kNoValidHypotheses: return "NoValidHypotheses";
    case ErrorCode::kZeroTotalWeight: return "ZeroTotalWeight";
    case ErrorCode::kDegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::kObjectNotVisible: return "ObjectNotVisible";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

bool is_rotation(const Mat3& r, double tol) {
  if (!r.allFinite()) return false;
  const Mat3 gram = r.transpose() * r;
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(r.determinant() - 1.0) <= tol;
}

Pose Pose::make(const Mat3& rotation, const Vec3& translation) {
  if (!is_rotation(rotation)) {
    throw Error(ErrorCode::kInvalidRotation, "pose rotation is not orthonormal with det +1");
  }
  return Pose{rotation, translation};
}

Pose Pose::inverse() const {
  const Mat3 rt = rotation.transpose();
  return Pose{rt, -rt * translation};
}

Pose Pose::operator*(const Pose& other) const {
  return Pose{rotation * other.rotation, rotation * other.translation + translation};
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "focal lengths must be positive");
  }
  if (width < 1 || height < 1) {
    throw Error(ErrorCode::kInvalidArgument, "image size must be at least 1x1");
  }
}

CameraIntrinsics CameraIntrinsics::shifted(const Vec2& offset) const {
  CameraIntrinsics out = *this;
  out.cx -= offset.x();
  out.cy -= offset.y();
  return out;
}

Vec3 transform_point(const Pose& pose, const Vec3& x) {
  return pose.rotation * x + pose.translation;
}

Vec2 project_camera_point(const CameraIntrinsics& intr, const Vec3& xc) {
  if (!(xc.z() > kMinDepth)) {
    std::ostringstream msg;
    msg << "point depth " << xc.z() << " is not in front of the camera";
    throw Error(ErrorCode::kBehindCamera, msg.str());
  }
  return {intr.fx * xc.x() / xc.z() + intr.cx, intr.fy * xc.y() / xc.z() + intr.cy};
}

Vec2 project(const CameraIntrinsics& intr, const Pose& pose, const Vec3& x) {
  return project_camera_point(intr, transform_point(pose, x));
}

Mat3 skew(const Vec3& w) {
  Mat3 s;
  s << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return s;
}

Mat3 rotation_exp(const RotationVector& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 k = skew(w);
  double a;
  double b;
  if (theta2 < 1e-12) {
    // Taylor terms of sin(t)/t and (1 - cos(t))/t^2.
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Mat3::Identity() + a * k + b * k * k;
}

RotationVector rotation_log(const Mat3& r) {
  if (!is_rotation(r)) {
    throw Error(ErrorCode::kInvalidRotation, "rotation_log input is not a rotation");
  }
  const double cos_theta = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  const Vec3 axial(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  const double theta = std::atan2(0.5 * axial.norm(), cos_theta);

  if (theta < 1e-6) {
    // axial = 2 sin(theta) * axis ~= 2 * w
    return 0.5 * axial;
  }
  if (M_PI - theta > 1e-4) {
    return theta / (2.0 * std::sin(theta)) * axial;
  }

  // Near pi the antisymmetric part vanishes; the symmetric part is
  // cos(theta) I + (1 - cos(theta)) a a^T.
  const Mat3 sym = 0.5 * (r + r.transpose());
  const Mat3 aat = (sym - cos_theta * Mat3::Identity()) / (1.0 - cos_theta);
  int col = 0;
  aat.diagonal().maxCoeff(&col);
  Vec3 axis = aat.col(col) / std::sqrt(std::max(aat(col, col), 1e-300));
  axis.normalize();
  // Pick the sign consistent with the (small) antisymmetric part.
  if (axis.dot(axial) < 0.0) axis = -axis;
  return theta * axis;
}

double rotation_angle_between(const Mat3& a, const Mat3& b) {
  const Mat3 d = a.transpose() * b;
  const double c = std::clamp((d.trace() - 1.0) * 0.5, -1.0, 1.0);
  // acos loses precision for tiny angles; use the antisymmetric part there.
  const Vec3 axial(d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1));
  return std::atan2(0.5 * axial.norm(), c);
}

}  // namespace pvote
