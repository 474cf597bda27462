#pragma once

#include <string>
#include <vector>

#include "pvote/geometry.h"
#include "pvote/voting.h"

namespace pvote {

struct Correspondence {
  Vec3 point3d = Vec3::Zero();  // object frame
  KeypointDistribution distribution;
};

struct PnPResult {
  Pose pose;
  double final_cost = 0.0;  // Mahalanobis cost at `pose`
  int iterations = 0;
  bool converged = false;
};

struct EpnpSolution {
  Pose pose;
  double reprojection_error = 0.0;  // mean pixel error on the points used
  std::vector<int> used;            // correspondence indices fed to EPnP
  bool planar = false;
  // False when a majority of the used points end up behind the camera.
  bool in_front = true;
};

// Indices of the `count` correspondences with the smallest covariance
// trace, ties broken by index, returned in increasing index order.
std::vector<int> select_lowest_trace(const std::vector<Correspondence>& corrs, int count);

// EPnP on arbitrary 2D-3D pairs (n >= 4). Four control points from the
// centroid and principal axes, or three when the points are coplanar.
// Throws DegenerateConfiguration for collinear points, InvalidArgument for
// fewer than 4 pairs.
EpnpSolution epnp(const std::vector<Vec3>& points3d, const std::vector<Vec2>& points2d,
                  const CameraIntrinsics& intr);

// EPnP on the means of the four lowest-trace correspondences.
EpnpSolution epnp_init(const std::vector<Correspondence>& corrs, const CameraIntrinsics& intr);

// Sum over correspondences of (x_k - mu_k)^T Sigma_k^-1 (x_k - mu_k), with
// x_k the projection of X_k. Throws BehindCamera.
double mahalanobis_cost(const Pose& pose, const std::vector<Correspondence>& corrs,
                        const CameraIntrinsics& intr);

struct RefineOptions {
  int max_iters = 100;
  double grad_tol = 1e-8;  // infinity norm of J^T r
  double initial_lambda = 1e-3;
};

// Whitened residuals r_k = L_k^T (pi(R X_k + t) - mu_k), where
// L_k L_k^T = Sigma_k^-1, stacked as [r_0x, r_0y, r_1x, ...]. Jacobian with
// respect to the update (dw, dt) applied as R <- exp(dw) R, t <- t + dt.
struct WhitenedSystem {
  Eigen::VectorXd residuals;
  Eigen::Matrix<double, Eigen::Dynamic, 6> jacobian;
};
// Throws BehindCamera.
WhitenedSystem whitened_system(const Pose& pose, const std::vector<Correspondence>& corrs,
                               const CameraIntrinsics& intr, bool with_jacobian = true);

Pose apply_update(const Pose& pose, const Eigen::Matrix<double, 6, 1>& delta);

// Levenberg-Marquardt over the whitened residuals. A step is accepted when
// it lowers the cost or, once cost changes fall within 1e-10 relative, when
// it lowers the gradient without exceeding the initial cost. Steps that
// move any keypoint behind the camera are rejected. When init itself has a keypoint
// behind the camera, returns init with infinite cost and converged = false.
PnPResult refine_pose(const Pose& init, const std::vector<Correspondence>& corrs,
                      const CameraIntrinsics& intr, const RefineOptions& opts = {});

enum class PnPVariant {
  kInitOnly,     // EPnP from the four lowest-trace keypoints
  kUncertainty,  // EPnP + LM on the Mahalanobis cost
  kIsotropic,    // EPnP + LM with every covariance replaced by I
};

const char* pnp_variant_name(PnPVariant v);
// Accepts "init-only", "uncertainty", "isotropic".
PnPVariant parse_pnp_variant(const std::string& name);

struct PnPConfig {
  PnPVariant variant = PnPVariant::kUncertainty;
  RefineOptions refine;
};

// EPnP on the four lowest-trace keypoints followed by refinement on all of
// them. final_cost is always the Mahalanobis cost under the given
// covariances, whatever the variant optimized. Throws InvalidArgument for
// fewer than 4 correspondences.
PnPResult solve_pose(const std::vector<Correspondence>& corrs, const CameraIntrinsics& intr,
                     const PnPConfig& cfg = {});

// Copies with Sigma = I.
std::vector<Correspondence> with_identity_covariance(std::vector<Correspondence> corrs);

}  // namespace pvote
