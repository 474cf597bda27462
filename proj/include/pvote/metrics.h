#pragma once

#include <vector>

#include "pvote/geometry.h"
#include "pvote/model.h"

namespace pvote {

inline constexpr double kProjectionThresholdPx = 5.0;
inline constexpr double kAddThresholdFraction = 0.1;  // of the model diameter
// AUC integration limit used for YCB-Video style reporting: 0.1 m.
inline constexpr double kAucMaxThresholdMeters = 0.1;

enum class AddKind { kAdd, kAddS };

const char* add_kind_name(AddKind kind);

struct Projection2DReport {
  double mean_error_px = 0.0;
  bool correct = false;  // mean error < 5 px
};

struct AddReport {
  double value = 0.0;  // model units
  bool correct = false;  // value < 0.1 * diameter
  AddKind kind = AddKind::kAdd;
};

struct MetricReport {
  Projection2DReport proj2d;
  AddReport add;
};

// Mean image distance between model points projected with est and gt.
// Throws BehindCamera.
Projection2DReport metric_2d_projection(const Pose& est, const Pose& gt, const ObjectModel& model,
                                        const CameraIntrinsics& intr);

// ADD: mean |est(X) - gt(X)|. ADD-S: mean over est(X) of the distance to
// the nearest gt-transformed model point (exact search up to 5000 points,
// k-d tree above).
AddReport metric_add(const Pose& est, const Pose& gt, const ObjectModel& model, double diameter,
                     bool symmetric);

MetricReport evaluate_pose(const Pose& est, const Pose& gt, const ObjectModel& model, double diameter,
                           const CameraIntrinsics& intr, bool symmetric);

// Area under accuracy(tau) = fraction of values < tau for tau in
// [0, max_threshold], normalized to [0, 1]. The step function is integrated
// exactly. Throws InvalidArgument on empty input or non-positive threshold.
double metric_auc(const std::vector<double>& values, double max_threshold);

// Exact nearest neighbour search over a fixed 3D point set.
class KdTree {
 public:
  explicit KdTree(std::vector<Vec3> points);
  // Squared distance to the closest stored point.
  double nearest_squared_distance(const Vec3& query) const;

 private:
  struct Node {
    int point = -1;
    int axis = 0;
    int left = -1;
    int right = -1;
  };
  int build(std::vector<int>& idx, int lo, int hi, int depth);
  void search(int node, const Vec3& q, double& best) const;

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace pvote
