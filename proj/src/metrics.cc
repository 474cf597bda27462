#include "pvote/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pvote/error.h"

namespace pvote {

const char* add_kind_name(AddKind kind) { return kind == AddKind::kAdd ? "add" : "add-s"; }

Projection2DReport metric_2d_projection(const Pose& est, const Pose& gt, const ObjectModel& model,
                                        const CameraIntrinsics& intr) {
  const auto& pts = model.surface_points;
  if (pts.empty()) throw Error(ErrorCode::kInvalidArgument, "model has no points");
  double total = 0.0;
  for (const Vec3& x : pts) total += (project(intr, est, x) - project(intr, gt, x)).norm();
  Projection2DReport r;
  r.mean_error_px = total / static_cast<double>(pts.size());
  r.correct = r.mean_error_px < kProjectionThresholdPx;
  return r;
}

AddReport metric_add(const Pose& est, const Pose& gt, const ObjectModel& model, double diameter,
                     bool symmetric) {
  const auto& pts = model.surface_points;
  if (pts.empty()) throw Error(ErrorCode::kInvalidArgument, "model has no points");
  AddReport r;
  r.kind = symmetric ? AddKind::kAddS : AddKind::kAdd;
  double total = 0.0;
  if (!symmetric) {
    for (const Vec3& x : pts) total += (transform_point(est, x) - transform_point(gt, x)).norm();
  } else {
    std::vector<Vec3> target(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) target[i] = transform_point(gt, pts[i]);
    if (pts.size() <= 5000) {
      for (const Vec3& x : pts) {
        const Vec3 e = transform_point(est, x);
        double best = std::numeric_limits<double>::infinity();
        for (const Vec3& t : target) best = std::min(best, (e - t).squaredNorm());
        total += std::sqrt(best);
      }
    } else {
      const KdTree tree(std::move(target));
      for (const Vec3& x : pts) total += std::sqrt(tree.nearest_squared_distance(transform_point(est, x)));
    }
  }
  r.value = total / static_cast<double>(pts.size());
  r.correct = r.value < kAddThresholdFraction * diameter;
  return r;
}

MetricReport evaluate_pose(const Pose& est, const Pose& gt, const ObjectModel& model, double diameter,
                           const CameraIntrinsics& intr, bool symmetric) {
  return {metric_2d_projection(est, gt, model, intr), metric_add(est, gt, model, diameter, symmetric)};
}

double metric_auc(const std::vector<double>& values, double max_threshold) {
  if (values.empty()) throw Error(ErrorCode::kInvalidArgument, "AUC needs at least one value");
  if (!(max_threshold > 0.0)) throw Error(ErrorCode::kInvalidArgument, "AUC threshold must be positive");
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  // accuracy(tau) steps up by 1/n just after each value; integrate the
  // piecewise-constant function over [0, max_threshold].
  const double n = static_cast<double>(sorted.size());
  double area = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double start = std::clamp(sorted[i], 0.0, max_threshold);
    const double end = i + 1 < sorted.size() ? std::clamp(sorted[i + 1], 0.0, max_threshold) : max_threshold;
    area += (end - start) * static_cast<double>(i + 1) / n;
  }
  return area / max_threshold;
}

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
  std::vector<int> idx(points_.size());
  std::iota(idx.begin(), idx.end(), 0);
  nodes_.reserve(points_.size());
  root_ = build(idx, 0, static_cast<int>(idx.size()), 0);
}

int KdTree::build(std::vector<int>& idx, int lo, int hi, int depth) {
  if (lo >= hi) return -1;
  const int axis = depth % 3;
  const int mid = lo + (hi - lo) / 2;
  std::nth_element(idx.begin() + lo, idx.begin() + mid, idx.begin() + hi,
                   [&](int a, int b) { return points_[a](axis) < points_[b](axis); });
  const int node = static_cast<int>(nodes_.size());
  nodes_.push_back({idx[mid], axis, -1, -1});
  const int left = build(idx, lo, mid, depth + 1);
  const int right = build(idx, mid + 1, hi, depth + 1);
  nodes_[node].left = left;
  nodes_[node].right = right;
  return node;
}

void KdTree::search(int node, const Vec3& q, double& best) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const Vec3& p = points_[n.point];
  best = std::min(best, (p - q).squaredNorm());
  const double diff = q(n.axis) - p(n.axis);
  const int near = diff < 0.0 ? n.left : n.right;
  const int far = diff < 0.0 ? n.right : n.left;
  search(near, q, best);
  if (diff * diff < best) search(far, q, best);
}

double KdTree::nearest_squared_distance(const Vec3& query) const {
  double best = std::numeric_limits<double>::infinity();
  search(root_, query, best);
  return best;
}

}  // namespace pvote
