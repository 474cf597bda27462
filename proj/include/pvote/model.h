#pragma once

#include <string>
#include <vector>

#include "pvote/geometry.h"

namespace pvote {

struct ObjectModel {
  std::string name;
  std::vector<Vec3> surface_points;
  // False when the points are coplanar (or collinear); such models cannot
  // drive pose solving. Set by load_model / make_model.
  bool solvable = true;
};

// Builds a model and sets the solvable flag. Throws TooFewPoints below 4.
ObjectModel make_model(std::string name, std::vector<Vec3> points);

// Loads vertex positions from an ASCII PLY file, in file order. Non-vertex
// elements are skipped. Throws ParseError (with line number), TooFewPoints
// or IoError.
ObjectModel load_model(const std::string& path);
ObjectModel parse_ply(const std::string& text, const std::string& name = "model");
void write_ply(const std::string& path, const std::vector<Vec3>& points);

enum class KeypointScheme { kFps, kBBoxCorners };

const char* scheme_name(KeypointScheme scheme);
// Accepts "fps" and "bbox". Throws InvalidArgument otherwise.
KeypointScheme parse_scheme(const std::string& name);

// Index 0 is the object center (centroid of the surface points); the
// remaining entries are the selected keypoints.
struct KeypointSet {
  KeypointScheme scheme = KeypointScheme::kFps;
  std::vector<Vec3> points3d;
  // For FPS: vertex index of each keypoint (entry 0 is -1 for the center).
  std::vector<int> source_indices;
  // Some keypoints coincide (e.g. a flat bounding box).
  bool degenerate = false;

  int num_keypoints() const { return static_cast<int>(points3d.size()); }
};

Vec3 centroid(const std::vector<Vec3>& points);

inline constexpr int kDefaultFpsKeypoints = 8;

// Greedy farthest point sampling seeded with the centroid. Each new keypoint
// maximizes its minimum distance to the set selected so far (center
// included); ties go to the lowest vertex index. Returns K + 1 points.
// Throws KTooLarge when K exceeds the point count, InvalidArgument for K < 1.
KeypointSet fps_select(const ObjectModel& model, int k);

// Center followed by the 8 corners of the axis-aligned bounding box. Corner
// i takes max x if bit 0 of i is set, max y for bit 1, max z for bit 2.
KeypointSet bbox_corners(const ObjectModel& model);

// Maximum pairwise distance. Exact O(n^2) up to kDiameterBruteForceLimit
// points; above that, points that provably cannot be an endpoint of the
// diameter are pruned first (result still exact).
inline constexpr std::size_t kDiameterBruteForceLimit = 20000;
double model_diameter(const ObjectModel& model);
double model_diameter(const std::vector<Vec3>& points);

}  // namespace pvote
