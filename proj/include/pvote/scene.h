#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pvote/field.h"
#include "pvote/geometry.h"
#include "pvote/model.h"
#include "pvote/rng.h"

namespace pvote {

// Procedural test objects, densely sampled on their surfaces (units: mm).
// "cube": 100 mm cube; "blob": a lumpy closed surface; "lshape": two boxes
// forming an L; "square_prism": a box with a square cross-section,
// symmetric under 90 degree turns about z.
ObjectModel builtin_model(const std::string& name);
std::vector<std::string> builtin_model_names();
// "builtin:<name>" or a PLY path.
ObjectModel load_model_source(const std::string& source);

// LINEMOD-like 640x480 pinhole camera.
CameraIntrinsics default_intrinsics();

struct PoseSamplerConfig {
  double min_depth = 450.0;
  double max_depth = 800.0;
  // The object center projects inside the image shrunk by this fraction on
  // each side (0.1 -> central 80%).
  double center_margin = 0.1;

  void validate() const;
};

// Uniformly random rotation; depth uniform in range; center projected
// uniformly inside the central window.
Pose sample_pose(const Vec3& center, const CameraIntrinsics& intr, const PoseSamplerConfig& cfg, Rng& rng);

struct TruncationConfig {
  double min_visible = 0.4;
  double max_visible = 0.6;
  // Retry window placement until at least this many keypoints project
  // outside the cropped image.
  int min_keypoints_outside = 0;

  void validate() const;
};

struct SceneConfig {
  PoseSamplerConfig pose;
  double occlusion_frac = 0.0;
  std::optional<TruncationConfig> truncation;
  NoiseConfig noise;
  std::uint64_t seed = 0;  // pose, occlusion and crop placement
};

struct SceneSample {
  CameraIntrinsics intr;           // frame of mask and field (cropped)
  CameraIntrinsics original_intr;  // frame before cropping
  Vec2 crop_offset = Vec2::Zero(); // crop top-left in the original frame
  Pose gt_pose;
  SegmentationMask mask;
  VectorField field;
  std::vector<Vec2> keypoints2d_gt;  // original frame
  std::vector<Vec2> keypoints2d;     // crop frame
  NoiseConfig noise;
  double occlusion_requested = 0.0;
  double occluded_fraction = 0.0;  // of the pixels visible before occlusion
  bool truncated = false;
  double visible_fraction = 1.0;   // object pixels inside the crop / full silhouette
  int keypoints_outside = 0;       // keypoints projecting outside the crop
  std::size_t silhouette_pixels = 0;
};

// Silhouette pixels (col, row) in the camera's pixel frame, unclipped: every
// projected surface point is splatted with a 3x3 kernel, then the result is
// closed (3x3 dilation followed by erosion).
std::vector<std::pair<int, int>> render_silhouette(const ObjectModel& model, const Pose& pose,
                                                   const CameraIntrinsics& intr);

// Removes an axis-aligned rectangle of object pixels, grown around a random
// object pixel until it covers at least `fraction` of them. Returns the
// fraction actually removed.
double apply_occlusion(SegmentationMask& mask, double fraction, Rng& rng);

// Throws ObjectNotVisible when nothing of the object is left in the image.
SceneSample synth_scene(const ObjectModel& model, const std::vector<Vec3>& keypoints3d,
                        const CameraIntrinsics& intr, const SceneConfig& cfg);

}  // namespace pvote
