#include "pvote/scene.h"

#include <algorithm>
#include <cmath>

#include <Eigen/Geometry>

#include "pvote/error.h"

namespace pvote {
namespace {

constexpr double kSampleSpacing = 2.0;  // mm between surface samples

// Cell-centered samples on the six faces of an axis-aligned box.
void sample_box(const Vec3& lo, const Vec3& hi, std::vector<Vec3>& out) {
  const Vec3 ext = hi - lo;
  for (int axis = 0; axis < 3; ++axis) {
    const int u = (axis + 1) % 3;
    const int v = (axis + 2) % 3;
    const int nu = std::max(1, static_cast<int>(std::round(ext(u) / kSampleSpacing)));
    const int nv = std::max(1, static_cast<int>(std::round(ext(v) / kSampleSpacing)));
    for (int side = 0; side < 2; ++side) {
      for (int i = 0; i < nu; ++i) {
        for (int j = 0; j < nv; ++j) {
          Vec3 p;
          p(axis) = side ? hi(axis) : lo(axis);
          p(u) = lo(u) + (i + 0.5) * ext(u) / nu;
          p(v) = lo(v) + (j + 0.5) * ext(v) / nv;
          out.push_back(p);
        }
      }
    }
  }
}

bool strictly_inside(const Vec3& p, const Vec3& lo, const Vec3& hi) {
  return (p.array() > lo.array()).all() && (p.array() < hi.array()).all();
}

ObjectModel make_blob() {
  // Fibonacci-sphere directions pushed out by a lumpy, asymmetric radius.
  constexpr int kCount = 24000;
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  std::vector<Vec3> pts;
  pts.reserve(kCount);
  for (int i = 0; i < kCount; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / kCount;
    const double r = std::sqrt(1.0 - z * z);
    const double phi = golden * i;
    const Vec3 dir(r * std::cos(phi), r * std::sin(phi), z);
    const double theta = std::acos(z);
    const double radius = 45.0 * (1.0 + 0.22 * std::sin(2.0 * theta) * std::cos(3.0 * phi + 0.5) +
                                  0.12 * std::cos(theta) + 0.08 * std::sin(phi));
    pts.push_back(Vec3(1.3 * dir.x(), 0.95 * dir.y(), 0.75 * dir.z()) * radius);
  }
  return make_model("blob", std::move(pts));
}

ObjectModel make_lshape() {
  const Vec3 a_lo(-60, -20, -20), a_hi(60, 20, 20);
  const Vec3 b_lo(20, 20, -20), b_hi(60, 80, 20);
  std::vector<Vec3> a, b, pts;
  sample_box(a_lo, a_hi, a);
  sample_box(b_lo, b_hi, b);
  // Drop the samples of the shared face that lie inside the union.
  for (const Vec3& p : a) {
    if (!(p.y() == a_hi.y() && p.x() > b_lo.x() && p.x() < b_hi.x())) pts.push_back(p);
  }
  for (const Vec3& p : b) {
    if (!(p.y() == b_lo.y()) && !strictly_inside(p, a_lo, a_hi)) pts.push_back(p);
  }
  return make_model("lshape", std::move(pts));
}

}  // namespace

ObjectModel builtin_model(const std::string& name) {
  std::vector<Vec3> pts;
  if (name == "cube") {
    sample_box(Vec3::Constant(-50.0), Vec3::Constant(50.0), pts);
    return make_model(name, std::move(pts));
  }
  if (name == "square_prism") {
    sample_box(Vec3(-30, -30, -60), Vec3(30, 30, 60), pts);
    return make_model(name, std::move(pts));
  }
  if (name == "blob") return make_blob();
  if (name == "lshape") return make_lshape();
  throw Error(ErrorCode::kInvalidArgument, "unknown builtin model '" + name + "'");
}

std::vector<std::string> builtin_model_names() { return {"cube", "blob", "lshape", "square_prism"}; }

ObjectModel load_model_source(const std::string& source) {
  constexpr std::string_view kPrefix = "builtin:";
  if (source.rfind(kPrefix, 0) == 0) return builtin_model(source.substr(kPrefix.size()));
  return load_model(source);
}

CameraIntrinsics default_intrinsics() {
  CameraIntrinsics intr;
  intr.fx = 572.4114;
  intr.fy = 573.5704;
  intr.cx = 325.2611;
  intr.cy = 242.0490;
  intr.width = 640;
  intr.height = 480;
  return intr;
}

void PoseSamplerConfig::validate() const {
  if (!(min_depth > 0.0 && max_depth >= min_depth)) {
    throw Error(ErrorCode::kInvalidArgument, "depth range must satisfy 0 < min_depth <= max_depth");
  }
  if (!(center_margin >= 0.0 && center_margin < 0.5)) {
    throw Error(ErrorCode::kInvalidArgument, "center_margin must be in [0, 0.5)");
  }
}

void TruncationConfig::validate() const {
  if (!(min_visible > 0.0 && min_visible <= max_visible && max_visible <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "visible fraction range must satisfy 0 < min <= max <= 1");
  }
  if (min_keypoints_outside < 0) {
    throw Error(ErrorCode::kInvalidArgument, "min_keypoints_outside must be >= 0");
  }
}

Pose sample_pose(const Vec3& center, const CameraIntrinsics& intr, const PoseSamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  Eigen::Vector4d q;
  do {
    q = Eigen::Vector4d(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  } while (q.norm() < 1e-6);
  q.normalize();
  const Mat3 rotation = Eigen::Quaterniond(q(0), q(1), q(2), q(3)).toRotationMatrix();

  const double depth = rng.uniform(cfg.min_depth, cfg.max_depth);
  const double u = rng.uniform(cfg.center_margin, 1.0 - cfg.center_margin) * intr.width;
  const double v = rng.uniform(cfg.center_margin, 1.0 - cfg.center_margin) * intr.height;
  const Vec3 center_cam(depth * (u - intr.cx) / intr.fx, depth * (v - intr.cy) / intr.fy, depth);
  return Pose{rotation, center_cam - rotation * center};
}

std::vector<std::pair<int, int>> render_silhouette(const ObjectModel& model, const Pose& pose,
                                                   const CameraIntrinsics& intr) {
  std::vector<std::pair<int, int>> splats;
  splats.reserve(model.surface_points.size());
  int min_c = INT32_MAX, min_r = INT32_MAX, max_c = INT32_MIN, max_r = INT32_MIN;
  for (const Vec3& x : model.surface_points) {
    const Vec3 xc = transform_point(pose, x);
    if (!(xc.z() > kMinDepth)) continue;
    const Vec2 uv = project_camera_point(intr, xc);
    const int c = static_cast<int>(std::floor(uv.x() + 0.5));
    const int r = static_cast<int>(std::floor(uv.y() + 0.5));
    splats.emplace_back(c, r);
    min_c = std::min(min_c, c);
    max_c = std::max(max_c, c);
    min_r = std::min(min_r, r);
    max_r = std::max(max_r, r);
  }
  if (splats.empty()) return {};

  // Local canvas with room for the kernel and the closing.
  constexpr int kPad = 3;
  const int ox = min_c - kPad, oy = min_r - kPad;
  const int w = max_c - min_c + 1 + 2 * kPad, h = max_r - min_r + 1 + 2 * kPad;
  std::vector<std::uint8_t> grid(static_cast<std::size_t>(w) * h, 0), tmp;
  auto idx = [w](int c, int r) { return static_cast<std::size_t>(r) * w + c; };
  for (const auto& [c, r] : splats) {
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) grid[idx(c - ox + dc, r - oy + dr)] = 1;
    }
  }
  auto morph = [&](bool dilate) {
    tmp.assign(grid.size(), 0);
    for (int r = 1; r < h - 1; ++r) {
      for (int c = 1; c < w - 1; ++c) {
        bool any = false, all = true;
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            const bool on = grid[idx(c + dc, r + dr)] != 0;
            any |= on;
            all &= on;
          }
        }
        tmp[idx(c, r)] = dilate ? any : all;
      }
    }
    grid.swap(tmp);
  };
  morph(true);
  morph(false);

  std::vector<std::pair<int, int>> out;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (grid[idx(c, r)]) out.emplace_back(c + ox, r + oy);
    }
  }
  return out;
}

double apply_occlusion(SegmentationMask& mask, double fraction, Rng& rng) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "occlusion fraction must be in [0, 1]");
  }
  const std::vector<int> pixels = mask.object_pixels();
  if (pixels.empty() || fraction == 0.0) return 0.0;
  const std::size_t target =
      static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(pixels.size()) - 1e-9));
  if (target >= pixels.size()) {
    for (int p : pixels) mask.labels[static_cast<std::size_t>(p)] = 0;
    return 1.0;
  }

  const Vec2 anchor = pixel_position(static_cast<std::size_t>(pixels[rng.index(pixels.size())]), mask.width);
  const double aspect = std::exp(rng.uniform(std::log(0.5), std::log(2.0)));
  auto covers = [&](const Vec2& p, double s) {
    return std::abs(p.x() - anchor.x()) <= s * aspect && std::abs(p.y() - anchor.y()) <= s / aspect;
  };
  auto count = [&](double s) {
    std::size_t n = 0;
    for (int p : pixels) n += covers(pixel_position(static_cast<std::size_t>(p), mask.width), s);
    return n;
  };

  // Smallest scale whose rectangle covers the target pixel count.
  double lo = 0.0, hi = 4.0 * (mask.width + mask.height);
  for (int iter = 0; iter < 60; ++iter) {
    const double mid = 0.5 * (lo + hi);
    (count(mid) >= target ? hi : lo) = mid;
  }
  std::size_t removed = 0;
  for (int p : pixels) {
    if (covers(pixel_position(static_cast<std::size_t>(p), mask.width), hi)) {
      mask.labels[static_cast<std::size_t>(p)] = 0;
      ++removed;
    }
  }
  return static_cast<double>(removed) / static_cast<double>(pixels.size());
}

SceneSample synth_scene(const ObjectModel& model, const std::vector<Vec3>& keypoints3d,
                        const CameraIntrinsics& intr, const SceneConfig& cfg) {
  intr.validate();
  cfg.noise.validate();
  if (cfg.truncation) cfg.truncation->validate();

  Rng rng(cfg.seed);
  SceneSample scene;
  scene.original_intr = intr;
  scene.noise = cfg.noise;
  scene.occlusion_requested = cfg.occlusion_frac;
  scene.gt_pose = sample_pose(centroid(model.surface_points), intr, cfg.pose, rng);
  for (const Vec3& x : keypoints3d) scene.keypoints2d_gt.push_back(project(intr, scene.gt_pose, x));

  const auto silhouette = render_silhouette(model, scene.gt_pose, intr);
  scene.silhouette_pixels = silhouette.size();
  if (silhouette.empty()) throw Error(ErrorCode::kObjectNotVisible, "object does not project to any pixel");

  auto visible_in = [&](int ox, int oy) {
    std::size_t n = 0;
    for (const auto& [c, r] : silhouette) {
      n += c >= ox && c < ox + intr.width && r >= oy && r < oy + intr.height;
    }
    return n;
  };
  auto outside_count = [&](int ox, int oy) {
    int n = 0;
    for (const Vec2& k : scene.keypoints2d_gt) {
      const double u = k.x() - ox, v = k.y() - oy;
      n += !(u >= -0.5 && u < intr.width - 0.5 && v >= -0.5 && v < intr.height - 0.5);
    }
    return n;
  };

  int ox = 0, oy = 0;
  if (cfg.truncation) {
    const TruncationConfig& tc = *cfg.truncation;
    const double total = static_cast<double>(silhouette.size());
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      const double goal = rng.uniform(tc.min_visible, tc.max_visible);
      const double angle = rng.uniform(0.0, 2.0 * M_PI);
      const double dx = std::cos(angle), dy = std::sin(angle);
      // Slide the window along (dx, dy) until the visible share drops to the goal.
      double lo = 0.0, hi = 2.0 * (intr.width + intr.height) + 2.0 * std::sqrt(total);
      for (int iter = 0; iter < 50; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double frac = visible_in(static_cast<int>(std::lround(mid * dx)),
                                       static_cast<int>(std::lround(mid * dy))) / total;
        (frac > goal ? lo : hi) = mid;
      }
      const int cx = static_cast<int>(std::lround(hi * dx));
      const int cy = static_cast<int>(std::lround(hi * dy));
      const double frac = visible_in(cx, cy) / total;
      if (frac < tc.min_visible || frac > tc.max_visible) continue;
      if (outside_count(cx, cy) < tc.min_keypoints_outside) continue;
      ox = cx;
      oy = cy;
      placed = true;
    }
    if (!placed) {
      throw Error(ErrorCode::kObjectNotVisible, "could not place a crop window with the requested visibility");
    }
    scene.truncated = true;
    scene.visible_fraction = visible_in(ox, oy) / total;
  } else {
    scene.visible_fraction = static_cast<double>(visible_in(0, 0)) / static_cast<double>(silhouette.size());
  }
  scene.crop_offset = Vec2(ox, oy);
  scene.intr = intr.shifted(scene.crop_offset);
  scene.keypoints_outside = outside_count(ox, oy);
  for (const Vec2& k : scene.keypoints2d_gt) scene.keypoints2d.push_back(k - scene.crop_offset);

  scene.mask = SegmentationMask(intr.width, intr.height);
  for (const auto& [c, r] : silhouette) {
    const int col = c - ox, row = r - oy;
    if (col >= 0 && col < intr.width && row >= 0 && row < intr.height) scene.mask.at(col, row) = 1;
  }
  scene.occluded_fraction = apply_occlusion(scene.mask, cfg.occlusion_frac, rng);
  if (scene.mask.count_on_object() == 0) {
    throw Error(ErrorCode::kObjectNotVisible, "no object pixels left after occlusion/truncation");
  }

  scene.field = corrupt_field(gt_vector_field(scene.mask, scene.keypoints2d), scene.mask, cfg.noise);
  return scene;
}

}  // namespace pvote
