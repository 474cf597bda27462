#include "pvote/model.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "pvote/error.h"

namespace pvote {
namespace {

// Relative spread below which a point set counts as flat along an axis.
constexpr double kFlatTolerance = 1e-6;

Eigen::Vector3d principal_spreads(const std::vector<Vec3>& points) {
  const Vec3 c = centroid(points);
  Mat3 scatter = Mat3::Zero();
  for (const Vec3& p : points) scatter += (p - c) * (p - c).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter);
  // Ascending eigenvalues -> standard deviations along principal axes.
  return eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
}

[[noreturn]] void parse_fail(int line, const std::string& what) {
  throw Error(ErrorCode::kParseError, "line " + std::to_string(line) + ": " + what);
}

struct PlyProperty {
  std::string name;
  bool is_list = false;
};

struct PlyElement {
  std::string name;
  long long count = 0;
  std::vector<PlyProperty> properties;
};

}  // namespace

Vec3 centroid(const std::vector<Vec3>& points) {
  Vec3 sum = Vec3::Zero();
  for (const Vec3& p : points) sum += p;
  return points.empty() ? sum : Vec3(sum / static_cast<double>(points.size()));
}

ObjectModel make_model(std::string name, std::vector<Vec3> points) {
  if (points.size() < 4) {
    throw Error(ErrorCode::kTooFewPoints,
                "model '" + name + "' has " + std::to_string(points.size()) +
                    " points, need at least 4");
  }
  ObjectModel model;
  model.name = std::move(name);
  model.surface_points = std::move(points);
  const Eigen::Vector3d spread = principal_spreads(model.surface_points);
  model.solvable = spread(0) > kFlatTolerance * spread(2);
  return model;
}

ObjectModel parse_ply(const std::string& text, const std::string& name) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;

  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  if (!next_line() || line != "ply") parse_fail(std::max(line_no, 1), "missing 'ply' magic");

  std::vector<PlyElement> elements;
  bool have_format = false;
  bool header_done = false;
  while (next_line()) {
    std::istringstream tok(line);
    std::string keyword;
    tok >> keyword;
    if (keyword.empty() || keyword == "comment" || keyword == "obj_info") continue;
    if (keyword == "format") {
      std::string fmt;
      tok >> fmt;
      if (fmt != "ascii") parse_fail(line_no, "only ASCII PLY is supported, got '" + fmt + "'");
      have_format = true;
    } else if (keyword == "element") {
      PlyElement e;
      if (!(tok >> e.name >> e.count) || e.count < 0) parse_fail(line_no, "malformed element line");
      elements.push_back(std::move(e));
    } else if (keyword == "property") {
      if (elements.empty()) parse_fail(line_no, "property before any element");
      PlyProperty prop;
      std::string type;
      tok >> type;
      if (type == "list") {
        std::string count_type, item_type;
        tok >> count_type >> item_type;
        prop.is_list = true;
      }
      if (!(tok >> prop.name)) parse_fail(line_no, "malformed property line");
      elements.back().properties.push_back(prop);
    } else if (keyword == "end_header") {
      header_done = true;
      break;
    } else {
      parse_fail(line_no, "unknown header keyword '" + keyword + "'");
    }
  }
  if (!header_done) parse_fail(line_no, "missing end_header");
  if (!have_format) parse_fail(line_no, "missing format line");

  std::vector<Vec3> points;
  bool saw_vertex = false;
  for (const PlyElement& e : elements) {
    const bool is_vertex = e.name == "vertex";
    int ix = -1, iy = -1, iz = -1;
    if (is_vertex) {
      saw_vertex = true;
      for (int i = 0; i < static_cast<int>(e.properties.size()); ++i) {
        if (e.properties[i].name == "x") ix = i;
        if (e.properties[i].name == "y") iy = i;
        if (e.properties[i].name == "z") iz = i;
      }
      if (ix < 0 || iy < 0 || iz < 0) parse_fail(line_no, "vertex element lacks x/y/z properties");
      points.reserve(static_cast<std::size_t>(e.count));
    }
    for (long long n = 0; n < e.count; ++n) {
      if (!next_line()) parse_fail(line_no + 1, "unexpected end of file in element '" + e.name + "'");
      if (!is_vertex) continue;
      std::istringstream tok(line);
      Vec3 p = Vec3::Zero();
      for (int i = 0; i < static_cast<int>(e.properties.size()); ++i) {
        if (e.properties[i].is_list) {
          long long count;
          if (!(tok >> count) || count < 0) parse_fail(line_no, "bad list count");
          double skip;
          for (long long j = 0; j < count; ++j) {
            if (!(tok >> skip)) parse_fail(line_no, "truncated list property");
          }
          continue;
        }
        double value;
        if (!(tok >> value)) parse_fail(line_no, "expected numeric value for '" + e.properties[i].name + "'");
        if (i == ix) p.x() = value;
        if (i == iy) p.y() = value;
        if (i == iz) p.z() = value;
      }
      if (!p.allFinite()) parse_fail(line_no, "non-finite vertex coordinate");
      points.push_back(p);
    }
  }
  if (!saw_vertex) parse_fail(line_no, "no vertex element");
  return make_model(name, std::move(points));
}

ObjectModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open model file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string stem = path;
  if (auto slash = stem.find_last_of('/'); slash != std::string::npos) stem = stem.substr(slash + 1);
  if (auto dot = stem.find_last_of('.'); dot != std::string::npos) stem = stem.substr(0, dot);
  try {
    return parse_ply(buf.str(), stem);
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + std::string(e.what()));
  }
}

void write_ply(const std::string& path, const std::vector<Vec3>& points) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write '" + path + "'");
  out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
      << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  out.precision(17);
  for (const Vec3& p : points) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  if (!out) throw Error(ErrorCode::kIoError, "failed writing '" + path + "'");
}

const char* scheme_name(KeypointScheme scheme) {
  return scheme == KeypointScheme::kFps ? "fps" : "bbox";
}

KeypointScheme parse_scheme(const std::string& name) {
  if (name == "fps") return KeypointScheme::kFps;
  if (name == "bbox") return KeypointScheme::kBBoxCorners;
  throw Error(ErrorCode::kInvalidArgument, "unknown keypoint scheme '" + name + "' (expected fps or bbox)");
}

KeypointSet fps_select(const ObjectModel& model, int k) {
  const auto& pts = model.surface_points;
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "K must be >= 1");
  if (static_cast<std::size_t>(k) > pts.size()) {
    throw Error(ErrorCode::kKTooLarge, "K=" + std::to_string(k) + " exceeds " +
                                           std::to_string(pts.size()) + " surface points");
  }
  KeypointSet set;
  set.scheme = KeypointScheme::kFps;
  const Vec3 center = centroid(pts);
  set.points3d.push_back(center);
  set.source_indices.push_back(-1);

  // Squared distance from each vertex to the current keypoint set.
  std::vector<double> nearest(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) nearest[i] = (pts[i] - center).squaredNorm();

  for (int n = 0; n < k; ++n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      if (nearest[i] > nearest[best]) best = i;
    }
    if (nearest[best] == 0.0) set.degenerate = true;
    set.points3d.push_back(pts[best]);
    set.source_indices.push_back(static_cast<int>(best));
    for (std::size_t i = 0; i < pts.size(); ++i) {
      nearest[i] = std::min(nearest[i], (pts[i] - pts[best]).squaredNorm());
    }
  }
  return set;
}

KeypointSet bbox_corners(const ObjectModel& model) {
  const auto& pts = model.surface_points;
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const Vec3& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  KeypointSet set;
  set.scheme = KeypointScheme::kBBoxCorners;
  set.points3d.push_back(centroid(pts));
  set.source_indices.push_back(-1);
  for (int i = 0; i < 8; ++i) {
    set.points3d.emplace_back((i & 1) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(),
                              (i & 4) ? hi.z() : lo.z());
    set.source_indices.push_back(-1);
  }
  set.degenerate = (hi - lo).minCoeff() <= 0.0;
  return set;
}

double model_diameter(const ObjectModel& model) { return model_diameter(model.surface_points); }

double model_diameter(const std::vector<Vec3>& pts) {
  const std::size_t n = pts.size();
  if (n < 2) throw Error(ErrorCode::kTooFewPoints, "diameter needs at least 2 points");

  if (n <= kDiameterBruteForceLimit) {
    double best = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) best = std::max(best, (pts[i] - pts[j]).squaredNorm());
    }
    return std::sqrt(best);
  }

  // Upper bound on the farthest distance from each point: the smaller of
  // (distance to the farthest bounding-box corner) and (distance to the
  // bounding-sphere center plus its radius).
  Vec3 lo = pts[0], hi = pts[0];
  for (const Vec3& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec3 mid = 0.5 * (lo + hi);
  double radius = 0.0;
  for (const Vec3& p : pts) radius = std::max(radius, (p - mid).norm());

  std::vector<double> bound(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 far_corner = (pts[i] - lo).cwiseAbs().cwiseMax((hi - pts[i]).cwiseAbs());
    // Slack absorbs rounding in the bound itself.
    bound[i] = std::min(far_corner.norm(), (pts[i] - mid).norm() + radius) * (1.0 + 1e-9);
  }

  // Lower bound from a few farthest-point sweeps.
  double best2 = 0.0;
  std::size_t a = 0;
  for (int sweep = 0; sweep < 4; ++sweep) {
    std::size_t far = a;
    double far2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d2 = (pts[i] - pts[a]).squaredNorm();
      if (d2 > far2) {
        far2 = d2;
        far = i;
      }
    }
    best2 = std::max(best2, far2);
    a = far;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return bound[x] != bound[y] ? bound[x] > bound[y] : x < y;
  });

  // Any pair (i, j) has distance <= min(bound[i], bound[j]), so once the
  // leading bound drops to the best distance found, no pair can improve it.
  for (std::size_t oi = 0; oi < n; ++oi) {
    const std::size_t i = order[oi];
    const double bi = bound[i];
    if (bi * bi <= best2) break;
    for (std::size_t oj = oi + 1; oj < n; ++oj) {
      const std::size_t j = order[oj];
      if (bound[j] * bound[j] <= best2) break;
      best2 = std::max(best2, (pts[i] - pts[j]).squaredNorm());
    }
  }
  return std::sqrt(best2);
}

}  // namespace pvote
