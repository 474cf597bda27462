#include "pvote/io.h"

#include <fstream>
#include <sstream>

#include "pvote/error.h"

namespace pvote {
namespace {

Json vec_to_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

[[noreturn]] void schema_fail(const std::string& what) { throw Error(ErrorCode::kParseError, what); }

double number_at(const Json& arr, std::size_t i, const std::string& where) {
  if (!arr.is_array() || i >= arr.size() || !arr[i].is_number()) schema_fail(where + ": expected number");
  return arr[i].get<double>();
}

}  // namespace

Json keypoints_to_json(const KeypointSet& set) {
  Json pts = Json::array();
  for (const Vec3& p : set.points3d) pts.push_back(vec_to_json(p));
  return Json{{"scheme", scheme_name(set.scheme)}, {"points3d", pts}};
}

KeypointSet keypoints_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("points3d") || !j["points3d"].is_array()) {
    schema_fail("keypoints: expected an object with a 'points3d' array");
  }
  KeypointSet set;
  if (j.contains("scheme")) {
    if (!j["scheme"].is_string()) schema_fail("keypoints.scheme: expected string");
    try {
      set.scheme = parse_scheme(j["scheme"].get<std::string>());
    } catch (const Error& e) {
      schema_fail(std::string("keypoints.scheme: ") + e.what());
    }
  }
  const Json& pts = j["points3d"];
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const std::string where = "keypoints.points3d[" + std::to_string(i) + "]";
    if (!pts[i].is_array() || pts[i].size() != 3) schema_fail(where + ": expected [x, y, z]");
    set.points3d.emplace_back(number_at(pts[i], 0, where), number_at(pts[i], 1, where),
                              number_at(pts[i], 2, where));
    set.source_indices.push_back(-1);
  }
  return set;
}

Json distribution_to_json(const KeypointDistribution& dist, int k) {
  const Mat2& c = dist.covariance;
  return Json{{"k", k},
              {"mean", vec_to_json(dist.mean)},
              {"cov", Json::array({Json::array({c(0, 0), c(0, 1)}), Json::array({c(1, 0), c(1, 1)})})},
              {"n_hyps", dist.hypotheses.size()}};
}

Json pose_to_json(const Pose& pose) {
  Json r = Json::array();
  for (int i = 0; i < 3; ++i) r.push_back(vec_to_json(pose.rotation.row(i).transpose()));
  return Json{{"R", r}, {"t", vec_to_json(pose.translation)}};
}

Pose pose_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("R") || !j.contains("t")) schema_fail("pose: expected {\"R\", \"t\"}");
  Mat3 r;
  for (int i = 0; i < 3; ++i) {
    const Json& row = j["R"].is_array() && j["R"].size() == 3 ? j["R"][i] : Json();
    for (int c = 0; c < 3; ++c) r(i, c) = number_at(row, c, "pose.R[" + std::to_string(i) + "]");
  }
  Vec3 t;
  for (int c = 0; c < 3; ++c) t(c) = number_at(j["t"], c, "pose.t");
  return Pose{r, t};
}

Json pnp_result_to_json(const PnPResult& result) {
  Json j = pose_to_json(result.pose);
  j["cost"] = std::isfinite(result.final_cost) ? Json(result.final_cost) : Json(nullptr);
  j["iters"] = result.iterations;
  j["converged"] = result.converged;
  return j;
}

Json intrinsics_to_json(const CameraIntrinsics& intr) {
  return Json{{"fx", intr.fx}, {"fy", intr.fy}, {"cx", intr.cx},
              {"cy", intr.cy}, {"width", intr.width}, {"height", intr.height}};
}

CameraIntrinsics intrinsics_from_json(const Json& j) {
  if (!j.is_object()) schema_fail("intrinsics: expected object");
  CameraIntrinsics intr;
  auto num = [&](const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) schema_fail(std::string("intrinsics.") + key + ": expected number");
    return j[key].get<double>();
  };
  intr.fx = num("fx", intr.fx);
  intr.fy = num("fy", intr.fy);
  intr.cx = num("cx", intr.cx);
  intr.cy = num("cy", intr.cy);
  intr.width = static_cast<int>(num("width", intr.width));
  intr.height = static_cast<int>(num("height", intr.height));
  return intr;
}

Json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    // e.byte is 1-based and points just past the offending character.
    const std::size_t stop = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    int line = 1, column = 1;
    for (std::size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    std::ostringstream msg;
    msg << source << ":" << line << ":" << column << ": malformed JSON";
    throw Error(ErrorCode::kParseError, msg.str());
  }
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_json_text(buf.str(), path);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write '" + path + "'");
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, "failed writing '" + path + "'");
}

}  // namespace pvote
