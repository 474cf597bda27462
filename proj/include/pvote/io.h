#pragma once

#include <string>

#include <json.hpp>

#include "pvote/geometry.h"
#include "pvote/model.h"
#include "pvote/pnp.h"
#include "pvote/voting.h"

namespace pvote {

using Json = nlohmann::json;

// {"scheme": "fps", "points3d": [[x, y, z], ...]}
Json keypoints_to_json(const KeypointSet& set);
// Throws ParseError on schema violations.
KeypointSet keypoints_from_json(const Json& j);

// {"k": i, "mean": [u, v], "cov": [[a, b], [b, c]], "n_hyps": N}
Json distribution_to_json(const KeypointDistribution& dist, int k);

// {"R": [[..], [..], [..]], "t": [..], "cost": f, "iters": n, "converged": b}
Json pnp_result_to_json(const PnPResult& result);

Json pose_to_json(const Pose& pose);
Pose pose_from_json(const Json& j);

Json intrinsics_to_json(const CameraIntrinsics& intr);
CameraIntrinsics intrinsics_from_json(const Json& j);

// Parses JSON text; syntax errors become ParseError naming line and column.
Json parse_json_text(const std::string& text, const std::string& source);
Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace pvote
