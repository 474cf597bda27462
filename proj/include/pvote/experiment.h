#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pvote/geometry.h"
#include "pvote/io.h"
#include "pvote/model.h"
#include "pvote/pnp.h"
#include "pvote/scene.h"
#include "pvote/voting.h"

namespace pvote {

struct ModelSpec {
  std::string name;
  std::string source;  // "builtin:<name>" or PLY path
  bool symmetric = false;
};

struct KeypointSpec {
  KeypointScheme scheme = KeypointScheme::kFps;
  int k = kDefaultFpsKeypoints;  // FPS keypoint count; bbox always has 8

  // "FPS 8", "BBox 8".
  std::string label() const;
};

struct NoiseSpec {
  double sigma = 0.0;
  double outlier_rate = 0.0;
};

// Grids are combined as a full cartesian product; every (model, noise,
// occlusion, truncation, trial) scene is shared by all keypoint specs and
// PnP variants so the comparisons are paired.
struct ExperimentConfig {
  std::vector<ModelSpec> models;
  std::vector<KeypointSpec> keypoints;
  std::vector<PnPVariant> pnp;
  std::vector<NoiseSpec> noise;
  std::vector<double> occlusion;
  std::vector<std::optional<TruncationConfig>> truncation;
  int trials = 1;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = all hardware threads
  CameraIntrinsics intrinsics = default_intrinsics();
  PoseSamplerConfig pose_sampler;
  VotingConfig voting;
  RefineOptions refine;
  double auc_max_threshold = 100.0;  // model units (0.1 m for mm models)
};

// Throws ConfigError whose message starts with the offending field path,
// e.g. "noise[1].sigma: must be >= 0".
ExperimentConfig parse_experiment_config(const Json& j);

struct TrialRecord {
  int model = 0, keypoints = 0, pnp = 0, noise = 0, occlusion = 0, truncation = 0;
  int trial = 0;
  std::uint64_t seed = 0;
  std::string status = "ok";  // or the error code name
  double proj2d_error = 0.0;
  double add_value = 0.0;
  bool proj2d_correct = false;
  bool add_correct = false;
  double rotation_error_deg = 0.0;
  double translation_error = 0.0;
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct CellSummary {
  int model = 0, keypoints = 0, pnp = 0, noise = 0, occlusion = 0, truncation = 0;
  std::string metric;  // "proj2d", "add" or "add-s"
  int trials = 0;
  int failures = 0;    // trials that produced no pose
  int successes = 0;
  double success_rate = 0.0;
  double mean = 0.0;   // over trials with a pose
  double stddev = 0.0;
  std::optional<double> auc;  // ADD(-S) rows only
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<TrialRecord> trials;
  std::vector<CellSummary> cells;

  std::string to_csv() const;
  Json to_json() const;
  // Fixed-width per-cell success table for terminals.
  std::string summary_table() const;
  // Summary row for a cell/metric; throws InvalidArgument when absent.
  const CellSummary& cell(int model, int keypoints, int pnp, int noise, int occlusion, int truncation,
                          const std::string& metric) const;
};

ExperimentReport run_experiment(const ExperimentConfig& cfg);

// Seed of the scene shared by all keypoint specs and PnP variants.
std::uint64_t scene_seed(std::uint64_t master, int model, int noise, int occlusion, int truncation, int trial);

}  // namespace pvote
