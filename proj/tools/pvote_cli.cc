// pvote: keypoint voting, pose solving and synthetic benchmarks from the
// command line. Exit codes: 0 success, 1 runtime failure, 2 usage or
// validation error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pvote/error.h"
#include "pvote/experiment.h"
#include "pvote/field.h"
#include "pvote/io.h"
#include "pvote/model.h"
#include "pvote/parallel.h"
#include "pvote/pnp.h"
#include "pvote/scene.h"
#include "pvote/voting.h"

namespace fs = std::filesystem;
using namespace pvote;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

bool is_usage_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kParseError:
    case ErrorCode::kKTooLarge:
    case ErrorCode::kDimensionMismatch:
    case ErrorCode::kConfigError:
      return true;
    default:
      return false;
  }
}

struct KeypointOpts {
  std::string model;
  std::string scheme = "fps";
  int k = kDefaultFpsKeypoints;
  std::string keypoints_file;
};

struct VoteOpts {
  int n_hyps = kDefaultNumHypotheses;
  double theta = kDefaultInlierThreshold;
  std::uint64_t seed = 0;
  int threads = 0;
};

struct IntrinsicsOpts {
  std::optional<double> fx, fy, cx, cy;
  std::string scene_file;
};

void add_keypoint_flags(CLI::App* app, KeypointOpts& o, bool model_required) {
  auto* model = app->add_option("--model", o.model, "PLY file or builtin:<name> (" +
                                                        [] {
                                                          std::string s;
                                                          for (const auto& n : builtin_model_names()) {
                                                            s += (s.empty() ? "" : ", ") + n;
                                                          }
                                                          return s;
                                                        }() + ")");
  if (model_required) model->required();
  app->add_option("--scheme", o.scheme, "Keypoint scheme")->check(CLI::IsMember({"fps", "bbox"}))->capture_default_str();
  app->add_option("--k", o.k, "Number of FPS keypoints (center excluded)")->check(CLI::Range(1, 1000000))->capture_default_str();
}

void add_vote_flags(CLI::App* app, VoteOpts& o) {
  app->add_option("--n-hyps", o.n_hyps, "Hypotheses per keypoint")->check(CLI::Range(1, 1 << 24))->capture_default_str();
  app->add_option("--theta", o.theta, "Inlier cosine threshold")->check(CLI::Range(-1.0, 1.0))->capture_default_str();
  app->add_option("--seed", o.seed, "Random seed")->capture_default_str();
  app->add_option("--threads", o.threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber)->capture_default_str();
}

void add_intrinsics_flags(CLI::App* app, IntrinsicsOpts& o) {
  app->add_option("--fx", o.fx, "Focal length x (pixels)");
  app->add_option("--fy", o.fy, "Focal length y (pixels)");
  app->add_option("--cx", o.cx, "Principal point x (pixels)");
  app->add_option("--cy", o.cy, "Principal point y (pixels)");
  app->add_option("--scene", o.scene_file, "scene.json written by synth; supplies intrinsics");
}

VotingConfig voting_config(const VoteOpts& o) {
  VotingConfig cfg;
  cfg.num_hypotheses = o.n_hyps;
  cfg.inlier_threshold = o.theta;
  cfg.seed = o.seed;
  cfg.threads = o.threads;
  return cfg;
}

KeypointSet select_keypoints(const KeypointOpts& o, const ObjectModel& model) {
  return parse_scheme(o.scheme) == KeypointScheme::kFps ? fps_select(model, o.k) : bbox_corners(model);
}

void print_json(const Json& j) { std::cout << j.dump(2) << "\n"; }

CameraIntrinsics resolve_intrinsics(const IntrinsicsOpts& o, int width, int height) {
  CameraIntrinsics intr = default_intrinsics();
  if (!o.scene_file.empty()) {
    const Json scene = read_json_file(o.scene_file);
    if (!scene.contains("intrinsics")) {
      throw Error(ErrorCode::kParseError, o.scene_file + ": no \"intrinsics\" entry");
    }
    intr = intrinsics_from_json(scene["intrinsics"]);
  }
  if (o.fx) intr.fx = *o.fx;
  if (o.fy) intr.fy = *o.fy;
  if (o.cx) intr.cx = *o.cx;
  if (o.cy) intr.cy = *o.cy;
  intr.width = width;
  intr.height = height;
  intr.validate();
  return intr;
}

struct LoadedInputs {
  SegmentationMask mask;
  VectorField field;
};

LoadedInputs load_field_and_mask(const std::string& field_path, const std::string& mask_path) {
  LoadedInputs in{read_mask_pgm(mask_path), read_field(field_path)};
  if (in.mask.width != in.field.width() || in.mask.height != in.field.height()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "field is " + std::to_string(in.field.width()) + "x" + std::to_string(in.field.height()) +
                    " but mask is " + std::to_string(in.mask.width) + "x" + std::to_string(in.mask.height));
  }
  return in;
}

Json distributions_json(const std::vector<KeypointDistribution>& dists) {
  Json out = Json::array();
  for (std::size_t k = 0; k < dists.size(); ++k) out.push_back(distribution_to_json(dists[k], static_cast<int>(k)));
  return out;
}

int cmd_keypoints(const KeypointOpts& o, const std::string& out_file) {
  const ObjectModel model = load_model_source(o.model);
  const Json j = keypoints_to_json(select_keypoints(o, model));
  if (out_file.empty()) {
    print_json(j);
  } else {
    write_text_file(out_file, j.dump(2) + "\n");
  }
  return 0;
}

struct SynthOpts {
  double sigma = 0.0;
  double outlier_rate = 0.0;
  double occlusion = 0.0;
  std::optional<double> truncate;
  std::uint64_t seed = 0;
  std::string out_dir;
};

int cmd_synth(const KeypointOpts& ko, const SynthOpts& o, const IntrinsicsOpts& io) {
  const ObjectModel model = load_model_source(ko.model);
  KeypointSet kps;
  if (!ko.keypoints_file.empty()) {
    kps = keypoints_from_json(read_json_file(ko.keypoints_file));
  } else {
    kps = select_keypoints(ko, model);
  }
  const CameraIntrinsics base = default_intrinsics();
  const CameraIntrinsics intr = resolve_intrinsics(io, base.width, base.height);

  SceneConfig cfg;
  cfg.seed = derive_seed(o.seed, 0);
  cfg.occlusion_frac = o.occlusion;
  cfg.noise = {o.sigma, o.outlier_rate, derive_seed(o.seed, 1)};
  if (o.truncate) {
    TruncationConfig t;
    t.min_visible = std::max(0.0, *o.truncate - 0.1);
    t.max_visible = std::min(1.0, *o.truncate + 0.1);
    cfg.truncation = t;
  }
  const SceneSample s = synth_scene(model, kps.points3d, intr, cfg);

  fs::create_directories(o.out_dir);
  const fs::path dir(o.out_dir);
  write_field((dir / "field.pvf").string(), s.field);
  write_mask_pgm((dir / "mask.pgm").string(), s.mask);
  write_text_file((dir / "keypoints.json").string(), keypoints_to_json(kps).dump(2) + "\n");

  Json kp2d = Json::array();
  for (const Vec2& k : s.keypoints2d) kp2d.push_back({k.x(), k.y()});
  const Json scene{
      {"model", ko.model},
      {"intrinsics", intrinsics_to_json(s.intr)},
      {"original_intrinsics", intrinsics_to_json(s.original_intr)},
      {"crop_offset", {s.crop_offset.x(), s.crop_offset.y()}},
      {"gt_pose", pose_to_json(s.gt_pose)},
      {"keypoints2d", kp2d},
      {"sigma", o.sigma},
      {"outlier_rate", o.outlier_rate},
      {"occlusion_requested", o.occlusion},
      {"occluded_fraction", s.occluded_fraction},
      {"truncated", s.truncated},
      {"visible_fraction", s.visible_fraction},
      {"keypoints_outside", s.keypoints_outside},
      {"object_pixels", s.mask.count_on_object()},
      {"seed", o.seed}};
  write_text_file((dir / "scene.json").string(), scene.dump(2) + "\n");
  std::printf("wrote %s (%zu object pixels, %d keypoints outside the image)\n", o.out_dir.c_str(),
              s.mask.count_on_object(), s.keypoints_outside);
  return 0;
}

int cmd_vote(const std::string& field_path, const std::string& mask_path, const VoteOpts& vo) {
  const LoadedInputs in = load_field_and_mask(field_path, mask_path);
  print_json(distributions_json(vote_keypoints(in.mask, in.field, voting_config(vo))));
  return 0;
}

int cmd_pose(const std::string& field_path, const std::string& mask_path, const std::string& keypoints_path,
             const std::string& variant, const VoteOpts& vo, const IntrinsicsOpts& io) {
  const KeypointSet kps = keypoints_from_json(read_json_file(keypoints_path));
  const LoadedInputs in = load_field_and_mask(field_path, mask_path);
  if (kps.num_keypoints() != in.field.num_keypoints()) {
    throw Error(ErrorCode::kDimensionMismatch, "field has " + std::to_string(in.field.num_keypoints()) +
                                                   " keypoints but " + keypoints_path + " lists " +
                                                   std::to_string(kps.num_keypoints()));
  }
  const CameraIntrinsics intr = resolve_intrinsics(io, in.mask.width, in.mask.height);
  PnPConfig pc;
  pc.variant = parse_pnp_variant(variant);

  const auto dists = vote_keypoints(in.mask, in.field, voting_config(vo));
  std::vector<Correspondence> corrs;
  for (int k = 0; k < kps.num_keypoints(); ++k) corrs.push_back({kps.points3d[k], dists[k]});
  const PnPResult r = solve_pose(corrs, intr, pc);
  print_json(Json{{"pose", pnp_result_to_json(r)}, {"distributions", distributions_json(dists)}});
  return 0;
}

int cmd_bench(const std::string& config_path, const std::string& out_dir, std::optional<std::uint64_t> seed,
              std::optional<int> threads) {
  ExperimentConfig cfg = parse_experiment_config(read_json_file(config_path));
  if (seed) cfg.seed = *seed;
  if (threads) cfg.threads = *threads;
  const ExperimentReport report = run_experiment(cfg);
  fs::create_directories(out_dir);
  write_text_file((fs::path(out_dir) / "results.csv").string(), report.to_csv());
  write_text_file((fs::path(out_dir) / "results.json").string(), report.to_json().dump(2) + "\n");
  std::cout << report.summary_table();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Voting-based keypoint localization and uncertainty-driven PnP"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "pvote 1.0");

  KeypointOpts ko;
  std::string out_file;
  auto* keypoints = app.add_subcommand("keypoints", "Select keypoints on a model and print them as JSON");
  add_keypoint_flags(keypoints, ko, true);
  keypoints->add_option("--out", out_file, "Write to this file instead of stdout");

  SynthOpts so;
  IntrinsicsOpts io;
  auto* synth = app.add_subcommand("synth", "Render one synthetic scene and dump field, mask and ground truth");
  add_keypoint_flags(synth, ko, true);
  synth->add_option("--keypoints", ko.keypoints_file, "Keypoint JSON to use instead of selecting");
  synth->add_option("--sigma", so.sigma, "Angular noise (radians)")->check(CLI::NonNegativeNumber)->capture_default_str();
  synth->add_option("--outlier-rate", so.outlier_rate, "Fraction of random directions")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  synth->add_option("--occlusion", so.occlusion, "Fraction of object pixels to hide")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  synth->add_option("--truncate", so.truncate, "Crop so this fraction (+-0.1) of the object stays visible")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--seed", so.seed, "Random seed")->capture_default_str();
  synth->add_option("--out-dir", so.out_dir, "Output directory")->required();
  add_intrinsics_flags(synth, io);

  std::string field_path, mask_path, keypoints_path;
  VoteOpts vo;
  auto* vote = app.add_subcommand("vote", "Vote keypoint distributions from a field and mask");
  vote->add_option("--field", field_path, "Vector field (.pvf)")->required();
  vote->add_option("--mask", mask_path, "Mask (.pgm)")->required();
  add_vote_flags(vote, vo);

  std::string variant = "uncertainty";
  auto* pose = app.add_subcommand("pose", "Vote keypoints and solve the object pose");
  pose->add_option("--field", field_path, "Vector field (.pvf)")->required();
  pose->add_option("--mask", mask_path, "Mask (.pgm)")->required();
  pose->add_option("--keypoints", keypoints_path, "Keypoint JSON matching the field")->required();
  pose->add_option("--pnp", variant, "PnP variant")
      ->check(CLI::IsMember({"init-only", "uncertainty", "isotropic"}))
      ->capture_default_str();
  add_vote_flags(pose, vo);
  add_intrinsics_flags(pose, io);

  std::string config_path, bench_out = ".";
  std::optional<std::uint64_t> bench_seed;
  std::optional<int> bench_threads;
  auto* bench = app.add_subcommand("bench", "Run an experiment grid and write results.csv / results.json");
  bench->add_option("--config", config_path, "Experiment config (JSON)")->required();
  bench->add_option("--out-dir", bench_out, "Output directory")->capture_default_str();
  bench->add_option("--seed", bench_seed, "Override the config's master seed");
  bench->add_option("--threads", bench_threads, "Override the config's thread count (0 = all cores)")
      ->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*keypoints) return cmd_keypoints(ko, out_file);
    if (*synth) return cmd_synth(ko, so, io);
    if (*vote) return cmd_vote(field_path, mask_path, vo);
    if (*pose) return cmd_pose(field_path, mask_path, keypoints_path, variant, vo, io);
    if (*bench) return cmd_bench(config_path, bench_out, bench_seed, bench_threads);
  } catch (const Error& e) {
    std::cerr << "pvote: " << e.what() << "\n";
    return is_usage_code(e.code()) ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "pvote: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
