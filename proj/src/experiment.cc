#include "pvote/experiment.h"

#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "pvote/error.h"
#include "pvote/metrics.h"
#include "pvote/parallel.h"

namespace pvote {
namespace {

[[noreturn]] void config_fail(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::kConfigError, path + ": " + what);
}

void check_keys(const Json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) config_fail(path, "expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : j.items()) {
    if (!ok.count(item.key())) config_fail(path.empty() ? item.key() : path + "." + item.key(), "unknown field");
  }
}

const Json& require_array(const Json& j, const char* key) {
  if (!j.contains(key)) config_fail(key, "required field missing");
  const Json& a = j[key];
  if (!a.is_array() || a.empty()) config_fail(key, "expected a non-empty array");
  return a;
}

double get_number(const Json& j, const char* key, const std::string& path, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) config_fail(path + "." + key, "expected a number");
  return j[key].get<double>();
}

int get_int(const Json& j, const char* key, const std::string& path, int fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer()) config_fail(path + "." + key, "expected an integer");
  return j[key].get<int>();
}

std::string sub(const std::string& base, std::size_t i) { return base + "[" + std::to_string(i) + "]"; }

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string truncation_label(const std::optional<TruncationConfig>& t) {
  if (!t) return "none";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f-%.2f", t->min_visible, t->max_visible);
  return buf;
}

struct PreparedModel {
  ObjectModel model;
  double diameter = 0.0;
  std::vector<KeypointSet> keypoint_sets;  // one per KeypointSpec
};

}  // namespace

std::string KeypointSpec::label() const {
  return scheme == KeypointScheme::kFps ? "FPS " + std::to_string(k) : std::string("BBox 8");
}

std::uint64_t scene_seed(std::uint64_t master, int model, int noise, int occlusion, int truncation, int trial) {
  std::uint64_t s = derive_seed(master, static_cast<std::uint64_t>(model));
  s = derive_seed(s, static_cast<std::uint64_t>(noise), static_cast<std::uint64_t>(occlusion));
  return derive_seed(s, static_cast<std::uint64_t>(truncation), static_cast<std::uint64_t>(trial));
}

ExperimentConfig parse_experiment_config(const Json& j) {
  check_keys(j, "", {"models", "keypoints", "pnp", "noise", "occlusion", "truncation", "trials", "seed",
                     "threads", "intrinsics", "pose_sampler", "voting", "refine", "auc_max_threshold"});
  ExperimentConfig cfg;

  const Json& models = require_array(j, "models");
  for (std::size_t i = 0; i < models.size(); ++i) {
    const std::string path = sub("models", i);
    check_keys(models[i], path, {"name", "source", "symmetric"});
    ModelSpec m;
    if (!models[i].contains("source") || !models[i]["source"].is_string()) {
      config_fail(path + ".source", "required string missing");
    }
    m.source = models[i]["source"].get<std::string>();
    m.name = m.source;
    if (models[i].contains("name")) {
      if (!models[i]["name"].is_string()) config_fail(path + ".name", "expected a string");
      m.name = models[i]["name"].get<std::string>();
    }
    if (models[i].contains("symmetric")) {
      if (!models[i]["symmetric"].is_boolean()) config_fail(path + ".symmetric", "expected a boolean");
      m.symmetric = models[i]["symmetric"].get<bool>();
    }
    cfg.models.push_back(m);
  }

  const Json& kps = require_array(j, "keypoints");
  for (std::size_t i = 0; i < kps.size(); ++i) {
    const std::string path = sub("keypoints", i);
    check_keys(kps[i], path, {"scheme", "k"});
    KeypointSpec spec;
    if (!kps[i].contains("scheme") || !kps[i]["scheme"].is_string()) {
      config_fail(path + ".scheme", "required string missing");
    }
    try {
      spec.scheme = parse_scheme(kps[i]["scheme"].get<std::string>());
    } catch (const Error& e) {
      config_fail(path + ".scheme", e.what());
    }
    spec.k = get_int(kps[i], "k", path, spec.scheme == KeypointScheme::kFps ? kDefaultFpsKeypoints : 8);
    if (spec.k < 3) config_fail(path + ".k", "must be >= 3");
    if (spec.scheme == KeypointScheme::kBBoxCorners && spec.k != 8) {
      config_fail(path + ".k", "bbox scheme always has 8 corners");
    }
    cfg.keypoints.push_back(spec);
  }

  const Json& pnp = require_array(j, "pnp");
  for (std::size_t i = 0; i < pnp.size(); ++i) {
    if (!pnp[i].is_string()) config_fail(sub("pnp", i), "expected a string");
    try {
      cfg.pnp.push_back(parse_pnp_variant(pnp[i].get<std::string>()));
    } catch (const Error& e) {
      config_fail(sub("pnp", i), e.what());
    }
  }

  const Json& noise = require_array(j, "noise");
  for (std::size_t i = 0; i < noise.size(); ++i) {
    const std::string path = sub("noise", i);
    check_keys(noise[i], path, {"sigma", "outlier_rate"});
    NoiseSpec n{get_number(noise[i], "sigma", path, 0.0), get_number(noise[i], "outlier_rate", path, 0.0)};
    if (!(n.sigma >= 0.0)) config_fail(path + ".sigma", "must be >= 0");
    if (!(n.outlier_rate >= 0.0 && n.outlier_rate <= 1.0)) config_fail(path + ".outlier_rate", "must be in [0, 1]");
    cfg.noise.push_back(n);
  }

  if (j.contains("occlusion")) {
    const Json& occ = require_array(j, "occlusion");
    for (std::size_t i = 0; i < occ.size(); ++i) {
      if (!occ[i].is_number()) config_fail(sub("occlusion", i), "expected a number");
      const double f = occ[i].get<double>();
      if (!(f >= 0.0 && f <= 1.0)) config_fail(sub("occlusion", i), "must be in [0, 1]");
      cfg.occlusion.push_back(f);
    }
  } else {
    cfg.occlusion = {0.0};
  }

  if (j.contains("truncation")) {
    const Json& tr = require_array(j, "truncation");
    for (std::size_t i = 0; i < tr.size(); ++i) {
      const std::string path = sub("truncation", i);
      if (tr[i].is_null()) {
        cfg.truncation.emplace_back(std::nullopt);
        continue;
      }
      check_keys(tr[i], path, {"min_visible", "max_visible", "min_keypoints_outside"});
      TruncationConfig t;
      t.min_visible = get_number(tr[i], "min_visible", path, t.min_visible);
      t.max_visible = get_number(tr[i], "max_visible", path, t.max_visible);
      t.min_keypoints_outside = get_int(tr[i], "min_keypoints_outside", path, 0);
      try {
        t.validate();
      } catch (const Error& e) {
        config_fail(path, e.what());
      }
      cfg.truncation.emplace_back(t);
    }
  } else {
    cfg.truncation = {std::nullopt};
  }

  cfg.trials = get_int(j, "trials", "trials", cfg.trials);
  if (cfg.trials < 1) config_fail("trials", "must be >= 1");
  if (j.contains("seed")) {
    const Json& seed = j["seed"];
    if (!seed.is_number_integer() || (!seed.is_number_unsigned() && seed.get<std::int64_t>() < 0)) {
      config_fail("seed", "expected a non-negative integer");
    }
    cfg.seed = seed.get<std::uint64_t>();
  }
  cfg.threads = get_int(j, "threads", "threads", cfg.threads);

  if (j.contains("intrinsics")) {
    check_keys(j["intrinsics"], "intrinsics", {"fx", "fy", "cx", "cy", "width", "height"});
    try {
      cfg.intrinsics = intrinsics_from_json(j["intrinsics"]);
      cfg.intrinsics.validate();
    } catch (const Error& e) {
      config_fail("intrinsics", e.what());
    }
  }
  if (j.contains("pose_sampler")) {
    const Json& ps = j["pose_sampler"];
    check_keys(ps, "pose_sampler", {"min_depth", "max_depth", "center_margin"});
    cfg.pose_sampler.min_depth = get_number(ps, "min_depth", "pose_sampler", cfg.pose_sampler.min_depth);
    cfg.pose_sampler.max_depth = get_number(ps, "max_depth", "pose_sampler", cfg.pose_sampler.max_depth);
    cfg.pose_sampler.center_margin = get_number(ps, "center_margin", "pose_sampler", cfg.pose_sampler.center_margin);
    try {
      cfg.pose_sampler.validate();
    } catch (const Error& e) {
      config_fail("pose_sampler", e.what());
    }
  }
  if (j.contains("voting")) {
    const Json& v = j["voting"];
    check_keys(v, "voting", {"n_hyps", "theta", "cov_epsilon"});
    cfg.voting.num_hypotheses = get_int(v, "n_hyps", "voting", cfg.voting.num_hypotheses);
    cfg.voting.inlier_threshold = get_number(v, "theta", "voting", cfg.voting.inlier_threshold);
    cfg.voting.cov_epsilon = get_number(v, "cov_epsilon", "voting", cfg.voting.cov_epsilon);
    if (cfg.voting.num_hypotheses < 1) config_fail("voting.n_hyps", "must be >= 1");
    if (!(cfg.voting.inlier_threshold >= -1.0 && cfg.voting.inlier_threshold <= 1.0)) {
      config_fail("voting.theta", "must be in [-1, 1]");
    }
    if (!(cfg.voting.cov_epsilon > 0.0)) config_fail("voting.cov_epsilon", "must be > 0");
  }
  if (j.contains("refine")) {
    const Json& r = j["refine"];
    check_keys(r, "refine", {"max_iters", "grad_tol"});
    cfg.refine.max_iters = get_int(r, "max_iters", "refine", cfg.refine.max_iters);
    cfg.refine.grad_tol = get_number(r, "grad_tol", "refine", cfg.refine.grad_tol);
    if (cfg.refine.max_iters < 0) config_fail("refine.max_iters", "must be >= 0");
    if (!(cfg.refine.grad_tol > 0.0)) config_fail("refine.grad_tol", "must be > 0");
  }
  cfg.auc_max_threshold = get_number(j, "auc_max_threshold", "auc_max_threshold", cfg.auc_max_threshold);
  if (!(cfg.auc_max_threshold > 0.0)) config_fail("auc_max_threshold", "must be > 0");
  return cfg;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  if (cfg.models.empty() || cfg.keypoints.empty() || cfg.pnp.empty() || cfg.noise.empty() ||
      cfg.occlusion.empty() || cfg.truncation.empty() || cfg.trials < 1) {
    throw Error(ErrorCode::kConfigError, "experiment grid has an empty axis");
  }
  ExperimentReport report;
  report.config = cfg;

  std::vector<PreparedModel> models;
  for (std::size_t i = 0; i < cfg.models.size(); ++i) {
    PreparedModel pm;
    try {
      pm.model = load_model_source(cfg.models[i].source);
    } catch (const Error& e) {
      throw Error(e.code(), sub("models", i) + ".source: " + e.what());
    }
    pm.diameter = model_diameter(pm.model);
    for (const KeypointSpec& spec : cfg.keypoints) {
      pm.keypoint_sets.push_back(spec.scheme == KeypointScheme::kFps ? fps_select(pm.model, spec.k)
                                                                     : bbox_corners(pm.model));
    }
    models.push_back(std::move(pm));
  }

  const int nm = static_cast<int>(cfg.models.size()), nk = static_cast<int>(cfg.keypoints.size()),
            np = static_cast<int>(cfg.pnp.size()), nn = static_cast<int>(cfg.noise.size()),
            no = static_cast<int>(cfg.occlusion.size()), nt = static_cast<int>(cfg.truncation.size());
  const std::size_t items = static_cast<std::size_t>(nm) * nn * no * nt * cfg.trials * nk;
  report.trials.resize(items * static_cast<std::size_t>(np));

  parallel_for(items, cfg.threads, [&](std::size_t item) {
    std::size_t rest = item;
    const int k = static_cast<int>(rest % nk); rest /= nk;
    const int trial = static_cast<int>(rest % cfg.trials); rest /= cfg.trials;
    const int t = static_cast<int>(rest % nt); rest /= nt;
    const int o = static_cast<int>(rest % no); rest /= no;
    const int n = static_cast<int>(rest % nn); rest /= nn;
    const int m = static_cast<int>(rest);

    const PreparedModel& pm = models[static_cast<std::size_t>(m)];
    const KeypointSet& kps = pm.keypoint_sets[static_cast<std::size_t>(k)];
    const std::uint64_t seed = scene_seed(cfg.seed, m, n, o, t, trial);

    std::vector<TrialRecord*> slots;
    for (int p = 0; p < np; ++p) {
      TrialRecord& r = report.trials[item * static_cast<std::size_t>(np) + static_cast<std::size_t>(p)];
      r.model = m; r.keypoints = k; r.pnp = p; r.noise = n; r.occlusion = o; r.truncation = t;
      r.trial = trial;
      r.seed = seed;
      slots.push_back(&r);
    }

    SceneConfig sc;
    sc.pose = cfg.pose_sampler;
    sc.occlusion_frac = cfg.occlusion[static_cast<std::size_t>(o)];
    sc.truncation = cfg.truncation[static_cast<std::size_t>(t)];
    sc.noise.angular_sigma = cfg.noise[static_cast<std::size_t>(n)].sigma;
    sc.noise.outlier_rate = cfg.noise[static_cast<std::size_t>(n)].outlier_rate;
    sc.noise.seed = derive_seed(seed, 1);
    sc.seed = seed;

    std::vector<Correspondence> corrs;
    SceneSample scene;
    try {
      scene = synth_scene(pm.model, kps.points3d, cfg.intrinsics, sc);
      VotingConfig vc = cfg.voting;
      vc.seed = derive_seed(seed, 2);
      vc.threads = 1;
      const auto dists = vote_keypoints(scene.mask, scene.field, vc);
      for (std::size_t i = 0; i < dists.size(); ++i) corrs.push_back({kps.points3d[i], dists[i]});
    } catch (const Error& e) {
      for (TrialRecord* r : slots) r->status = error_code_name(e.code());
      return;
    }

    const bool symmetric = cfg.models[static_cast<std::size_t>(m)].symmetric;
    for (int p = 0; p < np; ++p) {
      TrialRecord& r = *slots[static_cast<std::size_t>(p)];
      try {
        PnPConfig pc;
        pc.variant = cfg.pnp[static_cast<std::size_t>(p)];
        pc.refine = cfg.refine;
        const PnPResult res = solve_pose(corrs, scene.intr, pc);
        const MetricReport mr = evaluate_pose(res.pose, scene.gt_pose, pm.model, pm.diameter, scene.intr, symmetric);
        r.proj2d_error = mr.proj2d.mean_error_px;
        r.proj2d_correct = mr.proj2d.correct;
        r.add_value = mr.add.value;
        r.add_correct = mr.add.correct;
        r.rotation_error_deg = rotation_angle_between(res.pose.rotation, scene.gt_pose.rotation) * 180.0 / M_PI;
        r.translation_error = (res.pose.translation - scene.gt_pose.translation).norm();
        r.cost = res.final_cost;
        r.iterations = res.iterations;
        r.converged = res.converged;
      } catch (const Error& e) {
        r.status = error_code_name(e.code());
      }
    }
  });

  // Cell summaries in grid order.
  auto record_index = [&](int m, int k, int p, int n, int o, int t, int trial) {
    const std::size_t item =
        ((((static_cast<std::size_t>(m) * nn + n) * no + o) * nt + t) * cfg.trials + trial) * nk + k;
    return item * static_cast<std::size_t>(np) + static_cast<std::size_t>(p);
  };
  for (int m = 0; m < nm; ++m) {
    const char* add_name = cfg.models[static_cast<std::size_t>(m)].symmetric ? "add-s" : "add";
    for (int k = 0; k < nk; ++k) {
      for (int n = 0; n < nn; ++n) {
        for (int o = 0; o < no; ++o) {
          for (int t = 0; t < nt; ++t) {
            for (int p = 0; p < np; ++p) {
              for (int metric = 0; metric < 2; ++metric) {
                CellSummary c;
                c.model = m; c.keypoints = k; c.pnp = p; c.noise = n; c.occlusion = o; c.truncation = t;
                c.metric = metric == 0 ? "proj2d" : add_name;
                c.trials = cfg.trials;
                std::vector<double> values;
                for (int trial = 0; trial < cfg.trials; ++trial) {
                  const TrialRecord& r = report.trials[record_index(m, k, p, n, o, t, trial)];
                  if (r.status != "ok") {
                    ++c.failures;
                    continue;
                  }
                  const double v = metric == 0 ? r.proj2d_error : r.add_value;
                  values.push_back(v);
                  c.successes += metric == 0 ? r.proj2d_correct : r.add_correct;
                }
                c.success_rate = static_cast<double>(c.successes) / cfg.trials;
                if (!values.empty()) {
                  double sum = 0.0;
                  for (double v : values) sum += v;
                  c.mean = sum / values.size();
                  double sq = 0.0;
                  for (double v : values) sq += (v - c.mean) * (v - c.mean);
                  c.stddev = std::sqrt(sq / values.size());
                }
                if (metric == 1) {
                  // Failed trials count as infinitely wrong.
                  std::vector<double> all = values;
                  all.resize(static_cast<std::size_t>(cfg.trials), std::numeric_limits<double>::infinity());
                  c.auc = metric_auc(all, cfg.auc_max_threshold);
                }
                report.cells.push_back(c);
              }
            }
          }
        }
      }
    }
  }
  return report;
}

const CellSummary& ExperimentReport::cell(int model, int keypoints, int pnp, int noise, int occlusion,
                                          int truncation, const std::string& metric) const {
  for (const CellSummary& c : cells) {
    if (c.model == model && c.keypoints == keypoints && c.pnp == pnp && c.noise == noise &&
        c.occlusion == occlusion && c.truncation == truncation && c.metric == metric) {
      return c;
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "no such cell in the report");
}

std::string ExperimentReport::to_csv() const {
  std::ostringstream out;
  out << "model,keypoints,pnp,sigma,outlier_rate,occlusion,truncation,metric,trials,failures,successes,"
         "success_rate,mean,stddev,auc\n";
  for (const CellSummary& c : cells) {
    const NoiseSpec& n = config.noise[static_cast<std::size_t>(c.noise)];
    out << config.models[static_cast<std::size_t>(c.model)].name << ','
        << config.keypoints[static_cast<std::size_t>(c.keypoints)].label() << ','
        << pnp_variant_name(config.pnp[static_cast<std::size_t>(c.pnp)]) << ',' << format_number(n.sigma) << ','
        << format_number(n.outlier_rate) << ',' << format_number(config.occlusion[static_cast<std::size_t>(c.occlusion)])
        << ',' << truncation_label(config.truncation[static_cast<std::size_t>(c.truncation)]) << ',' << c.metric
        << ',' << c.trials << ',' << c.failures << ',' << c.successes << ',' << format_number(c.success_rate)
        << ',' << format_number(c.mean) << ',' << format_number(c.stddev) << ','
        << (c.auc ? format_number(*c.auc) : std::string()) << '\n';
  }
  return out.str();
}

Json ExperimentReport::to_json() const {
  Json cells_json = Json::array();
  for (const CellSummary& c : cells) {
    const NoiseSpec& n = config.noise[static_cast<std::size_t>(c.noise)];
    cells_json.push_back(Json{
        {"model", config.models[static_cast<std::size_t>(c.model)].name},
        {"keypoints", config.keypoints[static_cast<std::size_t>(c.keypoints)].label()},
        {"pnp", pnp_variant_name(config.pnp[static_cast<std::size_t>(c.pnp)])},
        {"sigma", n.sigma},
        {"outlier_rate", n.outlier_rate},
        {"occlusion", config.occlusion[static_cast<std::size_t>(c.occlusion)]},
        {"truncation", truncation_label(config.truncation[static_cast<std::size_t>(c.truncation)])},
        {"metric", c.metric},
        {"trials", c.trials},
        {"failures", c.failures},
        {"successes", c.successes},
        {"success_rate", c.success_rate},
        {"mean", c.mean},
        {"stddev", c.stddev},
        {"auc", c.auc ? Json(*c.auc) : Json(nullptr)}});
  }
  Json trials_json = Json::array();
  for (const TrialRecord& r : trials) {
    Json t{{"model", config.models[static_cast<std::size_t>(r.model)].name},
           {"keypoints", config.keypoints[static_cast<std::size_t>(r.keypoints)].label()},
           {"pnp", pnp_variant_name(config.pnp[static_cast<std::size_t>(r.pnp)])},
           {"noise", r.noise},
           {"occlusion", r.occlusion},
           {"truncation", r.truncation},
           {"trial", r.trial},
           {"seed", r.seed},
           {"status", r.status}};
    if (r.status == "ok") {
      t["proj2d_error"] = r.proj2d_error;
      t["proj2d_correct"] = r.proj2d_correct;
      t["add"] = r.add_value;
      t["add_correct"] = r.add_correct;
      t["rotation_error_deg"] = r.rotation_error_deg;
      t["translation_error"] = r.translation_error;
      t["cost"] = std::isfinite(r.cost) ? Json(r.cost) : Json(nullptr);
      t["iters"] = r.iterations;
      t["converged"] = r.converged;
    }
    trials_json.push_back(std::move(t));
  }
  return Json{{"seed", config.seed}, {"trials_per_cell", config.trials}, {"cells", cells_json},
              {"trials", trials_json}};
}

std::string ExperimentReport::summary_table() const {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-14s %-8s %-12s %-6s %-6s %-5s %-10s %-7s %9s %10s\n", "model",
                "kp", "pnp", "sigma", "outl", "occl", "trunc", "metric", "success", "mean");
  out << line;
  for (const CellSummary& c : cells) {
    const NoiseSpec& n = config.noise[static_cast<std::size_t>(c.noise)];
    std::snprintf(line, sizeof(line), "%-14s %-8s %-12s %-6.3f %-6.3f %-5.2f %-10s %-7s %8.1f%% %10.3f\n",
                  config.models[static_cast<std::size_t>(c.model)].name.c_str(),
                  config.keypoints[static_cast<std::size_t>(c.keypoints)].label().c_str(),
                  pnp_variant_name(config.pnp[static_cast<std::size_t>(c.pnp)]), n.sigma, n.outlier_rate,
                  config.occlusion[static_cast<std::size_t>(c.occlusion)],
                  truncation_label(config.truncation[static_cast<std::size_t>(c.truncation)]).c_str(),
                  c.metric.c_str(), 100.0 * c.success_rate, c.mean);
    out << line;
  }
  return out.str();
}

}  // namespace pvote
