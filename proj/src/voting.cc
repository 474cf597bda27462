#include "pvote/voting.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pvote/error.h"
#include "pvote/parallel.h"
#include "pvote/rng.h"

namespace pvote {
namespace {

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// Sum of term(i) for i in [lo, hi) along a fixed binary tree, so the result
// depends only on the inputs and their order.
template <typename T, typename Term>
T pairwise_sum(std::size_t lo, std::size_t hi, const Term& term) {
  if (hi - lo <= 8) {
    T acc = term(lo);
    for (std::size_t i = lo + 1; i < hi; ++i) acc += term(i);
    return acc;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  T left = pairwise_sum<T>(lo, mid, term);
  left += pairwise_sum<T>(mid, hi, term);
  return left;
}

void check_shapes(const SegmentationMask& mask, const VectorField& field, int k) {
  mask.validate();
  if (mask.width != field.width() || mask.height != field.height()) {
    throw Error(ErrorCode::kDimensionMismatch, "mask and field sizes differ");
  }
  if (k < 0 || k >= field.num_keypoints()) {
    throw Error(ErrorCode::kInvalidArgument, "keypoint index " + std::to_string(k) + " out of range");
  }
}

}  // namespace

void VotingConfig::validate() const {
  if (num_hypotheses < 1) throw Error(ErrorCode::kInvalidArgument, "num_hypotheses must be >= 1");
  if (!(inlier_threshold >= -1.0 && inlier_threshold <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "inlier_threshold must be in [-1, 1]");
  }
  if (!(cov_epsilon >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "cov_epsilon must be >= 0");
}

std::optional<Vec2> intersect_rays(const Vec2& p1, const Vec2& v1, const Vec2& p2, const Vec2& v2) {
  const double denom = cross(v1, v2);
  if (!(std::abs(denom) > 1e-6 * v1.norm() * v2.norm())) return std::nullopt;
  const Vec2 d = p2 - p1;
  const double t = cross(d, v2) / denom;
  const double s = cross(d, v1) / denom;
  if (!(t > 0.0 && s > 0.0)) return std::nullopt;
  return Vec2(p1 + t * v1);
}

std::uint64_t hypothesis_stream_seed(std::uint64_t seed, int k) {
  return derive_seed(seed, static_cast<std::uint64_t>(k));
}

std::vector<Hypothesis> generate_hypotheses(const SegmentationMask& mask, const VectorField& field,
                                            int k, const VotingConfig& cfg) {
  cfg.validate();
  check_shapes(mask, field, k);
  const std::vector<int> pixels = mask.object_pixels();
  if (pixels.size() < 2) {
    throw Error(ErrorCode::kTooFewPixels,
                "need at least 2 object pixels, mask has " + std::to_string(pixels.size()));
  }

  Rng rng(hypothesis_stream_seed(cfg.seed, k));
  const std::size_t target = static_cast<std::size_t>(cfg.num_hypotheses);
  const std::size_t max_attempts = 10 * target;
  std::vector<Hypothesis> hyps;
  hyps.reserve(target);
  for (std::size_t attempt = 0; attempt < max_attempts && hyps.size() < target; ++attempt) {
    const std::size_t a = rng.index(pixels.size());
    std::size_t b = rng.index(pixels.size() - 1);
    if (b >= a) ++b;
    const Vec2 va = field.at(pixels[a], k);
    const Vec2 vb = field.at(pixels[b], k);
    if (va.isZero(0.0) || vb.isZero(0.0)) continue;
    const auto hit = intersect_rays(pixel_position(pixels[a], mask.width), va,
                                    pixel_position(pixels[b], mask.width), vb);
    if (hit) hyps.push_back({*hit, 0});
  }
  if (hyps.empty()) {
    throw Error(ErrorCode::kNoValidHypotheses,
                "all " + std::to_string(max_attempts) + " sampled pairs for keypoint " +
                    std::to_string(k) + " were degenerate");
  }
  return hyps;
}

std::vector<Hypothesis> score_hypotheses(const SegmentationMask& mask, const VectorField& field, int k,
                                         std::vector<Hypothesis> hyps, double theta, int threads) {
  check_shapes(mask, field, k);

  // Structure-of-arrays copy of the voting pixels for a tight inner loop.
  std::vector<double> px, py, vx, vy;
  for (std::size_t pixel = 0; pixel < mask.labels.size(); ++pixel) {
    if (!mask.on_object(pixel)) continue;
    const Vec2 v = field.at(pixel, k);
    if (v.isZero(0.0)) continue;
    const Vec2 p = pixel_position(pixel, mask.width);
    px.push_back(p.x());
    py.push_back(p.y());
    vx.push_back(v.x());
    vy.push_back(v.y());
  }
  const std::size_t n = px.size();
  const double* xs = px.data();
  const double* ys = py.data();
  const double* us = vx.data();
  const double* ws = vy.data();

  parallel_for(hyps.size(), threads, [&](std::size_t i) {
    const double hx = hyps[i].location.x();
    const double hy = hyps[i].location.y();
    int votes = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const double dx = hx - xs[j];
      const double dy = hy - ys[j];
      const double len = std::sqrt(dx * dx + dy * dy);
      // len == 0 yields NaN, which never passes the comparison.
      votes += (dx / len * us[j] + dy / len * ws[j]) >= theta;
    }
    hyps[i].weight = votes;
  });
  return hyps;
}

KeypointDistribution estimate_distribution(const std::vector<Hypothesis>& hyps, double cov_epsilon) {
  const std::size_t n = hyps.size();
  double total = 0.0;
  if (n > 0) {
    total = pairwise_sum<double>(0, n, [&](std::size_t i) { return static_cast<double>(hyps[i].weight); });
  }
  if (!(total > 0.0)) {
    throw Error(ErrorCode::kZeroTotalWeight, "no hypothesis received any vote");
  }

  KeypointDistribution dist;
  dist.hypotheses = hyps;
  const Vec2 weighted = pairwise_sum<Vec2>(0, n, [&](std::size_t i) -> Vec2 {
    return static_cast<double>(hyps[i].weight) * hyps[i].location;
  });
  dist.mean = weighted / total;
  const Mat2 scatter = pairwise_sum<Mat2>(0, n, [&](std::size_t i) -> Mat2 {
    const Vec2 d = hyps[i].location - dist.mean;
    return static_cast<double>(hyps[i].weight) * (d * d.transpose());
  });
  dist.covariance = scatter / total;
  dist.covariance(1, 0) = dist.covariance(0, 1);
  dist.covariance += cov_epsilon * Mat2::Identity();
  return dist;
}

KeypointDistribution vote_keypoint(const SegmentationMask& mask, const VectorField& field, int k,
                                   const VotingConfig& cfg) {
  auto hyps = generate_hypotheses(mask, field, k, cfg);
  hyps = score_hypotheses(mask, field, k, std::move(hyps), cfg.inlier_threshold, 1);
  return estimate_distribution(hyps, cfg.cov_epsilon);
}

std::vector<KeypointDistribution> vote_keypoints(const SegmentationMask& mask, const VectorField& field,
                                                 const VotingConfig& cfg) {
  std::vector<KeypointDistribution> out(static_cast<std::size_t>(field.num_keypoints()));
  parallel_for(out.size(), cfg.threads, [&](std::size_t k) {
    out[k] = vote_keypoint(mask, field, static_cast<int>(k), cfg);
  });
  return out;
}

std::vector<Instance> find_instances(const std::vector<Hypothesis>& center_hyps,
                                     const SegmentationMask& mask, const VectorField& field,
                                     double bandwidth, int center_k, double vote_threshold) {
  if (!(bandwidth > 0.0)) throw Error(ErrorCode::kInvalidArgument, "bandwidth must be positive");
  check_shapes(mask, field, center_k);
  const double bw2 = bandwidth * bandwidth;

  auto window_weight = [&](const Vec2& at, Vec2* mean) {
    double w = 0.0;
    Vec2 acc = Vec2::Zero();
    for (const Hypothesis& h : center_hyps) {
      if (h.weight <= 0 || (h.location - at).squaredNorm() > bw2) continue;
      w += h.weight;
      acc += h.weight * h.location;
    }
    if (mean != nullptr && w > 0.0) *mean = acc / w;
    return w;
  };

  struct Mode {
    Vec2 at;
    double weight;
    std::size_t seed;
  };
  std::vector<Mode> modes;
  for (std::size_t i = 0; i < center_hyps.size(); ++i) {
    if (center_hyps[i].weight <= 0) continue;
    Vec2 m = center_hyps[i].location;
    for (int iter = 0; iter < 100; ++iter) {
      Vec2 next = m;
      window_weight(m, &next);
      const double shift = (next - m).norm();
      m = next;
      if (shift < 1e-9 * std::max(1.0, bandwidth)) break;
    }
    modes.push_back({m, window_weight(m, nullptr), i});
  }
  std::sort(modes.begin(), modes.end(), [](const Mode& a, const Mode& b) {
    return a.weight != b.weight ? a.weight > b.weight : a.seed < b.seed;
  });

  std::vector<Instance> instances;
  for (const Mode& m : modes) {
    const bool merged = std::any_of(instances.begin(), instances.end(), [&](const Instance& inst) {
      return (inst.center - m.at).squaredNorm() < bw2;
    });
    if (!merged) instances.push_back({m.at, m.weight, {}});
  }
  if (instances.empty()) return instances;

  for (const int pixel : mask.object_pixels()) {
    const Vec2 p = pixel_position(pixel, mask.width);
    const Vec2 v = field.at(pixel, center_k);
    const double vn = v.norm();
    // Nearest center among those the pixel votes for; pixels voting for none
    // go to the center closest to their ray.
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    bool voted = false;
    double best_ray = std::numeric_limits<double>::infinity();
    std::size_t best_by_ray = 0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const Vec2 to = instances[i].center - p;
      const double dist = to.norm();
      if (vn > 0.0 && dist > 0.0 && to.dot(v) / (dist * vn) >= vote_threshold && dist < best_dist) {
        best_dist = dist;
        best = i;
        voted = true;
      }
      double ray = to.squaredNorm();
      if (vn > 0.0) {
        const double t = to.dot(v) / (vn * vn);
        if (t > 0.0) ray = (to - t * v).squaredNorm();
      }
      if (ray < best_ray) {
        best_ray = ray;
        best_by_ray = i;
      }
    }
    if (!voted) best = best_by_ray;
    instances[best].pixels.push_back(pixel);
  }
  return instances;
}

}  // namespace pvote
