#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pvote/field.h"
#include "pvote/geometry.h"

namespace pvote {

struct Hypothesis {
  Vec2 location = Vec2::Zero();  // pixels; may lie outside the image
  int weight = 0;                // number of agreeing on-object pixels
};

struct KeypointDistribution {
  Vec2 mean = Vec2::Zero();
  Mat2 covariance = Mat2::Identity();
  std::vector<Hypothesis> hypotheses;

  double trace() const { return covariance.trace(); }
};

inline constexpr int kDefaultNumHypotheses = 128;
inline constexpr double kDefaultInlierThreshold = 0.99;
inline constexpr double kDefaultCovEpsilon = 1e-6;
inline constexpr double kDefaultInstanceBandwidth = 20.0;

struct VotingConfig {
  int num_hypotheses = kDefaultNumHypotheses;
  double inlier_threshold = kDefaultInlierThreshold;  // cosine
  std::uint64_t seed = 0;
  double cov_epsilon = kDefaultCovEpsilon;  // pixels^2, added to the diagonal
  int threads = 1;

  void validate() const;
};

// Forward intersection of the rays p1 + t v1 and p2 + s v2. Empty when the
// rays are (near) parallel or the crossing lies behind either origin.
std::optional<Vec2> intersect_rays(const Vec2& p1, const Vec2& v1, const Vec2& p2, const Vec2& v2);

// Seed used for keypoint k's pair sampling stream.
std::uint64_t hypothesis_stream_seed(std::uint64_t seed, int k);

// Samples distinct on-object pixel pairs (uniformly, from the row-major list
// of object pixels) and keeps forward ray intersections until
// num_hypotheses are collected or 10 * num_hypotheses pairs were tried.
// Throws TooFewPixels (< 2 object pixels) or NoValidHypotheses.
std::vector<Hypothesis> generate_hypotheses(const SegmentationMask& mask, const VectorField& field,
                                            int k, const VotingConfig& cfg);

// Fills each hypothesis weight with the number of on-object pixels p where
// ((h - p) / |h - p|) . v_k(p) >= theta. Pixels with a zero direction or
// located exactly at h do not vote.
std::vector<Hypothesis> score_hypotheses(const SegmentationMask& mask, const VectorField& field, int k,
                                         std::vector<Hypothesis> hyps, double theta, int threads = 1);

// Weighted mean and weighted population covariance of the hypotheses, with
// cov_epsilon * I added. Throws ZeroTotalWeight.
KeypointDistribution estimate_distribution(const std::vector<Hypothesis>& hyps, double cov_epsilon);

// generate -> score -> estimate for one keypoint.
KeypointDistribution vote_keypoint(const SegmentationMask& mask, const VectorField& field, int k,
                                   const VotingConfig& cfg);
// All keypoints of the field, parallel over keypoints.
std::vector<KeypointDistribution> vote_keypoints(const SegmentationMask& mask, const VectorField& field,
                                                 const VotingConfig& cfg);

struct Instance {
  Vec2 center = Vec2::Zero();
  double weight = 0.0;      // total hypothesis weight within the bandwidth
  std::vector<int> pixels;  // row-major indices of assigned pixels
};

// Weighted flat-kernel mean shift over center hypotheses. Modes within
// `bandwidth` of a heavier mode are merged into it. Every on-object pixel is
// then assigned to the nearest mode it votes for, i.e. whose direction from
// the pixel has cosine >= `vote_threshold` with the pixel's center vector
// (field keypoint `center_k`). Pixels voting for no mode go to the mode
// closest to their ray.
// Returned instances are ordered by decreasing weight.
std::vector<Instance> find_instances(const std::vector<Hypothesis>& center_hyps,
                                     const SegmentationMask& mask, const VectorField& field,
                                     double bandwidth, int center_k = 0,
                                     double vote_threshold = kDefaultInlierThreshold);

}  // namespace pvote
