#pragma once

// Naive per-pixel re-implementation of hypothesis generation, scoring and
// moment estimation, used as an oracle for the optimized code on tiny grids.

#include <cmath>
#include <vector>

#include "pvote/field.h"
#include "pvote/rng.h"
#include "pvote/voting.h"

namespace pvote::reference {

struct Hyp {
  double x = 0, y = 0;
  int weight = 0;
};

struct Moments {
  double mx = 0, my = 0;
  double cxx = 0, cxy = 0, cyy = 0;
};

inline std::vector<Hyp> generate(const SegmentationMask& mask, const VectorField& field, int k,
                                 int n_hyps, std::uint64_t seed) {
  std::vector<int> cols, rows;
  for (int row = 0; row < mask.height; ++row) {
    for (int col = 0; col < mask.width; ++col) {
      if (mask.at(col, row) != 0) {
        cols.push_back(col);
        rows.push_back(row);
      }
    }
  }
  const std::size_t n = cols.size();
  Rng rng(hypothesis_stream_seed(seed, k));
  std::vector<Hyp> out;
  for (int attempt = 0; attempt < 10 * n_hyps && static_cast<int>(out.size()) < n_hyps; ++attempt) {
    const std::size_t a = rng.index(n);
    std::size_t b = rng.index(n - 1);
    if (b >= a) b += 1;
    const Vec2 va = field.at(static_cast<std::size_t>(rows[a]) * mask.width + cols[a], k);
    const Vec2 vb = field.at(static_cast<std::size_t>(rows[b]) * mask.width + cols[b], k);
    const double ax = va.x(), ay = va.y(), bx = vb.x(), by = vb.y();
    if ((ax == 0 && ay == 0) || (bx == 0 && by == 0)) continue;
    // Solve [a -b] [t s]^T = p_b - p_a.
    const double det = ax * by - ay * bx;
    const double na = std::sqrt(ax * ax + ay * ay), nb = std::sqrt(bx * bx + by * by);
    if (!(std::abs(det) > 1e-6 * na * nb)) continue;
    const double dx = cols[b] - cols[a], dy = rows[b] - rows[a];
    const double t = (dx * by - dy * bx) / det;
    const double s = (dx * ay - dy * ax) / det;
    if (!(t > 0 && s > 0)) continue;
    out.push_back({cols[a] + t * ax, rows[a] + t * ay, 0});
  }
  return out;
}

inline int score(const SegmentationMask& mask, const VectorField& field, int k, double hx, double hy,
                 double theta) {
  int w = 0;
  for (int row = 0; row < mask.height; ++row) {
    for (int col = 0; col < mask.width; ++col) {
      if (mask.at(col, row) == 0) continue;
      const Vec2 v = field.at(static_cast<std::size_t>(row) * mask.width + col, k);
      if (v.x() == 0 && v.y() == 0) continue;
      const double dx = hx - col, dy = hy - row;
      const double len = std::sqrt(dx * dx + dy * dy);
      if (len == 0) continue;
      if (dx / len * v.x() + dy / len * v.y() >= theta) ++w;
    }
  }
  return w;
}

inline Moments moments(const std::vector<Hyp>& hyps, double eps) {
  Moments m;
  double total = 0;
  for (const Hyp& h : hyps) {
    total += h.weight;
    m.mx += h.weight * h.x;
    m.my += h.weight * h.y;
  }
  m.mx /= total;
  m.my /= total;
  for (const Hyp& h : hyps) {
    m.cxx += h.weight * (h.x - m.mx) * (h.x - m.mx);
    m.cxy += h.weight * (h.x - m.mx) * (h.y - m.my);
    m.cyy += h.weight * (h.y - m.my) * (h.y - m.my);
  }
  m.cxx = m.cxx / total + eps;
  m.cxy = m.cxy / total;
  m.cyy = m.cyy / total + eps;
  return m;
}

}  // namespace pvote::reference
