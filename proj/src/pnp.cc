#include "pvote/pnp.h"

#include <algorithm>
#include <array>
#include <optional>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "pvote/error.h"

namespace pvote {
namespace {

constexpr double kFlatRatio = 1e-6;
constexpr double kInf = std::numeric_limits<double>::infinity();

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct ControlFrame {
  std::vector<Vec3> control;  // world-frame control points, [0] = centroid
  MatrixXd alphas;            // n x nc barycentric coordinates
  bool planar = false;
};

ControlFrame make_control_frame(const std::vector<Vec3>& pts) {
  const std::size_t n = pts.size();
  Vec3 c0 = Vec3::Zero();
  for (const Vec3& p : pts) c0 += p;
  c0 /= static_cast<double>(n);
  Mat3 scatter = Mat3::Zero();
  for (const Vec3& p : pts) scatter += (p - c0) * (p - c0).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter);
  const Vec3 spread = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();  // ascending

  if (!(spread(1) > kFlatRatio * spread(2))) {
    throw Error(ErrorCode::kDegenerateConfiguration, "3D points are collinear");
  }
  ControlFrame frame;
  frame.planar = !(spread(0) > kFlatRatio * spread(2));
  const int axes = frame.planar ? 2 : 3;
  frame.control.push_back(c0);
  for (int a = 0; a < axes; ++a) {
    const int col = 2 - a;  // largest spread first
    const double scale = std::sqrt(eig.eigenvalues()(col) / static_cast<double>(n));
    frame.control.push_back(c0 + scale * eig.eigenvectors().col(col));
  }

  MatrixXd basis(3, axes);
  for (int a = 0; a < axes; ++a) basis.col(a) = frame.control[a + 1] - c0;
  const auto qr = basis.colPivHouseholderQr();
  frame.alphas.resize(static_cast<Eigen::Index>(n), axes + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const VectorXd rest = qr.solve(Vec3(pts[i] - c0));
    frame.alphas(static_cast<Eigen::Index>(i), 0) = 1.0 - rest.sum();
    frame.alphas.row(static_cast<Eigen::Index>(i)).tail(axes) = rest.transpose();
  }
  return frame;
}

struct Candidate {
  Pose pose;
  double error = kInf;
  bool in_front = false;
};

// Camera-frame control points from null-space weights, then the rigid
// transform aligning the object points with their camera-frame positions.
Candidate pose_from_betas(const std::vector<VectorXd>& kernel, const VectorXd& betas,
                          const ControlFrame& frame, const std::vector<Vec3>& pts3d,
                          const std::vector<Vec2>& pts2d, const CameraIntrinsics& intr) {
  const int nc = static_cast<int>(frame.control.size());
  VectorXd stacked = VectorXd::Zero(3 * nc);
  for (Eigen::Index i = 0; i < betas.size(); ++i) stacked += betas(i) * kernel[static_cast<std::size_t>(i)];

  const Eigen::Index n = static_cast<Eigen::Index>(pts3d.size());
  Eigen::Matrix3Xd cam(3, n), world(3, n);
  int behind = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Vec3 p = Vec3::Zero();
    for (int j = 0; j < nc; ++j) p += frame.alphas(i, j) * stacked.segment<3>(3 * j);
    cam.col(i) = p;
    world.col(i) = pts3d[static_cast<std::size_t>(i)];
    behind += p.z() < 0.0;
  }
  if (2 * behind > n) cam = -cam;

  const Eigen::Matrix4d t = Eigen::umeyama(world, cam, false);
  Candidate c;
  c.pose.rotation = t.topLeftCorner<3, 3>();
  c.pose.translation = t.topRightCorner<3, 1>();
  if (!c.pose.rotation.allFinite() || !c.pose.translation.allFinite()) return c;

  double total = 0.0;
  int front = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 xc = transform_point(c.pose, pts3d[static_cast<std::size_t>(i)]);
    if (xc.z() > kMinDepth) {
      ++front;
      total += (project_camera_point(intr, xc) - pts2d[static_cast<std::size_t>(i)]).norm();
    } else {
      total = kInf;
    }
  }
  c.error = total / static_cast<double>(n);
  c.in_front = 2 * front > n;
  return c;
}

// Gauss-Newton on the control-point distance constraints
// |sum_i beta_i (v_i^a - v_i^b)|^2 = |c_a - c_b|^2.
VectorXd refine_betas(const std::vector<std::vector<Vec3>>& diffs, const VectorXd& target,
                      VectorXd betas) {
  const Eigen::Index m = target.size();
  const Eigen::Index dims = betas.size();
  auto residual = [&](const VectorXd& b, MatrixXd* jac) {
    VectorXd r(m);
    if (jac) jac->resize(m, dims);
    for (Eigen::Index row = 0; row < m; ++row) {
      Vec3 s = Vec3::Zero();
      for (Eigen::Index i = 0; i < dims; ++i) s += b(i) * diffs[static_cast<std::size_t>(row)][static_cast<std::size_t>(i)];
      r(row) = s.squaredNorm() - target(row);
      if (jac) {
        for (Eigen::Index i = 0; i < dims; ++i) {
          (*jac)(row, i) = 2.0 * s.dot(diffs[static_cast<std::size_t>(row)][static_cast<std::size_t>(i)]);
        }
      }
    }
    return r;
  };
  MatrixXd jac;
  VectorXd r = residual(betas, &jac);
  for (int iter = 0; iter < 10; ++iter) {
    const VectorXd step = jac.colPivHouseholderQr().solve(-r);
    if (!step.allFinite()) break;
    const VectorXd next = betas + step;
    MatrixXd next_jac;
    const VectorXd next_r = residual(next, &next_jac);
    if (!(next_r.squaredNorm() < r.squaredNorm())) break;
    betas = next;
    r = next_r;
    jac = next_jac;
  }
  return betas;
}

// Four-vector case: L b = rho has 6 equations in the 10 products
// b_ij = beta_i beta_j, so b = b0 + N lambda with a 4-dim null space N.
// Consistency of the products (b_ij b_kl = b_ik b_jl, 20 independent
// relations) is linear in lambda and lambda_m lambda_n, which gives an
// overdetermined linear system for lambda.
std::optional<VectorXd> relinearized_betas(const MatrixXd& l, const VectorXd& rho) {
  constexpr int kDims = 4;
  std::vector<std::pair<int, int>> prods;
  for (int i = 0; i < kDims; ++i) {
    for (int j = i; j < kDims; ++j) prods.emplace_back(i, j);
  }
  const int np = static_cast<int>(prods.size());
  Eigen::JacobiSVD<MatrixXd> svd(l, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const VectorXd b0 = svd.solve(rho);
  const int nullity = np - static_cast<int>(l.rows());
  if (nullity <= 0) return std::nullopt;
  const MatrixXd null = svd.matrixV().rightCols(nullity);

  // Group product pairs by the degree-4 monomial they form.
  std::vector<std::vector<std::pair<int, int>>> groups;
  std::vector<std::array<int, 4>> keys;
  for (int p = 0; p < np; ++p) {
    for (int q = p; q < np; ++q) {
      std::array<int, 4> key{prods[p].first, prods[p].second, prods[q].first, prods[q].second};
      std::sort(key.begin(), key.end());
      const auto it = std::find(keys.begin(), keys.end(), key);
      if (it == keys.end()) {
        keys.push_back(key);
        groups.push_back({{p, q}});
      } else {
        groups[static_cast<std::size_t>(it - keys.begin())].emplace_back(p, q);
      }
    }
  }

  const int nq = nullity * (nullity + 1) / 2;
  std::vector<VectorXd> rows;
  std::vector<double> rhs;
  // Coefficients of b_p b_q as (constant, linear in lambda, quadratic terms).
  auto expand = [&](int p, int q, double& c, VectorXd& lin, VectorXd& quad) {
    c = b0(p) * b0(q);
    lin = b0(p) * null.row(q).transpose() + b0(q) * null.row(p).transpose();
    quad = VectorXd::Zero(nq);
    int idx = 0;
    for (int m = 0; m < nullity; ++m) {
      for (int n = m; n < nullity; ++n, ++idx) {
        quad(idx) = m == n ? null(p, m) * null(q, m) : null(p, m) * null(q, n) + null(p, n) * null(q, m);
      }
    }
  };
  for (const auto& group : groups) {
    double c0;
    VectorXd lin0, quad0;
    expand(group[0].first, group[0].second, c0, lin0, quad0);
    for (std::size_t g = 1; g < group.size(); ++g) {
      double c;
      VectorXd lin, quad;
      expand(group[g].first, group[g].second, c, lin, quad);
      VectorXd row(nullity + nq);
      row << lin0 - lin, quad0 - quad;
      rows.push_back(row);
      rhs.push_back(c - c0);
    }
  }
  MatrixXd a(static_cast<Eigen::Index>(rows.size()), nullity + nq);
  VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    a.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
    y(static_cast<Eigen::Index>(r)) = rhs[r];
  }
  const VectorXd z = a.colPivHouseholderQr().solve(y);
  const VectorXd b = b0 + null * z.head(nullity);
  if (!b.allFinite()) return std::nullopt;

  const double flip = b(0) < 0.0 ? -1.0 : 1.0;
  VectorXd betas(kDims);
  betas(0) = std::sqrt(flip * b(0));
  if (!(betas(0) > 0.0)) return std::nullopt;
  // b_0j = beta_0 beta_j for j = 1..3 sit at product indices 1..3.
  for (int j = 1; j < kDims; ++j) betas(j) = flip * b(j) / betas(0);
  return betas;
}

}  // namespace

std::vector<int> select_lowest_trace(const std::vector<Correspondence>& corrs, int count) {
  std::vector<int> order(corrs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return corrs[static_cast<std::size_t>(a)].distribution.trace() <
           corrs[static_cast<std::size_t>(b)].distribution.trace();
  });
  order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(std::max(count, 0))));
  std::sort(order.begin(), order.end());
  return order;
}

EpnpSolution epnp(const std::vector<Vec3>& pts3d, const std::vector<Vec2>& pts2d,
                  const CameraIntrinsics& intr) {
  if (pts3d.size() != pts2d.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "3D and 2D point counts differ");
  }
  if (pts3d.size() < 4) throw Error(ErrorCode::kInvalidArgument, "EPnP needs at least 4 points");
  intr.validate();

  const ControlFrame frame = make_control_frame(pts3d);
  const int nc = static_cast<int>(frame.control.size());
  const Eigen::Index n = static_cast<Eigen::Index>(pts3d.size());

  MatrixXd m = MatrixXd::Zero(2 * n, 3 * nc);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec2& uv = pts2d[static_cast<std::size_t>(i)];
    for (int j = 0; j < nc; ++j) {
      const double a = frame.alphas(i, j);
      m(2 * i, 3 * j) = a * intr.fx;
      m(2 * i, 3 * j + 2) = a * (intr.cx - uv.x());
      m(2 * i + 1, 3 * j + 1) = a * intr.fy;
      m(2 * i + 1, 3 * j + 2) = a * (intr.cy - uv.y());
    }
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m.transpose() * m);
  const int kernel_dims = frame.planar ? 3 : 4;
  std::vector<VectorXd> kernel;
  for (int i = 0; i < kernel_dims; ++i) kernel.push_back(eig.eigenvectors().col(i));

  // Distance constraints between control-point pairs.
  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a < nc; ++a) {
    for (int b = a + 1; b < nc; ++b) pairs.emplace_back(a, b);
  }
  const Eigen::Index num_pairs = static_cast<Eigen::Index>(pairs.size());
  VectorXd target(num_pairs);
  std::vector<std::vector<Vec3>> diffs(pairs.size());
  for (Eigen::Index r = 0; r < num_pairs; ++r) {
    const auto [a, b] = pairs[static_cast<std::size_t>(r)];
    target(r) = (frame.control[a] - frame.control[b]).squaredNorm();
    for (const VectorXd& v : kernel) {
      diffs[static_cast<std::size_t>(r)].push_back(v.segment<3>(3 * a) - v.segment<3>(3 * b));
    }
  }

  // Linearized solve over the products beta_i beta_j (i <= j) for the first
  // `dims` kernel vectors.
  auto linearized = [&](int dims) -> std::optional<VectorXd> {
    std::vector<std::pair<int, int>> prods;
    for (int i = 0; i < dims; ++i) {
      for (int j = i; j < dims; ++j) prods.emplace_back(i, j);
    }
    if (static_cast<Eigen::Index>(prods.size()) > num_pairs) return std::nullopt;
    MatrixXd l(num_pairs, static_cast<Eigen::Index>(prods.size()));
    for (Eigen::Index r = 0; r < num_pairs; ++r) {
      const auto& d = diffs[static_cast<std::size_t>(r)];
      for (std::size_t c = 0; c < prods.size(); ++c) {
        const auto [i, j] = prods[c];
        l(r, static_cast<Eigen::Index>(c)) = (i == j ? 1.0 : 2.0) * d[i].dot(d[j]);
      }
    }
    const VectorXd bb = l.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(target);
    // beta_0 from the first diagonal product; the others from their
    // diagonal products with signs taken from the cross terms with beta_0.
    // A negative beta_0^2 means the whole product vector came out negated.
    auto product = [&](int i, int j) {
      std::size_t c = 0;
      for (int a = 0; a < dims; ++a) {
        for (int b = a; b < dims; ++b, ++c) {
          if (a == i && b == j) return bb(static_cast<Eigen::Index>(c));
        }
      }
      return 0.0;
    };
    const double flip = product(0, 0) < 0.0 ? -1.0 : 1.0;
    VectorXd betas = VectorXd::Zero(kernel_dims);
    betas(0) = std::sqrt(flip * product(0, 0));
    for (int j = 1; j < dims; ++j) {
      const double mag = std::sqrt(std::max(flip * product(j, j), 0.0));
      betas(j) = flip * product(0, j) < 0.0 ? -mag : mag;
    }
    return betas;
  };

  std::vector<Candidate> candidates;
  auto consider = [&](const VectorXd& betas) {
    candidates.push_back(pose_from_betas(kernel, betas, frame, pts3d, pts2d, intr));
    const VectorXd polished = refine_betas(diffs, target, betas);
    candidates.push_back(pose_from_betas(kernel, polished, frame, pts3d, pts2d, intr));
  };
  const int max_case = frame.planar ? 2 : 3;
  for (int dims = 1; dims <= max_case; ++dims) {
    if (auto betas = linearized(dims)) consider(*betas);
  }
  if (!frame.planar) {
    MatrixXd l(num_pairs, 10);
    for (Eigen::Index r = 0; r < num_pairs; ++r) {
      const auto& d = diffs[static_cast<std::size_t>(r)];
      Eigen::Index c = 0;
      for (int i = 0; i < 4; ++i) {
        for (int j = i; j < 4; ++j, ++c) l(r, c) = (i == j ? 1.0 : 2.0) * d[i].dot(d[j]);
      }
    }
    if (auto betas = relinearized_betas(l, target)) consider(*betas);
  }

  const auto best = std::min_element(candidates.begin(), candidates.end(),
                                     [](const Candidate& a, const Candidate& b) { return a.error < b.error; });
  EpnpSolution sol;
  sol.pose = best->pose;
  sol.reprojection_error = best->error;
  sol.planar = frame.planar;
  sol.in_front = best->in_front;
  sol.used.resize(pts3d.size());
  std::iota(sol.used.begin(), sol.used.end(), 0);
  return sol;
}

EpnpSolution epnp_init(const std::vector<Correspondence>& corrs, const CameraIntrinsics& intr) {
  if (corrs.size() < 4) {
    throw Error(ErrorCode::kInvalidArgument, "pose solving needs at least 4 correspondences, got " +
                                                 std::to_string(corrs.size()));
  }
  const std::vector<int> chosen = select_lowest_trace(corrs, 4);
  std::vector<Vec3> pts3d;
  std::vector<Vec2> pts2d;
  for (int i : chosen) {
    pts3d.push_back(corrs[static_cast<std::size_t>(i)].point3d);
    pts2d.push_back(corrs[static_cast<std::size_t>(i)].distribution.mean);
  }
  EpnpSolution sol = epnp(pts3d, pts2d, intr);
  sol.used = chosen;
  return sol;
}

double mahalanobis_cost(const Pose& pose, const std::vector<Correspondence>& corrs,
                        const CameraIntrinsics& intr) {
  double cost = 0.0;
  for (const Correspondence& c : corrs) {
    const Vec2 r = project(intr, pose, c.point3d) - c.distribution.mean;
    cost += r.dot(c.distribution.covariance.ldlt().solve(r));
  }
  return cost;
}

namespace {

// W_k with W_k^T W_k = Sigma_k^-1.
Mat2 whitening(const Mat2& covariance) {
  const Mat2 info = covariance.inverse();
  Eigen::LLT<Mat2> llt(0.5 * (info + info.transpose()));
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::kInvalidArgument, "keypoint covariance is not positive definite");
  }
  return llt.matrixL().transpose();
}

}  // namespace

WhitenedSystem whitened_system(const Pose& pose, const std::vector<Correspondence>& corrs,
                               const CameraIntrinsics& intr, bool with_jacobian) {
  const Eigen::Index n = static_cast<Eigen::Index>(corrs.size());
  WhitenedSystem sys;
  sys.residuals.resize(2 * n);
  if (with_jacobian) sys.jacobian.resize(2 * n, 6);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Correspondence& c = corrs[static_cast<std::size_t>(k)];
    const Vec3 rotated = pose.rotation * c.point3d;
    const Vec3 xc = rotated + pose.translation;
    const Vec2 uv = project_camera_point(intr, xc);
    const Mat2 w = whitening(c.distribution.covariance);
    sys.residuals.segment<2>(2 * k) = w * (uv - c.distribution.mean);
    if (!with_jacobian) continue;

    const double iz = 1.0 / xc.z();
    Eigen::Matrix<double, 2, 3> dproj;
    dproj << intr.fx * iz, 0.0, -intr.fx * xc.x() * iz * iz,
             0.0, intr.fy * iz, -intr.fy * xc.y() * iz * iz;
    // d(exp(dw) R X + t + dt) = -[R X]_x dw + dt
    Eigen::Matrix<double, 3, 6> dcam;
    dcam.leftCols<3>() = -skew(rotated);
    dcam.rightCols<3>() = Mat3::Identity();
    sys.jacobian.middleRows<2>(2 * k) = w * dproj * dcam;
  }
  return sys;
}

Pose apply_update(const Pose& pose, const Eigen::Matrix<double, 6, 1>& delta) {
  return Pose{rotation_exp(delta.head<3>()) * pose.rotation, pose.translation + delta.tail<3>()};
}

PnPResult refine_pose(const Pose& init, const std::vector<Correspondence>& corrs,
                      const CameraIntrinsics& intr, const RefineOptions& opts) {
  PnPResult result;
  result.pose = init;
  WhitenedSystem sys;
  try {
    sys = whitened_system(init, corrs, intr);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kBehindCamera) throw;
    result.final_cost = kInf;
    return result;
  }
  double cost = sys.residuals.squaredNorm();
  const double init_cost = cost;
  double lambda = opts.initial_lambda;

  for (;;) {
    const Eigen::Matrix<double, 6, 1> grad = sys.jacobian.transpose() * sys.residuals;
    if (grad.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
      result.converged = true;
      break;
    }
    if (result.iterations >= opts.max_iters || lambda > 1e16) break;
    ++result.iterations;

    const Eigen::Matrix<double, 6, 6> hessian = sys.jacobian.transpose() * sys.jacobian;
    const double floor = 1e-12 * std::max(hessian.diagonal().maxCoeff(), 1e-300);
    Eigen::Matrix<double, 6, 6> damped = hessian;
    damped.diagonal() += lambda * hessian.diagonal().cwiseMax(floor);
    const Eigen::Matrix<double, 6, 1> step = damped.ldlt().solve(-grad);
    if (!step.allFinite()) {
      lambda *= 10.0;
      continue;
    }

    const Pose candidate = apply_update(result.pose, step);
    WhitenedSystem next;
    try {
      next = whitened_system(candidate, corrs, intr);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kBehindCamera) throw;
      lambda *= 10.0;
      continue;
    }
    const double next_cost = next.residuals.squaredNorm();
    bool accept = next_cost < cost;
    if (!accept && std::abs(next_cost - cost) <= 1e-10 * cost && next_cost <= init_cost) {
      // Near the minimum the cost change drowns in rounding; fall back to
      // asking whether the gradient shrank.
      const double next_grad = (next.jacobian.transpose() * next.residuals).lpNorm<Eigen::Infinity>();
      accept = next_grad < grad.lpNorm<Eigen::Infinity>();
    }
    if (accept) {
      result.pose = candidate;
      sys = std::move(next);
      cost = next_cost;
      lambda = std::max(lambda / 10.0, 1e-15);
    } else {
      lambda *= 10.0;
    }
  }
  result.final_cost = cost;
  return result;
}

const char* pnp_variant_name(PnPVariant v) {
  switch (v) {
    case PnPVariant::kInitOnly: return "init-only";
    case PnPVariant::kUncertainty: return "uncertainty";
    case PnPVariant::kIsotropic: return "isotropic";
  }
  return "unknown";
}

PnPVariant parse_pnp_variant(const std::string& name) {
  if (name == "init-only") return PnPVariant::kInitOnly;
  if (name == "uncertainty") return PnPVariant::kUncertainty;
  if (name == "isotropic") return PnPVariant::kIsotropic;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown PnP variant '" + name + "' (expected init-only, uncertainty or isotropic)");
}

std::vector<Correspondence> with_identity_covariance(std::vector<Correspondence> corrs) {
  for (Correspondence& c : corrs) c.distribution.covariance = Mat2::Identity();
  return corrs;
}

PnPResult solve_pose(const std::vector<Correspondence>& corrs, const CameraIntrinsics& intr,
                     const PnPConfig& cfg) {
  const EpnpSolution init = epnp_init(corrs, intr);

  auto cost_or_inf = [&](const Pose& pose) {
    try {
      return mahalanobis_cost(pose, corrs, intr);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kBehindCamera) throw;
      return kInf;
    }
  };

  PnPResult result;
  switch (cfg.variant) {
    case PnPVariant::kInitOnly:
      result.pose = init.pose;
      result.final_cost = cost_or_inf(init.pose);
      result.converged = init.in_front && std::isfinite(result.final_cost);
      break;
    case PnPVariant::kUncertainty:
      result = refine_pose(init.pose, corrs, intr, cfg.refine);
      break;
    case PnPVariant::kIsotropic:
      result = refine_pose(init.pose, with_identity_covariance(corrs), intr, cfg.refine);
      result.final_cost = cost_or_inf(result.pose);
      break;
  }
  return result;
}

}  // namespace pvote
