#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "starpose/geometry.hpp"
#include "starpose/heatmap.hpp"
#include "starpose/svd3.hpp"

namespace starpose {

/// Weighted pairing of an image-frame 3D point p = (u - cx, v - cy, d) with
/// its canonical-frame counterpart q.
struct Correspondence {
  Vec3 p;
  Vec3 q;
  double w = 1.0;
};

struct DegenerateConfiguration : std::runtime_error {
  int rank;
  DegenerateConfiguration(int rank_, const std::string& msg)
      : std::runtime_error(msg), rank(rank_) {}
};

struct InsufficientKeypoints : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NoConvergence : std::runtime_error {
  double last_residual;
  NoConvergence(double residual, const std::string& msg)
      : std::runtime_error(msg), last_residual(residual) {}
};

struct SimilaritySolution {
  SimilarityTransform transform;
  /// Value of sum_i w_i ||s R p_i + t - q_i||^2 at the returned transform.
  double residual = 0.0;
};

/// Closed-form minimizer of sum_i w_i ||s R p_i + t - q_i||^2 over scale,
/// proper rotation and translation. The cross-covariance of the weighted,
/// centered point sets is decomposed by SVD and the rotation orientation is
/// corrected with sign(det(U V^T)), so a reflection is never returned; scale
/// and translation follow in closed form.
inline SimilaritySolution solve_similarity(std::span<const Correspondence> corrs) {
  if (corrs.size() < 3) {
    throw InsufficientKeypoints("solve_similarity: need at least 3 correspondences");
  }
  double wsum = 0.0;
  Vec3 p_mean, q_mean;
  for (const auto& c : corrs) {
    if (c.w < 0.0) throw std::invalid_argument("solve_similarity: negative weight");
    wsum += c.w;
    p_mean += c.w * c.p;
    q_mean += c.w * c.q;
  }
  if (!(wsum > 0.0)) throw std::invalid_argument("solve_similarity: total weight is zero");
  p_mean = p_mean / wsum;
  q_mean = q_mean / wsum;

  Mat3 cross = Mat3::zero();  // sum_i w_i (q_i - q_mean)(p_i - p_mean)^T
  double p_var = 0.0, q_var = 0.0;
  for (const auto& c : corrs) {
    const Vec3 pc = c.p - p_mean;
    const Vec3 qc = c.q - q_mean;
    cross = cross + c.w * Mat3::outer(qc, pc);
    p_var += c.w * pc.squared_norm();
    q_var += c.w * qc.squared_norm();
  }

  const Svd3 svd = svd3(cross);
  const int rank = svd.rank();
  if (rank <= 1) {
    throw DegenerateConfiguration(rank, "solve_similarity: rank-" + std::to_string(rank) +
                                            " configuration (collinear or coincident points)");
  }
  const double orient = (svd.u.det() * svd.v.det()) < 0.0 ? -1.0 : 1.0;
  const Mat3 d = Mat3::from_rows({1, 0, 0}, {0, 1, 0}, {0, 0, orient});
  const Rotation rotation(svd.u * d * svd.v.transposed());

  const double corr = svd.sigma.x + svd.sigma.y + orient * svd.sigma.z;
  if (!(p_var > 0.0) || !(corr > 0.0)) {
    throw DegenerateConfiguration(rank, "solve_similarity: non-positive optimal scale");
  }
  const double scale = corr / p_var;
  const Vec3 translation = q_mean - scale * (rotation * p_mean);

  SimilaritySolution out;
  out.transform = SimilarityTransform(scale, rotation, translation);
  out.residual = std::max(0.0, q_var - corr * corr / p_var);
  return out;
}

struct PnpSolution {
  SimilarityTransform transform;  // image frame -> canonical frame
  /// Weighted squared 2D reprojection residual at convergence.
  double residual = 0.0;
  int iterations = 0;
};

namespace detail {

// Scaled-orthographic depth initialization: fit the 2D affine map from
// centered canonical points to centered image points, complete its rows into
// the top of a scaled rotation, and read initial depths off the third row.
// Planar targets leave the row components along the plane normal
// unobserved; those are reconstructed from the equal-norm/orthogonality
// constraints, whose sign choice yields the two depth-reflected branches.
// Depths fall back to zero when the fit is degenerate.
inline std::array<std::vector<double>, 2> pnp_initial_depths(std::span<const Correspondence> c) {
  const std::size_t n = c.size();
  std::array<std::vector<double>, 2> out{std::vector<double>(n, 0.0),
                                         std::vector<double>(n, 0.0)};
  double wsum = 0.0;
  Vec3 q_mean;
  Vec3 c_mean;  // z unused
  for (const auto& corr : c) {
    wsum += corr.w;
    q_mean += corr.w * corr.q;
    c_mean += corr.w * Vec3{corr.p.x, corr.p.y, 0.0};
  }
  if (!(wsum > 0.0)) return out;
  q_mean = q_mean / wsum;
  c_mean = c_mean / wsum;

  Mat3 normal = Mat3::zero();  // sum w q' q'^T
  Vec3 rhs_u, rhs_v;
  for (const auto& corr : c) {
    const Vec3 qc = corr.q - q_mean;
    normal = normal + corr.w * Mat3::outer(qc, qc);
    rhs_u += (corr.w * (corr.p.x - c_mean.x)) * qc;
    rhs_v += (corr.w * (corr.p.y - c_mean.y)) * qc;
  }
  // Pseudo-inverse tolerates planar targets (rank-2 normal matrix).
  const Svd3 svd = svd3(normal);
  const double cut = 1e-10 * svd.sigma.x;
  auto pinv_apply = [&](Vec3 b) {
    const Vec3 ub{svd.u.col(0).dot(b), svd.u.col(1).dot(b), svd.u.col(2).dot(b)};
    Vec3 scaled{svd.sigma.x > cut ? ub.x / svd.sigma.x : 0.0,
                svd.sigma.y > cut ? ub.y / svd.sigma.y : 0.0,
                svd.sigma.z > cut ? ub.z / svd.sigma.z : 0.0};
    return svd.v * scaled;
  };
  const Vec3 a1 = pinv_apply(rhs_u);
  const Vec3 a2 = pinv_apply(rhs_v);
  if (!(a1.norm() > 0.0) || !(a2.norm() > 0.0)) return out;

  // Out-of-plane completion for rank-2 (planar) targets: with rows
  // r1 = a1 + c1*nrm, r2 = a2 + c2*nrm, equal norms and orthogonality give
  // c1*c2 = -a1.a2 and c1^2 - c2^2 = |a2|^2 - |a1|^2.
  double c1 = 0.0, c2 = 0.0;
  Vec3 nrm{0, 0, 0};
  if (!(svd.sigma.z > cut)) {
    nrm = svd.v.col(2);
    const double g = a1.dot(a2);
    const double h = a2.squared_norm() - a1.squared_norm();
    const double c1_sq = 0.5 * (h + std::sqrt(h * h + 4.0 * g * g));
    c1 = std::sqrt(std::max(c1_sq, 0.0));
    c2 = c1 > 1e-300 ? -g / c1 : std::sqrt(std::max(-h, 0.0));
  }

  for (int branch = 0; branch < 2; ++branch) {
    const double sign = branch == 0 ? 1.0 : -1.0;
    const Vec3 b1 = a1 + (sign * c1) * nrm;
    const Vec3 b2 = a2 + (sign * c2) * nrm;
    const Vec3 r1 = b1.normalized();
    Vec3 r2 = b2 - b2.dot(r1) * r1;
    if (!(r2.norm() > 0.0)) return out;
    r2 = r2.normalized();
    const Vec3 r3 = r1.cross(r2);
    const double inv_scale = 0.5 * (b1.norm() + b2.norm());
    for (std::size_t i = 0; i < n; ++i) {
      out[branch][i] = inv_scale * r3.dot(c[i].q - q_mean);
    }
  }
  // Full-rank fits make both branches identical; keep the depth reflection
  // as the alternative basin then.
  if (c1 == 0.0 && c2 == 0.0) {
    for (std::size_t i = 0; i < n; ++i) out[1][i] = -out[0][i];
  }
  return out;
}

}  // namespace detail

/// Weak-perspective pose from 3D-2D correspondences. Depths are initialized
/// from the scaled-orthographic affine decomposition (both reflected
/// branches; zeros would stall on planar targets), then alternated: each
/// round solves the similarity on the lifted points and re-estimates depths
/// from the transform's depth row, until the 2D residual changes by less
/// than 1e-10. The lower-residual branch wins; planar targets thus return
/// one of the two depth-reflected solutions. Throws NoConvergence if no
/// branch settles within 500 rounds.
inline PnpSolution solve_weak_perspective_pnp(std::span<const Vec3> canonical,
                                              std::span<const Vec2> image,
                                              std::span<const double> weights,
                                              const CameraModel& cam) {
  if (canonical.size() != image.size() || canonical.size() != weights.size()) {
    throw std::invalid_argument("solve_weak_perspective_pnp: size mismatch");
  }
  if (canonical.size() < 3) {
    throw InsufficientKeypoints("solve_weak_perspective_pnp: need at least 3 points");
  }
  if (cam.kind != CameraKind::weak_perspective) {
    throw std::invalid_argument("solve_weak_perspective_pnp: camera is not weak-perspective");
  }

  const std::size_t n = canonical.size();
  std::vector<Correspondence> base(n);
  for (std::size_t i = 0; i < n; ++i) {
    base[i].p = {image[i].x - cam.cx, image[i].y - cam.cy, 0.0};
    base[i].q = canonical[i];
    base[i].w = weights[i];
  }

  constexpr int kMaxIterations = 500;
  constexpr double kResidualTol = 1e-10;
  auto alternate = [&](const std::vector<double>& depths) {
    std::vector<Correspondence> corrs = base;
    for (std::size_t i = 0; i < n; ++i) corrs[i].p.z = depths[i];
    PnpSolution out;
    bool converged = false;
    double prev_residual = -1.0;
    for (int it = 0; it < kMaxIterations && !converged; ++it) {
      const SimilaritySolution sol = solve_similarity(corrs);
      const SimilarityTransform inv = sol.transform.inverse();  // canonical -> image
      double residual = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const Vec3 proj = inv.apply(corrs[i].q);
        const double du = proj.x - corrs[i].p.x;
        const double dv = proj.y - corrs[i].p.y;
        residual += corrs[i].w * (du * du + dv * dv);
        corrs[i].p.z = proj.z;
      }
      converged = prev_residual >= 0.0 && std::fabs(prev_residual - residual) < kResidualTol;
      prev_residual = residual;
      out = {sol.transform, residual, it + 1};
    }
    return std::pair{out, converged};
  };

  const auto inits = detail::pnp_initial_depths(base);
  const auto [sol_a, ok_a] = alternate(inits[0]);
  const auto [sol_b, ok_b] = alternate(inits[1]);
  if (ok_a && (!ok_b || sol_a.residual <= sol_b.residual)) return sol_a;
  if (ok_b) return sol_b;
  throw NoConvergence(std::min(sol_a.residual, sol_b.residual),
                      "solve_weak_perspective_pnp: no convergence after " +
                          std::to_string(kMaxIterations) + " iterations");
}

struct ViewpointEstimate {
  /// Rotation taking the image frame to the canonical frame; compare with
  /// the transpose of the ground-truth viewpoint rotation.
  Rotation rotation;
  double residual = 0.0;
};

/// Builds correspondences p_i = (u_i - cx, v_i - cy, d_i), q_i = canview_i,
/// w_i = confidence_i from decoded keypoints, then solves the similarity
/// (use_depth) or the weak-perspective PnP baseline that ignores the depth
/// channel.
inline ViewpointEstimate estimate_viewpoint(std::span<const DetectedKeypoint> detections,
                                            const CameraModel& cam, bool use_depth = true) {
  if (detections.size() < 3) {
    throw InsufficientKeypoints("estimate_viewpoint: need at least 3 detections, have " +
                                std::to_string(detections.size()));
  }
  if (use_depth) {
    std::vector<Correspondence> corrs(detections.size());
    for (std::size_t i = 0; i < detections.size(); ++i) {
      corrs[i].p = {detections[i].u - cam.cx, detections[i].v - cam.cy, detections[i].depth};
      corrs[i].q = detections[i].canview;
      corrs[i].w = detections[i].confidence;
    }
    const SimilaritySolution sol = solve_similarity(corrs);
    return {sol.transform.rotation, sol.residual};
  }
  std::vector<Vec3> canonical(detections.size());
  std::vector<Vec2> image(detections.size());
  std::vector<double> weights(detections.size());
  for (std::size_t i = 0; i < detections.size(); ++i) {
    canonical[i] = detections[i].canview;
    image[i] = {detections[i].u, detections[i].v};
    weights[i] = detections[i].confidence;
  }
  const PnpSolution sol = solve_weak_perspective_pnp(canonical, image, weights, cam);
  return {sol.transform.rotation, sol.residual};
}

}  // namespace starpose
