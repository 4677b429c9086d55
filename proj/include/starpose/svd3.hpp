#pragma once

#include <algorithm>
#include <cmath>

#include "starpose/linalg.hpp"

namespace starpose {

/// Singular value decomposition a = u * diag(sigma) * v^T with
/// sigma.x >= sigma.y >= sigma.z >= 0 and orthonormal u, v.
struct Svd3 {
  Mat3 u;
  Vec3 sigma;
  Mat3 v;

  /// Numerical rank: singular values above rel_tol * sigma_max.
  int rank(double rel_tol = 1e-12) const {
    const double cut = rel_tol * sigma.x;
    if (!(sigma.x > 0.0)) return 0;
    int r = 1;
    if (sigma.y > cut) ++r;
    if (sigma.z > cut) ++r;
    return r;
  }
};

namespace detail {

// Unit vector orthogonal to a unit vector n.
inline Vec3 any_orthonormal(Vec3 n) {
  const Vec3 axis = std::fabs(n.x) <= std::fabs(n.y) && std::fabs(n.x) <= std::fabs(n.z)
                        ? Vec3{1, 0, 0}
                        : (std::fabs(n.y) <= std::fabs(n.z) ? Vec3{0, 1, 0} : Vec3{0, 0, 1});
  return (axis - axis.dot(n) * n).normalized();
}

inline void rotate_columns(Mat3& m, int p, int q, double c, double s) {
  for (int r = 0; r < 3; ++r) {
    const double mp = m(r, p), mq = m(r, q);
    m(r, p) = c * mp - s * mq;
    m(r, q) = s * mp + c * mq;
  }
}

}  // namespace detail

/// One-sided (Hestenes) Jacobi SVD for 3x3 matrices: column pairs are rotated
/// until all are mutually orthogonal to 1e-14 relative, which keeps small
/// singular values accurate at machine precision instead of the sqrt(eps)
/// floor of the a^T a route. Columns whose singular value underflows are
/// completed to an orthonormal basis, so rank 0/1/2 input is fine.
inline Svd3 svd3(const Mat3& a) {
  Mat3 work = a;  // columns converge to sigma_i * u_i
  Mat3 v = Mat3::identity();

  for (int sweep = 0; sweep < 60; ++sweep) {
    double worst = 0.0;
    for (const auto [p, q] : {std::pair{0, 1}, std::pair{0, 2}, std::pair{1, 2}}) {
      const Vec3 cp = work.col(p), cq = work.col(q);
      const double alpha = cp.squared_norm();
      const double beta = cq.squared_norm();
      const double gamma = cp.dot(cq);
      if (alpha <= 0.0 || beta <= 0.0) continue;
      const double rel = std::fabs(gamma) / std::sqrt(alpha * beta);
      worst = std::max(worst, rel);
      if (rel <= 1e-14) continue;
      const double zeta = (beta - alpha) / (2.0 * gamma);
      const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
      const double c = 1.0 / std::sqrt(1.0 + t * t);
      const double s = c * t;
      detail::rotate_columns(work, p, q, c, s);
      detail::rotate_columns(v, p, q, c, s);
    }
    if (worst <= 1e-14) break;
  }

  struct Column {
    double norm;
    Vec3 u;
    Vec3 v;
  };
  std::array<Column, 3> cols;
  for (int i = 0; i < 3; ++i) cols[i] = {work.col(i).norm(), work.col(i), v.col(i)};
  std::sort(cols.begin(), cols.end(),
            [](const Column& l, const Column& r) { return l.norm > r.norm; });

  Svd3 out;
  out.sigma = {cols[0].norm, cols[1].norm, cols[2].norm};
  out.v = Mat3::from_cols(cols[0].v, cols[1].v, cols[2].v);

  const double cutoff = 1e-13 * out.sigma.x;
  Vec3 u0, u1, u2;
  if (out.sigma.x > 0.0) {
    u0 = cols[0].u / out.sigma.x;
  } else {
    out.u = Mat3::identity();
    return out;
  }
  if (out.sigma.y > cutoff) {
    u1 = cols[1].u / out.sigma.y;
    u1 = (u1 - u1.dot(u0) * u0).normalized();
  } else {
    u1 = detail::any_orthonormal(u0);
  }
  if (out.sigma.z > cutoff) {
    u2 = cols[2].u / out.sigma.z;
    u2 = u2 - u2.dot(u0) * u0;
    u2 = (u2 - u2.dot(u1) * u1).normalized();
  } else {
    u2 = u0.cross(u1);
  }
  out.u = Mat3::from_cols(u0, u1, u2);
  return out;
}

}  // namespace starpose
