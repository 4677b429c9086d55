#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "starpose/linalg.hpp"

namespace starpose {

inline constexpr double kPi = std::numbers::pi_v<double>;

/// A 3D keypoint with a semantic label, usually in the canonical frame.
struct LabeledPoint {
  std::string id;
  Vec3 position;
};

/// A labeled 2D image keypoint, as carried by annotations.
struct ImageKeypoint {
  std::string id;
  double u = 0.0;
  double v = 0.0;
  bool visible = true;
};

/// Viewpoint as (azimuth, elevation, in-plane) angles in radians.
/// Canonical ranges: azimuth in [0, 2pi), elevation in [-pi/2, pi/2],
/// in-plane in [-pi, pi).
struct Viewpoint {
  double azimuth = 0.0;
  double elevation = 0.0;
  double inplane = 0.0;

  Viewpoint normalized() const {
    double a = azimuth, e = elevation, t = inplane;
    e = std::remainder(e, 2.0 * kPi);
    if (std::fabs(e) > kPi / 2.0) {
      // (a, e, t) and (a + pi, pi - e, t + pi) generate the same rotation.
      e = (e > 0.0 ? kPi : -kPi) - e;
      a += kPi;
      t += kPi;
    }
    a = std::fmod(a, 2.0 * kPi);
    if (a < 0.0) a += 2.0 * kPi;
    if (a >= 2.0 * kPi) a = 0.0;
    t = std::remainder(t, 2.0 * kPi);
    if (t >= kPi) t -= 2.0 * kPi;
    return {a, e, t};
  }
};

inline Mat3 rotation_about_x(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return Mat3::from_rows({1, 0, 0}, {0, c, -s}, {0, s, c});
}

inline Mat3 rotation_about_y(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return Mat3::from_rows({c, 0, s}, {0, 1, 0}, {-s, 0, c});
}

inline Mat3 rotation_about_z(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return Mat3::from_rows({c, -s, 0}, {s, c, 0}, {0, 0, 1});
}

/// Proper rotation matrix. Construction validates R^T R = I and det R = +1
/// to 1e-9.
class Rotation {
 public:
  Rotation() : m_(Mat3::identity()) {}

  explicit Rotation(const Mat3& m) : m_(m) {
    const Mat3 gram = m.transposed() * m;
    if ((gram - Mat3::identity()).frobenius_norm() > 1e-9 ||
        std::fabs(m.det() - 1.0) > 1e-9) {
      throw std::invalid_argument("Rotation: matrix is not a proper rotation");
    }
  }

  static Rotation identity() { return Rotation(); }

  const Mat3& matrix() const { return m_; }
  Rotation inverse() const {
    Rotation r;
    r.m_ = m_.transposed();
    return r;
  }
  Vec3 operator*(Vec3 v) const { return m_ * v; }
  friend Rotation operator*(const Rotation& a, const Rotation& b) {
    Rotation r;
    r.m_ = a.m_ * b.m_;
    return r;
  }

 private:
  Mat3 m_;
};

/// R = R_Z(inplane) * R_X(elevation - pi/2) * R_Z(-azimuth).
inline Rotation rotation_from_viewpoint(const Viewpoint& vp) {
  return Rotation(rotation_about_z(vp.inplane) *
                  rotation_about_x(vp.elevation - kPi / 2.0) *
                  rotation_about_z(-vp.azimuth));
}

struct ViewpointDecomposition {
  Viewpoint viewpoint;
  /// True at elevation = +-pi/2 where azimuth and in-plane rotation are not
  /// separable; azimuth is fixed to 0 there.
  bool gimbal_degenerate = false;
};

/// Inverse of rotation_from_viewpoint. The result is in canonical ranges and
/// round-trips to the input rotation (also in the degenerate case).
inline ViewpointDecomposition viewpoint_from_rotation(const Rotation& r) {
  const Mat3& m = r.matrix();
  const double se = std::clamp(m(2, 2), -1.0, 1.0);
  const double e = std::asin(se);
  const double ce = std::sqrt(std::max(0.0, 1.0 - se * se));

  ViewpointDecomposition out;
  out.viewpoint.elevation = e;
  if (ce < 1e-9) {
    out.gimbal_degenerate = true;
    out.viewpoint.azimuth = 0.0;
    out.viewpoint.inplane = std::atan2(m(1, 0), m(0, 0));
  } else {
    out.viewpoint.azimuth = std::atan2(m(2, 0), -m(2, 1));
    out.viewpoint.inplane = std::atan2(-m(0, 2), m(1, 2));
  }
  out.viewpoint = out.viewpoint.normalized();
  return out;
}

/// Rotation angle of r1^T r2, in [0, pi]. Equals ||logm(r1^T r2)||_F / sqrt(2);
/// computed through the trace with the arccos argument clamped to [-1, 1].
inline double geodesic_distance(const Rotation& r1, const Rotation& r2) {
  const double tr = (r1.matrix().transposed() * r2.matrix()).trace();
  return std::acos(std::clamp((tr - 1.0) / 2.0, -1.0, 1.0));
}

enum class CameraKind { weak_perspective, full_perspective };

/// Camera description: image center for both kinds, plus intrinsics for the
/// full-perspective model.
struct CameraModel {
  CameraKind kind = CameraKind::weak_perspective;
  double cx = 0.0;
  double cy = 0.0;
  std::optional<Mat3> intrinsics;
};

inline CameraModel weak_perspective_camera(double cx, double cy) {
  return {CameraKind::weak_perspective, cx, cy, std::nullopt};
}

inline CameraModel full_perspective_camera(const Mat3& intrinsics, double cx, double cy) {
  if (std::fabs(intrinsics.det()) < 1e-12) {
    throw std::invalid_argument("full_perspective_camera: singular intrinsics");
  }
  return {CameraKind::full_perspective, cx, cy, intrinsics};
}

/// Similarity transform q = scale * R * p + translation. scale > 0 enforced.
struct SimilarityTransform {
  double scale = 1.0;
  Rotation rotation;
  Vec3 translation;

  SimilarityTransform() = default;
  SimilarityTransform(double s, const Rotation& r, Vec3 t)
      : scale(s), rotation(r), translation(t) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw std::invalid_argument("SimilarityTransform: scale must be positive");
    }
  }

  Vec3 apply(Vec3 p) const { return scale * (rotation * p) + translation; }
  SimilarityTransform inverse() const {
    const Rotation rinv = rotation.inverse();
    return {1.0 / scale, rinv, (-1.0 / scale) * (rinv * translation)};
  }
};

struct DegenerateScale : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// [u, v, d] = [x/s + cx, y/s + cy, z/s] for a metric point (x, y, z).
inline Vec3 project_weak_perspective(Vec3 p_metric, double s, const CameraModel& cam) {
  if (!(s > 0.0)) throw std::invalid_argument("project_weak_perspective: s must be > 0");
  if (cam.kind != CameraKind::weak_perspective) {
    throw std::invalid_argument("project_weak_perspective: camera is not weak-perspective");
  }
  return {p_metric.x / s + cam.cx, p_metric.y / s + cam.cy, p_metric.z / s};
}

/// Exact inverse of project_weak_perspective.
inline Vec3 unproject_weak_perspective(Vec3 uvd, double s, const CameraModel& cam) {
  if (!(s > 0.0)) throw std::invalid_argument("unproject_weak_perspective: s must be > 0");
  if (cam.kind != CameraKind::weak_perspective) {
    throw std::invalid_argument("unproject_weak_perspective: camera is not weak-perspective");
  }
  return {(uvd.x - cam.cx) * s, (uvd.y - cam.cy) * s, uvd.z * s};
}

/// Metric point A^-1 * (u*d, v*d, d): its full-perspective projection is
/// (u, v) with depth d.
inline Vec3 backproject_full_perspective(Vec3 uvd, const CameraModel& cam) {
  if (cam.kind != CameraKind::full_perspective || !cam.intrinsics) {
    throw std::invalid_argument("backproject_full_perspective: camera is not full-perspective");
  }
  if (std::fabs(cam.intrinsics->det()) < 1e-12) {
    throw std::invalid_argument("backproject_full_perspective: singular intrinsics");
  }
  return solve3(*cam.intrinsics, {uvd.x * uvd.z, uvd.y * uvd.z, uvd.z});
}

/// s = max(range_x, range_y) / max(range_u, range_v) over matched point lists.
inline double recover_scale(std::span<const Vec3> points_metric,
                            std::span<const Vec2> points_image) {
  if (points_metric.size() != points_image.size()) {
    throw std::invalid_argument("recover_scale: size mismatch");
  }
  if (points_metric.size() < 2) {
    throw std::invalid_argument("recover_scale: need at least 2 points");
  }
  double min_x = points_metric[0].x, max_x = min_x;
  double min_y = points_metric[0].y, max_y = min_y;
  double min_u = points_image[0].x, max_u = min_u;
  double min_v = points_image[0].y, max_v = min_v;
  for (std::size_t i = 1; i < points_metric.size(); ++i) {
    min_x = std::min(min_x, points_metric[i].x);
    max_x = std::max(max_x, points_metric[i].x);
    min_y = std::min(min_y, points_metric[i].y);
    max_y = std::max(max_y, points_metric[i].y);
    min_u = std::min(min_u, points_image[i].x);
    max_u = std::max(max_u, points_image[i].x);
    min_v = std::min(min_v, points_image[i].y);
    max_v = std::max(max_v, points_image[i].y);
  }
  const double num = std::max(max_x - min_x, max_y - min_y);
  const double den = std::max(max_u - min_u, max_v - min_v);
  if (!(den > 0.0)) throw DegenerateScale("recover_scale: coincident image points");
  if (!(num > 0.0)) throw DegenerateScale("recover_scale: coincident metric points");
  return num / den;
}

}  // namespace starpose
