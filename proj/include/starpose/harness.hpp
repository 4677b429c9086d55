#pragma once

#include <cstdio>
#include <filesystem>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "starpose/alignment.hpp"
#include "starpose/dataset.hpp"
#include "starpose/geometry.hpp"
#include "starpose/heatmap.hpp"
#include "starpose/metrics.hpp"
#include "starpose/rng.hpp"

namespace starpose {

/// Which decoded component (if any) is swapped for its ground truth before
/// alignment, or `pnp` for the depth-free baseline.
enum class ExperimentMode { full, gt_star, gt_canview, gt_depth, pnp };

inline std::string to_string(ExperimentMode mode) {
  switch (mode) {
    case ExperimentMode::full: return "full";
    case ExperimentMode::gt_star: return "gt_star";
    case ExperimentMode::gt_canview: return "gt_canview";
    case ExperimentMode::gt_depth: return "gt_depth";
    case ExperimentMode::pnp: return "pnp";
  }
  return "full";
}

inline ExperimentMode parse_mode(const std::string& s) {
  if (s == "full") return ExperimentMode::full;
  if (s == "gt_star") return ExperimentMode::gt_star;
  if (s == "gt_canview") return ExperimentMode::gt_canview;
  if (s == "gt_depth") return ExperimentMode::gt_depth;
  if (s == "pnp") return ExperimentMode::pnp;
  throw std::invalid_argument("unknown mode '" + s + "'");
}

struct NoiseConfig {
  double star = 0.0;     // per-pixel sigma added to the heatmap, clamped to [0,1]
  double canview = 0.0;  // per-keypoint sigma on each canview coordinate
  double depth = 0.0;    // per-keypoint sigma on the depth value
};

struct AngleRange {
  double min_rad = 0.0;
  double max_rad = 0.0;
};

struct ExperimentConfig {
  std::vector<std::string> categories;  // empty = every built-in category
  int instances_per_category = 100;
  int map_height = 64;
  int map_width = 64;
  double sigma = 1.0;
  NoiseConfig noise;
  AngleRange azimuth{0.0, 2.0 * kPi};
  AngleRange elevation{-kPi / 9.0, kPi / 3.0};
  AngleRange inplane{-kPi / 18.0, kPi / 18.0};
  std::uint64_t seed = 1;
  ExperimentMode mode = ExperimentMode::full;
  /// Read exact continuous keypoint values instead of decoding the pixel
  /// grid; isolates solver behavior from quantization.
  bool continuous_readout = false;

  void validate() const {
    if (instances_per_category <= 0) throw std::invalid_argument("config: instances must be > 0");
    if (map_height < 8 || map_width < 8) throw std::invalid_argument("config: maps at least 8x8");
    if (!(sigma > 0.0)) throw std::invalid_argument("config: sigma must be > 0");
    if (noise.star < 0.0 || noise.canview < 0.0 || noise.depth < 0.0) {
      throw std::invalid_argument("config: noise sigmas must be >= 0");
    }
    for (const auto& r : {azimuth, elevation, inplane}) {
      if (!(r.min_rad <= r.max_rad)) throw std::invalid_argument("config: bad angle range");
    }
  }
};

// ---------------------------------------------------------------------------
// Built-in category library
// ---------------------------------------------------------------------------

/// Twelve synthetic categories with 4-12 keypoints each. chair and table
/// share the same four leg positions so the canonical feature space carries
/// cross-category part structure.
inline const std::vector<CadModelKeypoints>& builtin_cad_models() {
  static const std::vector<CadModelKeypoints> models = [] {
    auto make = [](std::string category, std::vector<LabeledPoint> kps) {
      CadModelKeypoints m;
      m.category = category;
      m.model_id = category + "_01";
      m.keypoints = std::move(kps);
      return normalize_canonical(m);
    };
    std::vector<CadModelKeypoints> out;
    out.push_back(make("chair", {{"leg_fl", {-0.30, -0.30, -0.50}},
                                 {"leg_fr", {0.30, -0.30, -0.50}},
                                 {"leg_bl", {-0.30, 0.30, -0.50}},
                                 {"leg_br", {0.30, 0.30, -0.50}},
                                 {"seat_fl", {-0.32, -0.32, -0.02}},
                                 {"seat_fr", {0.32, -0.32, -0.02}},
                                 {"seat_bl", {-0.32, 0.32, -0.02}},
                                 {"seat_br", {0.32, 0.32, -0.02}},
                                 {"back_tl", {-0.30, 0.30, 0.50}},
                                 {"back_tr", {0.30, 0.30, 0.50}}}));
    out.push_back(make("table", {{"leg_fl", {-0.30, -0.30, -0.50}},
                                 {"leg_fr", {0.30, -0.30, -0.50}},
                                 {"leg_bl", {-0.30, 0.30, -0.50}},
                                 {"leg_br", {0.30, 0.30, -0.50}},
                                 {"top_fl", {-0.45, -0.45, 0.50}},
                                 {"top_fr", {0.45, -0.45, 0.50}},
                                 {"top_bl", {-0.45, 0.45, 0.50}},
                                 {"top_br", {0.45, 0.45, 0.50}}}));
    out.push_back(make("bottle", {{"base_left", {-0.15, -0.15, -0.50}},
                                  {"base_right", {0.15, -0.15, -0.50}},
                                  {"base_back", {0.00, 0.15, -0.50}},
                                  {"cap_top", {0.00, 0.00, 0.50}}}));
    out.push_back(make("monitor", {{"screen_bl", {-0.50, -0.10, -0.35}},
                                   {"screen_br", {0.50, -0.10, -0.35}},
                                   {"screen_tl", {-0.50, -0.10, 0.35}},
                                   {"screen_tr", {0.50, -0.10, 0.35}},
                                   {"back_bl", {-0.33, 0.10, -0.22}},
                                   {"back_br", {0.33, 0.10, -0.22}},
                                   {"back_tl", {-0.33, 0.10, 0.22}},
                                   {"back_tr", {0.33, 0.10, 0.22}}}));
    out.push_back(make("sofa", {{"base_fl", {-0.50, -0.28, -0.30}},
                                {"base_fr", {0.50, -0.28, -0.30}},
                                {"base_bl", {-0.50, 0.28, -0.30}},
                                {"base_br", {0.50, 0.28, -0.30}},
                                {"arm_left", {-0.50, -0.28, 0.10}},
                                {"arm_right", {0.50, -0.28, 0.10}},
                                {"back_tl", {-0.50, 0.28, 0.30}},
                                {"back_tr", {0.50, 0.28, 0.30}},
                                {"seat_front_mid", {0.00, -0.28, -0.05}},
                                {"back_top_mid", {0.00, 0.28, 0.30}}}));
    out.push_back(make("bench", {{"leg_fl", {-0.50, -0.15, -0.22}},
                                 {"leg_fr", {0.50, -0.15, -0.22}},
                                 {"leg_bl", {-0.50, 0.15, -0.22}},
                                 {"leg_br", {0.50, 0.15, -0.22}},
                                 {"seat_left", {-0.50, 0.00, 0.22}},
                                 {"seat_right", {0.50, 0.00, 0.22}}}));
    out.push_back(make("lamp", {{"base_left", {-0.14, -0.14, -0.50}},
                                {"base_right", {0.14, -0.14, -0.50}},
                                {"base_back", {0.00, 0.14, -0.50}},
                                {"shade_front", {0.00, -0.14, 0.30}},
                                {"bulb_top", {0.00, 0.00, 0.50}}}));
    out.push_back(make("cabinet", {{"front_bl", {-0.32, -0.22, -0.50}},
                                   {"front_br", {0.32, -0.22, -0.50}},
                                   {"front_tl", {-0.32, -0.22, 0.50}},
                                   {"front_tr", {0.32, -0.22, 0.50}},
                                   {"back_bl", {-0.32, 0.22, -0.50}},
                                   {"back_br", {0.32, 0.22, -0.50}},
                                   {"back_tl", {-0.32, 0.22, 0.50}},
                                   {"back_tr", {0.32, 0.22, 0.50}}}));
    out.push_back(make("stool", {{"leg_left", {-0.35, -0.30, -0.50}},
                                 {"leg_right", {0.35, -0.30, -0.50}},
                                 {"leg_back", {0.00, 0.30, -0.50}},
                                 {"seat_front", {0.00, -0.30, 0.50}},
                                 {"seat_back", {0.00, 0.30, 0.50}}}));
    out.push_back(make("bicycle", {{"front_wheel_ground", {0.00, -0.50, -0.40}},
                                   {"back_wheel_ground", {0.00, 0.50, -0.40}},
                                   {"front_wheel_hub", {0.00, -0.50, -0.15}},
                                   {"back_wheel_hub", {0.00, 0.50, -0.15}},
                                   {"handle_left", {-0.23, -0.33, 0.39}},
                                   {"handle_right", {0.23, -0.33, 0.39}},
                                   {"head_center", {0.00, -0.33, 0.40}},
                                   {"seat", {0.00, 0.20, 0.35}},
                                   {"seat_post_bottom", {0.00, 0.20, 0.05}},
                                   {"pedal_left", {-0.10, 0.05, -0.10}},
                                   {"pedal_right", {0.10, 0.05, -0.10}}}));
    out.push_back(make("car", {{"wheel_fl", {-0.30, -0.33, -0.22}},
                               {"wheel_fr", {0.30, -0.33, -0.22}},
                               {"wheel_bl", {-0.30, 0.33, -0.22}},
                               {"wheel_br", {0.30, 0.33, -0.22}},
                               {"headlight_left", {-0.28, -0.50, -0.02}},
                               {"headlight_right", {0.28, -0.50, -0.02}},
                               {"taillight_left", {-0.28, 0.50, 0.00}},
                               {"taillight_right", {0.28, 0.50, 0.00}},
                               {"windshield_tl", {-0.25, -0.12, 0.22}},
                               {"windshield_tr", {0.25, -0.12, 0.22}},
                               {"rearwindow_tl", {-0.25, 0.18, 0.22}},
                               {"rearwindow_tr", {0.25, 0.18, 0.22}}}));
    out.push_back(make("airplane", {{"nose", {0.00, -0.50, -0.04}},
                                    {"wingtip_left", {-0.50, 0.02, 0.00}},
                                    {"wingtip_right", {0.50, 0.02, 0.00}},
                                    {"engine_left", {-0.20, -0.10, -0.10}},
                                    {"engine_right", {0.20, -0.10, -0.10}},
                                    {"tail_wing_left", {-0.18, 0.46, 0.06}},
                                    {"tail_wing_right", {0.18, 0.46, 0.06}},
                                    {"tail_fin_top", {0.00, 0.50, 0.22}},
                                    {"belly", {0.00, 0.00, -0.22}}}));
    return out;
  }();
  return models;
}

inline std::vector<CategoryTemplate> builtin_templates() {
  std::vector<CategoryTemplate> out;
  for (const auto& model : builtin_cad_models()) {
    out.push_back(build_template(model.category, {model.keypoints}));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Instance generation
// ---------------------------------------------------------------------------

/// Ground-truth keypoint of a generated instance, with continuous image
/// coordinates.
struct GtKeypoint {
  std::string id;
  double u = 0.0;
  double v = 0.0;
  bool visible = true;
  Vec3 canview;
  double depth = 0.0;
};

struct GeneratedInstance {
  AnnotationRecord annotation;       // pose, camera, 2D keypoints, bbox
  HybridMaps maps;                   // with configured noise applied
  HybridMaps gt_maps;                // clean encoding
  std::vector<GtKeypoint> gt_keypoints;
  double scale = 1.0;                // weak-perspective s used to project
  Rotation gt_alignment;             // image frame -> canonical frame
};

namespace detail {

inline constexpr double kFillFraction = 0.6;  // object span / min(map side)
inline constexpr double kMinObjectDistance = 4.0;
inline constexpr double kMaxObjectDistance = 10.0;

}  // namespace detail

/// Samples a viewpoint in the configured ranges, poses the template at
/// t = (0, 0, z0), projects with the weak-perspective model and encodes the
/// maps. Keypoints projecting outside the grid are marked invisible; if no
/// keypoint lands in frame the pose is resampled (bounded retries).
inline GeneratedInstance generate_instance(const CategoryTemplate& tmpl,
                                           const ExperimentConfig& cfg, Rng& rng) {
  const int width = cfg.map_width, height = cfg.map_height;
  const CameraModel cam = weak_perspective_camera(width / 2.0, height / 2.0);

  for (int attempt = 0; attempt < 32; ++attempt) {
    const Viewpoint vp{rng.uniform(cfg.azimuth.min_rad, cfg.azimuth.max_rad),
                       rng.uniform(cfg.elevation.min_rad, cfg.elevation.max_rad),
                       rng.uniform(cfg.inplane.min_rad, cfg.inplane.max_rad)};
    const double z0 =
        rng.uniform(detail::kMinObjectDistance, detail::kMaxObjectDistance);
    const Rotation rot = rotation_from_viewpoint(vp);
    const Vec3 translation{0.0, 0.0, z0};

    std::vector<Vec3> metric(tmpl.keypoints.size());
    double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
    for (std::size_t i = 0; i < tmpl.keypoints.size(); ++i) {
      metric[i] = rot * tmpl.keypoints[i].mean_position + translation;
      if (i == 0) {
        min_x = max_x = metric[i].x;
        min_y = max_y = metric[i].y;
      } else {
        min_x = std::min(min_x, metric[i].x);
        max_x = std::max(max_x, metric[i].x);
        min_y = std::min(min_y, metric[i].y);
        max_y = std::max(max_y, metric[i].y);
      }
    }
    const double span = std::max(max_x - min_x, max_y - min_y);
    const double target_px = detail::kFillFraction * std::min(width, height);
    const double scale = span / target_px;

    GeneratedInstance inst;
    inst.scale = scale;
    inst.gt_alignment = rot.inverse();
    std::vector<MapKeypoint> visible_kps;
    std::vector<GtKeypoint> gt_kps;
    double kp_min_u = 0, kp_max_u = 0, kp_min_v = 0, kp_max_v = 0;
    bool first_visible = true;
    for (std::size_t i = 0; i < tmpl.keypoints.size(); ++i) {
      const Vec3 uvd = project_weak_perspective(metric[i], scale, cam);
      GtKeypoint gt;
      gt.id = tmpl.keypoints[i].id;
      gt.u = uvd.x;
      gt.v = uvd.y;
      gt.depth = uvd.z;
      gt.canview = tmpl.keypoints[i].mean_position;
      gt.visible = uvd.x >= 0.0 && uvd.x < width && uvd.y >= 0.0 && uvd.y < height;
      if (gt.visible) {
        visible_kps.push_back({gt.u, gt.v, gt.canview, gt.depth});
        if (first_visible) {
          kp_min_u = kp_max_u = gt.u;
          kp_min_v = kp_max_v = gt.v;
          first_visible = false;
        } else {
          kp_min_u = std::min(kp_min_u, gt.u);
          kp_max_u = std::max(kp_max_u, gt.u);
          kp_min_v = std::min(kp_min_v, gt.v);
          kp_max_v = std::max(kp_max_v, gt.v);
        }
      }
      gt_kps.push_back(gt);
    }
    if (visible_kps.empty()) continue;

    inst.gt_keypoints = std::move(gt_kps);
    inst.gt_maps = encode_maps(visible_kps, height, width, cfg.sigma);

    // Noise model: per-keypoint Gaussian on the canview vector and depth
    // (applied to the whole written footprint via re-encoding), then
    // per-pixel Gaussian on the heatmap, clamped to [0, 1]. Draws happen
    // regardless of the sigmas so matched seeds stay matched across noise
    // settings.
    std::vector<MapKeypoint> noisy_kps = visible_kps;
    for (auto& kp : noisy_kps) {
      kp.canview.x += rng.normal(cfg.noise.canview);
      kp.canview.y += rng.normal(cfg.noise.canview);
      kp.canview.z += rng.normal(cfg.noise.canview);
      kp.depth += rng.normal(cfg.noise.depth);
    }
    inst.maps = encode_maps(noisy_kps, height, width, cfg.sigma);
    for (double& v : inst.maps.star.data) {
      v = std::clamp(v + rng.normal(cfg.noise.star), 0.0, 1.0);
    }

    AnnotationRecord& rec = inst.annotation;
    rec.image_id = tmpl.category + "_000000";
    rec.category = tmpl.category;
    rec.cad_model_id = tmpl.category + "_01";
    rec.bbox_w = kp_max_u - kp_min_u;
    rec.bbox_h = kp_max_v - kp_min_v;
    rec.viewpoint = vp;
    rec.translation = translation;
    rec.camera = cam;
    for (const auto& gt : inst.gt_keypoints) {
      rec.keypoints_2d.push_back({gt.id, gt.u, gt.v, gt.visible});
    }
    return inst;
  }
  throw std::runtime_error("generate_instance: no keypoint landed in frame after 32 attempts");
}

/// Exact detections straight from the ground truth (continuous readout).
inline std::vector<DetectedKeypoint> detections_from_ground_truth(const GeneratedInstance& inst) {
  std::vector<DetectedKeypoint> dets;
  for (const auto& gt : inst.gt_keypoints) {
    if (!gt.visible) continue;
    dets.push_back({gt.u, gt.v, 1.0, gt.canview, gt.depth});
  }
  return dets;
}

/// Channel assembly for the ground-truth-substitution modes: the swapped
/// component is read from the clean maps, everything else from the noisy ones.
inline HybridMaps assemble_maps(const HybridMaps& noisy, const HybridMaps& clean,
                                ExperimentMode mode) {
  HybridMaps maps = noisy;
  switch (mode) {
    case ExperimentMode::full:
    case ExperimentMode::pnp:
      break;
    case ExperimentMode::gt_star:
      maps.star = clean.star;
      break;
    case ExperimentMode::gt_canview:
      maps.canview = clean.canview;
      break;
    case ExperimentMode::gt_depth:
      maps.depth = clean.depth;
      break;
  }
  return maps;
}

inline HybridMaps maps_for_mode(const GeneratedInstance& inst, ExperimentMode mode) {
  return assemble_maps(inst.maps, inst.gt_maps, mode);
}

// ---------------------------------------------------------------------------
// Experiment driver
// ---------------------------------------------------------------------------

struct InstanceResult {
  std::string category;
  int instance = 0;
  std::string image_id;
  int detections = 0;
  double geodesic_err_rad = 0.0;
  int kp_total = 0;
  int pck_learned_correct = 0;
  int pck_oracle_correct = 0;
  int class_correct = 0;
  int class_total = 0;
  double residual = 0.0;
  bool solver_ok = false;
};

struct CategoryScores {
  std::string category;
  int instances = 0;
  double med_err_deg = 0.0;
  double acc_pi_6 = 0.0;
  double acc_pi_18 = 0.0;
  double pck_learned_pct = 0.0;
  double pck_oracle_pct = 0.0;
  double class_acc_pct = 0.0;
};

struct RunReport {
  ExperimentConfig config;
  std::vector<InstanceResult> rows;
  std::vector<CategoryScores> per_category;
  CategoryScores mean;  // macro average over categories
};

namespace detail {

inline double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace detail

/// Scores one instance: keypoint classification against the template, oracle
/// assignment, both PCK protocols and the viewpoint solve. Solver failures
/// (fewer than 3 detections, degenerate configurations, no convergence) are
/// scored as a pi rotation error with solver_ok = false.
inline InstanceResult evaluate_detections(std::span<const DetectedKeypoint> detections,
                                          std::span<const ImageKeypoint> gt_keypoints_2d,
                                          const CategoryTemplate& tmpl, const CameraModel& cam,
                                          const Rotation& gt_alignment, double bbox_h,
                                          double bbox_w, bool use_depth) {
  InstanceResult row;
  row.category = tmpl.category;
  row.detections = static_cast<int>(detections.size());
  row.class_total = static_cast<int>(detections.size());

  std::vector<ImageKeypoint> visible;
  for (const auto& gt : gt_keypoints_2d)
    if (gt.visible) visible.push_back(gt);
  row.kp_total = static_cast<int>(visible.size());

  std::vector<std::string> learned, oracle;
  if (!detections.empty() && !visible.empty()) {
    learned = classify_keypoints(detections, tmpl);
    oracle = assign_oracle_ids(detections, visible);
    for (std::size_t i = 0; i < learned.size(); ++i) {
      if (learned[i] == oracle[i]) ++row.class_correct;
    }
  }

  if (!visible.empty() && bbox_h > 0.0 && bbox_w > 0.0) {
    EvalRecord rec;
    rec.gt_rotation = gt_alignment;
    rec.ground_truth = visible;
    rec.bbox_h = bbox_h;
    rec.bbox_w = bbox_w;
    for (std::size_t i = 0; i < detections.size(); ++i) {
      rec.predictions.push_back(
          {learned[i], detections[i].u, detections[i].v, detections[i].confidence});
    }
    const PckResult learned_pck = pck(rec);
    for (bool ok : learned_pck.correct) row.pck_learned_correct += ok ? 1 : 0;
    for (std::size_t i = 0; i < detections.size(); ++i) rec.predictions[i].id = oracle[i];
    const PckResult oracle_pck = pck(rec);
    for (bool ok : oracle_pck.correct) row.pck_oracle_correct += ok ? 1 : 0;
  }

  try {
    const ViewpointEstimate est = estimate_viewpoint(detections, cam, use_depth);
    row.geodesic_err_rad = geodesic_distance(est.rotation, gt_alignment);
    row.residual = est.residual;
    row.solver_ok = true;
  } catch (const std::exception&) {
    row.geodesic_err_rad = kPi;
    row.residual = 0.0;
    row.solver_ok = false;
  }
  return row;
}

inline CategoryScores aggregate_rows(const std::string& category,
                                     std::span<const InstanceResult> rows) {
  CategoryScores s;
  s.category = category;
  s.instances = static_cast<int>(rows.size());
  if (rows.empty()) return s;
  std::vector<double> errors;
  int pi6 = 0, pi18 = 0, kp_total = 0, pck_learned = 0, pck_oracle = 0;
  int cls_correct = 0, cls_total = 0;
  for (const auto& r : rows) {
    errors.push_back(r.geodesic_err_rad);
    if (r.geodesic_err_rad < kPi / 6.0) ++pi6;
    if (r.geodesic_err_rad < kPi / 18.0) ++pi18;
    kp_total += r.kp_total;
    pck_learned += r.pck_learned_correct;
    pck_oracle += r.pck_oracle_correct;
    cls_correct += r.class_correct;
    cls_total += r.class_total;
  }
  s.med_err_deg = detail::median(std::move(errors)) * 180.0 / kPi;
  s.acc_pi_6 = static_cast<double>(pi6) / rows.size();
  s.acc_pi_18 = static_cast<double>(pi18) / rows.size();
  s.pck_learned_pct = kp_total == 0 ? 0.0 : 100.0 * pck_learned / kp_total;
  s.pck_oracle_pct = kp_total == 0 ? 0.0 : 100.0 * pck_oracle / kp_total;
  s.class_acc_pct = cls_total == 0 ? 0.0 : 100.0 * cls_correct / cls_total;
  return s;
}

inline std::vector<CategoryTemplate> templates_for_config(const ExperimentConfig& cfg) {
  const auto all = builtin_templates();
  if (cfg.categories.empty()) return all;
  std::vector<CategoryTemplate> out;
  for (const auto& name : cfg.categories) {
    auto it = std::find_if(all.begin(), all.end(),
                           [&](const CategoryTemplate& t) { return t.category == name; });
    if (it == all.end()) throw std::invalid_argument("unknown category '" + name + "'");
    out.push_back(*it);
  }
  return out;
}

namespace detail {

inline std::string image_id(const std::string& category, int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", index);
  return category + "_" + buf;
}

}  // namespace detail

/// Fills per-category aggregates and the macro mean from the stored rows.
inline void finalize_report(RunReport& report, const std::vector<std::string>& category_order) {
  report.per_category.clear();
  for (const auto& category : category_order) {
    std::vector<InstanceResult> rows;
    for (const auto& r : report.rows)
      if (r.category == category) rows.push_back(r);
    report.per_category.push_back(aggregate_rows(category, rows));
  }
  CategoryScores mean;
  mean.category = "mean";
  for (const auto& c : report.per_category) {
    mean.instances += c.instances;
    mean.med_err_deg += c.med_err_deg;
    mean.acc_pi_6 += c.acc_pi_6;
    mean.acc_pi_18 += c.acc_pi_18;
    mean.pck_learned_pct += c.pck_learned_pct;
    mean.pck_oracle_pct += c.pck_oracle_pct;
    mean.class_acc_pct += c.class_acc_pct;
  }
  const double n = std::max<std::size_t>(report.per_category.size(), 1);
  mean.med_err_deg /= n;
  mean.acc_pi_6 /= n;
  mean.acc_pi_18 /= n;
  mean.pck_learned_pct /= n;
  mean.pck_oracle_pct /= n;
  mean.class_acc_pct /= n;
  report.mean = mean;
}

/// Runs generate -> decode -> associate -> align -> score over every
/// category and instance. Instances draw from independent seeded streams, so
/// results do not depend on evaluation order.
inline RunReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto templates = templates_for_config(cfg);

  RunReport report;
  report.config = cfg;
  const bool use_depth = cfg.mode != ExperimentMode::pnp;
  std::vector<std::string> order;
  for (std::size_t ci = 0; ci < templates.size(); ++ci) {
    const auto& tmpl = templates[ci];
    order.push_back(tmpl.category);
    for (int i = 0; i < cfg.instances_per_category; ++i) {
      Rng rng(mix_seed(cfg.seed, ci, static_cast<std::uint64_t>(i)));
      GeneratedInstance inst = generate_instance(tmpl, cfg, rng);
      inst.annotation.image_id = detail::image_id(tmpl.category, i);

      std::vector<DetectedKeypoint> dets =
          cfg.continuous_readout ? detections_from_ground_truth(inst)
                                 : extract_peaks(maps_for_mode(inst, cfg.mode));
      InstanceResult row = evaluate_detections(
          dets, inst.annotation.keypoints_2d, tmpl, inst.annotation.camera, inst.gt_alignment,
          inst.annotation.bbox_h, inst.annotation.bbox_w, use_depth);
      row.instance = i;
      row.image_id = inst.annotation.image_id;
      report.rows.push_back(std::move(row));
    }
  }
  finalize_report(report, order);
  return report;
}

}  // namespace starpose
