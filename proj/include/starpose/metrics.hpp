#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "starpose/geometry.hpp"
#include "starpose/heatmap.hpp"

namespace starpose {

struct TemplateKeypoint {
  std::string id;
  Vec3 mean_position;
};

/// Category-level keypoint template: per-id mean canonical locations.
struct CategoryTemplate {
  std::string category;
  std::vector<TemplateKeypoint> keypoints;
};

/// Per-id mean over the models that carry the id. The template keypoint order
/// is the order of first appearance across models, which also fixes the
/// nearest-neighbor tie-break below.
inline CategoryTemplate build_template(std::string category,
                                       const std::vector<std::vector<LabeledPoint>>& models) {
  if (models.empty()) throw std::invalid_argument("build_template: no models");
  CategoryTemplate tmpl;
  tmpl.category = std::move(category);
  std::vector<Vec3> sums;
  std::vector<int> counts;
  for (const auto& model : models) {
    std::vector<std::string> seen;
    for (const auto& kp : model) {
      if (std::find(seen.begin(), seen.end(), kp.id) != seen.end()) {
        throw std::invalid_argument("build_template: duplicate id '" + kp.id +
                                    "' within one model");
      }
      seen.push_back(kp.id);
      auto it = std::find_if(tmpl.keypoints.begin(), tmpl.keypoints.end(),
                             [&](const TemplateKeypoint& t) { return t.id == kp.id; });
      if (it == tmpl.keypoints.end()) {
        tmpl.keypoints.push_back({kp.id, {}});
        sums.push_back(kp.position);
        counts.push_back(1);
      } else {
        const auto idx = static_cast<std::size_t>(it - tmpl.keypoints.begin());
        sums[idx] += kp.position;
        counts[idx] += 1;
      }
    }
  }
  if (tmpl.keypoints.empty()) {
    throw std::invalid_argument("build_template: no keypoint present in any model");
  }
  for (std::size_t i = 0; i < tmpl.keypoints.size(); ++i) {
    tmpl.keypoints[i].mean_position = sums[i] / counts[i];
  }
  return tmpl;
}

/// Assigns each detection the id of the nearest template mean in canonical
/// space (Euclidean on the canview vector; ties go to the lower template
/// index). Many detections may map to one id.
inline std::vector<std::string> classify_keypoints(std::span<const DetectedKeypoint> detections,
                                                   const CategoryTemplate& tmpl) {
  if (tmpl.keypoints.empty()) throw std::invalid_argument("classify_keypoints: empty template");
  std::vector<std::string> ids;
  ids.reserve(detections.size());
  for (const auto& det : detections) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_idx = 0;
    for (std::size_t k = 0; k < tmpl.keypoints.size(); ++k) {
      const double d2 = (det.canview - tmpl.keypoints[k].mean_position).squared_norm();
      if (d2 < best) {
        best = d2;
        best_idx = k;
      }
    }
    ids.push_back(tmpl.keypoints[best_idx].id);
  }
  return ids;
}

/// Oracle assignment: each detection takes the id of the nearest visible
/// ground-truth 2D annotation (ties go to the lower annotation index).
inline std::vector<std::string> assign_oracle_ids(std::span<const DetectedKeypoint> detections,
                                                  std::span<const ImageKeypoint> ground_truth) {
  std::vector<const ImageKeypoint*> visible;
  for (const auto& gt : ground_truth)
    if (gt.visible) visible.push_back(&gt);
  if (visible.empty()) throw std::invalid_argument("assign_oracle_ids: no visible annotations");
  std::vector<std::string> ids;
  ids.reserve(detections.size());
  for (const auto& det : detections) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_idx = 0;
    for (std::size_t k = 0; k < visible.size(); ++k) {
      const double du = det.u - visible[k]->u;
      const double dv = det.v - visible[k]->v;
      const double d2 = du * du + dv * dv;
      if (d2 < best) {
        best = d2;
        best_idx = k;
      }
    }
    ids.push_back(visible[best_idx]->id);
  }
  return ids;
}

struct PredictedKeypoint {
  std::string id;
  double u = 0.0;
  double v = 0.0;
  double confidence = 1.0;
};

/// One evaluated instance: rotations for the viewpoint metrics, id-labeled
/// predictions and ground truth plus the bounding box for PCK.
struct EvalRecord {
  Rotation pred_rotation;
  Rotation gt_rotation;
  std::vector<PredictedKeypoint> predictions;
  std::vector<ImageKeypoint> ground_truth;
  double bbox_h = 0.0;
  double bbox_w = 0.0;
};

struct PckResult {
  std::vector<bool> correct;  // one entry per visible ground-truth keypoint
  double percentage = 0.0;
};

/// Percentage of correct keypoints: a visible ground-truth keypoint is
/// correct iff some prediction carries its id and the highest-confidence one
/// lies strictly within alpha * max(bbox_h, bbox_w). Duplicate-id predictions
/// are resolved by confidence (ties: earlier prediction).
inline PckResult pck(const EvalRecord& record, double alpha = 0.1) {
  if (!(record.bbox_h > 0.0) || !(record.bbox_w > 0.0)) {
    throw std::invalid_argument("pck: bounding box must be positive");
  }
  const double threshold = alpha * std::max(record.bbox_h, record.bbox_w);
  PckResult out;
  int visible = 0, hits = 0;
  for (const auto& gt : record.ground_truth) {
    if (!gt.visible) continue;
    ++visible;
    const PredictedKeypoint* best = nullptr;
    for (const auto& pred : record.predictions) {
      if (pred.id != gt.id) continue;
      if (best == nullptr || pred.confidence > best->confidence) best = &pred;
    }
    bool ok = false;
    if (best != nullptr) {
      const double du = best->u - gt.u;
      const double dv = best->v - gt.v;
      ok = std::sqrt(du * du + dv * dv) < threshold;
    }
    out.correct.push_back(ok);
    hits += ok ? 1 : 0;
  }
  out.percentage = visible == 0 ? 0.0 : 100.0 * hits / visible;
  return out;
}

struct ViewpointScores {
  double median_error_deg = 0.0;
  double acc_pi_6 = 0.0;
  double acc_pi_18 = 0.0;
};

/// Median geodesic rotation error in degrees plus the fraction of records
/// below pi/6 and pi/18. Even-count median is the mean of the two middle
/// values.
inline ViewpointScores viewpoint_scores(std::span<const EvalRecord> records) {
  if (records.empty()) throw std::invalid_argument("viewpoint_scores: no records");
  std::vector<double> errors;
  errors.reserve(records.size());
  int below_pi6 = 0, below_pi18 = 0;
  for (const auto& rec : records) {
    const double err = geodesic_distance(rec.pred_rotation, rec.gt_rotation);
    errors.push_back(err);
    if (err < kPi / 6.0) ++below_pi6;
    if (err < kPi / 18.0) ++below_pi18;
  }
  std::sort(errors.begin(), errors.end());
  const std::size_t n = errors.size();
  const double median_rad =
      n % 2 == 1 ? errors[n / 2] : 0.5 * (errors[n / 2 - 1] + errors[n / 2]);
  return {median_rad * 180.0 / kPi, static_cast<double>(below_pi6) / n,
          static_cast<double>(below_pi18) / n};
}

}  // namespace starpose
