#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "starpose/geometry.hpp"
#include "starpose/heatmap.hpp"

namespace starpose {

/// Keypoints annotated on one CAD model, in model units or (after
/// normalize_canonical) in the canonical frame.
struct CadModelKeypoints {
  std::string model_id;
  std::string category;
  std::vector<LabeledPoint> keypoints;
};

/// One annotated image crop: 2D keypoints, the pose that generated them and
/// the camera used.
struct AnnotationRecord {
  std::string image_id;
  std::string category;
  std::string cad_model_id;
  double bbox_h = 0.0;
  double bbox_w = 0.0;
  std::vector<ImageKeypoint> keypoints_2d;
  Viewpoint viewpoint;
  Vec3 translation;  // object-to-camera translation of the metric pose
  CameraModel camera;
};

/// Centers the keypoint bounding box on the origin and scales uniformly so
/// the largest box dimension spans exactly [-0.5, 0.5]. Idempotent.
inline CadModelKeypoints normalize_canonical(const CadModelKeypoints& model) {
  if (model.keypoints.empty()) {
    throw std::invalid_argument("normalize_canonical: no keypoints");
  }
  Vec3 lo = model.keypoints.front().position;
  Vec3 hi = lo;
  for (const auto& kp : model.keypoints) {
    lo = {std::min(lo.x, kp.position.x), std::min(lo.y, kp.position.y),
          std::min(lo.z, kp.position.z)};
    hi = {std::max(hi.x, kp.position.x), std::max(hi.y, kp.position.y),
          std::max(hi.z, kp.position.z)};
  }
  const Vec3 extent = hi - lo;
  const double max_extent = std::max({extent.x, extent.y, extent.z});
  if (!(max_extent > 0.0)) {
    throw std::invalid_argument("normalize_canonical: all points coincident");
  }
  const Vec3 center = 0.5 * (lo + hi);
  CadModelKeypoints out = model;
  for (auto& kp : out.keypoints) kp.position = (kp.position - center) / max_extent;
  return out;
}

struct DepthLabel {
  std::string id;
  double depth = 0.0;
};

/// Ground-truth depth labels: canonical points are posed with the record's
/// [R|t], the weak-perspective scale is recovered from the annotated 2D
/// keypoints, and each visible keypoint gets d = z / s. The cad model must
/// already be in the canonical frame.
inline std::vector<DepthLabel> derive_depth_labels(const AnnotationRecord& record,
                                                   const CadModelKeypoints& cad) {
  const Rotation rot = rotation_from_viewpoint(record.viewpoint);
  std::vector<DepthLabel> labels;
  std::vector<Vec3> metric;
  std::vector<Vec2> image;
  for (const auto& kp2d : record.keypoints_2d) {
    if (!kp2d.visible) continue;
    const LabeledPoint* match = nullptr;
    for (const auto& ckp : cad.keypoints) {
      if (ckp.id == kp2d.id) {
        match = &ckp;
        break;
      }
    }
    if (match == nullptr) continue;
    metric.push_back(rot * match->position + record.translation);
    image.push_back({kp2d.u, kp2d.v});
    labels.push_back({kp2d.id, 0.0});
  }
  if (labels.size() < 2) {
    throw std::invalid_argument(
        "derive_depth_labels: need at least 2 visible keypoints with cad matches");
  }
  const double s = recover_scale(metric, image);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i].depth = metric[i].z / s;
  return labels;
}

// ---------------------------------------------------------------------------
// File formats (see FORMATS.md). Doubles are written with %.17g so every
// write-then-read round-trips bit-exactly.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& tok, const char* what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(std::string(what) + ": bad number '" + tok + "'");
  }
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::vector<std::string> tokens(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

inline std::string camera_token(const CameraModel& cam) {
  std::string tok;
  if (cam.kind == CameraKind::weak_perspective) {
    tok = "weak," + fmt_double(cam.cx) + "," + fmt_double(cam.cy);
  } else {
    tok = "full," + fmt_double(cam.cx) + "," + fmt_double(cam.cy);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) tok += "," + fmt_double((*cam.intrinsics)(r, c));
  }
  return tok;
}

inline CameraModel parse_camera_token(const std::string& tok) {
  const auto parts = split(tok, ',');
  if (parts.empty()) throw std::runtime_error("annotation: empty camera field");
  if (parts[0] == "weak") {
    if (parts.size() != 3) throw std::runtime_error("annotation: bad weak camera field");
    return weak_perspective_camera(parse_double(parts[1], "camera"),
                                   parse_double(parts[2], "camera"));
  }
  if (parts[0] == "full") {
    if (parts.size() != 12) throw std::runtime_error("annotation: bad full camera field");
    Mat3 a;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) a(r, c) = parse_double(parts[3 + 3 * r + c], "camera");
    return full_perspective_camera(a, parse_double(parts[1], "camera"),
                                   parse_double(parts[2], "camera"));
  }
  throw std::runtime_error("annotation: unknown camera kind '" + parts[0] + "'");
}

}  // namespace detail

/// Writes a template file: `category`, `model_id` and one `keypoint` line per
/// keypoint, whitespace-separated.
inline void write_template_file(const CadModelKeypoints& model,
                                const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "category " << model.category << "\n";
  out << "model_id " << model.model_id << "\n";
  for (const auto& kp : model.keypoints) {
    out << "keypoint " << kp.id << " " << detail::fmt_double(kp.position.x) << " "
        << detail::fmt_double(kp.position.y) << " " << detail::fmt_double(kp.position.z) << "\n";
  }
}

inline CadModelKeypoints read_template_file(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  CadModelKeypoints model;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto toks = detail::tokens(line);
    if (toks.empty()) continue;
    if (toks[0] == "category" && toks.size() == 2) {
      model.category = toks[1];
    } else if (toks[0] == "model_id" && toks.size() == 2) {
      model.model_id = toks[1];
    } else if (toks[0] == "keypoint" && toks.size() == 5) {
      model.keypoints.push_back({toks[1],
                                 {detail::parse_double(toks[2], "template"),
                                  detail::parse_double(toks[3], "template"),
                                  detail::parse_double(toks[4], "template")}});
    } else {
      throw std::runtime_error("template: bad line '" + line + "' in " + path.string());
    }
  }
  if (model.category.empty() || model.keypoints.empty()) {
    throw std::runtime_error("template: missing category or keypoints in " + path.string());
  }
  return model;
}

/// One annotation record per line, as whitespace-separated key=value tokens.
/// Angles are radians. Keypoint tokens are kp=<id>,<u>,<v>,<0|1>.
inline void write_annotation_line(const AnnotationRecord& rec, std::ostream& out) {
  using detail::fmt_double;
  out << "image_id=" << rec.image_id << " category=" << rec.category
      << " cad_model_id=" << rec.cad_model_id << " bbox_h=" << fmt_double(rec.bbox_h)
      << " bbox_w=" << fmt_double(rec.bbox_w) << " viewpoint=" << fmt_double(rec.viewpoint.azimuth)
      << "," << fmt_double(rec.viewpoint.elevation) << "," << fmt_double(rec.viewpoint.inplane)
      << " translation=" << fmt_double(rec.translation.x) << "," << fmt_double(rec.translation.y)
      << "," << fmt_double(rec.translation.z) << " camera=" << detail::camera_token(rec.camera);
  for (const auto& kp : rec.keypoints_2d) {
    out << " kp=" << kp.id << "," << fmt_double(kp.u) << "," << fmt_double(kp.v) << ","
        << (kp.visible ? 1 : 0);
  }
  out << "\n";
}

inline AnnotationRecord parse_annotation_line(const std::string& line) {
  AnnotationRecord rec;
  for (const auto& tok : detail::tokens(line)) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw std::runtime_error("annotation: bad token '" + tok + "'");
    const std::string key = tok.substr(0, eq);
    const std::string value = tok.substr(eq + 1);
    if (key == "image_id") {
      rec.image_id = value;
    } else if (key == "category") {
      rec.category = value;
    } else if (key == "cad_model_id") {
      rec.cad_model_id = value;
    } else if (key == "bbox_h") {
      rec.bbox_h = detail::parse_double(value, "annotation");
    } else if (key == "bbox_w") {
      rec.bbox_w = detail::parse_double(value, "annotation");
    } else if (key == "viewpoint") {
      const auto p = detail::split(value, ',');
      if (p.size() != 3) throw std::runtime_error("annotation: bad viewpoint field");
      rec.viewpoint = {detail::parse_double(p[0], "annotation"),
                       detail::parse_double(p[1], "annotation"),
                       detail::parse_double(p[2], "annotation")};
    } else if (key == "translation") {
      const auto p = detail::split(value, ',');
      if (p.size() != 3) throw std::runtime_error("annotation: bad translation field");
      rec.translation = {detail::parse_double(p[0], "annotation"),
                         detail::parse_double(p[1], "annotation"),
                         detail::parse_double(p[2], "annotation")};
    } else if (key == "camera") {
      rec.camera = detail::parse_camera_token(value);
    } else if (key == "kp") {
      const auto p = detail::split(value, ',');
      if (p.size() != 4) throw std::runtime_error("annotation: bad kp field");
      rec.keypoints_2d.push_back({p[0], detail::parse_double(p[1], "annotation"),
                                  detail::parse_double(p[2], "annotation"), p[3] == "1"});
    } else {
      throw std::runtime_error("annotation: unknown key '" + key + "'");
    }
  }
  if (rec.image_id.empty()) throw std::runtime_error("annotation: missing image_id");
  return rec;
}

inline void write_annotations(std::span<const AnnotationRecord> records,
                              const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  for (const auto& rec : records) write_annotation_line(rec, out);
}

inline std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::vector<AnnotationRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    out.push_back(parse_annotation_line(line));
  }
  return out;
}

/// Maps file: header `maps <H> <W> 5`, then 5*H lines of W floats (channel
/// order: star, canview x, canview y, canview z, depth).
inline void write_maps(const HybridMaps& maps, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "maps " << maps.height << " " << maps.width << " 5\n";
  const Grid* channels[5] = {&maps.star, &maps.canview[0], &maps.canview[1], &maps.canview[2],
                             &maps.depth};
  for (const Grid* g : channels) {
    for (int y = 0; y < maps.height; ++y) {
      for (int x = 0; x < maps.width; ++x) {
        out << detail::fmt_double((*g)(x, y)) << (x + 1 == maps.width ? "" : " ");
      }
      out << "\n";
    }
  }
}

inline HybridMaps read_maps(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::string magic;
  int height = 0, width = 0, channels = 0;
  in >> magic >> height >> width >> channels;
  if (magic != "maps" || channels != 5 || height <= 0 || width <= 0) {
    throw std::runtime_error("maps: bad header in " + path.string());
  }
  HybridMaps maps = HybridMaps::zeros(width, height);
  Grid* out_channels[5] = {&maps.star, &maps.canview[0], &maps.canview[1], &maps.canview[2],
                           &maps.depth};
  for (Grid* g : out_channels) {
    for (double& v : g->data) {
      if (!(in >> v)) throw std::runtime_error("maps: truncated data in " + path.string());
    }
  }
  return maps;
}

}  // namespace starpose
