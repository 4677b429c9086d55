#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "starpose/dataset.hpp"
#include "starpose/harness.hpp"

namespace starpose {

enum class ReportFormat { csv, text_table };

namespace detail {

inline std::string fmt_fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

inline std::string angle_range_deg(const AngleRange& r) {
  return fmt_fixed(r.min_rad * 180.0 / kPi, 6) + ":" + fmt_fixed(r.max_rad * 180.0 / kPi, 6);
}

inline std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

inline void echo_config(const ExperimentConfig& cfg, std::ostream& out) {
  out << "# categories " << (cfg.categories.empty() ? "all" : join(cfg.categories, ',')) << "\n";
  out << "# instances " << cfg.instances_per_category << "\n";
  out << "# resolution " << cfg.map_height << "x" << cfg.map_width << "\n";
  out << "# sigma " << fmt_double(cfg.sigma) << "\n";
  out << "# noise_star " << fmt_double(cfg.noise.star) << "\n";
  out << "# noise_canview " << fmt_double(cfg.noise.canview) << "\n";
  out << "# noise_depth " << fmt_double(cfg.noise.depth) << "\n";
  out << "# azimuth_deg " << angle_range_deg(cfg.azimuth) << "\n";
  out << "# elevation_deg " << angle_range_deg(cfg.elevation) << "\n";
  out << "# inplane_deg " << angle_range_deg(cfg.inplane) << "\n";
  out << "# seed " << cfg.seed << "\n";
  out << "# mode " << to_string(cfg.mode) << "\n";
  out << "# continuous_readout " << (cfg.continuous_readout ? 1 : 0) << "\n";
  out << "# noise_source synthetic\n";
}

}  // namespace detail

inline const char* kReportCsvHeader =
    "category,instance,image_id,detections,geodesic_err_deg,kp_total,pck_learned_correct,"
    "pck_oracle_correct,class_correct,class_total,residual,solver_ok";

/// Per-instance rows as CSV (aggregates are recomputable from the rows), or a
/// per-category text table whose columns follow the usual reporting order
/// (MedErr, then the accuracies). Both start with a config echo.
inline void emit_report(const RunReport& report, ReportFormat format, std::ostream& out) {
  detail::echo_config(report.config, out);
  if (format == ReportFormat::csv) {
    out << kReportCsvHeader << "\n";
    for (const auto& r : report.rows) {
      out << r.category << "," << r.instance << "," << r.image_id << "," << r.detections << ","
          << detail::fmt_fixed(r.geodesic_err_rad * 180.0 / kPi, 9) << "," << r.kp_total << ","
          << r.pck_learned_correct << "," << r.pck_oracle_correct << "," << r.class_correct << ","
          << r.class_total << "," << detail::fmt_double(r.residual) << ","
          << (r.solver_ok ? 1 : 0) << "\n";
    }
    return;
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-10s %8s %9s %10s %8s %11s %8s %6s", "category", "MedErr",
                "Acc_pi/6", "Acc_pi/18", "PCK", "PCK_oracle", "ClsAcc", "n");
  out << buf << "\n";
  auto line = [&](const CategoryScores& s) {
    std::snprintf(buf, sizeof(buf), "%-10s %8.2f %9.4f %10.4f %8.2f %11.2f %8.2f %6d",
                  s.category.c_str(), s.med_err_deg, s.acc_pi_6, s.acc_pi_18, s.pck_learned_pct,
                  s.pck_oracle_pct, s.class_acc_pct, s.instances);
    out << buf << "\n";
  };
  for (const auto& s : report.per_category) line(s);
  line(report.mean);
}

inline void write_report_file(const RunReport& report, ReportFormat format,
                              const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  emit_report(report, format, out);
}

/// Reads back the per-instance rows of a CSV report (config echo and header
/// skipped).
inline std::vector<InstanceResult> parse_report_csv(std::istream& in) {
  std::vector<InstanceResult> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("category,", 0) == 0) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 12) throw std::runtime_error("report csv: bad row '" + line + "'");
    InstanceResult r;
    r.category = f[0];
    r.instance = static_cast<int>(detail::parse_double(f[1], "report"));
    r.image_id = f[2];
    r.detections = static_cast<int>(detail::parse_double(f[3], "report"));
    r.geodesic_err_rad = detail::parse_double(f[4], "report") * kPi / 180.0;
    r.kp_total = static_cast<int>(detail::parse_double(f[5], "report"));
    r.pck_learned_correct = static_cast<int>(detail::parse_double(f[6], "report"));
    r.pck_oracle_correct = static_cast<int>(detail::parse_double(f[7], "report"));
    r.class_correct = static_cast<int>(detail::parse_double(f[8], "report"));
    r.class_total = static_cast<int>(detail::parse_double(f[9], "report"));
    r.residual = detail::parse_double(f[10], "report");
    r.solver_ok = f[11] == "1";
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Experiment config files: `key value` lines, angles in degrees.
// ---------------------------------------------------------------------------

inline void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  const double deg = 180.0 / kPi;
  out << "categories " << (cfg.categories.empty() ? "all" : detail::join(cfg.categories, ','))
      << "\n";
  out << "instances " << cfg.instances_per_category << "\n";
  out << "height " << cfg.map_height << "\n";
  out << "width " << cfg.map_width << "\n";
  out << "sigma " << detail::fmt_double(cfg.sigma) << "\n";
  out << "noise_star " << detail::fmt_double(cfg.noise.star) << "\n";
  out << "noise_canview " << detail::fmt_double(cfg.noise.canview) << "\n";
  out << "noise_depth " << detail::fmt_double(cfg.noise.depth) << "\n";
  out << "azimuth_min_deg " << detail::fmt_double(cfg.azimuth.min_rad * deg) << "\n";
  out << "azimuth_max_deg " << detail::fmt_double(cfg.azimuth.max_rad * deg) << "\n";
  out << "elevation_min_deg " << detail::fmt_double(cfg.elevation.min_rad * deg) << "\n";
  out << "elevation_max_deg " << detail::fmt_double(cfg.elevation.max_rad * deg) << "\n";
  out << "inplane_min_deg " << detail::fmt_double(cfg.inplane.min_rad * deg) << "\n";
  out << "inplane_max_deg " << detail::fmt_double(cfg.inplane.max_rad * deg) << "\n";
  out << "seed " << cfg.seed << "\n";
  out << "mode " << to_string(cfg.mode) << "\n";
  out << "continuous_readout " << (cfg.continuous_readout ? 1 : 0) << "\n";
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  ExperimentConfig cfg;
  const double rad = kPi / 180.0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto toks = detail::tokens(line);
    if (toks.size() != 2) throw std::runtime_error("config: bad line '" + line + "'");
    const std::string& key = toks[0];
    const std::string& value = toks[1];
    if (key == "categories") {
      cfg.categories.clear();
      if (value != "all") {
        for (const auto& c : detail::split(value, ',')) cfg.categories.push_back(c);
      }
    } else if (key == "instances") {
      cfg.instances_per_category = static_cast<int>(detail::parse_double(value, "config"));
    } else if (key == "height") {
      cfg.map_height = static_cast<int>(detail::parse_double(value, "config"));
    } else if (key == "width") {
      cfg.map_width = static_cast<int>(detail::parse_double(value, "config"));
    } else if (key == "sigma") {
      cfg.sigma = detail::parse_double(value, "config");
    } else if (key == "noise_star") {
      cfg.noise.star = detail::parse_double(value, "config");
    } else if (key == "noise_canview") {
      cfg.noise.canview = detail::parse_double(value, "config");
    } else if (key == "noise_depth") {
      cfg.noise.depth = detail::parse_double(value, "config");
    } else if (key == "azimuth_min_deg") {
      cfg.azimuth.min_rad = detail::parse_double(value, "config") * rad;
    } else if (key == "azimuth_max_deg") {
      cfg.azimuth.max_rad = detail::parse_double(value, "config") * rad;
    } else if (key == "elevation_min_deg") {
      cfg.elevation.min_rad = detail::parse_double(value, "config") * rad;
    } else if (key == "elevation_max_deg") {
      cfg.elevation.max_rad = detail::parse_double(value, "config") * rad;
    } else if (key == "inplane_min_deg") {
      cfg.inplane.min_rad = detail::parse_double(value, "config") * rad;
    } else if (key == "inplane_max_deg") {
      cfg.inplane.max_rad = detail::parse_double(value, "config") * rad;
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(std::stoull(value));
    } else if (key == "mode") {
      cfg.mode = parse_mode(value);
    } else if (key == "continuous_readout") {
      cfg.continuous_readout = value == "1" || value == "true";
    } else {
      throw std::runtime_error("config: unknown key '" + key + "'");
    }
  }
  return cfg;
}

}  // namespace starpose
