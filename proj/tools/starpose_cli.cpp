// Command-line driver for the synthetic keypoint/viewpoint benchmark:
//   generate  write templates, annotations and map grids to disk
//   run       full in-memory experiment, report to csv/text
//   score     decode + evaluate previously generated files
//   ablate    run every mode on matched seeds and compare
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "starpose/starpose.hpp"

namespace fs = std::filesystem;
using namespace starpose;

namespace {

struct ConfigFlags {
  std::string config_file;
  std::string categories;
  int instances = -1;
  int height = -1, width = -1;
  double sigma = -1.0;
  double noise_star = -1.0, noise_canview = -1.0, noise_depth = -1.0;
  double az_min = 0, az_max = 0, el_min = 0, el_max = 0, ip_min = 0, ip_max = 0;
  std::int64_t seed = -1;
  std::string mode;
  bool continuous = false;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--config", f.config_file, "experiment config file (key value lines)");
  cmd->add_option("--categories", f.categories, "comma-separated categories, or 'all'");
  cmd->add_option("--instances", f.instances, "instances per category");
  cmd->add_option("--height", f.height, "map height in pixels");
  cmd->add_option("--width", f.width, "map width in pixels");
  cmd->add_option("--sigma", f.sigma, "peak sigma in pixels");
  cmd->add_option("--noise-star", f.noise_star, "heatmap noise sigma");
  cmd->add_option("--noise-canview", f.noise_canview, "canview noise sigma");
  cmd->add_option("--noise-depth", f.noise_depth, "depth noise sigma");
  cmd->add_option("--azimuth-min", f.az_min, "azimuth range min, degrees");
  cmd->add_option("--azimuth-max", f.az_max, "azimuth range max, degrees");
  cmd->add_option("--elevation-min", f.el_min, "elevation range min, degrees");
  cmd->add_option("--elevation-max", f.el_max, "elevation range max, degrees");
  cmd->add_option("--inplane-min", f.ip_min, "in-plane range min, degrees");
  cmd->add_option("--inplane-max", f.ip_max, "in-plane range max, degrees");
  cmd->add_option("--seed", f.seed, "rng seed");
  cmd->add_option("--mode", f.mode, "full|gt_star|gt_canview|gt_depth|pnp");
  cmd->add_flag("--continuous-readout", f.continuous,
                "bypass pixel quantization, read exact keypoint values");
}

ExperimentConfig resolve_config(const CLI::App* cmd, const ConfigFlags& f) {
  ExperimentConfig cfg;
  if (!f.config_file.empty()) cfg = load_config(f.config_file);
  const double rad = kPi / 180.0;
  if (cmd->count("--categories")) {
    cfg.categories.clear();
    if (f.categories != "all") {
      for (const auto& c : detail::split(f.categories, ',')) cfg.categories.push_back(c);
    }
  }
  if (cmd->count("--instances")) cfg.instances_per_category = f.instances;
  if (cmd->count("--height")) cfg.map_height = f.height;
  if (cmd->count("--width")) cfg.map_width = f.width;
  if (cmd->count("--sigma")) cfg.sigma = f.sigma;
  if (cmd->count("--noise-star")) cfg.noise.star = f.noise_star;
  if (cmd->count("--noise-canview")) cfg.noise.canview = f.noise_canview;
  if (cmd->count("--noise-depth")) cfg.noise.depth = f.noise_depth;
  if (cmd->count("--azimuth-min")) cfg.azimuth.min_rad = f.az_min * rad;
  if (cmd->count("--azimuth-max")) cfg.azimuth.max_rad = f.az_max * rad;
  if (cmd->count("--elevation-min")) cfg.elevation.min_rad = f.el_min * rad;
  if (cmd->count("--elevation-max")) cfg.elevation.max_rad = f.el_max * rad;
  if (cmd->count("--inplane-min")) cfg.inplane.min_rad = f.ip_min * rad;
  if (cmd->count("--inplane-max")) cfg.inplane.max_rad = f.ip_max * rad;
  if (cmd->count("--seed")) cfg.seed = static_cast<std::uint64_t>(f.seed);
  if (cmd->count("--mode")) cfg.mode = parse_mode(f.mode);
  if (cmd->count("--continuous-readout")) cfg.continuous_readout = f.continuous;
  cfg.validate();
  return cfg;
}

fs::path resolve_out_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("STARPOSE_OUT_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return "starpose_out";
}

void write_reports(const RunReport& report, const fs::path& dir, const std::string& format,
                   const std::string& stem) {
  fs::create_directories(dir);
  if (format == "csv" || format == "both") {
    write_report_file(report, ReportFormat::csv, dir / (stem + ".csv"));
  }
  if (format == "text" || format == "both") {
    write_report_file(report, ReportFormat::text_table, dir / (stem + ".txt"));
  }
  emit_report(report, ReportFormat::text_table, std::cout);
}

int cmd_generate(const CLI::App* cmd, const ConfigFlags& flags, const std::string& out_flag) {
  const ExperimentConfig cfg = resolve_config(cmd, flags);
  const fs::path dir = resolve_out_dir(out_flag);
  fs::create_directories(dir / "templates");
  fs::create_directories(dir / "maps");
  fs::create_directories(dir / "maps_gt");

  const auto templates = templates_for_config(cfg);
  for (const auto& model : builtin_cad_models()) {
    for (const auto& tmpl : templates) {
      if (tmpl.category == model.category) {
        write_template_file(model, dir / "templates" / (model.category + ".template"));
      }
    }
  }

  std::vector<AnnotationRecord> annotations;
  for (std::size_t ci = 0; ci < templates.size(); ++ci) {
    for (int i = 0; i < cfg.instances_per_category; ++i) {
      Rng rng(mix_seed(cfg.seed, ci, static_cast<std::uint64_t>(i)));
      GeneratedInstance inst = generate_instance(templates[ci], cfg, rng);
      inst.annotation.image_id = detail::image_id(templates[ci].category, i);
      write_maps(inst.maps, dir / "maps" / (inst.annotation.image_id + ".maps"));
      write_maps(inst.gt_maps, dir / "maps_gt" / (inst.annotation.image_id + ".maps"));
      annotations.push_back(inst.annotation);
    }
  }
  write_annotations(annotations, dir / "annotations.txt");
  save_config(cfg, dir / "config.txt");
  std::cout << "wrote " << annotations.size() << " instances to " << dir.string() << "\n";
  return 0;
}

int cmd_run(const CLI::App* cmd, const ConfigFlags& flags, const std::string& out_flag,
            const std::string& format) {
  const ExperimentConfig cfg = resolve_config(cmd, flags);
  const RunReport report = run_experiment(cfg);
  write_reports(report, resolve_out_dir(out_flag), format, "report");
  return 0;
}

int cmd_score(const std::string& data_flag, const std::string& out_flag,
              const std::string& mode_str, bool continuous, const std::string& format) {
  const fs::path data = data_flag;
  const ExperimentMode mode = parse_mode(mode_str);
  const bool use_depth = mode != ExperimentMode::pnp;

  std::map<std::string, std::vector<std::vector<LabeledPoint>>> models_by_category;
  for (const auto& entry : fs::directory_iterator(data / "templates")) {
    if (entry.path().extension() != ".template") continue;
    const CadModelKeypoints model = read_template_file(entry.path());
    models_by_category[model.category].push_back(model.keypoints);
  }
  if (models_by_category.empty()) throw std::runtime_error("score: no template files found");
  std::map<std::string, CategoryTemplate> templates;
  for (const auto& [category, models] : models_by_category) {
    templates.emplace(category, build_template(category, models));
  }

  RunReport report;
  if (fs::exists(data / "config.txt")) report.config = load_config(data / "config.txt");
  report.config.mode = mode;
  report.config.continuous_readout = continuous;

  std::vector<std::string> order;
  std::map<std::string, int> per_category_index;
  for (const auto& rec : read_annotations(data / "annotations.txt")) {
    const auto it = templates.find(rec.category);
    if (it == templates.end()) {
      throw std::runtime_error("score: no template for category '" + rec.category + "'");
    }
    std::vector<DetectedKeypoint> dets;
    if (continuous) {
      // Rebuild exact detections from the annotation: continuous 2D
      // locations, template canview features, depths re-derived from the
      // annotated pose.
      CadModelKeypoints cad;
      cad.category = it->second.category;
      cad.model_id = it->second.category + "_mean";
      for (const auto& kp : it->second.keypoints) cad.keypoints.push_back({kp.id, kp.mean_position});
      const auto labels = derive_depth_labels(rec, cad);
      for (const auto& kp2d : rec.keypoints_2d) {
        if (!kp2d.visible) continue;
        for (const auto& kp : it->second.keypoints) {
          if (kp.id != kp2d.id) continue;
          for (const auto& label : labels) {
            if (label.id == kp2d.id) {
              dets.push_back({kp2d.u, kp2d.v, 1.0, kp.mean_position, label.depth});
              break;
            }
          }
          break;
        }
      }
    } else {
      HybridMaps maps = read_maps(data / "maps" / (rec.image_id + ".maps"));
      if (mode == ExperimentMode::gt_star || mode == ExperimentMode::gt_canview ||
          mode == ExperimentMode::gt_depth) {
        const HybridMaps clean = read_maps(data / "maps_gt" / (rec.image_id + ".maps"));
        maps = assemble_maps(maps, clean, mode);
      }
      dets = extract_peaks(maps);
    }
    InstanceResult row = evaluate_detections(
        dets, rec.keypoints_2d, it->second, rec.camera,
        rotation_from_viewpoint(rec.viewpoint).inverse(), rec.bbox_h, rec.bbox_w, use_depth);
    row.instance = per_category_index[rec.category]++;
    row.image_id = rec.image_id;
    if (std::find(order.begin(), order.end(), rec.category) == order.end()) {
      order.push_back(rec.category);
    }
    report.rows.push_back(std::move(row));
  }
  finalize_report(report, order);
  write_reports(report, resolve_out_dir(out_flag), format, "score");
  return 0;
}

int cmd_ablate(const CLI::App* cmd, const ConfigFlags& flags, const std::string& out_flag) {
  ExperimentConfig cfg = resolve_config(cmd, flags);
  const fs::path dir = resolve_out_dir(out_flag);
  fs::create_directories(dir);

  const ExperimentMode modes[] = {ExperimentMode::full, ExperimentMode::gt_star,
                                  ExperimentMode::gt_canview, ExperimentMode::gt_depth,
                                  ExperimentMode::pnp};
  auto csv = detail::open_out(dir / "ablation.csv");
  csv << "mode,med_err_deg,acc_pi_6,acc_pi_18,pck_learned,pck_oracle,class_acc\n";
  std::cout << "mode        MedErr  Acc_pi/6  Acc_pi/18\n";
  for (const ExperimentMode mode : modes) {
    cfg.mode = mode;
    const RunReport report = run_experiment(cfg);
    const CategoryScores& m = report.mean;
    csv << to_string(mode) << "," << detail::fmt_fixed(m.med_err_deg, 6) << ","
        << detail::fmt_fixed(m.acc_pi_6, 6) << "," << detail::fmt_fixed(m.acc_pi_18, 6) << ","
        << detail::fmt_fixed(m.pck_learned_pct, 6) << "," << detail::fmt_fixed(m.pck_oracle_pct, 6)
        << "," << detail::fmt_fixed(m.class_acc_pct, 6) << "\n";
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%-10s %7.2f %9.4f %10.4f", to_string(mode).c_str(),
                  m.med_err_deg, m.acc_pi_6, m.acc_pi_18);
    std::cout << buf << "\n";
    write_report_file(report, ReportFormat::csv, dir / ("report_" + to_string(mode) + ".csv"));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Category-agnostic keypoint maps and viewpoint estimation benchmark"};
  app.require_subcommand(1);

  ConfigFlags flags;
  std::string out_dir, data_dir, format = "both", score_mode = "full";
  bool score_continuous = false;

  CLI::App* generate = app.add_subcommand("generate", "write synthetic instances to disk");
  add_config_flags(generate, flags);
  generate->add_option("--out", out_dir, "output directory (default $STARPOSE_OUT_DIR)");

  CLI::App* run = app.add_subcommand("run", "run an experiment in memory and report");
  add_config_flags(run, flags);
  run->add_option("--out", out_dir, "output directory (default $STARPOSE_OUT_DIR)");
  run->add_option("--format", format, "csv|text|both");

  CLI::App* score = app.add_subcommand("score", "decode and score generated files");
  score->add_option("--data", data_dir, "directory written by generate")->required();
  score->add_option("--out", out_dir, "output directory (default $STARPOSE_OUT_DIR)");
  score->add_option("--mode", score_mode, "full|gt_star|gt_canview|gt_depth|pnp");
  score->add_flag("--continuous-readout", score_continuous,
                  "rebuild exact detections from the annotations instead of decoding maps");
  score->add_option("--format", format, "csv|text|both");

  CLI::App* ablate = app.add_subcommand("ablate", "compare all modes on matched seeds");
  add_config_flags(ablate, flags);
  ablate->add_option("--out", out_dir, "output directory (default $STARPOSE_OUT_DIR)");

  try {
    app.parse(argc, argv);
    if (generate->parsed()) return cmd_generate(generate, flags, out_dir);
    if (run->parsed()) return cmd_run(run, flags, out_dir, format);
    if (score->parsed()) return cmd_score(data_dir, out_dir, score_mode, score_continuous, format);
    if (ablate->parsed()) return cmd_ablate(ablate, flags, out_dir);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
