#include <map>
#include <set>
#include <sstream>

#include <catch2/catch_amalgamated.hpp>

#include "starpose/harness.hpp"
#include "starpose/report.hpp"

using namespace starpose;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.categories = {"chair", "car", "bottle"};
  cfg.instances_per_category = 20;
  cfg.seed = 7;
  return cfg;
}

const CategoryTemplate& find_template(const std::vector<CategoryTemplate>& templates,
                                      const std::string& name) {
  for (const auto& t : templates)
    if (t.category == name) return t;
  throw std::runtime_error("missing template " + name);
}

}  // namespace

TEST_CASE("builtin library shape") {
  const auto& models = builtin_cad_models();
  REQUIRE(models.size() == 12);
  std::set<std::size_t> counts;
  for (const auto& model : models) {
    counts.insert(model.keypoints.size());
    CHECK(model.keypoints.size() >= 4);
    CHECK(model.keypoints.size() <= 12);
    // Already canonical: normalization is the identity.
    const CadModelKeypoints norm = normalize_canonical(model);
    for (std::size_t i = 0; i < model.keypoints.size(); ++i) {
      CHECK((norm.keypoints[i].position - model.keypoints[i].position).norm() < 1e-12);
      CHECK(std::fabs(model.keypoints[i].position.x) <= 0.5 + 1e-12);
      CHECK(std::fabs(model.keypoints[i].position.y) <= 0.5 + 1e-12);
      CHECK(std::fabs(model.keypoints[i].position.z) <= 0.5 + 1e-12);
    }
    // Healthy pairwise margins for nearest-neighbor classification.
    for (std::size_t i = 0; i < model.keypoints.size(); ++i)
      for (std::size_t j = i + 1; j < model.keypoints.size(); ++j)
        CHECK((model.keypoints[i].position - model.keypoints[j].position).norm() > 0.1);
  }
  CHECK(counts.size() >= 5);  // varying keypoint counts

  // chair and table share the four leg keypoints at identical canonical
  // positions.
  const auto& chair = models[0];
  const auto& table = models[1];
  for (const char* leg : {"leg_fl", "leg_fr", "leg_bl", "leg_br"}) {
    Vec3 a, b;
    for (const auto& kp : chair.keypoints)
      if (kp.id == leg) a = kp.position;
    for (const auto& kp : table.keypoints)
      if (kp.id == leg) b = kp.position;
    CHECK((a - b).norm() == 0.0);
  }
}

TEST_CASE("generate_instance is deterministic and geometrically consistent") {
  const auto templates = builtin_templates();
  const auto& tmpl = find_template(templates, "car");
  ExperimentConfig cfg = small_config();
  cfg.noise = {0.01, 0.02, 0.5};

  Rng rng1(mix_seed(cfg.seed, 3, 4));
  Rng rng2(mix_seed(cfg.seed, 3, 4));
  const GeneratedInstance a = generate_instance(tmpl, cfg, rng1);
  const GeneratedInstance b = generate_instance(tmpl, cfg, rng2);
  CHECK(a.annotation.viewpoint.azimuth == b.annotation.viewpoint.azimuth);
  CHECK(a.scale == b.scale);
  CHECK(a.maps.star.data == b.maps.star.data);
  CHECK(a.maps.depth.data == b.maps.depth.data);

  // Every visible ground-truth keypoint satisfies the projection identities.
  const Rotation rot = rotation_from_viewpoint(a.annotation.viewpoint);
  for (const auto& gt : a.gt_keypoints) {
    const Vec3 metric = rot * gt.canview + a.annotation.translation;
    CHECK(gt.u == Catch::Approx(metric.x / a.scale + a.annotation.camera.cx).margin(1e-10));
    CHECK(gt.v == Catch::Approx(metric.y / a.scale + a.annotation.camera.cy).margin(1e-10));
    // s * d = z to machine precision.
    CHECK(a.scale * gt.depth == Catch::Approx(metric.z).epsilon(1e-13));
    if (gt.visible) {
      CHECK(gt.u >= 0.0);
      CHECK(gt.u < cfg.map_width);
      CHECK(gt.v >= 0.0);
      CHECK(gt.v < cfg.map_height);
    }
  }
  CHECK(a.annotation.bbox_h > 0.0);
  CHECK(a.annotation.bbox_w > 0.0);

  // Depth labels derived from the annotation match the generator's depths.
  const auto labels = derive_depth_labels(a.annotation, builtin_cad_models()[10]);
  for (const auto& label : labels) {
    for (const auto& gt : a.gt_keypoints) {
      if (gt.id == label.id) CHECK(label.depth == Catch::Approx(gt.depth).epsilon(1e-9));
    }
  }
}

TEST_CASE("zero-noise continuous readout recovers the pose almost exactly") {
  ExperimentConfig cfg = small_config();
  cfg.continuous_readout = true;
  const RunReport report = run_experiment(cfg);
  REQUIRE(report.rows.size() == 60);
  for (const auto& row : report.rows) {
    CHECK(row.solver_ok);
    CHECK(row.geodesic_err_rad < 1e-6);
    CHECK(row.pck_oracle_correct == row.kp_total);
    CHECK(row.class_correct == row.class_total);
  }
  CHECK(report.mean.acc_pi_6 == 1.0);
}

TEST_CASE("zero-noise quantized decoding stays well under pi/6") {
  ExperimentConfig cfg = small_config();
  const RunReport report = run_experiment(cfg);
  CHECK(report.mean.acc_pi_6 == 1.0);
  // Quantization alone leaves a small but nonzero median error.
  CHECK(report.mean.med_err_deg > 0.0);
  CHECK(report.mean.med_err_deg < 10.0);
}

TEST_CASE("gt_star equals full when there is no noise") {
  ExperimentConfig cfg = small_config();
  const RunReport full = run_experiment(cfg);
  cfg.mode = ExperimentMode::gt_star;
  const RunReport gt_star = run_experiment(cfg);
  REQUIRE(full.rows.size() == gt_star.rows.size());
  for (std::size_t i = 0; i < full.rows.size(); ++i) {
    CHECK(full.rows[i].geodesic_err_rad == gt_star.rows[i].geodesic_err_rad);
    CHECK(full.rows[i].detections == gt_star.rows[i].detections);
  }
}

TEST_CASE("canview noise comparable to the template extent degrades accuracy") {
  ExperimentConfig cfg = small_config();
  cfg.instances_per_category = 40;
  const RunReport clean = run_experiment(cfg);
  cfg.noise.canview = 0.5;
  const RunReport noisy = run_experiment(cfg);
  CHECK(noisy.mean.acc_pi_6 < clean.mean.acc_pi_6);
}

TEST_CASE("gt_depth dominates full when only depth noise is active") {
  ExperimentConfig cfg;
  cfg.categories = {"chair", "car", "sofa", "bicycle"};
  cfg.instances_per_category = 40;
  cfg.seed = 11;
  cfg.noise.depth = 8.0;
  cfg.mode = ExperimentMode::full;
  const RunReport full = run_experiment(cfg);
  cfg.mode = ExperimentMode::gt_depth;
  const RunReport gt_depth = run_experiment(cfg);
  CHECK(gt_depth.mean.acc_pi_6 >= full.mean.acc_pi_6);
  CHECK(gt_depth.mean.med_err_deg <= full.mean.med_err_deg);
}

TEST_CASE("report aggregates match a per-row recomputation") {
  ExperimentConfig cfg = small_config();
  cfg.noise = {0.01, 0.05, 2.0};
  const RunReport report = run_experiment(cfg);

  for (const auto& cat : report.per_category) {
    std::vector<double> errors;
    int pi6 = 0, kp = 0, pck = 0, pck_oracle = 0, cls_ok = 0, cls_n = 0;
    for (const auto& row : report.rows) {
      if (row.category != cat.category) continue;
      errors.push_back(row.geodesic_err_rad);
      if (row.geodesic_err_rad < kPi / 6.0) ++pi6;
      kp += row.kp_total;
      pck += row.pck_learned_correct;
      pck_oracle += row.pck_oracle_correct;
      cls_ok += row.class_correct;
      cls_n += row.class_total;
    }
    REQUIRE(static_cast<int>(errors.size()) == cat.instances);
    std::sort(errors.begin(), errors.end());
    const double med = errors.size() % 2 == 1
                           ? errors[errors.size() / 2]
                           : 0.5 * (errors[errors.size() / 2 - 1] + errors[errors.size() / 2]);
    CHECK(cat.med_err_deg == Catch::Approx(med * 180.0 / kPi).margin(1e-12));
    CHECK(cat.acc_pi_6 == Catch::Approx(static_cast<double>(pi6) / errors.size()));
    CHECK(cat.pck_learned_pct == Catch::Approx(100.0 * pck / kp));
    CHECK(cat.pck_oracle_pct == Catch::Approx(100.0 * pck_oracle / kp));
    CHECK(cat.class_acc_pct == Catch::Approx(100.0 * cls_ok / cls_n));
    // Oracle assignment dominates learned assignment on these batches.
    CHECK(pck_oracle >= pck);
  }
}

TEST_CASE("seeded runs emit byte-identical reports") {
  ExperimentConfig cfg = small_config();
  cfg.noise = {0.02, 0.05, 1.0};
  const RunReport a = run_experiment(cfg);
  const RunReport b = run_experiment(cfg);
  std::ostringstream csv_a, csv_b, txt_a, txt_b;
  emit_report(a, ReportFormat::csv, csv_a);
  emit_report(b, ReportFormat::csv, csv_b);
  emit_report(a, ReportFormat::text_table, txt_a);
  emit_report(b, ReportFormat::text_table, txt_b);
  CHECK(csv_a.str() == csv_b.str());
  CHECK(txt_a.str() == txt_b.str());
}

TEST_CASE("csv report round-trips through the parser") {
  ExperimentConfig cfg = small_config();
  cfg.noise.canview = 0.1;
  const RunReport report = run_experiment(cfg);
  std::ostringstream csv;
  emit_report(report, ReportFormat::csv, csv);
  std::istringstream in(csv.str());
  const auto rows = parse_report_csv(in);
  REQUIRE(rows.size() == report.rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].category == report.rows[i].category);
    CHECK(rows[i].image_id == report.rows[i].image_id);
    CHECK(rows[i].detections == report.rows[i].detections);
    CHECK(rows[i].kp_total == report.rows[i].kp_total);
    CHECK(rows[i].pck_learned_correct == report.rows[i].pck_learned_correct);
    CHECK(rows[i].geodesic_err_rad ==
          Catch::Approx(report.rows[i].geodesic_err_rad).margin(1e-10));
  }
  // Aggregates recomputed from the parsed rows agree.
  RunReport parsed;
  parsed.config = cfg;
  parsed.rows = rows;
  std::vector<std::string> order;
  for (const auto& c : report.per_category) order.push_back(c.category);
  finalize_report(parsed, order);
  for (std::size_t i = 0; i < report.per_category.size(); ++i) {
    CHECK(parsed.per_category[i].med_err_deg ==
          Catch::Approx(report.per_category[i].med_err_deg).margin(1e-6));
    CHECK(parsed.per_category[i].acc_pi_6 == report.per_category[i].acc_pi_6);
    CHECK(parsed.per_category[i].pck_learned_pct == report.per_category[i].pck_learned_pct);
  }
}

TEST_CASE("empty report emits only the config echo and header") {
  RunReport empty;
  empty.config = small_config();
  std::ostringstream csv;
  emit_report(empty, ReportFormat::csv, csv);
  std::istringstream in(csv.str());
  std::string line;
  bool saw_header = false;
  while (std::getline(in, line)) {
    if (line.rfind("category,", 0) == 0) {
      saw_header = true;
      continue;
    }
    CHECK((line.empty() || line[0] == '#'));
  }
  CHECK(saw_header);
}

TEST_CASE("median error shrinks as resolution doubles") {
  ExperimentConfig cfg;
  cfg.categories = {"chair", "monitor"};
  cfg.instances_per_category = 40;
  cfg.seed = 19;
  double prev = std::numeric_limits<double>::infinity();
  for (int res : {32, 64, 128, 256}) {
    cfg.map_height = cfg.map_width = res;
    const RunReport report = run_experiment(cfg);
    CHECK(report.mean.med_err_deg <= prev);
    prev = report.mean.med_err_deg;
  }
}

TEST_CASE("accuracy degrades monotonically in each noise parameter") {
  // Statistical check with 1% slack, matched seeds.
  ExperimentConfig cfg;
  cfg.categories = {"chair", "car", "sofa", "airplane"};
  cfg.instances_per_category = 125;  // 500 instances
  cfg.seed = 23;

  auto acc_with = [&](NoiseConfig noise) {
    ExperimentConfig c = cfg;
    c.noise = noise;
    return run_experiment(c).mean.acc_pi_6;
  };

  SECTION("heatmap noise") {
    const double a0 = acc_with({0.0, 0.0, 0.0});
    const double a1 = acc_with({0.03, 0.0, 0.0});
    const double a2 = acc_with({0.10, 0.0, 0.0});
    CHECK(a1 <= a0 + 0.01);
    CHECK(a2 <= a1 + 0.01);
  }
  SECTION("canview noise") {
    const double a0 = acc_with({0.0, 0.0, 0.0});
    const double a1 = acc_with({0.0, 0.15, 0.0});
    const double a2 = acc_with({0.0, 0.40, 0.0});
    CHECK(a1 <= a0 + 0.01);
    CHECK(a2 <= a1 + 0.01);
  }
  SECTION("depth noise") {
    const double a0 = acc_with({0.0, 0.0, 0.0});
    const double a1 = acc_with({0.0, 0.0, 6.0});
    const double a2 = acc_with({0.0, 0.0, 16.0});
    CHECK(a1 <= a0 + 0.01);
    CHECK(a2 <= a1 + 0.01);
  }
}

TEST_CASE("config files round-trip") {
  ExperimentConfig cfg;
  cfg.categories = {"car", "lamp"};
  cfg.instances_per_category = 33;
  cfg.map_height = 96;
  cfg.map_width = 80;
  cfg.sigma = 1.5;
  cfg.noise = {0.01, 0.2, 3.5};
  cfg.azimuth = {0.1, 5.9};
  cfg.elevation = {-0.2, 0.9};
  cfg.inplane = {-0.1, 0.1};
  cfg.seed = 99;
  cfg.mode = ExperimentMode::gt_canview;
  cfg.continuous_readout = true;

  const auto dir = std::filesystem::temp_directory_path() / "starpose_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "config.txt";
  save_config(cfg, path);
  const ExperimentConfig back = load_config(path);
  CHECK(back.categories == cfg.categories);
  CHECK(back.instances_per_category == cfg.instances_per_category);
  CHECK(back.map_height == cfg.map_height);
  CHECK(back.map_width == cfg.map_width);
  CHECK(back.sigma == cfg.sigma);
  CHECK(back.noise.star == cfg.noise.star);
  CHECK(back.noise.canview == cfg.noise.canview);
  CHECK(back.noise.depth == cfg.noise.depth);
  CHECK(back.azimuth.min_rad == Catch::Approx(cfg.azimuth.min_rad).margin(1e-15));
  CHECK(back.elevation.max_rad == Catch::Approx(cfg.elevation.max_rad).margin(1e-15));
  CHECK(back.seed == cfg.seed);
  CHECK(back.mode == cfg.mode);
  CHECK(back.continuous_readout == cfg.continuous_readout);
}
