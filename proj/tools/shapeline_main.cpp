// Command-line driver.  Subcommands build the artifacts, run studies and
// write dump files; all heavy lifting lives in the headers.  Exit codes:
// 0 all checks pass, 1 input error, 2 shape or assertion failure,
// 3 calibration budget exhausted.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "shapeline/report_io.hpp"
#include "shapeline/verifier.hpp"

namespace sl = shapeline;
namespace fs = std::filesystem;
using shapeline::verify::ordered_json;

namespace {

struct Config {
  std::string function = "neg-sin";
  std::vector<double> y = {0.0, -sl::pi};
  std::vector<std::int64_t> ns = {64};
  int grid = 2048;
  int q1 = 128;
  int q2 = 64;
  int m1 = 2;
  int m2 = 4;
  int b = 0;  // 0 derives the kernel exponent from the inflection count
  bool calibrate = true;
  int max_m2 = 16;
  std::string artifacts = "both";
  bool allow_small_n = false;
  double sign_tol = 1e-8;
  double ratio_cap = 2.0;
  std::uint64_t seed = 1;
  bool fit_constants = true;
  std::string out = "out";
};

ordered_json config_to_json(const Config& c) {
  return ordered_json{
      {"function", c.function},   {"y", c.y},
      {"n", c.ns},                {"grid", c.grid},
      {"q1", c.q1},               {"q2", c.q2},
      {"m1", c.m1},               {"m2", c.m2},
      {"b", c.b},                 {"calibrate", c.calibrate},
      {"max_m2", c.max_m2},       {"artifacts", c.artifacts},
      {"allow_small_n", c.allow_small_n},
      {"sign_tol", c.sign_tol},   {"ratio_cap", c.ratio_cap},
      {"seed", c.seed},           {"fit_constants", c.fit_constants},
      {"out", c.out}};
}

// Strict schema: every key must be known, types must convert.
void load_config_file(const std::string& path, Config& c) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read config file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw std::invalid_argument("config file is not valid JSON: " +
                                std::string(e.what()));
  }
  if (!j.is_object())
    throw std::invalid_argument("config root must be a JSON object");
  try {
    for (auto& [key, val] : j.items()) {
      if (key == "function") c.function = val.get<std::string>();
      else if (key == "y") c.y = val.get<std::vector<double>>();
      else if (key == "n") c.ns = val.get<std::vector<std::int64_t>>();
      else if (key == "grid") c.grid = val.get<int>();
      else if (key == "q1") c.q1 = val.get<int>();
      else if (key == "q2") c.q2 = val.get<int>();
      else if (key == "m1") c.m1 = val.get<int>();
      else if (key == "m2") c.m2 = val.get<int>();
      else if (key == "b") c.b = val.get<int>();
      else if (key == "calibrate") c.calibrate = val.get<bool>();
      else if (key == "max_m2") c.max_m2 = val.get<int>();
      else if (key == "artifacts") c.artifacts = val.get<std::string>();
      else if (key == "allow_small_n") c.allow_small_n = val.get<bool>();
      else if (key == "sign_tol") c.sign_tol = val.get<double>();
      else if (key == "ratio_cap") c.ratio_cap = val.get<double>();
      else if (key == "seed") c.seed = val.get<std::uint64_t>();
      else if (key == "fit_constants") c.fit_constants = val.get<bool>();
      else if (key == "out") c.out = val.get<std::string>();
      else
        throw std::invalid_argument("unknown config key: " + key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config value has the wrong type: " +
                                std::string(e.what()));
  }
}

sl::verify::ExperimentPlan to_plan(const Config& c) {
  sl::verify::ExperimentPlan p;
  p.function_ids = {c.function};
  p.y_points = c.y;
  p.ns = c.ns;
  p.grid = c.grid;
  p.m1 = c.m1;
  p.m2 = c.m2;
  p.calibrate = c.calibrate;
  p.max_m2 = c.max_m2;
  if (c.artifacts == "spline")
    p.artifacts = sl::verify::ExperimentPlan::Artifacts::spline;
  else if (c.artifacts == "poly")
    p.artifacts = sl::verify::ExperimentPlan::Artifacts::poly;
  else if (c.artifacts == "both")
    p.artifacts = sl::verify::ExperimentPlan::Artifacts::both;
  else
    throw std::invalid_argument("artifacts must be spline, poly or both");
  p.allow_small_n = c.allow_small_n;
  p.fit_constants = c.fit_constants;
  p.ratio_cap = c.ratio_cap;
  p.sign_tol = c.sign_tol;
  p.seed = c.seed;
  return p;
}

std::int64_t first_n(const Config& c) {
  if (c.ns.empty()) throw std::invalid_argument("no grid size given");
  return c.ns.front();
}

void write_manifest(const Config& c, const std::string& cmd,
                    ordered_json body) {
  body["command"] = cmd;
  body["config"] = config_to_json(c);
  sl::verify::write_text_atomic(fs::path(c.out) / "manifest.json",
                                body.dump(2) + "\n");
}

int cmd_build_spline(const Config& c) {
  auto Y = sl::core::InflectionSet::from_points(c.y);
  auto f = sl::verify::resolve_function(c.function, Y);
  std::int64_t n = first_n(c);
  sl::spline::SplineModel m =
      sl::spline::build_spline(f, Y, static_cast<int>(n));
  sl::spline::VerifyOptions vo;
  vo.tol_rel = c.sign_tol;
  sl::spline::SignReport rep = sl::spline::verify_spline_shape(m, vo);

  double err = sl::verify::detail::sup_error(
      f, [&](double x) { return m.value(x); }, c.grid);
  double om = sl::core::modulus_periodic(f, 4, sl::pi / static_cast<double>(n));

  std::ostringstream csv;
  csv << "j,x,value,second_left,second_right\n";
  for (std::int64_t j = 1 - n; j <= n; ++j) {
    double x = m.grid().x(j);
    csv << j << ',' << sl::verify::detail::num(x) << ','
        << sl::verify::detail::num(m.value(x)) << ','
        << sl::verify::detail::num(m.second(x, sl::spline::Side::minus)) << ','
        << sl::verify::detail::num(m.second(x, sl::spline::Side::plus))
        << '\n';
  }
  sl::verify::write_text_atomic(fs::path(c.out) / "spline_knots.csv",
                                csv.str());
  write_manifest(c, "build-spline",
                 ordered_json{{"n", n},
                              {"sup_error", err},
                              {"omega4", om},
                              {"violations", rep.violations},
                              {"jump_violations", rep.jump_violations},
                              {"worst", rep.worst},
                              {"scale", rep.scale},
                              {"ok", rep.ok()}});
  std::printf("spline n=%lld: err=%.6e omega4=%.6e violations=%zu %s\n",
              static_cast<long long>(n), err, om, rep.violations,
              rep.ok() ? "OK" : "SHAPE FAIL");
  return rep.ok() ? 0 : 2;
}

int cmd_build_poly(const Config& c, bool calibrate_only) {
  auto Y = sl::core::InflectionSet::from_points(c.y);
  auto f = sl::verify::resolve_function(c.function, Y);
  std::int64_t n = first_n(c);
  sl::poly::LevelConfig lc;
  lc.n = n;
  lc.m1 = c.m1;
  lc.m2 = c.m2;
  lc.spc1 = c.q1;
  lc.spc2 = c.q2;
  lc.validate();

  std::shared_ptr<sl::poly::PolyModel> model;
  sl::poly::PolyReport rep;
  ordered_json attempts = ordered_json::array();
  bool exhausted = false;
  int used_m1 = c.m1, used_m2 = c.m2;
  if (c.calibrate) {
    sl::poly::CalibrationResult cal =
        sl::poly::calibrate(f, Y, lc, nullptr, c.max_m2);
    for (const auto& at : cal.attempts)
      attempts.push_back(ordered_json{{"m1", at.m1},
                                      {"m2", at.m2},
                                      {"built", at.built},
                                      {"shape_ok", at.shape_ok},
                                      {"clamp_events", at.clamp_events},
                                      {"error", at.error}});
    model = cal.model;
    rep = cal.report;
    used_m1 = cal.used.m1;
    used_m2 = cal.used.m2;
    exhausted = !cal.success;
  } else {
    model = std::make_shared<sl::poly::PolyModel>(f, Y, lc);
    rep = sl::poly::verify_poly_shape(*model);
  }
  if (!model) {
    std::fprintf(stderr, "calibration never produced a model\n");
    return 3;
  }

  double err = sl::verify::detail::sup_error(
      f, [&](double x) { return model->value(x); }, c.grid);
  double om = sl::core::modulus_periodic(f, 4, sl::pi / static_cast<double>(n));

  if (!calibrate_only) {
    std::ostringstream csv;
    csv << "j,x,coefficient,in_h2,clamped\n";
    for (std::int64_t j = 1 - n; j <= n; ++j) {
      bool clamped = false;
      for (const auto& ev : model->clamps()) clamped = clamped || ev.j == j;
      csv << j << ',' << sl::verify::detail::num(model->grid().x(j)) << ','
          << sl::verify::detail::num(model->coefficient(j)) << ','
          << (model->index().in_H(j, 2) ? 1 : 0) << ',' << (clamped ? 1 : 0)
          << '\n';
    }
    sl::verify::write_text_atomic(fs::path(c.out) / "poly_knots.csv",
                                  csv.str());
  }
  write_manifest(c, calibrate_only ? "calibrate" : "build-poly",
                 ordered_json{{"n", n},
                              {"m1", used_m1},
                              {"m2", used_m2},
                              {"calibrated", c.calibrate},
                              {"exhausted", exhausted},
                              {"attempts", attempts},
                              {"sup_error", err},
                              {"omega4", om},
                              {"outside_violations", rep.outside_violations},
                              {"a_violations", rep.a_violations},
                              {"b_violations", rep.b_violations},
                              {"periodicity", rep.periodicity_worst},
                              {"clamp_events", rep.clamp_events},
                              {"ok", rep.ok()}});
  std::printf("poly n=%lld m1=%d m2=%d: err=%.6e omega4=%.6e %s\n",
              static_cast<long long>(n), used_m1, used_m2, err, om,
              exhausted ? "CALIBRATION EXHAUSTED"
                        : (rep.ok() ? "OK" : "SHAPE FAIL"));
  if (exhausted) return 3;
  return rep.ok() ? 0 : 2;
}

int cmd_study(const Config& c) {
  sl::verify::Report rep = sl::verify::run_study(to_plan(c));
  sl::verify::write_report(rep, c.out);
  std::printf("study: %zu cells, %zu failed checks -> %s\n", rep.cells.size(),
              rep.failed_checks(), rep.failed ? "FAIL" : "OK");
  std::printf("wrote %s/report.json, tables.csv, constants.csv\n",
              c.out.c_str());
  return rep.failed ? 2 : 0;
}

int cmd_dump(const Config& c, int points) {
  auto Y = sl::core::InflectionSet::from_points(c.y);
  auto f = sl::verify::resolve_function(c.function, Y);
  std::int64_t n = first_n(c);

  std::unique_ptr<sl::spline::SplineModel> sm;
  std::shared_ptr<sl::poly::PolyModel> pm;
  if (c.artifacts != "poly")
    sm = std::make_unique<sl::spline::SplineModel>(
        [&f](double x) { return f(x); }, Y, static_cast<int>(n));
  if (c.artifacts != "spline") {
    sl::poly::LevelConfig lc;
    lc.n = n;
    lc.m1 = c.m1;
    lc.m2 = c.m2;
    lc.spc1 = c.q1;
    lc.spc2 = c.q2;
    if (c.calibrate) {
      auto cal = sl::poly::calibrate(f, Y, lc, nullptr, c.max_m2);
      pm = cal.model;
    } else {
      pm = std::make_shared<sl::poly::PolyModel>(f, Y, lc);
    }
    if (!pm) throw std::runtime_error("no polynomial model to dump");
  }

  std::ostringstream csv;
  csv << "x,f,pattern";
  if (sm) csv << ",spline,spline_curvature";
  if (pm) csv << ",poly,poly_curvature";
  csv << '\n';
  for (int q = 0; q <= points; ++q) {
    double x = -sl::pi + sl::two_pi * static_cast<double>(q) / points;
    csv << sl::verify::detail::num(x) << ',' << sl::verify::detail::num(f(x))
        << ',' << sl::verify::detail::num(Y.Pi(x));
    if (sm)
      csv << ',' << sl::verify::detail::num(sm->value(x)) << ','
          << sl::verify::detail::num(sm->second(x));
    if (pm)
      csv << ',' << sl::verify::detail::num(pm->value(x)) << ','
          << sl::verify::detail::num(pm->second(x));
    csv << '\n';
  }
  sl::verify::write_text_atomic(fs::path(c.out) / "curves.csv", csv.str());
  write_manifest(c, "dump", ordered_json{{"n", n}, {"points", points}});
  std::printf("wrote %s/curves.csv\n", c.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Config cfg;
  std::string config_path;
  bool print_config = false;
  int dump_points = 1024;

  CLI::App app{
      "Coconvex approximation toolkit: shape-constrained splines and "
      "trigonometric approximants with sign and error verification"};
  app.fallthrough();

  app.add_option("--config", config_path,
                 "JSON config file; flags override its values");
  app.add_flag("--print-config", print_config,
               "echo the effective config as JSON and exit");
  app.add_option("--f", cfg.function,
                 "function id (neg-sin, sin, const, poly4-periodic, "
                 "conforming-<seed>)")
      ->capture_default_str();
  app.add_option("--y", cfg.y,
                 "inflection points, comma separated, even count")
      ->delimiter(',')
      ->capture_default_str();
  app.add_option("--n", cfg.ns, "grid sizes, comma separated")
      ->delimiter(',')
      ->capture_default_str();
  app.add_option("--grid", cfg.grid, "sample density for sup norms")
      ->capture_default_str();
  app.add_option("--q1", cfg.q1, "quadrature nodes per cell, first level")
      ->capture_default_str();
  app.add_option("--q2", cfg.q2, "quadrature nodes per cell, second level")
      ->capture_default_str();
  app.add_option("--m1", cfg.m1, "first refinement multiplier")
      ->capture_default_str();
  app.add_option("--m2", cfg.m2, "second refinement multiplier")
      ->capture_default_str();
  app.add_option("--b", cfg.b,
                 "kernel exponent override for the envelope fitter "
                 "(0 = derived)")
      ->capture_default_str();
  app.add_flag("--calibrate,!--no-calibrate", cfg.calibrate,
               "escalate multipliers until the solves stay interior")
      ->capture_default_str();
  app.add_option("--max-m2", cfg.max_m2, "calibration budget for m2")
      ->capture_default_str();
  app.add_option("--artifacts", cfg.artifacts, "spline, poly or both")
      ->capture_default_str();
  app.add_flag("--allow-small-n", cfg.allow_small_n,
               "permit sizes at or below the coarse threshold")
      ->capture_default_str();
  app.add_option("--sign-tol", cfg.sign_tol, "relative sign tolerance")
      ->capture_default_str();
  app.add_option("--ratio-cap", cfg.ratio_cap,
                 "allowed spread of error over modulus")
      ->capture_default_str();
  app.add_option("--seed", cfg.seed, "seed for the conforming family")
      ->capture_default_str();
  app.add_flag("--fit-constants,!--skip-constants", cfg.fit_constants,
               "fit envelope constants during studies")
      ->capture_default_str();
  app.add_option("--out", cfg.out, "output directory")->capture_default_str();

  CLI::App* sub_spline =
      app.add_subcommand("build-spline", "build and verify the spline");
  CLI::App* sub_poly =
      app.add_subcommand("build-poly", "build and verify the approximant");
  CLI::App* sub_study =
      app.add_subcommand("study", "run the full experiment grid");
  CLI::App* sub_cal =
      app.add_subcommand("calibrate", "search multipliers only");
  CLI::App* sub_dump = app.add_subcommand("dump", "write curve samples");
  sub_dump->add_option("--points", dump_points, "samples per period")
      ->capture_default_str();
  for (CLI::App* s : {sub_spline, sub_poly, sub_study, sub_cal, sub_dump})
    s->fallthrough();
  app.require_subcommand(0, 1);

  // The config file must be applied before flag values, so flags win.
  // CLI11 parses into the bound variables directly; load the file first
  // by peeking at argv, then parse normally.
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    std::string val;
    if (a == "--config" && i + 1 < argc) val = argv[i + 1];
    else if (a.rfind("--config=", 0) == 0) val = a.substr(9);
    if (!val.empty()) {
      try {
        load_config_file(val, cfg);
      } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
      }
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  }

  if (print_config) {
    std::printf("%s\n", config_to_json(cfg).dump(2).c_str());
    return 0;
  }

  try {
    if (sub_spline->parsed()) return cmd_build_spline(cfg);
    if (sub_poly->parsed()) return cmd_build_poly(cfg, false);
    if (sub_cal->parsed()) return cmd_build_poly(cfg, true);
    if (sub_study->parsed()) return cmd_study(cfg);
    if (sub_dump->parsed()) return cmd_dump(cfg, dump_points);
    std::fprintf(stderr, "no subcommand given; see --help\n");
    return 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "failure: %s\n", e.what());
    return 2;
  }
}
