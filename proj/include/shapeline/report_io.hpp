#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "shapeline/verifier.hpp"

namespace shapeline::verify {

using ordered_json = nlohmann::ordered_json;

inline ordered_json to_json(const CheckLine& c) {
  return ordered_json{{"name", c.name},
                      {"value", c.value},
                      {"tol", c.tol},
                      {"pass", c.pass}};
}

inline ordered_json to_json(const FitLine& l) {
  return ordered_json{{"bound", l.name},         {"constant", l.constant},
                      {"gamma_power", l.gamma_power}, {"lower", l.lower},
                      {"trivial", l.trivial},    {"samples", l.samples},
                      {"grid", l.grid_note}};
}

inline ordered_json to_json(const Cell& c, bool canonical) {
  ordered_json j{{"function", c.fid},
                 {"n", c.n},
                 {"conforming", c.conforming},
                 {"m1", c.m1},
                 {"m2", c.m2},
                 {"spline_built", c.spline_built},
                 {"poly_built", c.poly_built},
                 {"fallback", c.fallback},
                 {"err_spline", c.err_spline},
                 {"err_poly", c.err_poly},
                 {"omega4", c.omega4},
                 {"ratio_spline", c.ratio_spline},
                 {"ratio_poly", c.ratio_poly},
                 {"spline_outside_violations", c.spline_outside_violations},
                 {"spline_jump_violations", c.spline_jump_violations},
                 {"spline_worst", c.spline_worst},
                 {"poly_outside_violations", c.poly_outside_violations},
                 {"poly_a_violations", c.poly_a_violations},
                 {"poly_b_violations", c.poly_b_violations},
                 {"poly_outside_worst", c.poly_outside_worst},
                 {"poly_inside_worst", c.poly_inside_worst},
                 {"poly_a_worst", c.poly_a_worst},
                 {"poly_b_worst", c.poly_b_worst},
                 {"periodicity", c.periodicity},
                 {"clamp_events", c.clamp_events},
                 {"ok", c.ok()}};
  if (!canonical) j["runtime_ms"] = c.runtime_ms;
  ordered_json checks = ordered_json::array();
  for (const CheckLine& ch : c.checks) checks.push_back(to_json(ch));
  j["checks"] = checks;
  ordered_json notes = ordered_json::array();
  for (const std::string& s : c.notes) notes.push_back(s);
  j["notes"] = notes;
  return j;
}

// Canonical form drops wall-clock fields so identical plans serialize to
// identical bytes.
inline ordered_json to_json(const Report& r, bool canonical = false) {
  ordered_json j;
  j["plan"] = ordered_json{{"functions", r.function_ids},
                           {"y", r.y_points},
                           {"ns", r.ns},
                           {"grid", r.grid},
                           {"m1", r.m1},
                           {"m2", r.m2},
                           {"calibrate", r.calibrated},
                           {"artifacts", r.artifacts},
                           {"allow_small_n", r.allow_small_n},
                           {"ratio_cap", r.ratio_cap},
                           {"sign_tol", r.sign_tol},
                           {"seed", r.seed}};
  ordered_json pre = ordered_json::array();
  for (const CheckLine& c : r.prechecks) pre.push_back(to_json(c));
  j["prechecks"] = pre;
  ordered_json cells = ordered_json::array();
  for (const Cell& c : r.cells) cells.push_back(to_json(c, canonical));
  j["cells"] = cells;
  ordered_json slopes = ordered_json::array();
  for (const SlopeLine& s : r.slopes)
    slopes.push_back(ordered_json{{"function", s.fid},
                                  {"artifact", s.artifact},
                                  {"slope", s.slope},
                                  {"ratio_spread", s.ratio_spread},
                                  {"points", s.points},
                                  {"all_zero", s.all_zero}});
  j["slopes"] = slopes;
  ordered_json gc = ordered_json::array();
  for (const CheckLine& c : r.global_checks) gc.push_back(to_json(c));
  j["global_checks"] = gc;
  ordered_json cons = ordered_json::array();
  for (const FitLine& l : r.constants) cons.push_back(to_json(l));
  j["constants"] = cons;
  j["failed_checks"] = r.failed_checks();
  j["failed"] = r.failed;
  if (!canonical) j["total_runtime_ms"] = r.total_runtime_ms;
  return j;
}

namespace detail {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace detail

inline std::string cells_csv(const Report& r) {
  std::ostringstream out;
  out << "function,n,m1,m2,spline_built,poly_built,fallback,err_spline,"
         "err_poly,omega4,ratio_spline,ratio_poly,spline_outside,"
         "spline_jumps,poly_outside,poly_a,poly_b,periodicity,clamps,ok\n";
  for (const Cell& c : r.cells) {
    out << c.fid << ',' << c.n << ',' << c.m1 << ',' << c.m2 << ','
        << (c.spline_built ? 1 : 0) << ',' << (c.poly_built ? 1 : 0) << ','
        << (c.fallback ? 1 : 0) << ',' << detail::num(c.err_spline) << ','
        << detail::num(c.err_poly) << ',' << detail::num(c.omega4) << ','
        << detail::num(c.ratio_spline) << ',' << detail::num(c.ratio_poly)
        << ',' << c.spline_outside_violations << ','
        << c.spline_jump_violations << ',' << c.poly_outside_violations << ','
        << c.poly_a_violations << ',' << c.poly_b_violations << ','
        << detail::num(c.periodicity) << ',' << c.clamp_events << ','
        << (c.ok() ? 1 : 0) << '\n';
  }
  return out.str();
}

inline std::string constants_csv(const Report& r) {
  std::ostringstream out;
  out << "bound,constant,gamma_power,lower,trivial,samples,grid\n";
  for (const FitLine& l : r.constants)
    out << l.name << ',' << detail::num(l.constant) << ',' << l.gamma_power
        << ',' << (l.lower ? 1 : 0) << ',' << (l.trivial ? 1 : 0) << ','
        << l.samples << ",\"" << l.grid_note << "\"\n";
  return out.str();
}

// Write-to-temp plus rename in the destination directory, so readers never
// observe a half-written file.
inline void write_text_atomic(const std::filesystem::path& path,
                              const std::string& content) {
  namespace fs = std::filesystem;
  fs::path dir = path.parent_path();
  if (dir.empty()) dir = ".";
  fs::create_directories(dir);
  fs::path tmp = dir / (path.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << content;
    if (!out.flush())
      throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline void write_report(const Report& r, const std::filesystem::path& dir) {
  write_text_atomic(dir / "report.json", to_json(r, false).dump(2) + "\n");
  write_text_atomic(dir / "tables.csv", cells_csv(r));
  write_text_atomic(dir / "constants.csv", constants_csv(r));
}

}  // namespace shapeline::verify
