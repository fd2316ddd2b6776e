// Run a small spline study: a named function plus a seeded random member of
// the admissible class, two grid sizes, envelope constants on.  Writes the
// same report files the command line tool produces.

#include <shapeline/report_io.hpp>
#include <shapeline/verifier.hpp>

#include <cstdio>

using namespace shapeline;

int main() {
  verify::ExperimentPlan plan;
  plan.function_ids = {"neg-sin", "conforming-7"};
  plan.ns = {64, 128};
  plan.artifacts = verify::ExperimentPlan::Artifacts::spline;
  plan.fit_constants = true;

  verify::Report rep = verify::run_study(plan);

  for (const auto& p : rep.prechecks)
    std::printf("%-44s %s\n", p.name.c_str(), p.pass ? "pass" : "FAIL");
  for (const auto& c : rep.cells)
    std::printf("%-14s n=%-4lld err=%.3e ratio=%.3f %s\n", c.fid.c_str(),
                static_cast<long long>(c.n), c.err_spline, c.ratio_spline,
                c.ok() ? "ok" : "FAIL");
  for (const auto& s : rep.slopes)
    std::printf("%-14s %s spread %.3f over %zu sizes\n", s.fid.c_str(),
                s.artifact.c_str(), s.ratio_spread, s.points);
  for (const auto& f : rep.constants)
    if (!f.trivial)
      std::printf("%-22s %c= %.4f  (%s)\n", f.name.c_str(),
                  f.lower ? '>' : '<', f.constant, f.grid_note.c_str());

  verify::write_report(rep, "demo_out");
  std::printf("%zu failed checks; report under demo_out/\n",
              rep.failed_checks());
  return rep.failed ? 1 : 0;
}
