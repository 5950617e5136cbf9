// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "piezoctrl/piezoctrl.hpp"

using namespace piezoctrl;

namespace
{

int failures = 0;

void Verdict(int id, bool ok, const std::string &what)
{
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << ": " << what << std::endl;
  failures += ok ? 0 : 1;
}

std::string Num(double v)
{
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

double Seconds(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Structural check of a legacy ASCII unstructured grid: counts, index ranges, finite data.
bool ValidVtk(const std::filesystem::path &path, std::string &why)
{
  std::ifstream in(path);
  std::string l1, l2, l3, l4;
  if (!std::getline(in, l1) || l1.rfind("# vtk DataFile Version", 0) != 0)
    return why = "bad header", false;
  std::getline(in, l2);
  std::getline(in, l3);
  std::getline(in, l4);
  if (l3 != "ASCII" || l4 != "DATASET UNSTRUCTURED_GRID")
    return why = "not an ASCII unstructured grid", false;
  std::string kw, type;
  long np = 0, nc = 0, size = 0;
  in >> kw >> np >> type;
  if (kw != "POINTS" || np <= 0)
    return why = "no points", false;
  for (long i = 0; i < 3 * np; i++)
  {
    double x;
    if (!(in >> x) || !std::isfinite(x))
      return why = "bad coordinate", false;
  }
  in >> kw >> nc >> size;
  if (kw != "CELLS" || nc <= 0)
    return why = "no cells", false;
  long used = 0;
  for (long c = 0; c < nc; c++)
  {
    int k = 0;
    in >> k;
    used += k + 1;
    for (int i = 0; i < k; i++)
    {
      long id = -1;
      in >> id;
      if (id < 0 || id >= np)
        return why = "cell index out of range", false;
    }
  }
  if (used != size)
    return why = "CELLS size mismatch", false;
  long nt = 0;
  in >> kw >> nt;
  if (kw != "CELL_TYPES" || nt != nc)
    return why = "cell types missing", false;
  for (long c = 0; c < nc; c++)
  {
    int t = 0;
    in >> t;
    if (t != 10 && t != 5)
      return why = "unexpected cell type", false;
  }
  // remaining sections: data blocks with finite numbers
  long blocks = 0;
  std::string tok;
  while (in >> tok)
  {
    if (tok == "SCALARS" || tok == "VECTORS")
      blocks++;
    else if (tok == "nan" || tok == "-nan" || tok == "inf" || tok == "-inf")
      return why = "non-finite data", false;
  }
  if (blocks == 0)
    return why = "no data arrays", false;
  return true;
}

}  // namespace

int main()
{
  const std::filesystem::path out = std::filesystem::current_path() / "acceptance_out";
  std::filesystem::create_directories(out);
  std::ostringstream quiet;
  const unsigned seed = 2026;

  // 1: manufactured-solution convergence, k = 2, M = 1..4, N = 8 M
  {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig c = DefaultConfig("convergence");
    c.out_dir = (out / "convergence").string();
    const ConvergenceResult r = RunConvergenceStudy(c, quiet);
    const auto &f = r.final_rates;
    const bool ok = r.report.Passed();
    Verdict(1, ok,
            "final rates u L2 " + Num(f[0]) + ", u H1 " + Num(f[1]) + ", psi L2 " + Num(f[2]) + ", psi H1 " +
                Num(f[3]) + " (need >= 1.8, N0 = 8, " + Num(Seconds(t0)) + " s)");
    if (!ok)
    {
      // diagnostic only: the same sweep with a finer time grid
      c.base_steps = 16;
      c.out_dir = (out / "convergence_n16").string();
      const ConvergenceResult r16 = RunConvergenceStudy(c, quiet);
      const auto &g = r16.final_rates;
      std::cout << "  info: with N0 = 16 the rates are " << Num(g[0]) << ", " << Num(g[1]) << ", " << Num(g[2])
                << ", " << Num(g[3]) << std::endl;
    }
  }

  // 2: gradient check, M = 2, N = 32 and 64, five random pairs
  {
    const auto ge = GradientCheckErrors(2, 2, {32, 64}, 5, 1.0, seed, false);
    bool ok = true;
    std::string detail;
    for (std::size_t k = 0; k < ge[0].size(); k++)
    {
      ok = ok && ge[0][k] <= 1e-3 && ge[1][k] < ge[0][k];
      detail += (k ? ", " : "") + Num(ge[0][k]) + "->" + Num(ge[1][k]);
    }
    Verdict(2, ok, "relative errors N=32->64: " + detail + " (need <= 1e-3 at N=32 and decreasing)");
  }

  // 3: transposition residual, three halvings at M = 2
  {
    const std::vector<int> steps{16, 32, 64, 128};
    const auto tr = TranspositionResiduals(2, 2, steps, 1.0, seed, false);
    bool ok = true;
    std::string detail;
    for (std::size_t i = 1; i < tr.size(); i++)
    {
      const double ratio = tr[i - 1] / tr[i];
      ok = ok && ratio >= 3.5 && ratio <= 4.5;
      detail += (i > 1 ? ", " : "") + Num(ratio);
    }
    Verdict(3, ok, "residual ratios per halving " + detail + " (need 3.5-4.5; N = 16..128)");
  }

  // 4: energy drift with zero control
  {
    const double drift = EnergyDrift(2, 2, 200, 0.01, seed);
    Verdict(4, drift <= 1e-10, "relative energy drift over 200 steps " + Num(drift) + " (need <= 1e-10)");
  }

  // 5: projection oracle and properties
  {
    const double e = ProjectionOracleError(seed);
    const ProjectionProperties p = ProjectionPropertyCheck(seed);
    const bool ok = e <= 1e-9 && p.idempotence <= 1e-10 && p.vi <= 1e-10 && p.admissible;
    Verdict(5, ok,
            "brute-force deviation " + Num(e) + ", idempotence " + Num(p.idempotence) +
                ", max normalized VI " + Num(p.vi) + (p.admissible ? "" : ", inadmissible output"));
  }

  // 6 and 7: control study over M = 1..4, reference = finest level
  {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig c = DefaultConfig("control");
    c.out_dir = (out / "control").string();
    const ControlStudyResult r = RunControlStudy(c, quiet);
    int lo = 1 << 30, hi = 0;
    bool converged = true;
    std::string its;
    for (const auto &lv : r.levels)
    {
      its += (its.empty() ? "" : ", ") + std::to_string(lv.iterations);
      converged = converged && lv.converged;
      if (lv.M >= 2)
      {
        lo = std::min(lo, lv.iterations);
        hi = std::max(hi, lv.iterations);
      }
    }
    Verdict(6, converged && hi - lo <= 1,
            "iterations M=1..4: " + its + " (need spread <= 1 over M = 2..4, " + Num(Seconds(t0)) + " s)");

    bool mono = true;
    std::string ez, ej, gaps;
    for (std::size_t i = 0; i + 1 < r.levels.size(); i++)
    {
      ez += (i ? ", " : "") + Num(r.levels[i].eps_z);
      ej += (i ? ", " : "") + Num(r.levels[i].eps_j);
      if (i > 0)
        mono = mono && r.levels[i].eps_z < r.levels[i - 1].eps_z && r.levels[i].eps_j < r.levels[i - 1].eps_j;
    }
    for (std::size_t i = 0; i < r.side_gaps.size(); i++)
    {
      gaps += (i ? ", " : "") + Num(r.side_gaps[i]);
      if (i > 0)
        mono = mono && r.side_gaps[i] < r.side_gaps[i - 1];
    }
    Verdict(7, mono, "eps_z " + ez + "; eps_j " + ej + "; side gaps " + gaps + " (need decreasing)");
  }

  // 8: twist simulation at desk scale
  {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig c = DefaultConfig("simulate");
    c.out_dir = (out / "simulate").string();
    const SimulationResult r = RunSimulation(c, quiet);
    bool vtk_ok = true;
    int nvtk = 0;
    std::string why;
    for (const auto &f : r.report.files)
    {
      if (std::filesystem::path(f).extension() != ".vtk")
        continue;
      nvtk++;
      std::string w;
      if (!ValidVtk(f, w))
      {
        vtk_ok = false;
        why = f + ": " + w;
      }
    }
    const bool ok = r.misfit_opt < r.misfit_zero && vtk_ok && nvtk > 0;
    Verdict(8, ok,
            "misfit optimal " + Num(r.misfit_opt) + " vs zero control " + Num(r.misfit_zero) + ", " +
                std::to_string(nvtk) + " VTK files " + (vtk_ok ? "valid" : "INVALID " + why) + " (" +
                Num(Seconds(t0)) + " s)");
  }

  // 9: assembly oracle
  {
    const double e1 = AssemblyOracleError(1), e2 = AssemblyOracleError(2), m = P1MassFormulaError();
    Verdict(9, e1 <= 1e-12 && e2 <= 1e-12 && m <= 1e-12,
            "block deviation P1 " + Num(e1) + ", P2 " + Num(e2) + ", P1 mass formula " + Num(m) +
                " (need <= 1e-12)");
  }

  std::cout << (failures ? std::to_string(failures) + " criteria failed" : "all criteria passed") << std::endl;
  return failures ? 1 : 0;
}
