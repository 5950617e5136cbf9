// SPDX-License-Identifier: Apache-2.0

#ifndef PIEZOCTRL_EXPERIMENTS_HPP
#define PIEZOCTRL_EXPERIMENTS_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <numbers>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "piezoctrl/assembly.hpp"
#include "piezoctrl/control.hpp"
#include "piezoctrl/io.hpp"
#include "piezoctrl/manufactured.hpp"
#include "piezoctrl/materials.hpp"
#include "piezoctrl/mesh.hpp"
#include "piezoctrl/optimizer.hpp"
#include "piezoctrl/oracles.hpp"
#include "piezoctrl/timestepper.hpp"

namespace piezoctrl
{

struct RunConfig
{
  std::string experiment;
  std::vector<int> meshes{1, 2, 3, 4};  // sweeps
  int mesh = 2;                         // single-mesh runs
  std::string mesh_file;
  std::vector<int> dirichlet_tags;
  int degree = 2;
  int base_steps = 8;  // N0; level M uses M * N0 steps
  int steps = 0;       // explicit N for single-mesh runs, 0 = M * N0
  double final_time = 1.0;
  double alpha = 1e-4;
  ControlBounds bounds;
  std::string materials = "benchmark";
  double rho = 1.0, lambda = 1.0, mu = 1.0;
  std::vector<double> piezo, dielectric;  // 18 (rows of E^T) and 9 entries
  std::string manufactured = "switch_on";
  double min_rate = 1.8;
  double tol = 1e-6;
  int max_iters = 100;
  bool full_scale = false;
  int resolve_degree = 3;
  int snapshots = 4;
  bool fault_injection = false;
  unsigned seed = 2026;
  std::string out_dir = "out";

  int StepsFor(int M) const { return M * base_steps; }
  int SingleSteps() const { return steps > 0 ? steps : StepsFor(mesh); }
};

inline const std::vector<std::string> &ExperimentNames()
{
  static const std::vector<std::string> names{"convergence", "control", "simulate", "verify"};
  return names;
}

// Per-experiment defaults; the config file and command line override them.
inline RunConfig DefaultConfig(const std::string &experiment)
{
  RunConfig c;
  c.experiment = experiment;
  if (experiment == "simulate")
  {
    c.mesh = 2;
    c.steps = 80;
    c.final_time = 5.0;
  }
  else if (experiment == "verify")
  {
    c.mesh = 2;
    c.steps = 32;
  }
  return c;
}

inline void ValidateConfig(const RunConfig &c)
{
  const auto &names = ExperimentNames();
  if (std::find(names.begin(), names.end(), c.experiment) == names.end())
  {
    throw ConfigError("unknown experiment '" + c.experiment + "'");
  }
  if (!(c.final_time > 0.0) || !std::isfinite(c.final_time))
  {
    throw ConfigError("final_time must be positive");
  }
  if (!(c.alpha > 0.0))
  {
    throw ConfigError("alpha must be positive");
  }
  if (c.degree < 1 || c.resolve_degree < 1)
  {
    throw ConfigError("polynomial degree must be at least 1");
  }
  if (c.base_steps < 1 || c.steps < 0 || c.mesh < 1 || c.meshes.empty())
  {
    throw ConfigError("mesh and step counts must be positive");
  }
  for (int m : c.meshes)
  {
    if (m < 1)
    {
      throw ConfigError("mesh levels must be positive");
    }
  }
  if (!(c.bounds.lower <= 0.0 && c.bounds.upper >= 0.0))
  {
    throw ConfigError("bounds must satisfy lower <= 0 <= upper (controls have zero mean)");
  }
  if (c.materials != "benchmark" && c.materials != "constant")
  {
    throw ConfigError("materials must be benchmark or constant");
  }
  if (c.materials == "constant" && !(c.rho > 0.0 && c.mu > 0.0 && 3.0 * c.lambda + 2.0 * c.mu > 0.0))
  {
    throw ConfigError("constant materials need rho > 0, mu > 0, 3 lambda + 2 mu > 0");
  }
  if (!c.piezo.empty() && c.piezo.size() != 18)
  {
    throw ConfigError("piezo needs 18 entries");
  }
  if (!c.dielectric.empty() && c.dielectric.size() != 9)
  {
    throw ConfigError("dielectric needs 9 entries");
  }
  if (c.manufactured != "switch_on" && c.manufactured != "quadratic")
  {
    throw ConfigError("manufactured must be switch_on or quadratic");
  }
  if (!(c.tol > 0.0) || c.max_iters < 0 || c.snapshots < 1)
  {
    throw ConfigError("tol, max_iters and snapshots must be positive");
  }
  if (!c.mesh_file.empty() && c.experiment != "simulate")
  {
    throw ConfigError("mesh_file is only supported by the simulate experiment");
  }
}

inline RunConfig ConfigFromKeyValue(const std::string &experiment, const KeyValueConfig &kv)
{
  static const std::set<std::string> known{
      "experiment", "meshes",       "mesh",         "mesh_file",  "dirichlet_tags", "degree",
      "base_steps", "steps",        "final_time",   "alpha",      "lower_bound",    "upper_bound",
      "materials",  "rho",          "lambda",       "mu",         "piezo",          "dielectric",
      "manufactured", "min_rate",   "tol",          "max_iters",  "full_scale",     "resolve_degree",
      "snapshots",  "fault_injection", "seed",      "out_dir"};
  for (const auto &[key, value] : kv.Values())
  {
    if (!known.count(key))
    {
      throw ConfigError("unknown key '" + key + "'");
    }
  }
  const std::string name = kv.GetString("experiment", experiment);
  if (name != experiment)
  {
    throw ConfigError("config is for experiment '" + name + "', not '" + experiment + "'");
  }
  RunConfig c = DefaultConfig(experiment);
  c.meshes = kv.GetIntList("meshes", c.meshes);
  c.mesh = kv.GetInt("mesh", c.mesh);
  c.mesh_file = kv.GetString("mesh_file", c.mesh_file);
  c.dirichlet_tags = kv.GetIntList("dirichlet_tags", c.dirichlet_tags);
  c.degree = kv.GetInt("degree", c.degree);
  c.base_steps = kv.GetInt("base_steps", c.base_steps);
  c.steps = kv.GetInt("steps", c.steps);
  c.final_time = kv.GetDouble("final_time", c.final_time);
  c.alpha = kv.GetDouble("alpha", c.alpha);
  c.bounds.lower = kv.GetDouble("lower_bound", c.bounds.lower);
  c.bounds.upper = kv.GetDouble("upper_bound", c.bounds.upper);
  c.materials = kv.GetString("materials", c.materials);
  c.rho = kv.GetDouble("rho", c.rho);
  c.lambda = kv.GetDouble("lambda", c.lambda);
  c.mu = kv.GetDouble("mu", c.mu);
  c.piezo = kv.GetDoubleList("piezo", c.piezo);
  c.dielectric = kv.GetDoubleList("dielectric", c.dielectric);
  c.manufactured = kv.GetString("manufactured", c.manufactured);
  c.min_rate = kv.GetDouble("min_rate", c.min_rate);
  c.tol = kv.GetDouble("tol", c.tol);
  c.max_iters = kv.GetInt("max_iters", c.max_iters);
  c.full_scale = kv.GetBool("full_scale", c.full_scale);
  c.resolve_degree = kv.GetInt("resolve_degree", c.resolve_degree);
  c.snapshots = kv.GetInt("snapshots", c.snapshots);
  c.fault_injection = kv.GetBool("fault_injection", c.fault_injection);
  c.seed = static_cast<unsigned>(kv.GetInt("seed", static_cast<int>(c.seed)));
  c.out_dir = kv.GetString("out_dir", c.out_dir);
  return c;
}

inline MaterialSet MakeMaterials(const RunConfig &c)
{
  Piezo63 e = BenchmarkPiezo();
  Matrix3 kappa = BenchmarkDielectric();
  if (!c.piezo.empty())
  {
    for (int i = 0; i < 3; i++)
      for (int j = 0; j < 6; j++)
        e(j, i) = c.piezo[6 * i + j];
  }
  if (!c.dielectric.empty())
  {
    for (int i = 0; i < 3; i++)
      for (int j = 0; j < 3; j++)
        kappa(i, j) = c.dielectric[3 * i + j];
  }
  MaterialSet m = c.materials == "constant" ? ConstantMaterials(c.rho, c.lambda, c.mu, e, kappa)
                                            : BenchmarkMaterials();
  if (c.materials == "benchmark")
  {
    m.piezo = [e](const Point &) { return e; };
    m.dielectric = [kappa](const Point &) { return kappa; };
  }
  const std::vector<Point> samples{Point(0.1, 0.2, 0.3), Point(0.9, 0.5, 0.7), Point(0.5, 0.9, 0.1)};
  if (!CheckMaterials(m, samples).Ok())
  {
    throw ConfigError("material tensors must be symmetric positive definite and rho positive");
  }
  return m;
}

inline std::shared_ptr<const DiscreteOperators> BuildOperators(std::shared_ptr<const Mesh> mesh,
                                                               int degree, const MaterialSet &mat)
{
  auto scalar = std::make_shared<const ScalarSpace>(std::move(mesh), degree);
  auto vec = std::make_shared<const VectorSpace>(scalar);
  return std::make_shared<const DiscreteOperators>(Assemble(vec, mat));
}

inline std::shared_ptr<const DiscreteOperators> CubeOperators(int M, int degree,
                                                              const FacePredicate &dirichlet,
                                                              const MaterialSet &mat)
{
  return BuildOperators(std::make_shared<const Mesh>(BuildCubeMesh(M, dirichlet)), degree, mat);
}

using SpaceTimeVectorFn = std::function<Eigen::Vector3d(const Point &, double)>;

// rho-weighted projections of a desired displacement at every time node.
inline std::vector<Eigen::VectorXd> ProjectDesired(const DiscreteOperators &ops,
                                                   const MaterialSet &mat,
                                                   const SpaceTimeVectorFn &ud, int steps, double dt)
{
  const RhoProjector proj(ops);
  std::vector<Eigen::VectorXd> out(steps + 1);
  for (int n = 0; n <= steps; n++)
  {
    const double t = n * dt;
    out[n] = proj.Project([&](const Point &x) { return ud(x, t); }, mat.rho);
  }
  return out;
}

//
// Reporting. Every experiment ends with a list of property checks; any failure means exit 1.
//
struct Check
{
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string detail;
};

struct ExperimentReport
{
  std::string experiment;
  std::vector<Check> checks;
  std::vector<std::string> files;

  bool Passed() const
  {
    return std::all_of(checks.begin(), checks.end(), [](const Check &c) { return c.passed; });
  }

  void Add(std::string name, double measured, double tolerance, bool passed, std::string detail = "")
  {
    checks.push_back({std::move(name), measured, tolerance, passed, std::move(detail)});
  }

  void Print(std::ostream &out) const
  {
    for (const auto &c : checks)
    {
      out << (c.passed ? "PASS " : "FAIL ") << c.name << "  measured=" << CsvTable::Format(c.measured)
          << "  tolerance=" << CsvTable::Format(c.tolerance);
      if (!c.detail.empty())
      {
        out << "  (" << c.detail << ")";
      }
      out << '\n';
    }
  }

  void SaveChecks(const std::filesystem::path &path)
  {
    CsvTable t({"check", "measured", "tolerance", "passed", "detail"});
    for (const auto &c : checks)
    {
      t.AddRow({c.name, CsvTable::Format(c.measured), CsvTable::Format(c.tolerance),
                c.passed ? "1" : "0", c.detail});
    }
    t.Save(path.string());
    files.push_back(path.string());
  }
};

namespace detail
{

inline std::filesystem::path OutDir(const RunConfig &c)
{
  std::filesystem::path p(c.out_dir);
  std::filesystem::create_directories(p);
  return p;
}

inline double Rate(double e_coarse, double e_fine, double h_coarse, double h_fine)
{
  return std::log(e_coarse / e_fine) / std::log(h_coarse / h_fine);
}

template <typename Writer>
void WriteFile(ExperimentReport &rep, const std::filesystem::path &path, Writer &&w)
{
  std::ofstream out(path);
  if (!out)
  {
    throw std::runtime_error("cannot write " + path.string());
  }
  w(out);
  rep.files.push_back(path.string());
}

inline bool IsZeroFace(const Point &c, int axis) { return std::abs(c[axis]) < 1e-12; }

}  // namespace detail

//
// Manufactured-solution convergence: Dirichlet data on the faces with xyz = 0, Neumann data on the
// rest, errors of (u, psi) at the final time against the exact fields.
//
struct ConvergenceRow
{
  int M = 0, steps = 0;
  double h = 0.0, u_l2 = 0.0, u_h1 = 0.0, psi_l2 = 0.0, psi_h1 = 0.0;
};

struct ConvergenceResult
{
  std::vector<ConvergenceRow> rows;
  std::array<double, 4> final_rates{};  // between the two finest levels
  ExperimentReport report;
};

inline ConvergenceRow ManufacturedErrors(int M, int steps, const RunConfig &c, const MaterialSet &mat,
                                         const ExactSolution &ex)
{
  const double dt = c.final_time / steps, T = c.final_time;
  auto ops = CubeOperators(M, c.degree, [](const Point &x) { return x[0] * x[1] * x[2] < 1e-12; },
                           mat);
  const CrankNicolson cn(ops, dt);
  const StateTrajectory st = cn.Run(steps, MakeManufacturedForcing(ops, MakeManufacturedData(mat, ex), ex, dt));
  const QuadratureRule q = TetRule(2 * c.degree + 2);
  const FieldErrors eu = VectorFieldErrors(
      *ops->scalar, st.u[steps], [&](const Point &x) { return ex.u(x, T); },
      [&](const Point &x) { return Eigen::Matrix3d(ex.grad_u(x, T)); }, q);
  const FieldErrors ep = ScalarFieldErrors(
      *ops->scalar, st.psi[steps], [&](const Point &x) { return ex.psi(x, T); },
      [&](const Point &x) { return Eigen::Vector3d(ex.grad_psi(x, T)); }, q);
  return {M, steps, 1.0 / M, eu.l2, eu.h1_semi, ep.l2, ep.h1_semi};
}

inline ConvergenceResult RunConvergenceStudy(const RunConfig &c, std::ostream &log)
{
  ValidateConfig(c);
  const MaterialSet mat = MakeMaterials(c);
  if (!mat.isotropic)
  {
    throw ConfigError("manufactured data needs isotropic materials");
  }
  const ExactSolution ex = c.manufactured == "switch_on" ? SwitchOnManufactured() : QuadraticCase();
  ConvergenceResult res;
  res.report.experiment = "convergence";
  std::vector<int> meshes = c.meshes;
  std::sort(meshes.begin(), meshes.end());
  for (int M : meshes)
  {
    res.rows.push_back(ManufacturedErrors(M, c.StepsFor(M), c, mat, ex));
    const auto &r = res.rows.back();
    log << "M=" << M << " N=" << r.steps << "  |u|L2=" << r.u_l2 << "  |u|H1=" << r.u_h1
        << "  |psi|L2=" << r.psi_l2 << "  |psi|H1=" << r.psi_h1 << std::endl;
  }

  const auto dir = detail::OutDir(c);
  CsvTable t({"M", "h", "N", "dt", "u_l2", "u_h1", "psi_l2", "psi_h1", "rate_u_l2", "rate_u_h1",
              "rate_psi_l2", "rate_psi_h1"});
  std::vector<SvgSeries> series{{"u L2", {}, {}}, {"u H1", {}, {}}, {"psi L2", {}, {}},
                                {"psi H1", {}, {}}};
  for (std::size_t i = 0; i < res.rows.size(); i++)
  {
    const auto &r = res.rows[i];
    const std::array<double, 4> e{r.u_l2, r.u_h1, r.psi_l2, r.psi_h1};
    std::vector<std::string> row{std::to_string(r.M), CsvTable::Format(r.h), std::to_string(r.steps),
                                 CsvTable::Format(c.final_time / r.steps)};
    for (double v : e)
      row.push_back(CsvTable::Format(v));
    for (int k = 0; k < 4; k++)
    {
      series[k].x.push_back(r.h);
      series[k].y.push_back(e[k]);
      if (i == 0)
      {
        row.push_back("");
        continue;
      }
      const auto &p = res.rows[i - 1];
      const std::array<double, 4> ep{p.u_l2, p.u_h1, p.psi_l2, p.psi_h1};
      const double rate = detail::Rate(ep[k], e[k], p.h, r.h);
      row.push_back(CsvTable::Format(rate));
      if (i + 1 == res.rows.size())
      {
        res.final_rates[k] = rate;
      }
    }
    t.AddRow(row);
  }
  t.Save((dir / "convergence.csv").string());
  res.report.files.push_back((dir / "convergence.csv").string());
  detail::WriteFile(res.report, dir / "convergence.svg", [&](std::ostream &o) {
    WriteSvgChart(o, "final-time errors", "h", "error", series, true);
  });

  static const char *names[4] = {"u L2", "u H1", "psi L2", "psi H1"};
  if (c.manufactured == "quadratic")
  {
    for (int k = 0; k < 4; k++)
    {
      const auto &r = res.rows.back();
      const double e = std::array<double, 4>{r.u_l2, r.u_h1, r.psi_l2, r.psi_h1}[k];
      res.report.Add(std::string("exact reproduction ") + names[k], e, 1e-8, e <= 1e-8);
    }
  }
  else if (res.rows.size() >= 2)
  {
    for (int k = 0; k < 4; k++)
    {
      res.report.Add(std::string("final rate ") + names[k], res.final_rates[k], c.min_rate,
                     res.final_rates[k] >= c.min_rate, "two finest levels, at least");
    }
  }
  res.report.SaveChecks(dir / "checks.csv");
  return res;
}

//
// Control study: desired state t^2 y (y - 1)(x + y + z) in every component, Dirichlet faces at
// y = 0 and y = 1, zero initial control.
//
struct ControlLevel
{
  int M = 0, steps = 0, iterations = 0;
  bool converged = false;
  double zeta = 0.0, j = 0.0, eps_z = 0.0, eps_j = 0.0, seconds = 0.0;
  Eigen::MatrixXd sides;  // 6 x (N + 1) face-integrated controls
};

struct ControlStudyResult
{
  std::vector<ControlLevel> levels;
  std::vector<double> side_gaps;  // sup-norm gap between consecutive levels
  ExperimentReport report;
};

inline Eigen::Vector3d ControlStudyDesired(const Point &x, double t)
{
  const double v = t * t * x[1] * (x[1] - 1.0) * (x[0] + x[1] + x[2]);
  return Eigen::Vector3d(v, v, v);
}

// Piecewise-linear interpolation of a nodal series on [0, T].
inline double InterpolateSeries(const Eigen::RowVectorXd &s, double T, double t)
{
  const int n = static_cast<int>(s.size()) - 1;
  const double pos = std::clamp(t / T * n, 0.0, static_cast<double>(n));
  const int i = std::min(static_cast<int>(pos), n - 1);
  const double w = pos - i;
  return (1.0 - w) * s[i] + w * s[i + 1];
}

inline double SideGap(const Eigen::MatrixXd &a, const Eigen::MatrixXd &b, double T)
{
  // both series are piecewise linear, so the sup is attained at a node of either grid
  std::vector<double> times;
  for (int n = 0; n < a.cols(); n++)
    times.push_back(T * n / (a.cols() - 1));
  for (int n = 0; n < b.cols(); n++)
    times.push_back(T * n / (b.cols() - 1));
  double gap = 0.0;
  for (double t : times)
    for (int s = 0; s < 6; s++)
      gap = std::max(gap, std::abs(InterpolateSeries(a.row(s), T, t) - InterpolateSeries(b.row(s), T, t)));
  return gap;
}

inline ControlStudyResult RunControlStudy(const RunConfig &c, std::ostream &log)
{
  ValidateConfig(c);
  const MaterialSet mat = MakeMaterials(c);
  const auto dir = detail::OutDir(c);
  ControlStudyResult res;
  res.report.experiment = "control";
  std::vector<int> meshes = c.meshes;
  std::sort(meshes.begin(), meshes.end());
  std::vector<SvgSeries> side_series;
  for (int M : meshes)
  {
    const int N = c.StepsFor(M);
    const double dt = c.final_time / N;
    auto mesh = std::make_shared<const Mesh>(
        BuildCubeMesh(M, [](const Point &x) { return x[1] < 1e-12 || x[1] > 1.0 - 1e-12; }));
    auto ops = BuildOperators(mesh, c.degree, mat);
    auto cn = std::make_shared<const CrankNicolson>(ops, dt);
    ReducedProblem prob(cn, ProjectDesired(*ops, mat, ControlStudyDesired, N, dt), c.alpha, c.bounds);
    OptimizerOptions opt;
    opt.tol = c.tol;
    opt.max_iters = c.max_iters;
    OptimizerReport rep;
    const ControlTrajectory z = Optimize(prob, prob.metric.Zero(), rep, opt);

    ControlLevel lv;
    lv.M = M;
    lv.steps = N;
    lv.iterations = rep.iterations;
    lv.converged = rep.converged;
    lv.zeta = prob.metric.Inner(z, z);
    lv.j = EvaluateJfd(prob, z);
    lv.seconds = rep.wall_seconds;
    lv.sides = SideIntegrals(*mesh, ops->face_areas, z);
    res.levels.push_back(lv);
    log << "M=" << M << " N=" << N << "  iterations=" << rep.iterations
        << (rep.converged ? "" : (rep.line_search_failed ? " (line search failed)" : " (max iters)"))
        << "  zeta=" << lv.zeta << "  j=" << lv.j << "  " << rep.wall_seconds << "s" << std::endl;

    const std::string tag = "M" + std::to_string(M);
    detail::WriteFile(res.report, dir / ("trace_" + tag + ".csv"), [&](std::ostream &o) { rep.WriteCsv(o); });
    detail::WriteFile(res.report, dir / ("control_" + tag + ".csv"), [&](std::ostream &o) { WriteControlCsv(o, z); });
    detail::WriteFile(res.report, dir / ("side_integrals_" + tag + ".csv"),
                      [&](std::ostream &o) { WriteSideIntegralCsv(o, lv.sides, dt); });
    static const char *side_names[6] = {"x=0", "x=1", "y=0", "y=1", "z=0", "z=1"};
    for (int s = 0; s < 6; s++)
    {
      SvgSeries ser{tag + " " + side_names[s], {}, {}};
      for (int n = 0; n <= N; n++)
      {
        ser.x.push_back(n * dt);
        ser.y.push_back(lv.sides(s, n));
      }
      side_series.push_back(std::move(ser));
    }
  }

  const ControlLevel &ref = res.levels.back();
  CsvTable t({"M", "h", "N", "iterations", "converged", "zeta", "j_fd", "eps_z", "eps_j", "seconds"});
  SvgSeries ez{"eps_z", {}, {}}, ej{"eps_j", {}, {}};
  for (auto &lv : res.levels)
  {
    lv.eps_z = std::abs(lv.zeta - ref.zeta) / ref.zeta;
    lv.eps_j = std::abs(lv.j - ref.j) / ref.j;
    t.AddRow({std::to_string(lv.M), CsvTable::Format(1.0 / lv.M), std::to_string(lv.steps),
              std::to_string(lv.iterations), lv.converged ? "1" : "0", CsvTable::Format(lv.zeta),
              CsvTable::Format(lv.j), CsvTable::Format(lv.eps_z), CsvTable::Format(lv.eps_j),
              CsvTable::Format(lv.seconds)});
    if (&lv != &ref)
    {
      ez.x.push_back(1.0 / lv.M);
      ez.y.push_back(lv.eps_z);
      ej.x.push_back(1.0 / lv.M);
      ej.y.push_back(lv.eps_j);
    }
  }
  t.Save((dir / "control_study.csv").string());
  res.report.files.push_back((dir / "control_study.csv").string());

  CsvTable g({"M_coarse", "M_fine", "sup_gap"});
  for (std::size_t i = 1; i < res.levels.size(); i++)
  {
    res.side_gaps.push_back(SideGap(res.levels[i - 1].sides, res.levels[i].sides, c.final_time));
    g.AddRow({std::to_string(res.levels[i - 1].M), std::to_string(res.levels[i].M),
              CsvTable::Format(res.side_gaps.back())});
  }
  g.Save((dir / "side_integral_gaps.csv").string());
  res.report.files.push_back((dir / "side_integral_gaps.csv").string());
  detail::WriteFile(res.report, dir / "eps.svg", [&](std::ostream &o) {
    WriteSvgChart(o, "control convergence vs finest level", "h", "relative difference", {ez, ej}, true);
  });
  detail::WriteFile(res.report, dir / "side_integrals.svg", [&](std::ostream &o) {
    WriteSvgChart(o, "control integrated over cube sides", "t", "integral", side_series, false);
  });

  // property checks
  for (const auto &lv : res.levels)
  {
    res.report.Add("converged M=" + std::to_string(lv.M), lv.iterations, c.max_iters, lv.converged);
  }
  int lo = 1 << 30, hi = -1;
  for (const auto &lv : res.levels)
  {
    if (lv.M >= 2)
    {
      lo = std::min(lo, lv.iterations);
      hi = std::max(hi, lv.iterations);
    }
  }
  if (hi >= 0)
  {
    res.report.Add("iteration spread over M>=2", hi - lo, 1, hi - lo <= 1);
  }
  auto monotone = [&](auto get)
  {
    bool ok = true;
    for (std::size_t i = 1; i + 1 < res.levels.size(); i++)
      ok = ok && get(res.levels[i]) < get(res.levels[i - 1]);
    return ok;
  };
  if (res.levels.size() >= 3)
  {
    res.report.Add("eps_z decreasing", res.levels[res.levels.size() - 2].eps_z, 0.0,
                   monotone([](const ControlLevel &l) { return l.eps_z; }));
    res.report.Add("eps_j decreasing", res.levels[res.levels.size() - 2].eps_j, 0.0,
                   monotone([](const ControlLevel &l) { return l.eps_j; }));
  }
  if (res.side_gaps.size() >= 2)
  {
    bool ok = true;
    for (std::size_t i = 1; i < res.side_gaps.size(); i++)
      ok = ok && res.side_gaps[i] < res.side_gaps[i - 1];
    res.report.Add("side integral gaps decreasing", res.side_gaps.back(), 0.0, ok);
  }
  res.report.SaveChecks(dir / "checks.csv");
  return res;
}

//
// Twisting cube: bottom face clamped, desired state rotates the cube and stretches it once.
//
inline Eigen::Vector3d TwistDesired(const Point &x, double t)
{
  const double t1 = SmoothStep::H(2.0 * t - 0.4);
  const double t2 = SmoothStep::H(t - 0.2) * SmoothStep::H(2.7 - t);
  return Eigen::Vector3d(t1 * (0.5 - x[1]) * x[2], t1 * (x[0] - 0.5) * x[2], 2.0 * t2 * x[2]);
}

struct SimulationResult
{
  int iterations = 0;
  bool converged = false;
  double misfit_opt = 0.0, misfit_zero = 0.0;              // rho-misfit integrated in time
  double final_rel_opt = 0.0, final_rel_zero = 0.0;        // at the final time, relative to u_d
  double resolve_final_rel = 0.0, resolve_misfit = 0.0;    // re-solve with degree resolve_degree
  double resolve_misfit_zero = 0.0;
  ExperimentReport report;
};

inline SimulationResult RunSimulation(RunConfig c, std::ostream &log)
{
  if (c.full_scale)
  {
    c.mesh = 4;
    c.steps = 400;
    c.final_time = 5.0;
  }
  ValidateConfig(c);
  const MaterialSet mat = MakeMaterials(c);
  const auto dir = detail::OutDir(c);
  SimulationResult res;
  res.report.experiment = "simulate";

  std::shared_ptr<const Mesh> mesh;
  if (c.mesh_file.empty())
  {
    mesh = std::make_shared<const Mesh>(
        BuildCubeMesh(c.mesh, [](const Point &x) { return detail::IsZeroFace(x, 2); }));
  }
  else
  {
    mesh = std::make_shared<const Mesh>(
        ReadAsciiMesh(c.mesh_file, std::set<int>(c.dirichlet_tags.begin(), c.dirichlet_tags.end())));
  }
  const int N = c.SingleSteps();
  const double dt = c.final_time / N;
  auto ops = BuildOperators(mesh, c.degree, mat);
  auto cn = std::make_shared<const CrankNicolson>(ops, dt);
  ReducedProblem prob(cn, ProjectDesired(*ops, mat, TwistDesired, N, dt), c.alpha, c.bounds);
  log << "simulate: " << mesh->NumTets() << " tets, P" << c.degree << ", " << N << " steps of " << dt
      << ", " << ops->NumU() << " displacement dofs" << std::endl;

  OptimizerOptions opt;
  opt.tol = c.tol;
  opt.max_iters = c.max_iters;
  OptimizerReport rep;
  const ControlTrajectory z = Optimize(prob, prob.metric.Zero(), rep, opt);
  res.iterations = rep.iterations;
  res.converged = rep.converged;
  log << "optimizer: " << rep.iterations << " iterations, "
      << (rep.converged ? "converged" : "not converged") << ", " << rep.wall_seconds << "s" << std::endl;

  auto misfits = [&](const DiscreteOperators &o, const CrankNicolson &stepper,
                     const std::vector<Eigen::VectorXd> &desired, const ControlTrajectory &zz,
                     double &integrated, double &final_rel)
  {
    const StateTrajectory st = SolveState(stepper, zz);
    std::vector<Eigen::VectorXd> e(st.u.size());
    for (std::size_t n = 0; n < e.size(); n++)
      e[n] = o.vector->Restrict(st.u[n]) - desired[n];
    integrated = std::sqrt(MisfitIntegral(o, e, dt));
    const QuadratureRule q = TetRule(2 * o.scalar->Degree() + 2);
    const double d = RhoDistance(*o.scalar, st.u[N], [&](const Point &x) { return TwistDesired(x, c.final_time); },
                                 mat.rho, q);
    const double ref = RhoDistance(*o.scalar, Eigen::VectorXd::Zero(o.vector->FullSize()),
                                   [&](const Point &x) { return TwistDesired(x, c.final_time); }, mat.rho, q);
    final_rel = d / ref;
    return st;
  };
  misfits(*ops, *cn, prob.desired, prob.metric.Zero(), res.misfit_zero, res.final_rel_zero);
  misfits(*ops, *cn, prob.desired, z, res.misfit_opt, res.final_rel_opt);

  // re-solve with the optimal control as flux data in a richer space on the same mesh
  auto ops_r = BuildOperators(mesh, c.resolve_degree, mat);
  const CrankNicolson cn_r(ops_r, dt);
  const auto desired_r = ProjectDesired(*ops_r, mat, TwistDesired, N, dt);
  double dummy = 0.0;
  misfits(*ops_r, cn_r, desired_r, ControlTrajectory(z.NumFaces(), N, dt), res.resolve_misfit_zero, dummy);
  const StateTrajectory st_r = misfits(*ops_r, cn_r, desired_r, z, res.resolve_misfit, res.resolve_final_rel);
  log << "tracking misfit (time-integrated, rho-norm): zero control " << res.misfit_zero
      << ", optimal " << res.misfit_opt << "; P" << c.resolve_degree << " re-solve " << res.resolve_misfit
      << " vs " << res.resolve_misfit_zero << std::endl;
  log << "final-time relative misfit: zero control " << res.final_rel_zero << ", optimal "
      << res.final_rel_opt << ", P" << c.resolve_degree << " re-solve " << res.resolve_final_rel << std::endl;

  // snapshots at t = T/5, 3T/5, 4T/5, T by default (evenly spaced otherwise)
  std::vector<int> snaps;
  if (c.snapshots == 4)
  {
    snaps = {N / 5, 3 * N / 5, 4 * N / 5, N};
  }
  else
  {
    for (int s = 1; s <= c.snapshots; s++)
      snaps.push_back(s * N / c.snapshots);
  }
  const ScalarSpace &sr = *ops_r->scalar;
  for (int n : snaps)
  {
    const double t = n * dt;
    const Eigen::VectorXd ud_full = ops_r->vector->InterpolateFull([&](const Point &x) { return TwistDesired(x, t); });
    std::ostringstream name;
    name << "snapshot_" << std::setw(4) << std::setfill('0') << n << ".vtk";
    detail::WriteFile(res.report, dir / name.str(), [&](std::ostream &o) {
      WriteVtk(o, *mesh,
               {VertexVectorField(sr, "u_h", st_r.u[n]), VertexVectorField(sr, "u_d", ud_full),
                VertexScalarField(sr, "psi_h", st_r.psi[n])},
               "control", z.values.col(n));
    });
  }
  detail::WriteFile(res.report, dir / "control.csv", [&](std::ostream &o) { WriteControlCsv(o, z); });
  detail::WriteFile(res.report, dir / "trace.csv", [&](std::ostream &o) { rep.WriteCsv(o); });
  detail::WriteFile(res.report, dir / "side_integrals.csv", [&](std::ostream &o) {
    WriteSideIntegralCsv(o, SideIntegrals(*mesh, ops->face_areas, z), dt);
  });
  CsvTable s({"quantity", "zero_control", "optimal_control"});
  s.AddRow({"misfit", CsvTable::Format(res.misfit_zero), CsvTable::Format(res.misfit_opt)});
  s.AddRow({"final_relative_misfit", CsvTable::Format(res.final_rel_zero), CsvTable::Format(res.final_rel_opt)});
  s.AddRow({"resolve_misfit", CsvTable::Format(res.resolve_misfit_zero), CsvTable::Format(res.resolve_misfit)});
  s.Save((dir / "summary.csv").string());
  res.report.files.push_back((dir / "summary.csv").string());

  res.report.Add("optimized misfit below zero-control misfit", res.misfit_opt, res.misfit_zero,
                 res.misfit_opt < res.misfit_zero);
  res.report.Add("optimized final-time misfit below zero-control", res.final_rel_opt, res.final_rel_zero,
                 res.final_rel_opt < res.final_rel_zero);
  res.report.SaveChecks(dir / "checks.csv");
  return res;
}

//
// Verification: dense assembly oracle, energy conservation, transposition order, gradient check
// and the projection oracle.
//
inline Mesh SkewReferenceTet()
{
  return oracle::SingleTetMesh({Point(0.1, 0.0, 0.05), Point(1.2, 0.1, 0.0), Point(0.3, 0.9, 0.1),
                                Point(0.2, 0.3, 1.1)});
}

// Largest entrywise difference between assembled blocks and the closed-form oracle.
inline double AssemblyOracleError(int degree)
{
  auto mesh = std::make_shared<const Mesh>(SkewReferenceTet());
  auto s = std::make_shared<const ScalarSpace>(mesh, degree);
  auto v = std::make_shared<const VectorSpace>(s);
  const double rho = 1.3, lam = 1.7, mu = 2.9;
  const DiscreteOperators ops =
      Assemble(v, ConstantMaterials(rho, lam, mu, BenchmarkPiezo(), BenchmarkDielectric()));
  const auto d = oracle::OracleBlocks(*s, rho, IsotropicElasticity::Voigt(lam, mu), BenchmarkPiezo(),
                                      BenchmarkDielectric());
  auto diff = [](const SparseMatrix &a, const Eigen::MatrixXd &b) {
    return (Eigen::MatrixXd(a) - b).cwiseAbs().maxCoeff();
  };
  return std::max({diff(ops.mass_full, d.mass), diff(ops.k_uu_full, d.kuu), diff(ops.k_upsi_full, d.kupsi),
                   diff(ops.k_psiu_full, d.kpsiu), diff(ops.k_psipsi, d.kpsipsi), diff(ops.control, d.control),
                   (ops.grounding - d.grounding).cwiseAbs().maxCoeff()});
}

inline double P1MassFormulaError()
{
  auto mesh = std::make_shared<const Mesh>(SkewReferenceTet());
  auto v = std::make_shared<const VectorSpace>(std::make_shared<const ScalarSpace>(mesh, 1));
  const DiscreteOperators ops = Assemble(v, ConstantMaterials(1.0, 1.0, 1.0, BenchmarkPiezo(), BenchmarkDielectric()));
  const double vol = mesh->SignedVolume(0);
  const Eigen::MatrixXd m(ops.mass_full);
  double err = 0.0;
  for (int i = 0; i < 4; i++)
    for (int j = 0; j < 4; j++)
      err = std::max(err, std::abs(m(3 * i, 3 * j) - (i == j ? vol / 10 : vol / 20)));
  return err;
}

inline Eigen::VectorXd SeededVector(int n, std::mt19937 &rng)
{
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; i++)
    v[i] = d(rng);
  return v;
}

// Max relative energy drift over `steps` steps with zero data and random initial state.
inline double EnergyDrift(int M, int degree, int steps, double dt, unsigned seed)
{
  auto ops = CubeOperators(M, degree, [](const Point &x) { return x[1] < 1e-12 || x[1] > 1 - 1e-12; },
                           BenchmarkMaterials());
  const CrankNicolson cn(ops, dt);
  std::mt19937 rng(seed);
  const Eigen::VectorXd u0 = ops->vector->Extend(SeededVector(ops->NumU(), rng));
  const Eigen::VectorXd v0 = ops->vector->Extend(SeededVector(ops->NumU(), rng));
  const StateTrajectory st = cn.Run(steps, {}, u0, v0);
  const double e0 = Energy(*ops, st, 0);
  double drift = 0.0;
  for (int n = 1; n <= steps; n++)
    drift = std::max(drift, std::abs(Energy(*ops, st, n) - e0) / e0);
  return drift;
}

// Zero-mean control built from smooth time profiles with random face amplitudes.
inline ControlTrajectory SmoothControl(const ZMetric &metric, const Eigen::MatrixXd &amp, double scale)
{
  ControlTrajectory z = metric.Zero();
  const double T = metric.Dt() * metric.Steps();
  for (int n = 0; n <= metric.Steps(); n++)
  {
    const double s = n * metric.Dt() / T;
    z.values.col(n) = scale * amp * Eigen::Vector3d(std::sin(3.0 * s), s * s, std::sin(7.0 * s) * s);
  }
  metric.SubtractMean(z);
  return z;
}

inline std::shared_ptr<const DiscreteOperators> WithFault(std::shared_ptr<const DiscreteOperators> ops)
{
  // break the symmetry between the coupling blocks
  auto bad = std::make_shared<DiscreteOperators>(*ops);
  bad->k_psiu *= 1.05;
  bad->k_psiu_full *= 1.05;
  return bad;
}

// Relative transposition residual |int (f, S y)_rho - pair(R f, y)| / |int (f, S y)_rho|, for
// each step count.
inline std::vector<double> TranspositionResiduals(int M, int degree, const std::vector<int> &steps,
                                                  double T, unsigned seed, bool fault)
{
  auto ops = CubeOperators(M, degree, [](const Point &x) { return x[1] < 1e-12 || x[1] > 1 - 1e-12; },
                           BenchmarkMaterials());
  if (fault)
  {
    ops = WithFault(ops);
  }
  std::mt19937 rng(seed);
  const Eigen::VectorXd f0 = SeededVector(ops->NumU(), rng);
  Eigen::MatrixXd amp(ops->NumFaces(), 3);
  for (int c = 0; c < 3; c++)
    amp.col(c) = SeededVector(ops->NumFaces(), rng);
  std::vector<double> out;
  for (int N : steps)
  {
    const double dt = T / N;
    const CrankNicolson cn(ops, dt);
    const ZMetric metric(ops->face_areas, dt, N);
    const ControlTrajectory y = SmoothControl(metric, amp, 1.0);
    std::vector<Eigen::VectorXd> f(N + 1);
    for (int n = 0; n <= N; n++)
      f[n] = std::sin(2.0 * n * dt) * f0;
    const StateTrajectory st = SolveState(cn, y);
    double lhs = 0.0;
    for (int n = 1; n <= N; n++)
    {
      const Eigen::VectorXd u0 = ops->vector->Restrict(st.u[n - 1]), u1 = ops->vector->Restrict(st.u[n]);
      const Eigen::VectorXd fm = 0.5 * (f[n - 1] + f[n]), um = 0.5 * (u0 + u1);
      lhs += dt / 6.0 * (f[n - 1].dot(ops->mass * u0) + 4.0 * fm.dot(ops->mass * um) + f[n].dot(ops->mass * u1));
    }
    const double rhs = PairBeta(SolveAdjoint(cn, f).beta, y);
    out.push_back(std::abs(lhs - rhs) / std::abs(lhs));
  }
  return out;
}

// Relative errors of the central-difference directional derivative against [[g, y]] for random
// (z, y) on the control-study problem; one vector per step count.
inline std::vector<std::vector<double>> GradientCheckErrors(int M, int degree, const std::vector<int> &steps,
                                                            int trials, double T, unsigned seed, bool fault)
{
  const MaterialSet mat = BenchmarkMaterials();
  auto ops = CubeOperators(M, degree, [](const Point &x) { return x[1] < 1e-12 || x[1] > 1 - 1e-12; }, mat);
  if (fault)
  {
    ops = WithFault(ops);
  }
  std::mt19937 rng(seed);
  std::vector<std::array<Eigen::MatrixXd, 2>> amps(trials);
  for (auto &a : amps)
    for (auto &m : a)
    {
      m.resize(ops->NumFaces(), 3);
      for (int c = 0; c < 3; c++)
        m.col(c) = SeededVector(ops->NumFaces(), rng);
    }
  std::vector<std::vector<double>> out;
  for (int N : steps)
  {
    const double dt = T / N;
    auto cn = std::make_shared<const CrankNicolson>(ops, dt);
    ReducedProblem prob(cn, ProjectDesired(*ops, mat, ControlStudyDesired, N, dt), 1e-4);
    out.emplace_back();
    for (int k = 0; k < trials; k++)
    {
      const ControlTrajectory z = SmoothControl(prob.metric, amps[k][0], 0.1);
      const ControlTrajectory y = SmoothControl(prob.metric, amps[k][1], 0.1);
      const double eps = 1e-3;  // j_fd is quadratic: the central difference is exact up to roundoff
      const double fd = (EvaluateJfd(prob, z + eps * y) - EvaluateJfd(prob, z - eps * y)) / (2.0 * eps);
      const double an = prob.metric.Inner(EvaluateGradient(prob, z), y);
      out.back().push_back(std::abs(fd - an) / std::abs(fd));
    }
  }
  return out;
}

// Largest entrywise deviation of ProjectQ from brute-force enumeration, tiny instances.
inline double ProjectionOracleError(unsigned seed, int instances = 20)
{
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> area(0.5, 2.0);
  double err = 0.0;
  for (int k = 0; k < instances; k++)
  {
    const int N = 1 + k % 3;
    const ZMetric m({area(rng), area(rng)}, 0.3, N);
    ControlTrajectory z = m.Zero();
    for (int n = 1; n <= N; n++)
      z.values.col(n) = 2.0 * SeededVector(2, rng);
    const ControlTrajectory q = ProjectQ(m, z, {-0.4, 0.7}).q;
    const ControlTrajectory bf = oracle::BruteForceProjection(m, z, -0.4, 0.7);
    err = std::max(err, (q.values - bf.values).cwiseAbs().maxCoeff());
  }
  return err;
}

struct ProjectionProperties
{
  double idempotence = 0.0;  // max Z-norm of Q(Q(z)) - Q(z)
  double vi = 0.0;           // max normalized [[z - Q z, q - Q z]] over admissible q (should be <= 0)
  bool admissible = true;
};

inline ProjectionProperties ProjectionPropertyCheck(unsigned seed, int instances = 20)
{
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> area(0.5, 2.0);
  ProjectionProperties p;
  p.vi = -1e300;
  const ControlBounds b{-0.3, 0.4};
  for (int k = 0; k < instances; k++)
  {
    const int F = 8 + k % 5, N = 10 + k;
    std::vector<double> a(F);
    for (auto &x : a)
      x = area(rng);
    const ZMetric m(a, 0.05, N);
    ControlTrajectory z = m.Zero();
    for (int n = 1; n <= N; n++)
      z.values.col(n) = SeededVector(F, rng);
    const ControlTrajectory q = ProjectQ(m, z, b).q;
    p.admissible = p.admissible && IsAdmissible(m, q, b, 1e-11);
    p.idempotence = std::max(p.idempotence, m.Norm(ProjectQ(m, q, b).q - q));
    for (int t = 0; t < 5; t++)
    {
      Eigen::MatrixXd amp(F, 3);
      for (int c = 0; c < 3; c++)
        amp.col(c) = SeededVector(F, rng);
      const ControlTrajectory w = SmoothControl(m, amp, 0.05);
      if (!IsAdmissible(m, w, b))
        continue;
      const double denom = m.Norm(z - q) * m.Norm(w - q);
      if (denom > 0)
        p.vi = std::max(p.vi, m.Inner(z - q, w - q) / denom);
    }
  }
  return p;
}

inline ExperimentReport RunVerification(const RunConfig &c, std::ostream &log)
{
  ValidateConfig(c);
  ExperimentReport rep;
  rep.experiment = "verify";
  const auto dir = detail::OutDir(c);

  for (int k = 1; k <= 2; k++)
  {
    const double e = AssemblyOracleError(k);
    rep.Add("assembly oracle P" + std::to_string(k), e, 1e-12, e <= 1e-12, "single skew tetrahedron");
  }
  const double pm = P1MassFormulaError();
  rep.Add("P1 mass closed form", pm, 1e-12, pm <= 1e-12);
  log << "assembly checks done" << std::endl;

  const double drift = EnergyDrift(c.mesh, c.degree, 200, 0.01, c.seed);
  rep.Add("energy drift, 200 steps", drift, 1e-10, drift <= 1e-10);
  log << "energy check done" << std::endl;

  const int N = c.SingleSteps();
  const std::vector<int> tsteps{N / 2, N, 2 * N, 4 * N};
  const auto tr = TranspositionResiduals(c.mesh, c.degree, tsteps, c.final_time, c.seed, c.fault_injection);
  for (std::size_t i = 1; i < tr.size(); i++)
  {
    const double ratio = tr[i - 1] / tr[i];
    rep.Add("transposition ratio N=" + std::to_string(tsteps[i - 1]) + "->" + std::to_string(tsteps[i]),
            ratio, 4.0, ratio >= 3.5 && ratio <= 4.5, "accepted range 3.5-4.5");
  }
  rep.Add("transposition residual N=" + std::to_string(N), tr[1], 1e-2, tr[1] <= 1e-2);
  log << "transposition check done" << std::endl;

  const auto ge = GradientCheckErrors(c.mesh, c.degree, {N, 2 * N}, 5, c.final_time, c.seed, c.fault_injection);
  for (std::size_t k = 0; k < ge[0].size(); k++)
  {
    const double ratio = ge[0][k] / ge[1][k];
    rep.Add("gradient check trial " + std::to_string(k) + " N=" + std::to_string(N), ge[0][k], 1e-2,
            ge[0][k] <= 1e-2, "relative error of the directional derivative");
    rep.Add("gradient check trial " + std::to_string(k) + " halving ratio", ratio, 3.0, ratio >= 3.0,
            "dt^2 floor: ratio at least 3");
  }
  log << "gradient check done" << std::endl;

  const double qp = ProjectionOracleError(c.seed);
  rep.Add("projection vs brute force", qp, 1e-9, qp <= 1e-9);
  const ProjectionProperties pp = ProjectionPropertyCheck(c.seed);
  rep.Add("projection idempotent", pp.idempotence, 1e-10, pp.idempotence <= 1e-10 && pp.admissible);
  rep.Add("projection variational inequality", pp.vi, 1e-10, pp.vi <= 1e-10);
  log << "projection checks done" << std::endl;

  rep.SaveChecks(dir / "verification.csv");
  return rep;
}

}  // namespace piezoctrl

#endif  // PIEZOCTRL_EXPERIMENTS_HPP
