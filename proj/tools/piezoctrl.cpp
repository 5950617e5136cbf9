// SPDX-License-Identifier: Apache-2.0
// piezoctrl <experiment> --config <file> [--out DIR] [--mesh M] [--degree K] [--steps N]
//           [--alpha A] [--full-scale]
// Exit status: 0 success, 1 a verification/property check failed, 2 bad configuration.

#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "piezoctrl/piezoctrl.hpp"

namespace
{

int Finish(piezoctrl::ExperimentReport &rep)
{
  rep.Print(std::cout);
  for (const auto &f : rep.files)
  {
    std::cout << "wrote " << f << '\n';
  }
  const bool ok = rep.Passed();
  std::cout << rep.experiment << ": " << (ok ? "all checks passed" : "CHECKS FAILED") << std::endl;
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char **argv)
{
  using namespace piezoctrl;

  CLI::App app{"Optimal boundary control of electric flux in piezoelectric elastodynamics"};
  std::string experiment, config_path, out_dir;
  int mesh = 0, degree = 0, steps = 0;
  double alpha = 0.0;
  bool full_scale = false;
  app.add_option("experiment", experiment, "convergence | control | simulate | verify")->required();
  app.add_option("--config", config_path, "flat key=value configuration file")->required();
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--mesh", mesh, "cubes per edge (single-mesh runs) or finest level (sweeps)");
  app.add_option("--degree", degree, "polynomial degree");
  app.add_option("--steps", steps, "time steps (single-mesh runs) or N0 (sweeps)");
  app.add_option("--alpha", alpha, "control cost");
  app.add_flag("--full-scale", full_scale, "published resolution of the simulation run");

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::ParseError &e)
  {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  RunConfig cfg;
  try
  {
    const KeyValueConfig kv = KeyValueConfig::Load(config_path);
    cfg = ConfigFromKeyValue(experiment, kv);
    if (!out_dir.empty())
      cfg.out_dir = out_dir;
    if (degree > 0)
      cfg.degree = degree;
    if (alpha > 0.0)
      cfg.alpha = alpha;
    if (full_scale)
      cfg.full_scale = true;
    const bool sweep = experiment == "convergence" || experiment == "control";
    if (mesh > 0)
    {
      if (sweep)
      {
        cfg.meshes.clear();
        for (int m = 1; m <= mesh; m++)
          cfg.meshes.push_back(m);
      }
      else
      {
        cfg.mesh = mesh;
      }
    }
    if (steps > 0)
    {
      (sweep ? cfg.base_steps : cfg.steps) = steps;
    }
    if (app.count("--mesh") && mesh < 1)
      throw ConfigError("--mesh must be positive");
    if (app.count("--degree") && degree < 1)
      throw ConfigError("--degree must be positive");
    if (app.count("--steps") && steps < 1)
      throw ConfigError("--steps must be positive");
    if (app.count("--alpha") && !(alpha > 0.0))
      throw ConfigError("--alpha must be positive");
    ValidateConfig(cfg);
  }
  catch (const ConfigError &e)
  {
    std::cerr << "config error: " << e.what() << std::endl;
    return 2;
  }

  try
  {
    if (experiment == "convergence")
    {
      auto res = RunConvergenceStudy(cfg, std::cout);
      return Finish(res.report);
    }
    if (experiment == "control")
    {
      auto res = RunControlStudy(cfg, std::cout);
      return Finish(res.report);
    }
    if (experiment == "simulate")
    {
      auto res = RunSimulation(cfg, std::cout);
      return Finish(res.report);
    }
    auto rep = RunVerification(cfg, std::cout);
    return Finish(rep);
  }
  catch (const ConfigError &e)
  {
    std::cerr << "config error: " << e.what() << std::endl;
    return 2;
  }
  catch (const std::exception &e)
  {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
}
