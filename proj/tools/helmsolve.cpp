// helmsolve: command-line front end for the preconditioned Helmholtz solvers.

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "helm/cli.hpp"
#include "helm/error.hpp"

namespace {

using namespace helm;

std::string read_text(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cli", "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Overrides are appended as config lines so they go through the same
// validation (and the same problem-name-first ordering) as the file.
RunConfig assemble(const std::string& path, const std::vector<std::string>& sets) {
  std::string text = read_text(path);
  for (const auto& s : sets) {
    const auto dot = s.find('.');
    const auto eq = s.find('=');
    if (dot == std::string::npos || eq == std::string::npos || dot > eq)
      throw Error(ErrorCode::Parse, "cli", "override '" + s + "' is not of the form section.key=value");
    text += "\n[" + s.substr(0, dot) + "]\n" + s.substr(dot + 1) + "\n";
  }
  return parse_config(text);
}

void print_summary(const RunReport& r) {
  const auto& c = r.convergence;
  std::cout << c.method << " (" << c.side << ") " << c.status << ": " << c.iterations
            << " iterations, " << c.matvec_count << " matvecs, " << c.precond_count
            << " preconditioner applications\n";
  std::cout << std::setprecision(4) << "  relative residual " << c.true_residual << ", wall "
            << c.wall_time << " s, setup " << r.setup_time << " s, workers " << r.workers << " ("
            << r.fabric << ")\n";
  std::cout << "  grid " << r.grid[0] << "x" << r.grid[1] << "x" << r.grid[2] << ", h " << r.h
            << ", max kh " << r.kh_max << ", levels " << r.levels.size() << "\n";
  if (r.error) std::cout << "  error: max " << r.error->max_abs << ", l2 " << r.error->l2 << "\n";
  for (const auto& [phase, t] : c.phase_times) std::cout << "  " << std::setw(9) << phase << " " << t << " s\n";
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidValue, "cli", "bad integer '" + item + "' in list");
    }
  }
  return out;
}

int cmd_solve(const std::string& path, const std::vector<std::string>& sets, bool echo) {
  const RunConfig cfg = assemble(path, sets);
  if (echo) std::cout << render_config(cfg) << "\n";
  const RunReport r = run_solve(cfg);
  print_summary(r);
  return exit_code(r);
}

int cmd_validate(const std::string& path, const std::vector<std::string>& sets, const std::string& ladder) {
  RunConfig base = assemble(path, sets);
  if (!base.problem.has_analytical())
    throw Error(ErrorCode::NoAnalyticalSolution, "cli", "validate needs the closed-off problem");
  int status = 0;
  double prev_error = 0.0;
  std::cout << "n,h,kh,matvecs,max_error,l2_error,order\n" << std::setprecision(6);
  for (int n : parse_int_list(ladder)) {
    RunConfig cfg = base;
    cfg.problem.n = {n, n, n};
    cfg.output.report = "report_n" + std::to_string(n) + ".json";
    cfg.output.residuals = "residuals_n" + std::to_string(n) + ".csv";
    cfg.output.field.clear();
    cfg.output.vtk.clear();
    const RunReport r = run_solve(cfg);
    status = std::max(status, exit_code(r));
    const double order = prev_error > 0.0 ? std::log2(prev_error / r.error->max_abs) : 0.0;
    std::cout << n << ',' << r.h << ',' << r.kh_max << ',' << r.convergence.matvec_count << ','
              << r.error->max_abs << ',' << r.error->l2 << ',' << order << '\n';
    prev_error = r.error->max_abs;
  }
  return status;
}

int cmd_bench(const std::string& path, const std::vector<std::string>& sets, const std::string& workers) {
  const RunConfig base = assemble(path, sets);
  std::vector<RunReport> reports;
  int status = 0;
  for (int np : parse_int_list(workers)) {
    RunConfig cfg = base;
    cfg.parallel.dims = factor_workers(np);
    if (np == 1 && cfg.parallel.fabric == FabricKind::Process) cfg.parallel.fabric = FabricKind::InProcess;
    cfg.output.report = "report_np" + std::to_string(np) + ".json";
    cfg.output.residuals = "residuals_np" + std::to_string(np) + ".csv";
    cfg.output.field.clear();
    cfg.output.vtk.clear();
    reports.push_back(run_solve(cfg));
    status = std::max(status, exit_code(reports.back()));
    std::cerr << "np=" << np << ": " << reports.back().convergence.wall_time << " s, "
              << reports.back().convergence.matvec_count << " matvecs\n";
  }
  const std::string csv = scaling_csv(compute_scaling(reports));
  std::ofstream(base.output.dir / "scaling.csv") << csv;
  std::cout << csv;
  return status;
}

int cmd_gen_salt(const std::string& path, const std::string& dims_text) {
  const std::vector<int> d = parse_int_list(dims_text);
  Index3 dims{};
  if (d.size() == 1)
    dims = {d[0], d[0], d[0]};
  else if (d.size() == 3)
    dims = {d[0], d[1], d[2]};
  else
    throw Error(ErrorCode::InvalidValue, "cli", "dims must be one count or three comma-separated counts");
  write_velocity_grid(path, dims, salt_surrogate(dims));
  std::cout << "wrote " << path << " (" << dims[0] << "x" << dims[1] << "x" << dims[2] << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preconditioned Krylov solvers for the 3D Helmholtz equation"};
  app.require_subcommand(1);

  std::string config;
  std::vector<std::string> sets;
  bool echo = false;
  std::string ladder = "17,33,65";
  std::string workers = "1,2,4";
  std::string salt_path, salt_dims;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config, "INI configuration file")->check(CLI::ExistingFile);
    sub->add_option("--set", sets, "Override a key: section.key=value")->allow_extra_args(false);
  };

  CLI::App* solve = app.add_subcommand("solve", "Solve one configured problem");
  add_common(solve);
  solve->add_flag("--echo", echo, "Print the effective configuration first");

  CLI::App* validate = app.add_subcommand("validate", "Closed-off error study across a grid ladder");
  add_common(validate);
  validate->add_option("--ladder", ladder, "Comma-separated grid sizes")->capture_default_str();

  CLI::App* bench = app.add_subcommand("bench", "Scaling sweep over worker counts");
  add_common(bench);
  bench->add_option("--workers", workers, "Comma-separated worker counts")->capture_default_str();

  CLI::App* gen = app.add_subcommand("gen-salt-surrogate", "Write a synthetic salt velocity volume");
  gen->add_option("path", salt_path, "Output file (little-endian float32)")->required();
  gen->add_option("dims", salt_dims, "n or n1,n2,n3")->required();

  CLI::App* show = app.add_subcommand("config", "Print the effective configuration");
  add_common(show);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*solve) return cmd_solve(config, sets, echo);
    if (*validate) return cmd_validate(config, sets, ladder);
    if (*bench) return cmd_bench(config, sets, workers);
    if (*gen) return cmd_gen_salt(salt_path, salt_dims);
    if (*show) {
      std::cout << render_config(assemble(config, sets));
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "] " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
