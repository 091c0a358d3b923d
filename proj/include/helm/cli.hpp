#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "helm/krylov.hpp"
#include "helm/log.hpp"
#include "helm/multigrid.hpp"
#include "helm/problems.hpp"

namespace helm {

enum class FabricKind { Serial, InProcess, Process };

const char* to_string(FabricKind kind);

struct PreconditionerConfig {
  bool enabled = true;
  double beta1 = 1.0;
  double beta2 = -0.5;
  MultigridConfig mg{};

  bool operator==(const PreconditionerConfig&) const = default;
};

struct ParallelConfig {
  Index3 dims{1, 1, 1};
  FabricKind fabric = FabricKind::InProcess;
  int port_base = 47100;
  double timeout_s = 600.0;

  bool operator==(const ParallelConfig&) const = default;
};

struct OutputConfig {
  std::filesystem::path dir = ".";
  /// Empty names switch the corresponding output off.
  std::string report = "report.json";
  std::string residuals = "residuals.csv";
  std::string field = "solution.hff";
  std::string vtk;

  bool operator==(const OutputConfig&) const = default;
};

struct RunConfig {
  ProblemSpec problem = ProblemSpec::closed_off(65, 40.0);
  SolverConfig solver{};
  PreconditionerConfig precond{};
  ParallelConfig parallel{};
  OutputConfig output{};
  LogLevel log = LogLevel::Warning;

  bool operator==(const RunConfig&) const = default;
};

/// INI-style text: "[section]" headers, "key = value" lines, '#' or ';'
/// comments. Unknown sections and keys are rejected.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Applies one "section.key=value" override.
void apply_override(RunConfig& cfg, std::string_view assignment);

/// Canonical text for every key; parse_config(render_config(c)) == c.
std::string render_config(const RunConfig& cfg);
/// section -> key -> canonical value
std::map<std::string, std::map<std::string, std::string>> config_entries(const RunConfig& cfg);

struct RunReport {
  ConvergenceReport convergence;
  std::map<std::string, std::map<std::string, std::string>> config;
  int workers = 1;
  std::string fabric;
  Index3 topology{1, 1, 1};
  Index3 grid{};
  double h = 0.0;
  double kh_max = 0.0;
  std::vector<Index3> levels;
  CoarsestStats coarsest;
  std::optional<ErrorNorms> error;
  double precond_total_time = 0.0;
  double setup_time = 0.0;
};

std::string report_to_json(const RunReport& report);
RunReport report_from_json(std::string_view json);
RunReport load_report(const std::filesystem::path& path);

/// Field file of one rank: the name itself for a single worker, otherwise
/// "<stem>.r<rank><ext>". Multi-worker runs also write "<name>.index" with
/// the global range of every block.
std::string block_file_name(const std::string& name, int rank, int workers);

/// Builds the problem and hierarchy on every worker, solves, and writes the
/// configured outputs from rank 0.
RunReport run_solve(const RunConfig& cfg);

inline int exit_code(const RunReport& r) { return r.convergence.converged ? 0 : 1; }

struct ScalingRow {
  int workers = 1;
  double time = 0.0;
  double speedup = 1.0;
  double efficiency = 1.0;
};

/// S_p = t_ref / t_p and E_p = S_p / np; reports must agree on everything
/// but the parallel and output settings.
std::vector<ScalingRow> compute_scaling(const std::vector<RunReport>& reports,
                                        std::size_t reference = 0);
std::string scaling_csv(const std::vector<ScalingRow>& rows);

/// Legacy structured-points VTK with real and imaginary parts (and an
/// optional log10 error array) plus an .hff sidecar with full precision.
void write_vtk(const HaloField& field, const Grid3& grid, const std::filesystem::path& path,
               const HaloField* log10_error = nullptr);

/// Near-cubic worker layout for a worker count.
Index3 factor_workers(int workers);

}  // namespace helm
