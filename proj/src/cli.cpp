#include "helm/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "helm/error.hpp"
#include "json.hpp"

namespace helm {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(FabricKind kind) {
  switch (kind) {
    case FabricKind::Serial: return "serial";
    case FabricKind::InProcess: return "inproc";
    case FabricKind::Process: return "process";
  }
  return "?";
}

// ---------------------------------------------------------------- Config keys

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

[[noreturn]] void invalid(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::InvalidValue, "cli", path + ": " + what);
}

double to_double(const std::string& v, const std::string& path) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) invalid(path, "expected a number, got '" + v + "'");
  return out;
}

int to_int(const std::string& v, const std::string& path) {
  int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) invalid(path, "expected an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& v, const std::string& path) {
  const std::string l = lower(v);
  if (l == "true" || l == "yes" || l == "1" || l == "on") return true;
  if (l == "false" || l == "no" || l == "0" || l == "off") return false;
  invalid(path, "expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == ',' || c == 'x' || c == 'X') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

template <std::size_t N>
std::array<double, N> to_doubles(const std::string& v, const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(trim(cur));
  if (parts.size() != N) invalid(path, "expected " + std::to_string(N) + " comma-separated numbers");
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = to_double(parts[i], path);
  return out;
}

Index3 to_index3(const std::string& v, const std::string& path) {
  const auto parts = split_list(v);
  if (parts.size() == 1) {
    const int n = to_int(parts[0], path);
    return {n, n, n};
  }
  if (parts.size() != 3) invalid(path, "expected one count or three counts");
  return {to_int(parts[0], path), to_int(parts[1], path), to_int(parts[2], path)};
}

std::string fmt_double(double v) {
  char buf[40];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ec == std::errc() ? end : buf);
}

template <std::size_t N>
std::string fmt_doubles(const std::array<double, N>& v) {
  std::string out;
  for (std::size_t i = 0; i < N; ++i) out += (i ? "," : "") + fmt_double(v[i]);
  return out;
}

std::string fmt_index3(const Index3& n) {
  return std::to_string(n[0]) + "," + std::to_string(n[1]) + "," + std::to_string(n[2]);
}

ProblemKind to_problem(const std::string& v, const std::string& path) {
  const std::string l = lower(v);
  if (l == "closed-off" || l == "closed_off" || l == "closedoff") return ProblemKind::ClosedOff;
  if (l == "wedge") return ProblemKind::Wedge;
  if (l == "salt") return ProblemKind::Salt;
  invalid(path, "unknown problem '" + v + "' (closed-off, wedge, salt)");
}

ProblemSpec problem_defaults(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::ClosedOff: return ProblemSpec::closed_off(65, 40.0);
    case ProblemKind::Wedge: return ProblemSpec::wedge({73, 73, 121}, 10.0);
    case ProblemKind::Salt: return ProblemSpec::salt({641, 641, 193}, 5.0, "salt.vel");
  }
  return {};
}

struct Key {
  std::string section;
  std::string name;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    auto add = [&](std::string s, std::string n, auto set, auto get) {
      k.push_back({std::move(s), std::move(n), set, get});
    };
    // Problem. The name comes first: it selects the defaults for the rest.
    add("problem", "name",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          c.problem = problem_defaults(to_problem(v, p));
        },
        [](const RunConfig& c) { return std::string(to_string(c.problem.kind)); });
    add("problem", "n",
        [](RunConfig& c, const std::string& v, const std::string& p) { c.problem.n = to_index3(v, p); },
        [](const RunConfig& c) { return fmt_index3(c.problem.n); });
    add("problem", "k",
        [](RunConfig& c, const std::string& v, const std::string& p) { c.problem.k = to_double(v, p); },
        [](const RunConfig& c) { return fmt_double(c.problem.k); });
    add("problem", "frequency",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          c.problem.frequency = to_double(v, p);
        },
        [](const RunConfig& c) { return fmt_double(c.problem.frequency); });
    add("problem", "origin",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          c.problem.origin = to_doubles<3>(v, p);
        },
        [](const RunConfig& c) { return fmt_doubles(c.problem.origin); });
    add("problem", "lengths",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          c.problem.lengths = to_doubles<3>(v, p);
        },
        [](const RunConfig& c) { return fmt_doubles(c.problem.lengths); });
    add("problem", "source",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          c.problem.source = to_doubles<3>(v, p);
        },
        [](const RunConfig& c) { return fmt_doubles(c.problem.source); });
    add("problem", "velocity_file",
        [](RunConfig& c, const std::string& v, const std::string&) { c.problem.velocity_file = v; },
        [](const RunConfig& c) { return c.problem.velocity_file.string(); });
    add("problem", "layer_velocities",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          c.problem.layers.velocity = to_doubles<3>(v, p);
        },
        [](const RunConfig& c) { return fmt_doubles(c.problem.layers.velocity); });
    add("problem", "interface_depths_x1_min",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          c.problem.layers.depth_at_x1_min = to_doubles<2>(v, p);
        },
        [](const RunConfig& c) { return fmt_doubles(c.problem.layers.depth_at_x1_min); });
    add("problem", "interface_depths_x1_max",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          c.problem.layers.depth_at_x1_max = to_doubles<2>(v, p);
        },
        [](const RunConfig& c) { return fmt_doubles(c.problem.layers.depth_at_x1_max); });

    // Solver.
    add("solver", "method",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          const std::string l = lower(v);
          if (l == "gmres")
            c.solver.method = KrylovMethod::Gmres;
          else if (l == "bicgstab" || l == "bi-cgstab")
            c.solver.method = KrylovMethod::Bicgstab;
          else if (l == "idrs" || l == "idr" || l == "idr(s)")
            c.solver.method = KrylovMethod::Idrs;
          else
            invalid(p, "unknown method '" + v + "' (gmres, bicgstab, idrs)");
        },
        [](const RunConfig& c) { return std::string(to_string(c.solver.method)); });
    add("solver", "tol",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          c.solver.tol = to_double(v, p);
          if (!(c.solver.tol > 0.0)) invalid(p, "must be positive");
        },
        [](const RunConfig& c) { return fmt_double(c.solver.tol); });
    add("solver", "maxit",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          c.solver.maxit = to_int(v, p);
          if (c.solver.maxit < 1) invalid(p, "must be at least 1");
        },
        [](const RunConfig& c) { return std::to_string(c.solver.maxit); });
    add("solver", "side",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          const std::string l = lower(v);
          if (l == "auto")
            c.solver.side = PrecondSide::Auto;
          else if (l == "left")
            c.solver.side = PrecondSide::Left;
          else if (l == "right")
            c.solver.side = PrecondSide::Right;
          else if (l == "none")
            c.solver.side = PrecondSide::None;
          else
            invalid(p, "unknown side '" + v + "' (auto, left, right, none)");
        },
        [](const RunConfig& c) { return std::string(to_string(c.solver.side)); });
    add("solver", "s",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          c.solver.s = to_int(v, p);
          if (c.solver.s < 1 || c.solver.s > 64) invalid(p, "must be in 1..64");
        },
        [](const RunConfig& c) { return std::to_string(c.solver.s); });
    add("solver", "seed",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          std::uint64_t out = 0;
          const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
          if (ec != std::errc() || ptr != v.data() + v.size()) invalid(p, "expected an unsigned integer");
          c.solver.rng_seed = out;
        },
        [](const RunConfig& c) { return std::to_string(c.solver.rng_seed); });
    add("solver", "restart",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          c.solver.restart = to_int(v, p);
          if (c.solver.restart < 0) invalid(p, "must be >= 0");
        },
        [](const RunConfig& c) { return std::to_string(c.solver.restart); });

    // Preconditioner.
    add("preconditioner", "type",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          const std::string l = lower(v);
          if (l == "cslp")
            c.precond.enabled = true;
          else if (l == "none")
            c.precond.enabled = false;
          else
            invalid(p, "unknown preconditioner '" + v + "' (cslp, none)");
        },
        [](const RunConfig& c) { return std::string(c.precond.enabled ? "cslp" : "none"); });
    add("preconditioner", "beta1",
        [](RunConfig& c, const std::string& v, const std::string& p) { c.precond.beta1 = to_double(v, p); },
        [](const RunConfig& c) { return fmt_double(c.precond.beta1); });
    add("preconditioner", "beta2",
        [](RunConfig& c, const std::string& v, const std::string& p) { c.precond.beta2 = to_double(v, p); },
        [](const RunConfig& c) { return fmt_double(c.precond.beta2); });
    add("preconditioner", "omega",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          c.precond.mg.omega = to_double(v, p);
          if (!(c.precond.mg.omega > 0.0)) invalid(p, "must be positive");
        },
        [](const RunConfig& c) { return fmt_double(c.precond.mg.omega); });
    add("preconditioner", "nu1",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          c.precond.mg.nu1 = to_int(v, p);
          if (c.precond.mg.nu1 < 0) invalid(p, "must be >= 0");
        },
        [](const RunConfig& c) { return std::to_string(c.precond.mg.nu1); });
    add("preconditioner", "nu2",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          c.precond.mg.nu2 = to_int(v, p);
          if (c.precond.mg.nu2 < 0) invalid(p, "must be >= 0");
        },
        [](const RunConfig& c) { return std::to_string(c.precond.mg.nu2); });
    add("preconditioner", "cycle",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          const std::string l = lower(v);
          if (l == "v")
            c.precond.mg.cycle = CycleKind::V;
          else if (l == "f")
            c.precond.mg.cycle = CycleKind::F;
          else
            invalid(p, "unknown cycle '" + v + "' (V, F)");
        },
        [](const RunConfig& c) { return std::string(to_string(c.precond.mg.cycle)); });
    add("preconditioner", "coarsest_threshold",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          c.precond.mg.coarsen_threshold = to_int(v, p);
          if (c.precond.mg.coarsen_threshold < 3) invalid(p, "must be >= 3");
        },
        [](const RunConfig& c) { return std::to_string(c.precond.mg.coarsen_threshold); });
    add("preconditioner", "coarsest_inclusive",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          c.precond.mg.threshold_inclusive = to_bool(v, p);
        },
        [](const RunConfig& c) { return std::string(c.precond.mg.threshold_inclusive ? "true" : "false"); });
    add("preconditioner", "coarsest_tol",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          c.precond.mg.coarsest_tol = to_double(v, p);
          if (!(c.precond.mg.coarsest_tol > 0.0)) invalid(p, "must be positive");
        },
        [](const RunConfig& c) { return fmt_double(c.precond.mg.coarsest_tol); });
    add("preconditioner", "coarsest_maxit",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          c.precond.mg.coarsest_maxit = to_int(v, p);
          if (c.precond.mg.coarsest_maxit < 1) invalid(p, "must be at least 1");
        },
        [](const RunConfig& c) { return std::to_string(c.precond.mg.coarsest_maxit); });

    // Parallel layout.
    const char* axes[3] = {"npx0", "npy0", "npz0"};
    for (int a = 0; a < 3; ++a)
      add("parallel", axes[a],
          [a](RunConfig& c, const std::string& v, const std::string& p) {
            c.parallel.dims[static_cast<std::size_t>(a)] = to_int(v, p);
            if (c.parallel.dims[static_cast<std::size_t>(a)] < 1) invalid(p, "must be at least 1");
          },
          [a](const RunConfig& c) { return std::to_string(c.parallel.dims[static_cast<std::size_t>(a)]); });
    add("parallel", "fabric",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          const std::string l = lower(v);
          if (l == "serial")
            c.parallel.fabric = FabricKind::Serial;
          else if (l == "inproc" || l == "in-process" || l == "threads")
            c.parallel.fabric = FabricKind::InProcess;
          else if (l == "process" || l == "socket")
            c.parallel.fabric = FabricKind::Process;
          else
            invalid(p, "unknown fabric '" + v + "' (serial, inproc, process)");
        },
        [](const RunConfig& c) { return std::string(to_string(c.parallel.fabric)); });
    add("parallel", "port_base",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          c.parallel.port_base = to_int(v, p);
          if (c.parallel.port_base < 1024 || c.parallel.port_base > 65000) invalid(p, "must be in 1024..65000");
        },
        [](const RunConfig& c) { return std::to_string(c.parallel.port_base); });
    add("parallel", "timeout",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          c.parallel.timeout_s = to_double(v, p);
          if (!(c.parallel.timeout_s > 0.0)) invalid(p, "must be positive");
        },
        [](const RunConfig& c) { return fmt_double(c.parallel.timeout_s); });

    // Output.
    add("output", "dir",
        [](RunConfig& c, const std::string& v, const std::string&) { c.output.dir = v; },
        [](const RunConfig& c) { return c.output.dir.string(); });
    add("output", "report",
        [](RunConfig& c, const std::string& v, const std::string&) { c.output.report = v; },
        [](const RunConfig& c) { return c.output.report; });
    add("output", "residuals",
        [](RunConfig& c, const std::string& v, const std::string&) { c.output.residuals = v; },
        [](const RunConfig& c) { return c.output.residuals; });
    add("output", "field",
        [](RunConfig& c, const std::string& v, const std::string&) { c.output.field = v; },
        [](const RunConfig& c) { return c.output.field; });
    add("output", "vtk",
        [](RunConfig& c, const std::string& v, const std::string&) { c.output.vtk = v; },
        [](const RunConfig& c) { return c.output.vtk; });
    add("output", "log",
        [](RunConfig& c, const std::string& v, const std::string& p) {
          const std::string l = lower(v);
          if (l == "quiet")
            c.log = LogLevel::Quiet;
          else if (l == "warning")
            c.log = LogLevel::Warning;
          else if (l == "info")
            c.log = LogLevel::Info;
          else if (l == "debug")
            c.log = LogLevel::Debug;
          else
            invalid(p, "unknown level '" + v + "' (quiet, warning, info, debug)");
        },
        [](const RunConfig& c) {
          switch (c.log) {
            case LogLevel::Quiet: return std::string("quiet");
            case LogLevel::Warning: return std::string("warning");
            case LogLevel::Info: return std::string("info");
            case LogLevel::Debug: return std::string("debug");
          }
          return std::string("warning");
        });
    return k;
  }();
  return table;
}

const Key* find_key(const std::string& section, const std::string& name) {
  for (const Key& k : keys())
    if (k.section == section && k.name == name) return &k;
  return nullptr;
}

bool known_section(const std::string& s) {
  return std::any_of(keys().begin(), keys().end(), [&](const Key& k) { return k.section == s; });
}

[[noreturn]] void parse_error(int line, const std::string& what) {
  throw Error(ErrorCode::Parse, "cli", "line " + std::to_string(line) + ": " + what);
}

}  // namespace

RunConfig parse_config(std::string_view text) {
  struct Entry {
    std::string value;
    int line;
  };
  std::map<std::string, Entry> entries;  // "section.key" -> last value
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    std::string line = trim(raw);
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = trim(line.substr(0, comment));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') parse_error(line_no, "unterminated section header");
      section = lower(trim(line.substr(1, line.size() - 2)));
      if (!known_section(section)) parse_error(line_no, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) parse_error(line_no, "expected 'key = value'");
    const std::string key = lower(trim(line.substr(0, eq)));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) parse_error(line_no, "key '" + key + "' appears before any section");
    if (key.empty()) parse_error(line_no, "missing key");
    if (!find_key(section, key)) parse_error(line_no, "unknown key '" + section + "." + key + "'");
    entries[section + "." + key] = {value, line_no};
  }

  RunConfig cfg;
  for (const Key& k : keys()) {
    const auto it = entries.find(k.section + "." + k.name);
    if (it == entries.end()) continue;
    try {
      k.set(cfg, it->second.value, k.section + "." + k.name);
    } catch (const Error& e) {
      throw Error(e.code(), "cli",
                  "line " + std::to_string(it->second.line) + ": " +
                      std::string(e.what()).substr(std::string("cli: ").size()));
    }
  }
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cli", "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq)
    throw Error(ErrorCode::Parse, "cli",
                "override '" + std::string(assignment) + "' is not of the form section.key=value");
  const std::string section = lower(trim(assignment.substr(0, dot)));
  const std::string key = lower(trim(assignment.substr(dot + 1, eq - dot - 1)));
  const Key* k = find_key(section, key);
  if (!k) throw Error(ErrorCode::Parse, "cli", "unknown key '" + section + "." + key + "'");
  k->set(cfg, trim(assignment.substr(eq + 1)), section + "." + key);
}

std::map<std::string, std::map<std::string, std::string>> config_entries(const RunConfig& cfg) {
  std::map<std::string, std::map<std::string, std::string>> out;
  for (const Key& k : keys()) out[k.section][k.name] = k.get(cfg);
  return out;
}

std::string render_config(const RunConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const Key& k : keys()) {
    if (k.section != section) {
      if (!section.empty()) os << '\n';
      section = k.section;
      os << '[' << section << "]\n";
    }
    os << k.name << " = " << k.get(cfg) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------- Reports

namespace {

json index_json(const Index3& n) { return json::array({n[0], n[1], n[2]}); }
Index3 index_from(const json& j) { return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>()}; }

}  // namespace

std::string report_to_json(const RunReport& r) {
  json j;
  j["config"] = r.config;
  j["environment"] = {{"workers", r.workers},
                      {"fabric", r.fabric},
                      {"topology", index_json(r.topology)},
                      {"hardware_threads", std::thread::hardware_concurrency()}};
  j["grid"] = {{"n", index_json(r.grid)}, {"h", r.h}, {"kh_max", r.kh_max}};
  json levels = json::array();
  for (const auto& l : r.levels) levels.push_back(index_json(l));
  j["multigrid"] = {{"levels", levels},
                    {"coarsest",
                     {{"solves", r.coarsest.solves},
                      {"max_iterations", r.coarsest.max_iterations},
                      {"worst_residual", r.coarsest.worst_residual},
                      {"all_converged", r.coarsest.all_converged}}}};
  const ConvergenceReport& c = r.convergence;
  j["convergence"] = {{"method", c.method},
                      {"side", c.side},
                      {"iterations", c.iterations},
                      {"matvec_count", c.matvec_count},
                      {"precond_count", c.precond_count},
                      {"converged", c.converged},
                      {"status", c.status},
                      {"true_residual", c.true_residual},
                      {"seed", c.seed},
                      {"residual_history", c.residual_history},
                      {"phase_times", c.phase_times},
                      {"wall_time", c.wall_time}};
  j["precond_total_time"] = r.precond_total_time;
  j["setup_time"] = r.setup_time;
  if (r.error)
    j["error"] = {{"max_abs", r.error->max_abs}, {"l2", r.error->l2}};
  else
    j["error"] = nullptr;
  return j.dump(2);
}

RunReport report_from_json(std::string_view text) {
  RunReport r;
  try {
    const json j = json::parse(text);
    r.config = j.at("config").get<std::map<std::string, std::map<std::string, std::string>>>();
    const json& env = j.at("environment");
    r.workers = env.at("workers").get<int>();
    r.fabric = env.at("fabric").get<std::string>();
    r.topology = index_from(env.at("topology"));
    r.grid = index_from(j.at("grid").at("n"));
    r.h = j.at("grid").at("h").get<double>();
    r.kh_max = j.at("grid").at("kh_max").get<double>();
    for (const auto& l : j.at("multigrid").at("levels")) r.levels.push_back(index_from(l));
    const json& cs = j.at("multigrid").at("coarsest");
    r.coarsest.solves = cs.at("solves").get<int>();
    r.coarsest.max_iterations = cs.at("max_iterations").get<int>();
    r.coarsest.worst_residual = cs.at("worst_residual").get<double>();
    r.coarsest.all_converged = cs.at("all_converged").get<bool>();
    const json& c = j.at("convergence");
    ConvergenceReport& cr = r.convergence;
    cr.method = c.at("method").get<std::string>();
    cr.side = c.at("side").get<std::string>();
    cr.iterations = c.at("iterations").get<int>();
    cr.matvec_count = c.at("matvec_count").get<int>();
    cr.precond_count = c.at("precond_count").get<int>();
    cr.converged = c.at("converged").get<bool>();
    cr.status = c.at("status").get<std::string>();
    cr.true_residual = c.at("true_residual").get<double>();
    cr.seed = c.at("seed").get<std::uint64_t>();
    cr.residual_history = c.at("residual_history").get<std::vector<double>>();
    cr.phase_times = c.at("phase_times").get<std::map<std::string, double>>();
    cr.wall_time = c.at("wall_time").get<double>();
    r.precond_total_time = j.at("precond_total_time").get<double>();
    r.setup_time = j.at("setup_time").get<double>();
    if (!j.at("error").is_null())
      r.error = ErrorNorms{j.at("error").at("max_abs").get<double>(), j.at("error").at("l2").get<double>()};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, "cli", std::string("malformed report: ") + e.what());
  }
  return r;
}

RunReport load_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cli", "cannot open report " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return report_from_json(ss.str());
}

// ---------------------------------------------------------------- Output files

void write_vtk(const HaloField& field, const Grid3& grid, const fs::path& path,
               const HaloField* log10_error) {
  const BlockExtent& e = field.extent();
  if (e != BlockExtent::whole(grid))
    throw Error(ErrorCode::ShapeMismatch, "cli", "VTK output needs the gathered whole-grid field");
  if (log10_error && !log10_error->same_shape(field))
    throw Error(ErrorCode::ShapeMismatch, "cli", "error field does not match the solution");
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cli", "cannot write " + path.string());
  out << "# vtk DataFile Version 3.0\nhelmholtz solution\nASCII\nDATASET STRUCTURED_POINTS\n";
  out << "DIMENSIONS " << grid.n[0] << ' ' << grid.n[1] << ' ' << grid.n[2] << '\n';
  out << std::setprecision(17);
  out << "ORIGIN " << grid.origin[0] << ' ' << grid.origin[1] << ' ' << grid.origin[2] << '\n';
  out << "SPACING " << grid.h << ' ' << grid.h << ' ' << grid.h << '\n';
  out << "POINT_DATA " << grid.num_vertices() << '\n';
  auto array = [&](const char* name, const HaloField& f, auto part) {
    out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (int k = 1; k <= f.nz(); ++k)
      for (int j = 1; j <= f.ny(); ++j)
        for (int i = 1; i <= f.nx(); ++i) out << part(f(i, j, k)) << '\n';
  };
  array("real", field, [](cplx v) { return v.real(); });
  array("imag", field, [](cplx v) { return v.imag(); });
  if (log10_error) array("log10_error", *log10_error, [](cplx v) { return v.real(); });
  if (!out) throw Error(ErrorCode::Io, "cli", "write failed for " + path.string());
  fs::path sidecar = path;
  sidecar.replace_extension(".hff");
  write_field_file(sidecar, field);
}

// ---------------------------------------------------------------- Runs

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cli", "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "cli", "write failed for " + path.string());
}

}  // namespace

std::string block_file_name(const std::string& name, int rank, int workers) {
  if (workers == 1) return name;
  const fs::path p(name);
  return (p.parent_path() / (p.stem().string() + ".r" + std::to_string(rank) + p.extension().string()))
      .string();
}

namespace {

// One worker's share of a run; the returned report is complete on rank 0.
RunReport solve_on_worker(const RunConfig& cfg, Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const Grid3 grid = problem_grid(cfg.problem);
  const std::vector<BlockExtent> extents = partition_grid(grid, ctx.topology);
  const BlockExtent& block = extents[static_cast<std::size_t>(ctx.rank())];
  Problem problem = build_problem(cfg.problem, block);

  RunReport report;
  report.kh_max = ctx.fabric->allreduce_max(problem.kh_max);
  report.grid = grid.n;
  report.h = grid.h;

  std::optional<MGHierarchy> hier;
  LinearOperator precond;
  double precond_seconds = 0.0;
  if (cfg.precond.enabled) {
    hier.emplace(build_hierarchy(grid, problem.op.as_cslp(cfg.precond.beta1, cfg.precond.beta2),
                                 cfg.precond.mg, ctx));
    for (const auto& lv : hier->levels) report.levels.push_back(lv.grid.n);
    precond = [&](HaloField& r, HaloField& z) {
      const auto s = std::chrono::steady_clock::now();
      mg_precondition(*hier, r, z);
      precond_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - s).count();
    };
  }
  report.setup_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  SolverConfig sc = cfg.solver;
  std::ostringstream residual_log;
  const bool root = ctx.rank() == 0;
  sc.residual_log = root && !cfg.output.residuals.empty() ? &residual_log : nullptr;
  if (ctx.clock) ctx.clock->reset();
  SolveResult res = solve(stencil_operator(problem.op, grid, ctx), precond, problem.rhs, sc, ctx);
  report.convergence = res.report;
  report.precond_total_time = precond_seconds;
  if (hier) report.coarsest = hier->coarsest;

  const bool want_vtk = !cfg.output.vtk.empty();
  HaloField log10_error;
  if (cfg.problem.has_analytical())
    report.error = error_norms(cfg.problem, res.x, grid, ctx, want_vtk ? &log10_error : nullptr);

  HaloField full = std::move(res.x);
  fill_dirichlet_boundary(cfg.problem, grid, full);
  if (!cfg.output.field.empty()) {
    write_field_file(cfg.output.dir / block_file_name(cfg.output.field, ctx.rank(), ctx.size()), full);
    if (ctx.size() > 1 && ctx.rank() == 0) {
      std::ostringstream index;
      index << "# rank file lo1 lo2 lo3 hi1 hi2 hi3\n";
      for (std::size_t r = 0; r < extents.size(); ++r) {
        const BlockExtent& e = extents[r];
        index << r << ' ' << block_file_name(cfg.output.field, static_cast<int>(r), ctx.size()) << ' '
              << e.lo[0] << ' ' << e.lo[1] << ' ' << e.lo[2] << ' ' << e.hi[0] << ' ' << e.hi[1] << ' '
              << e.hi[2] << '\n';
      }
      write_text(cfg.output.dir / (cfg.output.field + ".index"), index.str());
    }
  }
  HaloField global, global_error;
  if (want_vtk) {
    global = gather_field(full, extents, *ctx.fabric);
    if (report.error) global_error = gather_field(log10_error, extents, *ctx.fabric);
  }

  report.config = config_entries(cfg);
  report.workers = ctx.size();
  report.fabric = ctx.fabric->name();
  report.topology = ctx.topology.dims();
  if (root) {
    const fs::path& dir = cfg.output.dir;
    if (!cfg.output.residuals.empty())
      write_text(dir / cfg.output.residuals, "iter,relres\n" + residual_log.str());
    if (want_vtk)
      write_vtk(global, grid, dir / cfg.output.vtk, report.error ? &global_error : nullptr);
    if (!cfg.output.report.empty()) write_text(dir / cfg.output.report, report_to_json(report));
  }
  return report;
}

}  // namespace

RunReport run_solve(const RunConfig& cfg) {
  set_log_level(cfg.log);
  const Topology topo(cfg.parallel.dims[0], cfg.parallel.dims[1], cfg.parallel.dims[2]);
  problem_grid(cfg.problem);
  std::error_code ec;
  fs::create_directories(cfg.output.dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cli", "cannot create " + cfg.output.dir.string());

  switch (cfg.parallel.fabric) {
    case FabricKind::Serial: {
      if (topo.size() != 1)
        throw Error(ErrorCode::InvalidValue, "cli",
                    "parallel.fabric: serial runs need a 1x1x1 topology, got " + topo.describe());
      PhaseClock clock;
      Context ctx = serial_context(&clock);
      return solve_on_worker(cfg, ctx);
    }
    case FabricKind::InProcess: {
      RunReport result;
      std::mutex mutex;
      run_in_process(
          topo,
          [&](Context& ctx) {
            PhaseClock clock;
            ctx.clock = &clock;
            RunReport r = solve_on_worker(cfg, ctx);
            if (ctx.rank() == 0) {
              std::lock_guard lock(mutex);
              result = std::move(r);
            }
          },
          cfg.parallel.timeout_s);
      return result;
    }
    case FabricKind::Process: {
      RunConfig child = cfg;
      if (child.output.report.empty()) child.output.report = ".report.json";
      const std::vector<int> codes = run_processes(
          topo, cfg.parallel.port_base,
          [&](Context& ctx) {
            PhaseClock clock;
            ctx.clock = &clock;
            solve_on_worker(child, ctx);
            return 0;
          },
          cfg.parallel.timeout_s);
      for (std::size_t r = 0; r < codes.size(); ++r)
        if (codes[r] != 0)
          throw Error(ErrorCode::Transport, "cli",
                      "worker " + std::to_string(r) + " exited with status " + std::to_string(codes[r]));
      return load_report(child.output.dir / child.output.report);
    }
  }
  throw Error(ErrorCode::InvalidValue, "cli", "unknown fabric");
}

// ---------------------------------------------------------------- Scaling

std::vector<ScalingRow> compute_scaling(const std::vector<RunReport>& reports, std::size_t reference) {
  if (reports.empty()) return {};
  if (reference >= reports.size())
    throw Error(ErrorCode::InvalidValue, "cli", "reference report index out of range");
  auto comparable = [](const RunReport& r) {
    auto c = r.config;
    c.erase("parallel");
    c.erase("output");
    return c;
  };
  const RunReport& ref = reports[reference];
  const auto ref_cfg = comparable(ref);
  std::vector<ScalingRow> rows;
  for (const RunReport& r : reports) {
    if (comparable(r) != ref_cfg)
      throw Error(ErrorCode::MismatchedConfigs, "cli",
                  "reports differ in more than the parallel and output settings");
    ScalingRow row;
    row.workers = r.workers;
    row.time = r.convergence.wall_time;
    row.speedup = ref.convergence.wall_time / r.convergence.wall_time;
    row.efficiency = row.speedup / r.workers;
    rows.push_back(row);
  }
  return rows;
}

std::string scaling_csv(const std::vector<ScalingRow>& rows) {
  std::ostringstream os;
  os << "np,time,speedup,efficiency\n" << std::setprecision(6);
  for (const auto& r : rows) os << r.workers << ',' << r.time << ',' << r.speedup << ',' << r.efficiency << '\n';
  return os.str();
}

Index3 factor_workers(int workers) {
  if (workers < 1) throw Error(ErrorCode::InvalidValue, "cli", "worker count must be positive");
  Index3 best{workers, 1, 1};
  int best_spread = workers;
  for (int a = 1; a <= workers; ++a) {
    if (workers % a) continue;
    for (int b = 1; b <= workers / a; ++b) {
      if ((workers / a) % b) continue;
      const int c = workers / a / b;
      if (!(a >= b && b >= c)) continue;
      if (a - c < best_spread) {
        best_spread = a - c;
        best = {a, b, c};
      }
    }
  }
  return best;
}

}  // namespace helm
