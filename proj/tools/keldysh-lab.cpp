#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "config.hpp"
#include "experiments.hpp"
#include "keldysh/geometry.hpp"
#include "keldysh/type_change.hpp"

namespace {

using namespace keldysh;
using namespace keldysh::lab;

// "power", "power:N", or "sgn".
TypeChangeFn parse_k_spec(const std::string& spec) {
  if (spec == "sgn") return make_sgn();
  std::string head = spec, arg;
  if (const auto colon = spec.find(':'); colon != std::string::npos) {
    head = spec.substr(0, colon);
    arg = spec.substr(colon + 1);
  }
  if (head != "power") throw CLI::ValidationError("--K", "unknown kind '" + spec + "'");
  int k0 = 1;
  if (!arg.empty()) {
    try {
      std::size_t used = 0;
      k0 = std::stoi(arg, &used);
      if (used != arg.size()) throw std::invalid_argument(arg);
    } catch (const std::exception&) {
      throw CLI::ValidationError("--K", "'" + arg + "' is not an integer");
    }
    if (k0 < 1) throw CLI::ValidationError("--K", "power index must be >= 1");
  }
  return make_power(k0);
}

Point parse_start(const std::string& s) {
  double x = 0, y = 0;
  int used = 0;
  if (std::sscanf(s.c_str(), "%lf,%lf%n", &x, &y, &used) != 2 ||
      used != static_cast<int>(s.size())) {
    throw CLI::ValidationError("--start", "expected x,y");
  }
  return {x, y};
}

int cmd_run(const std::string& config_path) {
  ExperimentConfig cfg;
  try {
    cfg = parse_config(config_path);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  try {
    const ExperimentResult res = run_experiment(cfg);
    const auto written = write_outputs(res, cfg);
    std::printf("experiment: %s\n", res.name.c_str());
    std::printf("status: %s\n", res.pass ? "PASS" : "FAIL");
    if (!res.pass) {
      for (const auto& line : res.report.at("failures")) {
        std::printf("  - %s\n", line.get<std::string>().c_str());
      }
    }
    for (const auto& path : written) std::printf("wrote: %s\n", path.c_str());
    return res.pass ? 0 : 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

int cmd_list() {
  std::size_t width = 0;
  for (const auto& e : list_experiments()) width = std::max(width, e.name.size());
  for (const auto& e : list_experiments()) {
    std::printf("%-*s  %s\n", static_cast<int>(width), e.name.c_str(), e.summary.c_str());
  }
  return 0;
}

int cmd_trace(const std::string& k_spec, const std::string& start_s, const std::string& branch_s,
              double y_stop, bool have_y_stop, double step) {
  try {
    const TypeChangeFn K = parse_k_spec(k_spec);
    const Point start = parse_start(start_s);
    const Branch branch = branch_s == "minus" ? Branch::minus : Branch::plus;
    if (!have_y_stop) y_stop = start.y + 8.0;
    TraceOptions opt;
    opt.step = step;
    const CharacteristicPath path = trace_characteristic(K, start, branch, y_stop, opt);
    const Point end = path.vertices.back();
    std::printf("K: %s\n", K.name.c_str());
    std::printf("branch: %s\n", branch == Branch::plus ? "plus" : "minus");
    std::printf("start: (%.12e, %.12e)\n", start.x, start.y);
    std::printf("vertices: %zu\n", path.vertices.size());
    std::printf("end: (%.12e, %.12e)\n", end.x, end.y);
    std::printf("reached sonic: %s\n", path.reached_sonic ? "yes" : "no");
    if (path.degenerate) std::printf("degenerate: started on the sonic line\n");
    if (path.diverged) std::printf("diverged: escaped before reaching y_stop\n");
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"numerical laboratory for type-changing elliptic-hyperbolic operators"};
  app.require_subcommand(1);

  std::string config_path;
  CLI::App* run = app.add_subcommand("run", "run an experiment from a config file");
  run->add_option("config", config_path, "config file (flat TOML-like key = value)")->required();

  CLI::App* list = app.add_subcommand("list", "list the available experiments");

  std::string k_spec = "power:1";
  std::string start_s = "-1,0";
  std::string branch_s = "plus";
  double y_stop = 0.0;
  double step = 1e-3;
  CLI::App* trace = app.add_subcommand("trace", "trace one characteristic path");
  trace->add_option("--K", k_spec, "type-change function: power, power:N, or sgn");
  trace->add_option("--start", start_s, "starting point x,y");
  trace->add_option("--branch", branch_s, "characteristic branch")
      ->check(CLI::IsMember({"plus", "minus"}));
  CLI::Option* y_stop_opt = trace->add_option("--y-stop", y_stop, "stop ordinate");
  trace->add_option("--step", step, "march step in y")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (run->parsed()) return cmd_run(config_path);
  if (list->parsed()) return cmd_list();
  if (trace->parsed()) {
    return cmd_trace(k_spec, start_s, branch_s, y_stop, y_stop_opt->count() > 0, step);
  }
  return 1;
}
