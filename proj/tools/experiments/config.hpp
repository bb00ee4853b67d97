#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace keldysh::lab {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat TOML-like experiment description. Sections [K], [domain], [operator],
// [multiplier], [output] plus the top-level keys experiment, grids, seed.
struct ExperimentConfig {
  std::string experiment;

  std::string k_kind = "power";  // power | sgn
  int k0 = 1;

  bool has_domain = false;
  double a = 0.0, b = 2.0, d = 1.0;

  std::vector<int> grids{33, 65, 129};

  std::string op_form = "kappa";  // kappa | loword | general
  double kappa = 1.0;
  double k = 1.0;

  bool delta_auto = true;
  double delta = 0.0;

  std::uint64_t seed = 42;

  std::string out_dir = "out";
  std::vector<std::string> formats{"csv", "json"};
};

// Parse + validate. Throws ConfigError with "<name>:<line>: ..." diagnostics;
// missing required fields are reported by their dotted name.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& name);

}  // namespace keldysh::lab
