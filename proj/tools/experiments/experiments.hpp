#pragma once

#include <string>
#include <variant>
#include <vector>

#include "config.hpp"
#include "json.hpp"

namespace keldysh::lab {

// One results table per run. Cells are typed so the CSV writer can print
// integers plain and floats as %.12e; a string cell passes through verbatim
// (used for labels and for blanks in numeric columns).
struct Table {
  using Cell = std::variant<long long, double, std::string>;
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;

  // Comma separator; "%.12e" floats. Same content with ' ' and a "# " header
  // prefix for the gnuplot variant.
  std::string to_csv(char sep = ',', const char* header_prefix = "") const;
};

struct ExperimentResult {
  std::string name;
  bool pass = false;
  Table table;
  nlohmann::json report;  // scalars, per-part verdicts, and a "failures" list
};

struct ExperimentInfo {
  std::string name;
  std::string summary;
};

// The runnable experiment names with one-line descriptions, in a fixed order.
const std::vector<ExperimentInfo>& list_experiments();

bool is_experiment(const std::string& name);

// Dispatch on cfg.experiment; throws ConfigError for a name the parser would
// have rejected and propagates solver/domain errors from the modules.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Write results.csv / report.json / results.dat per cfg.formats into
// cfg.out_dir (created if missing). Returns the paths written.
std::vector<std::string> write_outputs(const ExperimentResult& res, const ExperimentConfig& cfg);

}  // namespace keldysh::lab
