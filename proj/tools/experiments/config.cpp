#include "config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace keldysh::lab {

namespace {

const std::set<std::string> kExperiments = {"validate", "trace",    "ibp",          "energy",
                                            "poincare", "open",     "closed",       "mixed_dn",
                                            "maxprinciple", "dual"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Strip a # comment that is not inside a quoted string.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

struct Parser {
  const std::string& name;
  int line_no = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError(name + ":" + std::to_string(line_no) + ": " + msg);
  }

  double number(const std::string& raw) const {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(raw, &used);
    } catch (const std::exception&) {
      fail("expected a number, got '" + raw + "'");
    }
    if (used != raw.size()) fail("trailing characters after number '" + raw + "'");
    return v;
  }

  std::string string_value(const std::string& raw) const {
    if (raw.size() < 2 || raw.front() != '"' || raw.back() != '"') {
      fail("expected a quoted string, got '" + raw + "'");
    }
    return raw.substr(1, raw.size() - 2);
  }

  std::vector<std::string> array_items(const std::string& raw) const {
    if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']') {
      fail("expected an array [..], got '" + raw + "'");
    }
    std::vector<std::string> items;
    std::string body = raw.substr(1, raw.size() - 2);
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) items.push_back(item);
    }
    return items;
  }
};

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& name) {
  ExperimentConfig cfg;
  Parser p{name};
  std::string section;
  std::set<std::string> domain_keys;
  bool grids_set = false;

  std::istringstream in(text);
  std::string raw;
  while (std::getline(in, raw)) {
    ++p.line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') p.fail("unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "K" && section != "domain" && section != "operator" &&
          section != "multiplier" && section != "output") {
        p.fail("unknown section [" + section + "]");
      }
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos) p.fail("expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty()) p.fail("empty key");
    if (val.empty()) p.fail("empty value for '" + key + "'");

    if (section.empty()) {
      if (key == "experiment") {
        cfg.experiment = p.string_value(val);
      } else if (key == "grids") {
        cfg.grids.clear();
        for (const auto& item : p.array_items(val)) {
          const double v = p.number(item);
          if (v != static_cast<int>(v) || v < 3) p.fail("grids entries must be integers >= 3");
          cfg.grids.push_back(static_cast<int>(v));
        }
        grids_set = true;
      } else if (key == "seed") {
        cfg.seed = static_cast<std::uint64_t>(p.number(val));
      } else {
        p.fail("unknown top-level key '" + key + "'");
      }
    } else if (section == "K") {
      if (key == "kind") {
        cfg.k_kind = p.string_value(val);
        if (cfg.k_kind != "power" && cfg.k_kind != "sgn") p.fail("K.kind must be power or sgn");
      } else if (key == "k0") {
        cfg.k0 = static_cast<int>(p.number(val));
      } else {
        p.fail("unknown key K." + key);
      }
    } else if (section == "domain") {
      if (key == "a") {
        cfg.a = p.number(val);
      } else if (key == "b") {
        cfg.b = p.number(val);
      } else if (key == "d") {
        cfg.d = p.number(val);
      } else {
        p.fail("unknown key domain." + key);
      }
      domain_keys.insert(key);
      cfg.has_domain = true;
    } else if (section == "operator") {
      if (key == "form") {
        cfg.op_form = p.string_value(val);
        if (cfg.op_form != "kappa" && cfg.op_form != "loword" && cfg.op_form != "general") {
          p.fail("operator.form must be kappa, loword, or general");
        }
      } else if (key == "kappa") {
        cfg.kappa = p.number(val);
      } else if (key == "k") {
        cfg.k = p.number(val);
      } else {
        p.fail("unknown key operator." + key);
      }
    } else if (section == "multiplier") {
      if (key == "delta") {
        if (val == "\"auto\"") {
          cfg.delta_auto = true;
        } else {
          cfg.delta = p.number(val);
          cfg.delta_auto = false;
          if (cfg.delta <= 0.0) p.fail("multiplier.delta must be positive or \"auto\"");
        }
      } else {
        p.fail("unknown key multiplier." + key);
      }
    } else if (section == "output") {
      if (key == "dir") {
        cfg.out_dir = p.string_value(val);
      } else if (key == "formats") {
        cfg.formats.clear();
        for (const auto& item : p.array_items(val)) cfg.formats.push_back(p.string_value(item));
      } else {
        p.fail("unknown key output." + key);
      }
    }
  }

  p.line_no = 0;  // validation diagnostics carry the field name instead
  if (cfg.experiment.empty()) throw ConfigError(name + ": missing field 'experiment'");
  if (!kExperiments.count(cfg.experiment)) {
    throw ConfigError(name + ": unknown experiment '" + cfg.experiment + "'");
  }
  if (cfg.has_domain) {
    for (const char* req : {"a", "b", "d"}) {
      if (!domain_keys.count(req)) {
        throw ConfigError(name + ": missing field 'domain." + std::string(req) + "'");
      }
    }
  }
  if (grids_set) {
    if (cfg.grids.empty()) throw ConfigError(name + ": grids must not be empty");
    for (std::size_t i = 1; i < cfg.grids.size(); ++i) {
      if (cfg.grids[i] <= cfg.grids[i - 1]) {
        throw ConfigError(name + ": grids must be strictly increasing");
      }
    }
  }
  for (const auto& f : cfg.formats) {
    if (f != "csv" && f != "json" && f != "dat") {
      throw ConfigError(name + ": unknown output format '" + f + "'");
    }
  }
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

}  // namespace keldysh::lab
