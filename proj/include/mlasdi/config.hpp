// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mlasdi/data.hpp"
#include "mlasdi/error.hpp"
#include "mlasdi/eval.hpp"
#include "mlasdi/multistage.hpp"

namespace mlasdi {

struct DataSection {
  std::string source = "generate";  // "generate" or "import"
  std::string path;                 // snapshot file for source = import
  ParamGrid grid{{{0.8, 1.2, 0.05}, {0.08, 0.12, 0.005}}};
  std::size_t nx = 64;
  std::size_t nt = 100;
  double dt = 0.005;
};

struct EvalSection {
  std::string test = "all";  // "all", "train" or "holdout"
  std::size_t stage = 0;     // 0 means every trained stage
  std::string csv = "errors.csv";
  std::string summary = "summary.txt";
};

/// Parsed run configuration with defaults filled in.
struct RunConfig {
  DataSection data;
  TrainConfig train{.iterations = {3000, 3000}};
  std::size_t n_train = 9;
  EvalSection eval;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || v.empty()) fail(ErrorKind::config, key + ": '" + v + "' is not a number");
  return out;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || v.empty()) {
    fail(ErrorKind::config, key + ": '" + v + "' is not a non-negative integer");
  }
  return out;
}

/// "500-50" -> {500, 50}; several stages are separated by commas.
inline std::vector<std::vector<std::size_t>> parse_hidden(const std::string& key, const std::string& v) {
  std::vector<std::vector<std::size_t>> stages;
  for (const auto& stage : split(v, ',')) {
    std::vector<std::size_t> widths;
    for (const auto& w : split(stage, '-')) widths.push_back(parse_uint(key, w));
    stages.push_back(std::move(widths));
  }
  return stages;
}

inline std::string join_hidden(const std::vector<std::vector<std::size_t>>& hidden) {
  std::string out;
  for (std::size_t s = 0; s < hidden.size(); ++s) {
    if (s) out += ", ";
    for (std::size_t i = 0; i < hidden[s].size(); ++i) {
      if (i) out += '-';
      out += std::to_string(hidden[s][i]);
    }
  }
  return out;
}

}  // namespace detail

void validate_run_config(const RunConfig& cfg);

/// Sectioned key = value text. Unknown sections or keys, duplicate keys and
/// zero iteration counts are rejected.
inline RunConfig parse_run_config(std::string_view text) {
  RunConfig cfg;
  std::string section;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  auto& axes = cfg.data.grid.axes;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    const std::string body = detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (body.front() == '[') {
      if (body.back() != ']') fail(ErrorKind::config, where + "malformed section header");
      section = detail::trim(body.substr(1, body.size() - 2));
      if (section != "data" && section != "model" && section != "train" && section != "eval") {
        fail(ErrorKind::config, where + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) fail(ErrorKind::config, where + "expected key = value");
    if (section.empty()) fail(ErrorKind::config, where + "key outside of any section");
    const std::string key = detail::trim(body.substr(0, eq));
    const std::string value = detail::trim(body.substr(eq + 1));
    const std::string full = section + "." + key;
    if (!seen.insert(full).second) fail(ErrorKind::config, where + "duplicate key " + full);

    if (section == "data") {
      if (key == "source") {
        if (value != "generate" && value != "import") fail(ErrorKind::config, full + " must be generate or import");
        cfg.data.source = value;
      } else if (key == "path") {
        cfg.data.path = value;
      } else if (key == "speed_min") {
        axes[0].min = detail::parse_double(full, value);
      } else if (key == "speed_max") {
        axes[0].max = detail::parse_double(full, value);
      } else if (key == "speed_step") {
        axes[0].step = detail::parse_double(full, value);
      } else if (key == "width_min") {
        axes[1].min = detail::parse_double(full, value);
      } else if (key == "width_max") {
        axes[1].max = detail::parse_double(full, value);
      } else if (key == "width_step") {
        axes[1].step = detail::parse_double(full, value);
      } else if (key == "nx") {
        cfg.data.nx = detail::parse_uint(full, value);
      } else if (key == "nt") {
        cfg.data.nt = detail::parse_uint(full, value);
      } else if (key == "dt") {
        cfg.data.dt = detail::parse_double(full, value);
      } else {
        fail(ErrorKind::config, where + "unknown key " + full);
      }
    } else if (section == "model") {
      if (key == "latent_dim") {
        cfg.train.latent_dim = detail::parse_uint(full, value);
      } else if (key == "hidden") {
        cfg.train.hidden = detail::parse_hidden(full, value);
      } else {
        fail(ErrorKind::config, where + "unknown key " + full);
      }
    } else if (section == "train") {
      if (key == "beta1") {
        cfg.train.beta1 = detail::parse_double(full, value);
      } else if (key == "beta2") {
        cfg.train.beta2 = detail::parse_double(full, value);
      } else if (key == "lr") {
        cfg.train.lr = detail::parse_double(full, value);
      } else if (key == "iterations") {
        cfg.train.iterations.clear();
        for (const auto& v : detail::split(value, ',')) cfg.train.iterations.push_back(detail::parse_uint(full, v));
      } else if (key == "seed") {
        cfg.train.seed = detail::parse_uint(full, value);
      } else if (key == "n_train") {
        cfg.n_train = detail::parse_uint(full, value);
      } else if (key == "threads") {
        cfg.train.threads = detail::parse_uint(full, value);
      } else {
        fail(ErrorKind::config, where + "unknown key " + full);
      }
    } else {
      if (key == "test") {
        if (value != "all" && value != "train" && value != "holdout") {
          fail(ErrorKind::config, full + " must be all, train or holdout");
        }
        cfg.eval.test = value;
      } else if (key == "stage") {
        cfg.eval.stage = detail::parse_uint(full, value);
      } else if (key == "csv") {
        cfg.eval.csv = value;
      } else if (key == "summary") {
        cfg.eval.summary = value;
      } else {
        fail(ErrorKind::config, where + "unknown key " + full);
      }
    }
  }
  validate_run_config(cfg);
  return cfg;
}

inline void validate_run_config(const RunConfig& cfg) {
  cfg.train.validate();
  if (cfg.train.threads == 0) fail(ErrorKind::config, "train.threads must be at least 1");
  if (cfg.n_train < 2) fail(ErrorKind::config, "train.n_train must be at least 2");
  if (cfg.data.source == "generate") {
    cfg.data.grid.validate();
    if (cfg.data.nx < 16) fail(ErrorKind::config, "data.nx must be at least 16");
    if (cfg.data.nt < 3) fail(ErrorKind::config, "data.nt must be at least 3");
    if (!(cfg.data.dt > 0.0)) fail(ErrorKind::config, "data.dt must be positive");
  } else if (cfg.data.path.empty()) {
    fail(ErrorKind::config, "data.path is required when data.source = import");
  }
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

/// The resolved configuration in the same format the parser accepts.
inline std::string to_string(const RunConfig& cfg) {
  std::ostringstream o;
  const auto& axes = cfg.data.grid.axes;
  o << "[data]\n";
  o << "source = " << cfg.data.source << '\n';
  if (!cfg.data.path.empty()) o << "path = " << cfg.data.path << '\n';
  o << "speed_min = " << format_double(axes[0].min) << '\n';
  o << "speed_max = " << format_double(axes[0].max) << '\n';
  o << "speed_step = " << format_double(axes[0].step) << '\n';
  o << "width_min = " << format_double(axes[1].min) << '\n';
  o << "width_max = " << format_double(axes[1].max) << '\n';
  o << "width_step = " << format_double(axes[1].step) << '\n';
  o << "nx = " << cfg.data.nx << '\n';
  o << "nt = " << cfg.data.nt << '\n';
  o << "dt = " << format_double(cfg.data.dt) << '\n';
  o << "\n[model]\n";
  o << "latent_dim = " << cfg.train.latent_dim << '\n';
  o << "hidden = " << detail::join_hidden(cfg.train.hidden) << '\n';
  o << "\n[train]\n";
  o << "beta1 = " << format_double(cfg.train.beta1) << '\n';
  o << "beta2 = " << format_double(cfg.train.beta2) << '\n';
  o << "lr = " << format_double(cfg.train.lr) << '\n';
  o << "iterations = ";
  for (std::size_t i = 0; i < cfg.train.iterations.size(); ++i) o << (i ? ", " : "") << cfg.train.iterations[i];
  o << '\n';
  o << "seed = " << cfg.train.seed << '\n';
  o << "n_train = " << cfg.n_train << '\n';
  o << "threads = " << cfg.train.threads << '\n';
  o << "\n[eval]\n";
  o << "test = " << cfg.eval.test << '\n';
  o << "stage = " << cfg.eval.stage << '\n';
  o << "csv = " << cfg.eval.csv << '\n';
  o << "summary = " << cfg.eval.summary << '\n';
  return o.str();
}

}  // namespace mlasdi
