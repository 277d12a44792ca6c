#include "multibirth/io.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "multibirth/errors.hpp"

namespace mbp {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(const std::string& origin, std::size_t line, const std::string& what) {
  if (line == 0) throw ParseError(origin + ": " + what);
  throw ParseError(origin + ":" + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& origin, std::size_t line, const std::string& text) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0' || errno == ERANGE) {
    fail(origin, line, "expected a number, got '" + text + "'");
  }
  return v;
}

long parse_long(const std::string& origin, std::size_t line, const std::string& text) {
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(text.c_str(), &end, 10);
  if (end == text.c_str() || *end != '\0' || errno == ERANGE) {
    fail(origin, line, "expected an integer, got '" + text + "'");
  }
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

}  // namespace

KeyValueFile KeyValueFile::parse(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_text(buffer.str(), path);
}

KeyValueFile KeyValueFile::parse_text(const std::string& text, const std::string& origin) {
  KeyValueFile kv;
  kv.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) fail(origin, lineno, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(origin, lineno, "empty key");
    kv.entries_.emplace_back(key, value);
  }
  return kv;
}

bool KeyValueFile::has(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return true;
  }
  return false;
}

std::vector<std::string> KeyValueFile::values(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) {
    if (k == key) out.push_back(v);
  }
  return out;
}

std::string KeyValueFile::get_string(const std::string& key) const {
  const auto all = values(key);
  if (all.empty()) throw ParseError(origin_ + ": missing key '" + key + "'");
  if (all.size() > 1) throw ParseError(origin_ + ": duplicate key '" + key + "'");
  return all[0];
}

double KeyValueFile::get_double(const std::string& key) const {
  return parse_double(origin_, 0, get_string(key));
}

long KeyValueFile::get_long(const std::string& key) const {
  return parse_long(origin_, 0, get_string(key));
}

std::uint64_t KeyValueFile::get_seed(const std::string& key) const {
  const std::string text = get_string(key);
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(text.c_str(), &end, 10);
  if (end == text.c_str() || *end != '\0' || errno == ERANGE) {
    throw ParseError(origin_ + ": key '" + key + "' is not a valid seed");
  }
  return static_cast<std::uint64_t>(v);
}

std::vector<double> KeyValueFile::get_doubles(const std::string& key) const {
  std::istringstream in(get_string(key));
  std::vector<double> out;
  std::string tok;
  while (in >> tok) out.push_back(parse_double(origin_, 0, tok));
  if (out.empty()) throw ParseError(origin_ + ": key '" + key + "' has no values");
  return out;
}

std::optional<std::string> KeyValueFile::maybe_string(const std::string& key) const {
  if (!has(key)) return std::nullopt;
  return get_string(key);
}

std::optional<double> KeyValueFile::maybe_double(const std::string& key) const {
  if (!has(key)) return std::nullopt;
  return get_double(key);
}

std::optional<long> KeyValueFile::maybe_long(const std::string& key) const {
  if (!has(key)) return std::nullopt;
  return get_long(key);
}

std::optional<std::vector<double>> KeyValueFile::maybe_doubles(const std::string& key) const {
  if (!has(key)) return std::nullopt;
  return get_doubles(key);
}

void KeyValueFile::require_known(std::span<const char* const> allowed) const {
  for (const auto& [key, value] : entries_) {
    (void)value;
    bool ok = false;
    for (const char* a : allowed) {
      if (key == a) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ParseError(origin_ + ": unknown key '" + key + "'");
  }
}

ObservationSeries ingest_series(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw ParseError("cannot open '" + csv_path + "'");

  ObservationSeries series;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> labels;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto fields = split_csv(stripped);
    if (labels.empty()) {
      if (fields.size() < 2 || fields[0] != "time") {
        fail(csv_path, lineno, "header must be 'time,<label1>,<label2>,...'");
      }
      labels.assign(fields.begin() + 1, fields.end());
      continue;
    }
    if (fields.size() != labels.size() + 1) {
      fail(csv_path, lineno, "expected " + std::to_string(labels.size() + 1) + " fields");
    }
    const double t = parse_double(csv_path, lineno, fields[0]);
    if (!series.times.empty() && !(t > series.times.back())) {
      fail(csv_path, lineno, "observation times must be strictly increasing");
    }
    std::vector<std::optional<long>> row;
    for (std::size_t c = 1; c < fields.size(); ++c) {
      if (fields[c] == "NA") {
        row.push_back(std::nullopt);
      } else {
        const long v = parse_long(csv_path, lineno, fields[c]);
        if (v < 0) fail(csv_path, lineno, "counts must be nonnegative");
        row.push_back(v);
      }
    }
    series.times.push_back(t);
    series.counts.push_back(std::move(row));
  }
  if (series.times.empty()) throw ParseError(csv_path + ": no observation rows");

  // Optional sidecar metadata.
  std::string meta_path = csv_path;
  const std::size_t dot = meta_path.rfind('.');
  if (dot != std::string::npos) meta_path.erase(dot);
  meta_path += ".meta";
  if (std::ifstream probe(meta_path); probe) {
    const KeyValueFile meta = KeyValueFile::parse(meta_path);
    static constexpr const char* allowed[] = {"time_unit", "population", "population_label",
                                              "initial_infected", "initial_removed"};
    meta.require_known(allowed);
    if (auto u = meta.maybe_string("time_unit")) series.time_unit = *u;
    if (auto p = meta.maybe_long("population")) series.population_total = *p;
    if (auto l = meta.maybe_string("population_label")) series.population_label = *l;
  }

  // Fully observed rows of a closed population must agree with the total.
  if (series.population_total) {
    for (std::size_t r = 0; r < series.rows(); ++r) {
      long sum = 0;
      bool full = true;
      for (const auto& c : series.counts[r]) {
        if (!c) {
          full = false;
          break;
        }
        sum += *c;
      }
      if (full && sum != *series.population_total) {
        throw ParseError(csv_path + ": row " + std::to_string(r + 1) + " sums to " +
                         std::to_string(sum) + ", expected " +
                         std::to_string(*series.population_total));
      }
    }
  }
  return series;
}

void emit_series(const ObservationSeries& series, const std::vector<std::string>& labels,
                 const std::string& csv_path) {
  std::ofstream out(csv_path);
  if (!out) throw ParseError("cannot write '" + csv_path + "'");
  out << "time";
  for (const auto& l : labels) out << "," << l;
  out << "\n";
  for (std::size_t r = 0; r < series.rows(); ++r) {
    out << format_full(series.times[r]);
    for (const auto& c : series.counts[r]) {
      if (c) {
        out << "," << *c;
      } else {
        out << ",NA";
      }
    }
    out << "\n";
  }
}

PiecewiseModel load_model(const std::string& path) {
  const KeyValueFile kv = KeyValueFile::parse(path);
  static constexpr const char* allowed[] = {"kind",  "beta",  "gamma",      "kappa", "nu",
                                            "alpha", "omega", "eta",        "loop_bound",
                                            "changepoint"};
  kv.require_known(allowed);
  const std::string kind = kv.get_string("kind");
  std::map<std::string, double> params;
  for (const char* p : {"beta", "gamma", "kappa", "nu", "alpha", "omega", "eta"}) {
    if (kv.has(p)) params[p] = kv.get_double(p);
  }
  std::optional<int> loop_bound;
  if (auto lb = kv.maybe_long("loop_bound")) loop_bound = static_cast<int>(*lb);

  PiecewiseModel model{builtin_model(kind, params, loop_bound), {}};
  for (const std::string& cp : kv.values("changepoint")) {
    std::istringstream in(cp);
    PiecewiseModel::ChangePoint change;
    if (!(in >> change.time)) {
      throw ParseError(path + ": changepoint must start with a time");
    }
    std::string tok;
    while (in >> tok) {
      const std::size_t eq = tok.find('=');
      if (eq == std::string::npos) {
        throw ParseError(path + ": changepoint assignments must be name=value");
      }
      change.assignments.emplace_back(tok.substr(0, eq),
                                      parse_double(path, 0, tok.substr(eq + 1)));
    }
    if (change.assignments.empty()) {
      throw ParseError(path + ": changepoint has no assignments");
    }
    model.change_points.push_back(std::move(change));
  }
  std::sort(model.change_points.begin(), model.change_points.end(),
            [](const auto& a, const auto& b) { return a.time < b.time; });
  return model;
}

std::string format_full(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_manifest(const RunManifest& manifest, const std::string& path) {
  nlohmann::json j;
  j["command"] = manifest.command;
  j["arguments"] = manifest.arguments;
  j["tool_version"] = manifest.tool_version;
  j["seed"] = manifest.seed;
  j["inputs"] = manifest.inputs;
  j["outputs"] = manifest.outputs;
  j["wall_seconds"] = manifest.wall_seconds;
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw ParseError("cannot write '" + tmp + "'");
    out << j.dump(2) << "\n";
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw ParseError("cannot move manifest into place at '" + path + "'");
  }
}

RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  RunManifest manifest;
  try {
    manifest.command = j.at("command").get<std::string>();
    manifest.arguments = j.at("arguments").get<std::vector<std::string>>();
    manifest.tool_version = j.at("tool_version").get<std::string>();
    manifest.seed = j.at("seed").get<std::uint64_t>();
    manifest.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    manifest.outputs = j.at("outputs").get<std::vector<std::string>>();
    manifest.wall_seconds = j.at("wall_seconds").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return manifest;
}

}  // namespace mbp
