#ifndef MULTIBIRTH_IO_HPP
#define MULTIBIRTH_IO_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "multibirth/likelihood.hpp"
#include "multibirth/models.hpp"

namespace mbp {

inline constexpr const char* kToolVersion = "0.1.0";

// Line-oriented "key = value" files; '#' starts a comment, keys may repeat.
class KeyValueFile {
 public:
  static KeyValueFile parse(const std::string& path);
  static KeyValueFile parse_text(const std::string& text, const std::string& origin);

  bool has(const std::string& key) const;
  std::vector<std::string> values(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  long get_long(const std::string& key) const;
  std::uint64_t get_seed(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;  // whitespace-separated

  std::optional<std::string> maybe_string(const std::string& key) const;
  std::optional<double> maybe_double(const std::string& key) const;
  std::optional<long> maybe_long(const std::string& key) const;
  std::optional<std::vector<double>> maybe_doubles(const std::string& key) const;

  // Throws ParseError naming the first key that is not in the allowed list.
  void require_known(std::span<const char* const> allowed) const;
  const std::string& origin() const { return origin_; }

 private:
  std::string origin_;
  std::vector<std::pair<std::string, std::string>> entries_;  // in file order
};

// Observation CSV: header "time,<label1>,<label2>,..."; unobserved entries
// written as NA.  A sidecar "<base>.meta" file (time_unit, population,
// population_label, ...) is loaded when present.
ObservationSeries ingest_series(const std::string& csv_path);
void emit_series(const ObservationSeries& series, const std::vector<std::string>& labels,
                 const std::string& csv_path);

// Model definition file: kind, parameters, optional loop_bound, optional
// repeated "changepoint = <time> name=value ..." lines.
PiecewiseModel load_model(const std::string& path);

// Full-precision formatting used for all numeric CSV output.
std::string format_full(double x);

struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;
  std::string tool_version;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;
  std::vector<std::string> outputs;
  double wall_seconds = 0.0;
};

// Written atomically (temp file + rename).
void write_manifest(const RunManifest& manifest, const std::string& path);
RunManifest read_manifest(const std::string& path);

}  // namespace mbp

#endif
