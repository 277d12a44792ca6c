#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include <doctest.h>

#include "multibirth/errors.hpp"
#include "multibirth/io.hpp"
#include "multibirth/rng.hpp"

using namespace mbp;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("io");

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("mbp_io_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name, const std::string& contents) const {
    const fs::path p = path / name;
    std::ofstream out(p);
    out << contents;
    out.close();
    return p.string();
  }
};

}  // namespace

TEST_CASE("key value files parse comments, repeats and types") {
  const auto kv = KeyValueFile::parse_text(
      "# comment\n"
      "alpha = 1.5\n"
      "name = west # trailing\n"
      "step = 2 4 8\n"
      "step = 16\n",
      "test.cfg");
  CHECK(kv.get_double("alpha") == 1.5);
  CHECK(kv.get_string("name") == "west");
  CHECK(kv.values("step").size() == 2);
  CHECK(kv.maybe_double("missing") == std::nullopt);
  CHECK_THROWS_AS(kv.get_string("step"), ParseError);   // duplicate
  CHECK_THROWS_AS(kv.get_string("missing"), ParseError);
  CHECK_THROWS_AS(kv.get_double("name"), ParseError);

  static constexpr const char* allowed[] = {"alpha", "name"};
  try {
    kv.require_known(allowed);
    FAIL("expected a ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("malformed key value lines carry line numbers") {
  try {
    KeyValueFile::parse_text("a = 1\nbroken line\n", "cfg");
    FAIL("expected a ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("cfg:2") != std::string::npos);
  }
}

TEST_CASE("observation csv ingestion with sidecar metadata") {
  TempDir dir;
  dir.file("eyam.meta",
           "time_unit = month\npopulation = 261\npopulation_label = Eyam village\n");
  const auto csv = dir.file("eyam.csv",
                            "time,S,I,R\n"
                            "0,254,7,0\n"
                            "0.5,235,14,12\n"
                            "1,201,22,38\n"
                            "1.5,153,29,79\n"
                            "2,121,20,120\n"
                            "2.5,108,8,145\n"
                            "3,97,8,156\n"
                            "4,83,0,178\n");
  const auto series = ingest_series(csv);
  CHECK(series.rows() == 8);
  CHECK(series.population_total == 261);
  CHECK(series.time_unit == "month");
  CHECK(series.fully_observed());
  CHECK(series.state_at(0).total() == 261);
  CHECK(series.state_at(7).counts[0] == 83);
}

TEST_CASE("na entries mark compartments unobserved") {
  TempDir dir;
  const auto csv = dir.file("u.csv",
                            "time,S,I,R\n"
                            "0,20,2,0\n"
                            "1,NA,3,1\n");
  const auto series = ingest_series(csv);
  CHECK(!series.fully_observed());
  CHECK(!series.counts[1][0]);
  CHECK(series.counts[1][1] == 3);
}

TEST_CASE("ingestion errors carry the offending line") {
  TempDir dir;
  const auto bad_time = dir.file("bad1.csv", "time,S,I\n0,5,1\n0,4,2\n");
  try {
    ingest_series(bad_time);
    FAIL("expected a ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
  const auto bad_count = dir.file("bad2.csv", "time,S,I\n0,5,-1\n");
  CHECK_THROWS_AS(ingest_series(bad_count), ParseError);
  const auto bad_header = dir.file("bad3.csv", "t,S,I\n0,5,1\n");
  CHECK_THROWS_AS(ingest_series(bad_header), ParseError);
  const auto bad_fields = dir.file("bad4.csv", "time,S,I\n0,5\n");
  CHECK_THROWS_AS(ingest_series(bad_fields), ParseError);
}

TEST_CASE("closed totals are checked on fully observed rows") {
  TempDir dir;
  dir.file("u.meta", "population = 10\n");
  const auto csv = dir.file("u.csv", "time,S,I,R\n0,8,2,0\n1,7,2,2\n");
  CHECK_THROWS_AS(ingest_series(csv), ParseError);
}

TEST_CASE("series round-trip through emit and ingest") {
  TempDir dir;
  ObservationSeries series;
  series.times = {0.0, 0.5, 1.75};
  series.counts = {{10, 2, 0}, {8, std::nullopt, 1}, {7, 3, 2}};
  const auto path = (dir.path / "round.csv").string();
  emit_series(series, {"S", "I", "R"}, path);
  const auto back = ingest_series(path);
  REQUIRE(back.rows() == series.rows());
  for (std::size_t r = 0; r < series.rows(); ++r) {
    CHECK(back.times[r] == series.times[r]);
    CHECK(back.counts[r] == series.counts[r]);
  }
}

TEST_CASE("model files load builtin kinds and change points") {
  TempDir dir;
  const auto path = dir.file("m.model",
                             "kind = sir\nbeta = 0.0178\ngamma = 2.73\n"
                             "changepoint = 5 beta=0.01\n"
                             "changepoint = 9 beta=0.002 gamma=3.0\n");
  const auto model = load_model(path);
  CHECK(model.base.kind() == "sir");
  CHECK(model.base.param("beta") == 0.0178);
  REQUIRE(model.change_points.size() == 2);
  CHECK(model.at_interval(5.0, 9.0).param("beta") == 0.01);
  CHECK(model.at_interval(9.0, 10.0).param("gamma") == 3.0);

  const auto bad = dir.file("bad.model", "kind = sir\nbeta = 1\ngamma = 1\nfoo = 2\n");
  CHECK_THROWS_AS(load_model(bad), ParseError);
  const auto incomplete = dir.file("inc.model", "kind = seir\nbeta = 1\ngamma = 1\n");
  CHECK_THROWS_AS(load_model(incomplete), InvalidParam);
}

TEST_CASE("full-precision formatting round-trips doubles exactly") {
  Rng rng(55);
  for (int i = 0; i < 200; ++i) {
    const double x = (rng.uniform() - 0.5) * std::pow(10.0, rng.uniform(-12.0, 12.0));
    const double back = std::strtod(format_full(x).c_str(), nullptr);
    CHECK(back == x);
  }
}

TEST_CASE("run manifests round-trip") {
  TempDir dir;
  RunManifest manifest;
  manifest.command = "fit";
  manifest.arguments = {"fit", "hmc", "model", "data", "--config", "cfg"};
  manifest.tool_version = kToolVersion;
  manifest.seed = 42;
  manifest.inputs = {{"model", "m.model"}, {"data", "d.csv"}};
  manifest.outputs = {"chain.csv"};
  manifest.wall_seconds = 1.5;
  const auto path = (dir.path / "manifest.json").string();
  write_manifest(manifest, path);
  const auto back = read_manifest(path);
  CHECK(back.command == manifest.command);
  CHECK(back.arguments == manifest.arguments);
  CHECK(back.seed == manifest.seed);
  CHECK(back.inputs == manifest.inputs);
  CHECK(back.outputs == manifest.outputs);
}

TEST_SUITE_END();
