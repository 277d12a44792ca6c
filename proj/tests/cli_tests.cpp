// End-to-end checks of the command-line tool: exit codes, output formats,
// and reproducibility.  argv[1] is the tool binary, argv[2] the bundled
// data directory.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

namespace fs = std::filesystem;

namespace {

int failures = 0;

void check(bool ok, const std::string& what) {
  std::printf("%s %s\n", ok ? "[ok]  " : "[FAIL]", what.c_str());
  if (!ok) ++failures;
}

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunResult run(const std::string& cmd, const fs::path& scratch) {
  const fs::path out = scratch / "stdout.txt";
  const fs::path err = scratch / "stderr.txt";
  const std::string full = cmd + " > " + out.string() + " 2> " + err.string();
  const int status = std::system(full.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    fields.push_back(cur);
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: cli_tests <mbp-binary> <data-dir>\n");
    return 2;
  }
  const std::string mbp = argv[1];
  const fs::path data = argv[2];
  const fs::path scratch = fs::temp_directory_path() / ("mbp_cli_" + std::to_string(getpid()));
  fs::create_directories(scratch);

  const std::string model = (data / "eyam_sir.model").string();
  const std::string eyam = (data / "eyam.csv").string();

  {
    const fs::path outdir = scratch / "full";
    auto r = run(mbp + " transprob " + model + " --from S=100,I=1,R=0 --full --time 1" +
                     " --outdir " + outdir.string(),
                 scratch);
    check(r.exit_code == 0, "transprob --full exits 0");
    const auto rows = parse_csv(slurp(outdir / "transprob.csv"));
    double total = 0.0;
    for (std::size_t i = 1; i < rows.size(); ++i) total += std::stod(rows[i].back());
    check(std::abs(total - 1.0) < 1e-8, "full lattice probabilities sum to one");
    check(fs::exists(outdir / "manifest.json"), "manifest written");
  }

  {
    auto r = run(mbp + " transprob " + model + " --from S=100,I=1,R=0 --full --time 0" +
                     " --outdir " + (scratch / "t0").string(),
                 scratch);
    check(r.exit_code == 2, "zero time rejected with exit 2");
    r = run(mbp + " transprob " + model + " --from S=-3,I=1,R=0 --full --time 1" +
                " --outdir " + (scratch / "neg").string(),
            scratch);
    check(r.exit_code == 2, "negative count rejected with exit 2");
  }

  {
    auto r = run(mbp + " loglik " + model + " " + eyam + " --outdir " +
                     (scratch / "ll").string(),
                 scratch);
    check(r.exit_code == 0, "loglik exits 0");
    const auto rows = parse_csv(r.out);
    check(rows.size() == 2 && rows[0][0] == "loglik", "loglik prints a csv row");
    const double value = std::stod(rows[1][0]);
    check(std::abs(value - -41.651214) < 1e-4, "loglik value matches the engine");

    r = run(mbp + " loglik " + model + " " + eyam + " --grad --outdir " +
                (scratch / "llg").string(),
            scratch);
    const auto grows = parse_csv(r.out);
    check(grows[0].size() == 3 && grows[1].size() == 3, "gradient columns appended");
  }

  {
    // non-monotone times reported with a line number
    const fs::path bad = scratch / "bad.csv";
    std::ofstream(bad) << "time,S,I,R\n0,10,2,0\n0,9,3,0\n";
    auto r = run(mbp + " loglik " + model + " " + bad.string() + " --outdir " +
                     (scratch / "bad").string(),
                 scratch);
    check(r.exit_code == 2, "non-monotone times exit 2");
    check(r.err.find(":3:") != std::string::npos, "error names the offending line");
  }

  {
    const fs::path cfg = scratch / "fit.cfg";
    std::ofstream(cfg) << "iterations = 400\nburn_in = 100\nseed = 5\n"
                       << "proposal_scale = 0.1 0.1\n";
    const fs::path out1 = scratch / "fit1";
    const fs::path out2 = scratch / "fit2";
    auto r = run(mbp + " fit rwm " + model + " " + eyam + " --config " + cfg.string() +
                     " --outdir " + out1.string(),
                 scratch);
    check(r.exit_code == 0, "fit rwm exits 0");
    run(mbp + " fit rwm " + model + " " + eyam + " --config " + cfg.string() +
            " --outdir " + out2.string(),
        scratch);
    check(slurp(out1 / "chain.csv") == slurp(out2 / "chain.csv"),
          "fixed seed reproduces the chain file byte for byte");
    const auto summary = parse_csv(slurp(out1 / "summary.csv"));
    check(summary.size() == 3 && summary[0][0] == "parameter", "summary has two parameter rows");

    // replay from the manifest reproduces outputs
    const fs::path out3 = scratch / "fit3";
    fs::create_directories(out3);
    fs::copy_file(out1 / "manifest.json", out3 / "m.json");
    const std::string stash = slurp(out1 / "chain.csv");
    r = run(mbp + " replay " + (out3 / "m.json").string(), scratch);
    check(r.exit_code == 0, "replay exits 0");
    check(slurp(out1 / "chain.csv") == stash, "replay reproduces the chain byte for byte");

    const fs::path badcfg = scratch / "bad.cfg";
    std::ofstream(badcfg) << "iterations = 100\nburn_in = 10\nwalkers = 7\n";
    r = run(mbp + " fit rwm " + model + " " + eyam + " --config " + badcfg.string() +
                " --outdir " + (scratch / "fitbad").string(),
            scratch);
    check(r.exit_code == 2, "unknown config key exits 2");
    check(r.err.find("walkers") != std::string::npos, "offending key is named");
  }

  {
    const fs::path out1 = scratch / "sim1";
    const fs::path out2 = scratch / "sim2";
    auto r = run(mbp + " simulate " + model + " --init S=20,I=2,R=0 --horizon 2" +
                     " --paths 50 --seed 11 --events --outdir " + out1.string(),
                 scratch);
    check(r.exit_code == 0, "simulate exits 0");
    run(mbp + " simulate " + model + " --init S=20,I=2,R=0 --horizon 2 --paths 50" +
            " --seed 11 --events --outdir " + out2.string(),
        scratch);
    check(slurp(out1 / "paths.csv") == slurp(out2 / "paths.csv") &&
              slurp(out1 / "events.csv") == slurp(out2 / "events.csv"),
          "simulation outputs reproduce byte for byte");
  }

  {
    auto r = run(mbp + " oracle-check " + model + " --from S=30,I=3,R=0 --time 0.5" +
                     " --tol 1e-8 --outdir " + (scratch / "oracle").string(),
                 scratch);
    check(r.exit_code == 0, "oracle-check passes at 1e-8");
  }

  {
    // two-unit hierarchical run plus the missing-metadata error path
    const fs::path dir = scratch / "units";
    fs::create_directories(dir);
    std::ofstream(dir / "a.csv") << "time,S,I,R\n0,25,NA,NA\n1,20,NA,NA\n2,17,NA,NA\n";
    std::ofstream(dir / "a.meta") << "population = 30\ninitial_infected = 5\n";
    std::ofstream(dir / "b.csv") << "time,S,I,R\n0,26,NA,NA\n1,23,NA,NA\n2,20,NA,NA\n";
    std::ofstream(dir / "b.meta") << "population = 30\ninitial_infected = 4\n";
    const fs::path cfg = scratch / "hier.cfg";
    std::ofstream(cfg) << "t0 = 1\niterations = 80\nburn_in = 20\nseed = 7\n";
    auto r = run(mbp + " hier " + dir.string() + " --config " + cfg.string() +
                     " --outdir " + (scratch / "hier").string(),
                 scratch);
    check(r.exit_code == 0, "hier exits 0");
    check(fs::exists(scratch / "hier" / "units.csv") &&
              fs::exists(scratch / "hier" / "r0_paths.csv") &&
              fs::exists(scratch / "hier" / "hyper.csv"),
          "hier writes unit, reproduction-number and hyperparameter tables");

    fs::remove(dir / "b.meta");
    r = run(mbp + " hier " + dir.string() + " --config " + cfg.string() + " --outdir " +
                (scratch / "hier2").string(),
            scratch);
    check(r.exit_code == 2, "missing population metadata exits 2");
  }

  fs::remove_all(scratch);
  std::printf("%d failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}
