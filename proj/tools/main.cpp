// Command-line front end: transition probabilities, likelihoods, posterior
// sampling, hierarchical multi-unit fits, simulation, and oracle checks for
// stochastic compartmental models.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "multibirth/errors.hpp"
#include "multibirth/inference.hpp"
#include "multibirth/io.hpp"
#include "multibirth/oracles.hpp"
#include "multibirth/parallel.hpp"

namespace fs = std::filesystem;
using namespace mbp;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

StateVector parse_state(const CompartmentalModel& model, const std::string& text) {
  StateVector state;
  state.counts.assign(static_cast<std::size_t>(model.compartments()), -1);
  std::string tok;
  std::istringstream in(text);
  while (std::getline(in, tok, ',')) {
    const std::size_t eq = tok.find('=');
    if (eq == std::string::npos) {
      throw ParseError("state entries must be label=count, got '" + tok + "'");
    }
    const std::string label = tok.substr(0, eq);
    const int idx = model.compartment_index(label);
    if (idx < 0) throw ParseError("unknown compartment '" + label + "'");
    char* end = nullptr;
    const long v = std::strtol(tok.c_str() + eq + 1, &end, 10);
    if (end == tok.c_str() + eq + 1 || *end != '\0') {
      throw ParseError("bad count in '" + tok + "'");
    }
    if (v < 0) throw ParseError("compartment counts must be nonnegative");
    state.counts[static_cast<std::size_t>(idx)] = static_cast<int>(v);
  }
  for (std::size_t c = 0; c < state.counts.size(); ++c) {
    if (state.counts[c] < 0) {
      throw ParseError("state is missing compartment '" + model.labels()[c] + "'");
    }
  }
  return state;
}

void write_manifest_for(const std::string& command, const std::vector<std::string>& args,
                        std::uint64_t seed, const std::map<std::string, std::string>& inputs,
                        const std::vector<std::string>& outputs, const std::string& outdir,
                        double wall_seconds) {
  RunManifest manifest;
  manifest.command = command;
  manifest.arguments = args;
  manifest.tool_version = kToolVersion;
  manifest.seed = seed;
  manifest.inputs = inputs;
  manifest.outputs = outputs;
  manifest.wall_seconds = wall_seconds;
  write_manifest(manifest, (fs::path(outdir) / "manifest.json").string());
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  return out;
}

InversionConfig inversion_from(const KeyValueFile& kv) {
  InversionConfig cfg;
  if (auto m = kv.maybe_double("precision")) cfg.precision = *m;
  if (auto l = kv.maybe_long("max_terms")) cfg.max_terms = static_cast<int>(*l);
  if (auto r = kv.maybe_double("rel_tol")) cfg.rel_tol = *r;
  return cfg;
}

// ---------------------------------------------------------------------------

int cmd_transprob(const std::vector<std::string>& args, const std::string& model_path,
                  const std::string& from_text, const std::string& to_text, bool full,
                  double time, bool grad, std::string out_path, const std::string& outdir,
                  double rel_tol) {
  Timer timer;
  if (!(time > 0.0)) throw ParseError("--time must be > 0");
  const PiecewiseModel piecewise = load_model(model_path);
  const CompartmentalModel model = piecewise.at_interval(0.0, time);
  const StateVector from = parse_state(model, from_text);
  InversionConfig cfg;
  cfg.rel_tol = rel_tol;

  fs::create_directories(outdir);
  if (out_path.empty()) out_path = (fs::path(outdir) / "transprob.csv").string();

  if (full) {
    const auto dist = full_distribution(model, from, time, cfg);
    auto out = open_output(out_path);
    for (const auto& l : model.labels()) out << l << ",";
    out << "probability\n";
    for (const auto& [state, p] : dist) {
      for (int c : state.counts) out << c << ",";
      out << format_full(p) << "\n";
    }
  } else {
    if (to_text.empty()) throw ParseError("either --to or --full is required");
    const StateVector to = parse_state(model, to_text);
    const auto res = transition_probability(model, from, to, time, cfg, grad);
    auto out = open_output(out_path);
    for (const auto& l : model.labels()) out << l << ",";
    out << "probability";
    if (grad) {
      for (const auto& p : model.param_names()) out << ",d_" << p;
    }
    out << "\n";
    for (int c : to.counts) out << c << ",";
    out << format_full(res.probability);
    if (grad) {
      for (double dv : res.derivatives) out << "," << format_full(dv);
    }
    out << "\n";
  }
  write_manifest_for("transprob", args, 0, {{"model", model_path}}, {out_path}, outdir,
                     timer.seconds());
  return 0;
}

int cmd_loglik(const std::vector<std::string>& args, const std::string& model_path,
               const std::string& data_path, bool grad, const std::string& out_path,
               const std::string& outdir, int threads) {
  Timer timer;
  const PiecewiseModel model = load_model(model_path);
  const ObservationSeries series = ingest_series(data_path);
  const LogLikReport report = loglik(model, series, {}, grad, threads);

  std::ostringstream row;
  row << "loglik";
  if (grad && report.gradient) {
    for (const auto& p : model.base.param_names()) row << ",dlog_" << p;
  }
  row << "\n" << format_full(report.loglik);
  if (grad && report.gradient) {
    for (double g : *report.gradient) row << "," << format_full(g);
  }
  row << "\n";
  std::cout << row.str();

  fs::create_directories(outdir);
  std::vector<std::string> outputs;
  if (!out_path.empty()) {
    auto out = open_output(out_path);
    out << row.str();
    outputs.push_back(out_path);
  }
  write_manifest_for("loglik", args, 0, {{"model", model_path}, {"data", data_path}},
                     outputs, outdir, timer.seconds());
  return 0;
}

void write_chain_csv(const ChainOutput& chain, const std::string& path) {
  auto out = open_output(path);
  for (std::size_t j = 0; j < chain.names.size(); ++j) {
    out << (j ? "," : "") << chain.names[j];
  }
  out << "\n";
  for (const auto& row : chain.draws) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      out << (j ? "," : "") << format_full(row[j]);
    }
    out << "\n";
  }
}

int cmd_fit(const std::vector<std::string>& args, const std::string& sampler,
            const std::string& model_path, const std::string& data_path,
            const std::string& config_path, const std::string& outdir, int threads) {
  Timer timer;
  const PiecewiseModel piecewise = load_model(model_path);
  if (!piecewise.change_points.empty()) {
    throw ParseError("fit requires a model without change points");
  }
  const CompartmentalModel& model = piecewise.base;
  const ObservationSeries series = ingest_series(data_path);
  const KeyValueFile kv = KeyValueFile::parse(config_path);
  static constexpr const char* allowed[] = {
      "iterations", "burn_in",        "thinning",  "seed",      "step_size",
      "leapfrog_steps", "mass",       "proposal_scale", "init", "prior_mean",
      "prior_sd",   "precision",      "max_terms", "rel_tol"};
  kv.require_known(allowed);

  const std::size_t dim = model.param_names().size();
  std::vector<double> init;
  if (auto iv = kv.maybe_doubles("init")) {
    init = *iv;
  } else {
    for (double p : model.params()) init.push_back(std::log(p));
  }
  if (init.size() != dim) throw ParseError("init length must match the parameter count");
  std::vector<double> prior_mean = kv.maybe_doubles("prior_mean").value_or(
      std::vector<double>(dim, 0.0));
  std::vector<double> prior_sd = kv.maybe_doubles("prior_sd").value_or(
      std::vector<double>(dim, 100.0));

  LogParamPosterior posterior(model, series, prior_mean, prior_sd, inversion_from(kv),
                              threads);
  const std::uint64_t seed = kv.has("seed") ? kv.get_seed("seed") : 1;

  ChainOutput chain;
  if (sampler == "hmc") {
    HMCConfig cfg;
    cfg.iterations = static_cast<int>(kv.maybe_long("iterations").value_or(10000));
    cfg.burn_in = static_cast<int>(kv.maybe_long("burn_in").value_or(2000));
    cfg.thinning = static_cast<int>(kv.maybe_long("thinning").value_or(1));
    cfg.step_size = kv.maybe_double("step_size").value_or(0.05);
    cfg.leapfrog_steps = static_cast<int>(kv.maybe_long("leapfrog_steps").value_or(20));
    if (auto m = kv.maybe_doubles("mass")) cfg.mass = *m;
    cfg.seed = seed;
    cfg.init = init;
    chain = hmc_sample([&posterior](std::span<const double> q) { return posterior.logpost_grad(q); },
                       cfg, posterior.names());
  } else if (sampler == "rwm") {
    RWMConfig cfg;
    cfg.iterations = static_cast<int>(kv.maybe_long("iterations").value_or(10000));
    cfg.burn_in = static_cast<int>(kv.maybe_long("burn_in").value_or(2000));
    cfg.thinning = static_cast<int>(kv.maybe_long("thinning").value_or(1));
    cfg.proposal_scale = kv.maybe_doubles("proposal_scale").value_or(
        std::vector<double>(dim, 0.1));
    cfg.seed = seed;
    cfg.init = init;
    chain = rw_metropolis_sample(
        [&posterior](std::span<const double> q) { return posterior.logpost(q); }, cfg,
        posterior.names());
  } else {
    throw ParseError("sampler must be 'hmc' or 'rwm'");
  }

  fs::create_directories(outdir);
  const std::string chain_path = (fs::path(outdir) / "chain.csv").string();
  write_chain_csv(chain, chain_path);

  const std::string summary_path = (fs::path(outdir) / "summary.csv").string();
  {
    auto out = open_output(summary_path);
    out << "parameter,mean,ci_lower,ci_upper,ess,acceptance_rate\n";
    for (std::size_t j = 0; j < dim; ++j) {
      std::vector<double> natural(chain.draws.size());
      for (std::size_t i = 0; i < chain.draws.size(); ++i) {
        natural[i] = std::exp(chain.draws[i][j]);
      }
      double mean = 0.0;
      for (double x : natural) mean += x;
      mean /= static_cast<double>(natural.size());
      out << model.param_names()[j] << "," << format_full(mean) << ","
          << format_full(quantile(natural, 0.025)) << ","
          << format_full(quantile(natural, 0.975)) << "," << format_full(chain.ess[j])
          << "," << format_full(chain.acceptance_rate) << "\n";
    }
  }
  write_manifest_for("fit", args, seed,
                     {{"model", model_path}, {"data", data_path}, {"config", config_path}},
                     {chain_path, summary_path}, outdir, timer.seconds());
  return 0;
}

int cmd_hier(const std::vector<std::string>& args, const std::string& data_dir,
             const std::string& config_path, const std::string& outdir, int threads) {
  Timer timer;
  const KeyValueFile kv = KeyValueFile::parse(config_path);
  static constexpr const char* allowed[] = {
      "t0",   "iterations", "burn_in",        "thinning",        "seed",
      "proposal_scale", "hyper_mean_sd", "hyper_var_shape", "hyper_var_rate",
      "precision", "max_terms", "rel_tol"};
  kv.require_known(allowed);

  HierConfig cfg;
  cfg.t0 = kv.get_double("t0");
  cfg.iterations = static_cast<int>(kv.maybe_long("iterations").value_or(4000));
  cfg.burn_in = static_cast<int>(kv.maybe_long("burn_in").value_or(1000));
  cfg.thinning = static_cast<int>(kv.maybe_long("thinning").value_or(1));
  cfg.seed = kv.has("seed") ? kv.get_seed("seed") : 1;
  if (auto ps = kv.maybe_doubles("proposal_scale")) {
    if (ps->size() != 3) throw ParseError("proposal_scale needs 3 entries");
    cfg.proposal_scale = {(*ps)[0], (*ps)[1], (*ps)[2]};
  }
  cfg.hyper_mean_sd = kv.maybe_double("hyper_mean_sd").value_or(10.0);
  cfg.hyper_var_shape = kv.maybe_double("hyper_var_shape").value_or(1e-3);
  cfg.hyper_var_rate = kv.maybe_double("hyper_var_rate").value_or(1e-3);
  cfg.threads = threads;
  cfg.inversion = inversion_from(kv);

  // One unit per CSV file, ordered by name for reproducibility.
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(data_dir)) {
    if (entry.path().extension() == ".csv") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ParseError("no unit CSV files in '" + data_dir + "'");

  std::vector<HierUnit> units;
  std::map<std::string, std::string> inputs = {{"config", config_path}};
  for (const auto& file : files) {
    const ObservationSeries series = ingest_series(file);
    if (!series.population_total) {
      throw ParseError(file + ": unit metadata must declare the population total");
    }
    std::string meta_path = file;
    meta_path.erase(meta_path.rfind('.'));
    meta_path += ".meta";
    const KeyValueFile meta = KeyValueFile::parse(meta_path);
    HierUnit unit;
    unit.name = fs::path(file).stem().string();
    unit.population = *series.population_total;
    unit.initial_infected = static_cast<int>(meta.maybe_long("initial_infected").value_or(1));
    unit.initial_removed = static_cast<int>(meta.maybe_long("initial_removed").value_or(0));
    unit.times = series.times;
    const long s0 = unit.population - unit.initial_infected - unit.initial_removed;
    for (std::size_t r = 0; r < series.rows(); ++r) {
      const auto& s_obs = series.counts[r][0];
      if (!s_obs) throw ParseError(file + ": susceptible column must be observed");
      unit.cum_infections.push_back(s0 - *s_obs);
    }
    inputs.emplace("unit:" + unit.name, file);
    units.push_back(std::move(unit));
  }

  const HierOutput out = hierarchical_gibbs(units, cfg);

  fs::create_directories(outdir);
  const std::string chain_path = (fs::path(outdir) / "chain.csv").string();
  write_chain_csv(out.chain, chain_path);

  const std::string units_path = (fs::path(outdir) / "units.csv").string();
  {
    auto f = open_output(units_path);
    f << "unit,delta_mean,delta_ci_lower,delta_ci_upper,p_delta_lt_1\n";
    for (std::size_t p = 0; p < units.size(); ++p) {
      const auto ld = out.chain.column(3 * p + 1);
      std::vector<double> delta(ld.size());
      double below = 0.0;
      for (std::size_t i = 0; i < ld.size(); ++i) {
        delta[i] = std::exp(ld[i]);
        if (ld[i] < 0.0) below += 1.0;
      }
      double mean = 0.0;
      for (double x : delta) mean += x;
      mean /= static_cast<double>(delta.size());
      f << units[p].name << "," << format_full(mean) << ","
        << format_full(quantile(delta, 0.025)) << "," << format_full(quantile(delta, 0.975))
        << "," << format_full(below / static_cast<double>(ld.size())) << "\n";
    }
  }

  const std::string hyper_path = (fs::path(outdir) / "hyper.csv").string();
  {
    auto f = open_output(hyper_path);
    f << "parameter,mean,ci_lower,ci_upper\n";
    for (std::size_t j = out.hyper_offset; j < out.chain.names.size(); ++j) {
      const auto col = out.chain.column(j);
      double mean = 0.0;
      for (double x : col) mean += x;
      mean /= static_cast<double>(col.size());
      f << out.chain.names[j] << "," << format_full(mean) << ","
        << format_full(quantile(col, 0.025)) << "," << format_full(quantile(col, 0.975))
        << "\n";
    }
  }

  // Plot-ready posterior-mean reproduction number paths.
  const std::string r0_path = (fs::path(outdir) / "r0_paths.csv").string();
  {
    auto f = open_output(r0_path);
    f << "unit,time,r0_mean\n";
    for (std::size_t p = 0; p < units.size(); ++p) {
      const auto lr = out.chain.column(3 * p);
      const auto ld = out.chain.column(3 * p + 1);
      for (double t : units[p].times) {
        double mean = 0.0;
        for (std::size_t i = 0; i < lr.size(); ++i) {
          mean += std::exp(lr[i] + (t >= cfg.t0 ? ld[i] : 0.0));
        }
        mean /= static_cast<double>(lr.size());
        f << units[p].name << "," << format_full(t) << "," << format_full(mean) << "\n";
      }
    }
  }

  const std::string latents_path = (fs::path(outdir) / "latents.csv").string();
  {
    auto f = open_output(latents_path);
    f << "unit,time,removals_mean\n";
    for (std::size_t p = 0; p < units.size(); ++p) {
      for (std::size_t j = 0; j < units[p].times.size(); ++j) {
        f << units[p].name << "," << format_full(units[p].times[j]) << ","
          << format_full(out.latent_mean[p][j]) << "\n";
      }
    }
  }

  write_manifest_for("hier", args, cfg.seed, inputs,
                     {chain_path, units_path, hyper_path, r0_path, latents_path}, outdir,
                     timer.seconds());
  return 0;
}

int cmd_simulate(const std::vector<std::string>& args, const std::string& model_path,
                 const std::string& init_text, double horizon, long n_paths,
                 std::uint64_t seed, bool events, const std::string& outdir, int threads) {
  Timer timer;
  if (!(horizon > 0.0)) throw ParseError("--horizon must be > 0");
  if (n_paths < 1) throw ParseError("--paths must be >= 1");
  const PiecewiseModel piecewise = load_model(model_path);
  const CompartmentalModel model = piecewise.at_interval(0.0, horizon);
  const StateVector init = parse_state(model, init_text);

  std::vector<SimulationPath> paths(static_cast<std::size_t>(n_paths));
  parallel_for(static_cast<std::size_t>(n_paths), threads, [&](std::size_t i) {
    paths[i] = gillespie_simulate(model, init, horizon, derive_seed(seed, i));
  });

  fs::create_directories(outdir);
  const std::string final_path = (fs::path(outdir) / "paths.csv").string();
  {
    auto out = open_output(final_path);
    out << "path,time";
    for (const auto& l : model.labels()) out << "," << l;
    out << "\n";
    for (std::size_t i = 0; i < paths.size(); ++i) {
      out << i << "," << format_full(horizon);
      for (int c : paths[i].final_state().counts) out << "," << c;
      out << "\n";
    }
  }
  std::vector<std::string> outputs = {final_path};
  if (events) {
    const std::string events_path = (fs::path(outdir) / "events.csv").string();
    auto out = open_output(events_path);
    out << "path,event,time,channel";
    for (const auto& l : model.labels()) out << "," << l;
    out << "\n";
    for (std::size_t i = 0; i < paths.size(); ++i) {
      for (std::size_t e = 0; e < paths[i].times.size(); ++e) {
        out << i << "," << e << "," << format_full(paths[i].times[e]) << ","
            << paths[i].channels[e];
        for (int c : paths[i].states[e + 1].counts) out << "," << c;
        out << "\n";
      }
    }
    outputs.push_back(events_path);
  }
  write_manifest_for("simulate", args, seed, {{"model", model_path}}, outputs, outdir,
                     timer.seconds());
  return 0;
}

int cmd_oracle_check(const std::vector<std::string>& args, const std::string& model_path,
                     const std::string& from_text, double time, double tol,
                     const std::string& outdir) {
  Timer timer;
  if (!(time > 0.0)) throw ParseError("--time must be > 0");
  const PiecewiseModel piecewise = load_model(model_path);
  const CompartmentalModel model = piecewise.at_interval(0.0, time);
  const StateVector from = parse_state(model, from_text);

  const auto dp = full_distribution(model, from, time);
  const auto uni = uniformization_probs(model, from, time, 2'000'000, std::min(tol, 1e-10));

  std::map<std::vector<int>, std::pair<double, double>> merged;
  for (const auto& [state, p] : dp) merged[state.counts].first = p;
  for (std::size_t i = 0; i < uni.states.size(); ++i) {
    merged[uni.states[i].counts].second = uni.probabilities[i];
  }
  double max_abs = 0.0, l1 = 0.0;
  for (const auto& [state, pq] : merged) {
    const double diff = std::abs(pq.first - pq.second);
    max_abs = std::max(max_abs, diff);
    l1 += diff;
  }

  fs::create_directories(outdir);
  const std::string out_path = (fs::path(outdir) / "oracle.csv").string();
  {
    auto out = open_output(out_path);
    for (const auto& l : model.labels()) out << l << ",";
    out << "lattice,uniformization,abs_diff\n";
    for (const auto& [state, pq] : merged) {
      for (int c : state) out << c << ",";
      out << format_full(pq.first) << "," << format_full(pq.second) << ","
          << format_full(std::abs(pq.first - pq.second)) << "\n";
    }
  }
  std::printf("states=%zu max_abs_diff=%.3e l1=%.3e poisson_terms=%d\n", merged.size(),
              max_abs, l1, uni.poisson_terms);
  write_manifest_for("oracle-check", args, 0, {{"model", model_path}}, {out_path}, outdir,
                     timer.seconds());
  if (max_abs >= tol) {
    std::fprintf(stderr, "oracle disagreement %.3e exceeds tolerance %.3e\n", max_abs, tol);
    return 3;
  }
  return 0;
}

int dispatch(const std::vector<std::string>& args);

int cmd_replay(const std::string& manifest_path) {
  const RunManifest manifest = read_manifest(manifest_path);
  return dispatch(manifest.arguments);
}

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"transition probabilities and Bayesian inference for stochastic "
               "compartmental epidemic models"};
  app.require_subcommand(1);

  std::string model_path, data_path, config_path, from_text, to_text, init_text;
  std::string outdir = ".", out_path, data_dir, sampler, manifest_path;
  double time = 0.0, horizon = 0.0, tol = 1e-8, rel_tol = 1e-10;
  long n_paths = 1;
  std::uint64_t seed = 1;
  bool full = false, grad = false, events = false;
  int threads = 1;

  auto* transprob = app.add_subcommand("transprob", "transition probabilities");
  transprob->add_option("model", model_path)->required();
  transprob->add_option("--from", from_text)->required();
  transprob->add_option("--to", to_text);
  transprob->add_flag("--full", full);
  transprob->add_option("--time", time)->required();
  transprob->add_flag("--grad", grad);
  transprob->add_option("--out", out_path);
  transprob->add_option("--outdir", outdir);
  transprob->add_option("--rel-tol", rel_tol);

  auto* loglik_cmd = app.add_subcommand("loglik", "log likelihood of a series");
  loglik_cmd->add_option("model", model_path)->required();
  loglik_cmd->add_option("data", data_path)->required();
  loglik_cmd->add_flag("--grad", grad);
  loglik_cmd->add_option("--out", out_path);
  loglik_cmd->add_option("--outdir", outdir);
  loglik_cmd->add_option("--threads", threads);

  auto* fit = app.add_subcommand("fit", "posterior sampling");
  fit->add_option("sampler", sampler)->required();
  fit->add_option("model", model_path)->required();
  fit->add_option("data", data_path)->required();
  fit->add_option("--config", config_path)->required();
  fit->add_option("--outdir", outdir);
  fit->add_option("--threads", threads);

  auto* hier = app.add_subcommand("hier", "hierarchical multi-unit fit");
  hier->add_option("datadir", data_dir)->required();
  hier->add_option("--config", config_path)->required();
  hier->add_option("--outdir", outdir);
  hier->add_option("--threads", threads);

  auto* simulate = app.add_subcommand("simulate", "exact stochastic simulation");
  simulate->add_option("model", model_path)->required();
  simulate->add_option("--init", init_text)->required();
  simulate->add_option("--horizon", horizon)->required();
  simulate->add_option("--paths", n_paths);
  simulate->add_option("--seed", seed);
  simulate->add_flag("--events", events);
  simulate->add_option("--outdir", outdir);
  simulate->add_option("--threads", threads);

  auto* oracle = app.add_subcommand("oracle-check", "lattice engine vs uniformization");
  oracle->add_option("model", model_path)->required();
  oracle->add_option("--from", from_text)->required();
  oracle->add_option("--time", time)->required();
  oracle->add_option("--tol", tol);
  oracle->add_option("--outdir", outdir);

  auto* replay = app.add_subcommand("replay", "re-run a recorded manifest");
  replay->add_option("manifest", manifest_path)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ofstream null;
    const int code = app.exit(e, null, std::cerr);
    return code == 0 ? 0 : 2;
  }

  if (transprob->parsed()) {
    return cmd_transprob(args, model_path, from_text, to_text, full, time, grad, out_path,
                         outdir, rel_tol);
  }
  if (loglik_cmd->parsed()) {
    return cmd_loglik(args, model_path, data_path, grad, out_path, outdir, threads);
  }
  if (fit->parsed()) {
    return cmd_fit(args, sampler, model_path, data_path, config_path, outdir, threads);
  }
  if (hier->parsed()) {
    return cmd_hier(args, data_dir, config_path, outdir, threads);
  }
  if (simulate->parsed()) {
    return cmd_simulate(args, model_path, init_text, horizon, n_paths, seed, events, outdir,
                        threads);
  }
  if (oracle->parsed()) {
    return cmd_oracle_check(args, model_path, from_text, time, tol, outdir);
  }
  if (replay->parsed()) {
    return cmd_replay(manifest_path);
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return dispatch(args);
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const InvalidParam& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const InvalidTime& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const UnboundedLattice& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected failure: %s\n", e.what());
    return 3;
  }
}
