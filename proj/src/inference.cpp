#include "multibirth/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "multibirth/errors.hpp"
#include "multibirth/parallel.hpp"
#include "multibirth/rng.hpp"

namespace mbp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kDivergenceThreshold = 1000.0;
constexpr double kLogParamGuard = 60.0;  // |log theta| beyond this is treated as density 0

void validate_common(int iterations, int burn_in, int thinning, std::size_t dim,
                     std::size_t init_size) {
  if (iterations <= 0) throw InvalidParam("iterations must be positive");
  if (burn_in < 0 || burn_in >= iterations) {
    throw InvalidParam("burn-in must be nonnegative and smaller than iterations");
  }
  if (thinning < 1) throw InvalidParam("thinning must be >= 1");
  if (dim == 0) throw InvalidParam("sampler dimension must be positive");
  if (init_size != dim) throw InvalidParam("init vector length mismatch");
}

std::vector<std::string> default_names(std::size_t dim, const std::vector<std::string>& given) {
  if (!given.empty()) return given;
  std::vector<std::string> names(dim);
  for (std::size_t j = 0; j < dim; ++j) names[j] = "q" + std::to_string(j);
  return names;
}

}  // namespace

std::vector<double> ChainOutput::column(std::size_t j) const {
  std::vector<double> col(draws.size());
  for (std::size_t i = 0; i < draws.size(); ++i) col[i] = draws[i][j];
  return col;
}

double normal_density(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return std::exp(-0.5 * z * z) / (sd * 2.5066282746310005024);
}

double quantile(std::span<const double> draws, double p) {
  if (draws.empty()) throw InvalidParam("quantile of an empty sample");
  std::vector<double> sorted(draws.begin(), draws.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

double ess_estimate(std::span<const double> draws) {
  const std::size_t n = draws.size();
  if (n < 4) return static_cast<double>(n);
  double mean = 0.0;
  for (double x : draws) mean += x;
  mean /= static_cast<double>(n);
  const std::size_t max_lag = std::min<std::size_t>(n - 2, 2000);
  std::vector<double> acov(max_lag + 1, 0.0);
  for (std::size_t lag = 0; lag <= max_lag; ++lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) {
      s += (draws[i] - mean) * (draws[i + lag] - mean);
    }
    acov[lag] = s / static_cast<double>(n);
  }
  if (acov[0] <= 0.0) return static_cast<double>(n);
  // Geyer's initial positive sequence over lag pairs.
  double tau = 0.0;
  for (std::size_t m = 0; 2 * m + 1 <= max_lag; ++m) {
    const double pair = acov[2 * m] + acov[2 * m + 1];
    if (pair <= 0.0) break;
    tau += 2.0 * pair;
  }
  tau = tau / acov[0] - 1.0;
  if (tau < 1e-12) tau = 1e-12;
  return static_cast<double>(n) / tau;
}

ChainOutput hmc_sample(const LogDensityGrad& target, const HMCConfig& cfg,
                       std::vector<std::string> names) {
  const std::size_t dim = cfg.init.size();
  validate_common(cfg.iterations, cfg.burn_in, cfg.thinning, dim, cfg.init.size());
  if (!(cfg.step_size > 0.0)) throw InvalidParam("step size must be positive");
  if (cfg.leapfrog_steps < 1) throw InvalidParam("leapfrog steps must be positive");
  std::vector<double> mass = cfg.mass;
  if (mass.empty()) mass.assign(dim, 1.0);
  if (mass.size() != dim) throw InvalidParam("mass vector length mismatch");
  for (double m : mass) {
    if (!(m > 0.0)) throw InvalidParam("mass entries must be positive");
  }

  Rng rng(cfg.seed);
  std::vector<double> q = cfg.init;
  auto [lp, grad] = target(q);
  if (!std::isfinite(lp)) throw BadInit("initial point has non-finite log posterior");
  double potential = -lp;
  std::vector<double> grad_potential(dim);
  for (std::size_t j = 0; j < dim; ++j) grad_potential[j] = -grad[j];

  ChainOutput out;
  out.names = default_names(dim, names);
  out.seed = cfg.seed;
  long accepted = 0;

  std::vector<double> p(dim), q_star(dim), gp_star(dim);
  const double eps = cfg.step_size;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    double kinetic = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      p[j] = std::sqrt(mass[j]) * rng.normal();
      kinetic += p[j] * p[j] / (2.0 * mass[j]);
    }
    const double h_current = potential + kinetic;

    q_star = q;
    gp_star = grad_potential;
    double pot_star = potential;
    bool exploded = false;
    for (int step = 0; step < cfg.leapfrog_steps; ++step) {
      for (std::size_t j = 0; j < dim; ++j) p[j] -= 0.5 * eps * gp_star[j];
      for (std::size_t j = 0; j < dim; ++j) q_star[j] += eps * p[j] / mass[j];
      auto [lp_star, grad_star] = target(q_star);
      if (!std::isfinite(lp_star)) {
        exploded = true;
        break;
      }
      pot_star = -lp_star;
      for (std::size_t j = 0; j < dim; ++j) gp_star[j] = -grad_star[j];
      for (std::size_t j = 0; j < dim; ++j) p[j] -= 0.5 * eps * gp_star[j];
    }
    // The proposal is (q*, -p*); negation leaves the kinetic energy unchanged.
    double kin_star = 0.0;
    for (std::size_t j = 0; j < dim; ++j) kin_star += p[j] * p[j] / (2.0 * mass[j]);
    const double delta_h = exploded ? std::numeric_limits<double>::infinity()
                                    : (pot_star + kin_star) - h_current;

    out.abs_delta_h.push_back(std::abs(delta_h));
    bool accept = false;
    if (!std::isfinite(delta_h) || std::abs(delta_h) > kDivergenceThreshold) {
      ++out.divergences;
    } else if (std::log(rng.uniform() + 1e-300) < -delta_h) {
      accept = true;
    }
    if (accept) {
      q = q_star;
      potential = pot_star;
      grad_potential = gp_star;
      ++accepted;
    }
    if (iter >= cfg.burn_in && (iter - cfg.burn_in) % cfg.thinning == 0) {
      out.draws.push_back(q);
    }
  }
  out.acceptance_rate = static_cast<double>(accepted) / cfg.iterations;
  out.ess.resize(dim);
  for (std::size_t j = 0; j < dim; ++j) out.ess[j] = ess_estimate(out.column(j));
  return out;
}

ChainOutput rw_metropolis_sample(const LogDensity& target, const RWMConfig& cfg,
                                 std::vector<std::string> names) {
  const std::size_t dim = cfg.init.size();
  validate_common(cfg.iterations, cfg.burn_in, cfg.thinning, dim, cfg.init.size());
  const bool dense = !cfg.proposal_cholesky.empty();
  if (dense) {
    if (cfg.proposal_cholesky.size() != dim * dim) {
      throw InvalidParam("proposal cholesky must be a d*d lower-triangular matrix");
    }
    for (std::size_t j = 0; j < dim; ++j) {
      if (!(cfg.proposal_cholesky[j * dim + j] > 0.0)) {
        throw InvalidParam("proposal cholesky diagonal must be positive");
      }
    }
  } else {
    if (cfg.proposal_scale.size() != dim) throw InvalidParam("proposal scale length mismatch");
    for (double s : cfg.proposal_scale) {
      if (!(s > 0.0)) throw InvalidParam("proposal scales must be positive");
    }
  }

  Rng rng(cfg.seed);
  std::vector<double> q = cfg.init;
  double lp = target(q);
  if (!std::isfinite(lp)) throw BadInit("initial point has non-finite log posterior");

  ChainOutput out;
  out.names = default_names(dim, names);
  out.seed = cfg.seed;
  long accepted = 0;
  std::vector<double> q_star(dim), z(dim);
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    if (dense) {
      for (std::size_t j = 0; j < dim; ++j) z[j] = rng.normal();
      for (std::size_t j = 0; j < dim; ++j) {
        double step = 0.0;
        for (std::size_t k = 0; k <= j; ++k) step += cfg.proposal_cholesky[j * dim + k] * z[k];
        q_star[j] = q[j] + step;
      }
    } else {
      for (std::size_t j = 0; j < dim; ++j) {
        q_star[j] = q[j] + cfg.proposal_scale[j] * rng.normal();
      }
    }
    const double lp_star = target(q_star);
    if (std::log(rng.uniform() + 1e-300) < lp_star - lp) {
      q = q_star;
      lp = lp_star;
      ++accepted;
    }
    if (iter >= cfg.burn_in && (iter - cfg.burn_in) % cfg.thinning == 0) {
      out.draws.push_back(q);
    }
  }
  out.acceptance_rate = static_cast<double>(accepted) / cfg.iterations;
  out.ess.resize(dim);
  for (std::size_t j = 0; j < dim; ++j) out.ess[j] = ess_estimate(out.column(j));
  return out;
}

LogParamPosterior::LogParamPosterior(const CompartmentalModel& model,
                                     const ObservationSeries& series,
                                     std::vector<double> prior_mean,
                                     std::vector<double> prior_sd, InversionConfig cfg,
                                     int threads)
    : eval_(model, series, cfg, threads),
      mean_(std::move(prior_mean)),
      sd_(std::move(prior_sd)) {
  const std::size_t dim = model.param_names().size();
  if (mean_.size() != dim || sd_.size() != dim) {
    throw InvalidParam("prior mean/sd must match the number of parameters");
  }
  for (double s : sd_) {
    if (!(s > 0.0)) throw InvalidParam("prior standard deviations must be positive");
  }
}

std::vector<std::string> LogParamPosterior::names() const {
  std::vector<std::string> n;
  for (const auto& p : eval_.model().param_names()) n.push_back("log_" + p);
  return n;
}

double LogParamPosterior::prior_logdensity(std::span<const double> q) const {
  double lp = 0.0;
  for (std::size_t j = 0; j < q.size(); ++j) {
    const double z = (q[j] - mean_[j]) / sd_[j];
    lp += -0.5 * z * z - std::log(sd_[j] * 2.5066282746310005024);
  }
  return lp;
}

std::pair<double, std::vector<double>> LogParamPosterior::evaluate(
    std::span<const double> q, bool want_gradient) {
  const std::size_t dim = mean_.size();
  std::vector<double> theta(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    if (std::abs(q[j]) > kLogParamGuard) return {kNegInf, {}};
    theta[j] = std::exp(q[j]);
  }
  LogLikReport rep;
  try {
    rep = eval_.eval(theta, want_gradient);
  } catch (const NumericalUnderflow&) {
    return {kNegInf, {}};
  } catch (const NonConvergence&) {
    return {kNegInf, {}};
  } catch (const OverflowDomain&) {
    return {kNegInf, {}};
  }
  if (!std::isfinite(rep.loglik)) return {kNegInf, {}};
  if (!want_gradient) return {rep.loglik + prior_logdensity(q), {}};
  if (!rep.gradient) return {kNegInf, {}};
  std::vector<double> grad = *rep.gradient;
  for (std::size_t j = 0; j < dim; ++j) {
    grad[j] -= (q[j] - mean_[j]) / (sd_[j] * sd_[j]);
  }
  return {rep.loglik + prior_logdensity(q), std::move(grad)};
}

double LogParamPosterior::logpost(std::span<const double> q) {
  return evaluate(q, false).first;
}

std::pair<double, std::vector<double>> LogParamPosterior::logpost_grad(
    std::span<const double> q) {
  return evaluate(q, true);
}

// ---------------------------------------------------------------------------
// Hierarchical Metropolis-within-Gibbs
// ---------------------------------------------------------------------------

namespace {

struct UnitState {
  std::array<double, 3> logpar = {0.0, 0.0, 0.0};  // log r0, log delta, log gamma
  std::vector<long> nir;                           // latent removal counts per time
  double rwm_accepted = 0.0;
  double rwm_proposed = 0.0;
};

// SIR in force on [times[j], times[j+1]) for the given unit parameters.
CompartmentalModel interval_model(const HierUnit& unit, const std::array<double, 3>& logpar,
                                  double t0, std::size_t j) {
  const double scale = unit.times[j] >= t0 ? std::exp(logpar[0] + logpar[1])
                                           : std::exp(logpar[0]);
  return CompartmentalModel::sir_from_r0(scale, std::exp(logpar[2]), unit.population);
}

StateVector absolute_state(const HierUnit& unit, long nsi, long nir) {
  const long s0 = unit.population - unit.initial_infected - unit.initial_removed;
  StateVector y;
  y.counts = {static_cast<int>(s0 - nsi),
              static_cast<int>(unit.initial_infected + nsi - nir),
              static_cast<int>(unit.initial_removed + nir)};
  return y;
}

// Inverted forward column: probabilities of (delta_nsi, x2) for
// x2 = 0..height from the given origin state over time dt.
std::vector<double> forward_column(const CompartmentalModel& model, const StateVector& origin,
                                   long delta_nsi, long height, double dt,
                                   const InversionConfig& cfg) {
  BirthProcessSpec spec = as_birth_process(model, origin);
  spec.bound = {static_cast<int>(delta_nsi), static_cast<int>(height)};
  SweepWorkspace ws(spec, false);
  const std::size_t n = ws.geometry().size();
  const std::size_t stride = static_cast<std::size_t>(height) + 1;
  const std::size_t base = static_cast<std::size_t>(delta_nsi) * stride;
  std::vector<std::complex<double>> f(n);
  auto evalf = [&](int, std::complex<double> s, std::span<std::complex<double>> o) {
    ws.forward(s, f.data());
    for (std::size_t i = 0; i < stride; ++i) o[i] = f[base + i];
  };
  const auto reports = invert_grid_mixed(evalf, stride, stride, dt, cfg);
  std::vector<double> probs(stride);
  for (std::size_t i = 0; i < stride; ++i) probs[i] = reports[i].value;
  return probs;
}

// Inverted backward column: probabilities of reaching the corner target from
// (0, x2) for x2 = 0..height; the origin corresponds to x2 = 0.
std::vector<double> backward_column(const CompartmentalModel& model, const StateVector& base_state,
                                    long delta_nsi, long height, long target_x2, double dt,
                                    const InversionConfig& cfg) {
  BirthProcessSpec spec = as_birth_process(model, base_state);
  spec.bound = {static_cast<int>(delta_nsi), static_cast<int>(target_x2)};
  SweepWorkspace ws(spec, false);
  const std::size_t n = ws.geometry().size();
  std::vector<std::complex<double>> f(n);
  auto evalf = [&](int, std::complex<double> s, std::span<std::complex<double>> o) {
    ws.backward(s, f.data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(height) + 1; ++i) o[i] = f[i];
  };
  const auto reports =
      invert_grid_mixed(evalf, static_cast<std::size_t>(height) + 1,
                        static_cast<std::size_t>(height) + 1, dt, cfg);
  std::vector<double> probs(static_cast<std::size_t>(height) + 1);
  for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = reports[i].value;
  return probs;
}

// Complete-data log likelihood given latent removal counts.
double complete_loglik(const HierUnit& unit, const std::array<double, 3>& logpar, double t0,
                       const std::vector<long>& nir, const InversionConfig& cfg) {
  double ll = 0.0;
  for (std::size_t j = 0; j + 1 < unit.times.size(); ++j) {
    const CompartmentalModel model = interval_model(unit, logpar, t0, j);
    const StateVector u = absolute_state(unit, unit.cum_infections[j], nir[j]);
    const StateVector v = absolute_state(unit, unit.cum_infections[j + 1], nir[j + 1]);
    TransitionResult res;
    try {
      res = transition_probability(model, u, v, unit.times[j + 1] - unit.times[j], cfg, false);
    } catch (const NumericalUnderflow&) {
      return kNegInf;
    } catch (const NonConvergence&) {
      return kNegInf;
    }
    if (res.structural_zero || res.probability <= 0.0) return kNegInf;
    ll += std::log(res.probability);
  }
  return ll;
}

void validate_unit(const HierUnit& unit, double t0) {
  if (unit.population <= 0) throw InvalidParam("unit population must be positive");
  if (unit.initial_infected < 0 || unit.initial_removed < 0) {
    throw InvalidParam("initial compartment counts must be nonnegative");
  }
  if (unit.times.size() < 2) throw InvalidParam("unit needs at least two observation times");
  if (unit.times.size() != unit.cum_infections.size()) {
    throw InvalidParam("times and infection counts differ in length");
  }
  if (!unit.observed_removals.empty()) {
    if (unit.observed_removals.size() != unit.times.size()) {
      throw InvalidParam("removal constraints must match the observation times");
    }
    if (unit.observed_removals.front() && *unit.observed_removals.front() != 0) {
      throw InvalidParam("the removal count at the first observation must be zero");
    }
  }
  if (unit.cum_infections.front() != 0) {
    throw InvalidParam("cumulative infection counts must start at zero");
  }
  const long s0 = unit.population - unit.initial_infected - unit.initial_removed;
  if (s0 < 0) throw InvalidParam("initial counts exceed the population");
  for (std::size_t j = 0; j + 1 < unit.times.size(); ++j) {
    if (!(unit.times[j] < unit.times[j + 1])) {
      throw InvalidParam("unit observation times must be strictly increasing");
    }
    if (unit.cum_infections[j] > unit.cum_infections[j + 1]) {
      throw InvalidParam("cumulative infection counts must be nondecreasing");
    }
  }
  if (unit.cum_infections.back() > s0) {
    throw InvalidParam("more infection events than susceptibles");
  }
  if (!(t0 > unit.times.front() && t0 < unit.times.back())) {
    throw InvalidParam("change week must lie strictly inside the observation window");
  }
  bool aligned = false;
  for (double t : unit.times) {
    if (std::abs(t - t0) < 1e-9) aligned = true;
  }
  if (!aligned) {
    throw InvalidParam("change week must coincide with an observation time");
  }
}

std::optional<long> pinned_at(const HierUnit& unit, std::size_t j) {
  if (unit.observed_removals.empty()) return std::nullopt;
  return unit.observed_removals[j];
}

// Deterministic starting point for the latent removal counts: removals
// track the infection counts (so about initial_infected individuals stay
// infectious), kept monotone, honoring any pinned values, and leaving at
// least one infectious individual whenever infections lie ahead.
std::vector<long> init_latents(const HierUnit& unit) {
  const std::size_t m = unit.times.size();
  std::vector<long> nir(m, 0);
  // smallest pinned value at or after each index
  std::vector<long> pinned_floor(m + 1, std::numeric_limits<long>::max());
  for (std::size_t j = m; j-- > 1;) {
    pinned_floor[j] = std::min(pinned_floor[j + 1],
                               pinned_at(unit, j).value_or(std::numeric_limits<long>::max()));
  }
  for (std::size_t j = 1; j < m; ++j) {
    bool future_infections = false;
    for (std::size_t j2 = j + 1; j2 < m; ++j2) {
      if (unit.cum_infections[j2] > unit.cum_infections[j]) future_infections = true;
    }
    long cap = unit.initial_infected + unit.cum_infections[j] - (future_infections ? 1 : 0);
    cap = std::min(cap, pinned_floor[j]);
    if (auto pin = pinned_at(unit, j)) {
      nir[j] = *pin;
    } else {
      nir[j] = std::min(cap, std::max(nir[j - 1], unit.cum_infections[j]));
    }
    if (nir[j] < nir[j - 1] || nir[j] > unit.initial_infected + unit.cum_infections[j]) {
      throw EmptySupport("removal constraints admit no feasible latent configuration");
    }
  }
  return nir;
}

}  // namespace

double draw_conjugate_mean(std::span<const double> values, double var, double prior_sd,
                           Rng& rng) {
  double sum = 0.0;
  for (double x : values) sum += x;
  const double prec = static_cast<double>(values.size()) / var + 1.0 / (prior_sd * prior_sd);
  const double mean = (sum / var) / prec;
  return mean + rng.normal() / std::sqrt(prec);
}

double draw_conjugate_variance(std::span<const double> values, double mu, double shape,
                               double rate, Rng& rng) {
  double ss = 0.0;
  for (double x : values) ss += (x - mu) * (x - mu);
  return rng.inverse_gamma(shape + 0.5 * static_cast<double>(values.size()),
                           rate + 0.5 * ss);
}

LatentConditional latent_removal_conditional(const HierUnit& unit,
                                             const std::array<double, 3>& log_params,
                                             double t0, const std::vector<long>& removals,
                                             std::size_t j, const InversionConfig& cfg) {
  const std::size_t m = unit.times.size();
  if (j < 1 || j >= m) throw InvalidParam("latent index out of range");
  const bool interior = j + 1 < m;
  const long cap_infectious = unit.initial_infected + unit.cum_infections[j];
  const long lo = removals[j - 1];
  const long hi = interior ? std::min(removals[j + 1], cap_infectious) : cap_infectious;
  if (lo > hi) throw EmptySupport("latent removal support is empty");

  const CompartmentalModel fwd_model = interval_model(unit, log_params, t0, j - 1);
  const StateVector origin = absolute_state(unit, unit.cum_infections[j - 1], removals[j - 1]);
  const auto fwd =
      forward_column(fwd_model, origin, unit.cum_infections[j] - unit.cum_infections[j - 1],
                     hi - removals[j - 1], unit.times[j] - unit.times[j - 1], cfg);
  std::vector<double> weights(static_cast<std::size_t>(hi - lo) + 1);
  for (long nv = lo; nv <= hi; ++nv) {
    weights[static_cast<std::size_t>(nv - lo)] =
        fwd[static_cast<std::size_t>(nv - removals[j - 1])];
  }
  if (interior) {
    const CompartmentalModel bwd_model = interval_model(unit, log_params, t0, j);
    const StateVector base = absolute_state(unit, unit.cum_infections[j], lo);
    const auto bwd = backward_column(
        bwd_model, base, unit.cum_infections[j + 1] - unit.cum_infections[j], hi - lo,
        removals[j + 1] - lo, unit.times[j + 1] - unit.times[j], cfg);
    for (std::size_t i = 0; i < weights.size(); ++i) weights[i] *= bwd[i];
  }
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw EmptySupport("latent removal support has zero mass");
  for (double& w : weights) w /= total;
  return {lo, std::move(weights)};
}

HierOutput hierarchical_gibbs(const std::vector<HierUnit>& units, const HierConfig& cfg) {
  if (units.empty()) throw InvalidParam("at least one unit is required");
  validate_common(cfg.iterations, cfg.burn_in, cfg.thinning, 1, 1);
  for (const auto& unit : units) validate_unit(unit, cfg.t0);
  for (double s : cfg.proposal_scale) {
    if (!(s > 0.0)) throw InvalidParam("proposal scales must be positive");
  }

  const std::size_t n_units = units.size();
  std::vector<UnitState> state(n_units);
  std::vector<Rng> unit_rng;
  unit_rng.reserve(n_units);
  for (std::size_t p = 0; p < n_units; ++p) {
    unit_rng.emplace_back(derive_seed(cfg.seed, p + 1));
    state[p].nir = init_latents(units[p]);
  }
  Rng hyper_rng(derive_seed(cfg.seed, 0));

  // Hyperparameter state: grand means and variances for (r0, delta, gamma).
  std::array<double, 3> mu = {0.0, 0.0, 0.0};
  std::array<double, 3> var = {1.0, 1.0, 1.0};

  HierOutput out;
  out.hyper_offset = 3 * n_units;
  for (std::size_t p = 0; p < n_units; ++p) {
    out.unit_names.push_back(units[p].name);
    out.chain.names.push_back(units[p].name + ".log_r0");
    out.chain.names.push_back(units[p].name + ".log_delta");
    out.chain.names.push_back(units[p].name + ".log_gamma");
  }
  for (const char* n : {"mu_r", "mu_delta", "mu_gamma", "var_r", "var_delta", "var_gamma"}) {
    out.chain.names.emplace_back(n);
  }
  out.chain.seed = cfg.seed;
  out.latent_mean.resize(n_units);
  for (std::size_t p = 0; p < n_units; ++p) {
    out.latent_mean[p].assign(units[p].times.size(), 0.0);
  }
  long retained = 0;

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    parallel_for(n_units, cfg.threads, [&](std::size_t p) {
      const HierUnit& unit = units[p];
      UnitState& st = state[p];
      Rng& rng = unit_rng[p];
      const std::size_t m = unit.times.size();

      // (i) latent removal counts, swept sequentially over the interior and
      // final observation times; each unpinned draw is an exact
      // full-conditional categorical over the feasible support.
      for (std::size_t j = 1; j < m; ++j) {
        if (auto pin = pinned_at(unit, j)) {
          st.nir[j] = *pin;
          continue;
        }
        const long lo = st.nir[j - 1];
        const long hi = j + 1 < m
                            ? std::min(st.nir[j + 1],
                                       static_cast<long>(unit.initial_infected) +
                                           unit.cum_infections[j])
                            : static_cast<long>(unit.initial_infected) +
                                  unit.cum_infections[j];
        if (lo > hi) throw EmptySupport("latent removal support is empty");
        if (lo == hi) {
          st.nir[j] = lo;
          continue;
        }
        try {
          const auto cond =
              latent_removal_conditional(unit, st.logpar, cfg.t0, st.nir, j, cfg.inversion);
          st.nir[j] =
              cond.support_begin + static_cast<long>(rng.categorical(cond.probabilities));
        } catch (const EmptySupport&) {
          // every support point underflowed; keep the current value
        }
      }

      // (ii) random-walk updates of (log r0, log delta, log gamma).
      auto log_prior = [&](const std::array<double, 3>& par) {
        double lp = 0.0;
        for (int c = 0; c < 3; ++c) {
          const std::size_t ci = static_cast<std::size_t>(c);
          const double z = (par[ci] - mu[ci]) * (par[ci] - mu[ci]) / var[ci];
          lp += -0.5 * z - 0.5 * std::log(var[ci]);
        }
        return lp;
      };
      double logpost_cur =
          complete_loglik(unit, st.logpar, cfg.t0, st.nir, cfg.inversion) +
          log_prior(st.logpar);
      for (int rep = 0; rep < cfg.param_updates_per_sweep; ++rep) {
        std::array<double, 3> proposal;
        for (int c = 0; c < 3; ++c) {
          proposal[static_cast<std::size_t>(c)] =
              st.logpar[static_cast<std::size_t>(c)] +
              cfg.proposal_scale[static_cast<std::size_t>(c)] * rng.normal();
        }
        const double logpost_prop =
            complete_loglik(unit, proposal, cfg.t0, st.nir, cfg.inversion) +
            log_prior(proposal);
        st.rwm_proposed += 1.0;
        if (std::log(rng.uniform() + 1e-300) < logpost_prop - logpost_cur) {
          st.logpar = proposal;
          logpost_cur = logpost_prop;
          st.rwm_accepted += 1.0;
        }
      }
    });

    // (2) conjugate normal/inverse-gamma updates of the hyperparameters.
    for (int c = 0; c < 3; ++c) {
      const std::size_t ci = static_cast<std::size_t>(c);
      std::vector<double> values(n_units);
      for (std::size_t p = 0; p < n_units; ++p) values[p] = state[p].logpar[ci];
      mu[ci] = draw_conjugate_mean(values, var[ci], cfg.hyper_mean_sd, hyper_rng);
      var[ci] = draw_conjugate_variance(values, mu[ci], cfg.hyper_var_shape,
                                        cfg.hyper_var_rate, hyper_rng);
    }

    if (iter >= cfg.burn_in && (iter - cfg.burn_in) % cfg.thinning == 0) {
      std::vector<double> row;
      row.reserve(3 * n_units + 6);
      for (const auto& st : state) {
        row.push_back(st.logpar[0]);
        row.push_back(st.logpar[1]);
        row.push_back(st.logpar[2]);
      }
      for (int c = 0; c < 3; ++c) row.push_back(mu[static_cast<std::size_t>(c)]);
      for (int c = 0; c < 3; ++c) row.push_back(var[static_cast<std::size_t>(c)]);
      out.chain.draws.push_back(std::move(row));
      for (std::size_t p = 0; p < n_units; ++p) {
        for (std::size_t j = 0; j < state[p].nir.size(); ++j) {
          out.latent_mean[p][j] += static_cast<double>(state[p].nir[j]);
        }
      }
      ++retained;
    }
  }

  for (auto& lm : out.latent_mean) {
    for (double& v : lm) v /= static_cast<double>(std::max<long>(retained, 1));
  }
  double prop = 0.0, acc = 0.0;
  for (const auto& st : state) {
    prop += st.rwm_proposed;
    acc += st.rwm_accepted;
  }
  out.chain.acceptance_rate = prop > 0.0 ? acc / prop : 0.0;
  out.chain.ess.resize(out.chain.names.size());
  for (std::size_t j = 0; j < out.chain.names.size(); ++j) {
    out.chain.ess[j] = out.chain.draws.empty() ? 0.0 : ess_estimate(out.chain.column(j));
  }
  return out;
}

SavageDickeyResult savage_dickey(const ChainOutput& chain,
                                 std::span<const std::size_t> columns,
                                 double prior_density_at_zero) {
  if (columns.empty()) throw InvalidParam("at least one restricted column is required");
  if (!(prior_density_at_zero > 0.0)) {
    throw InvalidParam("prior density at the restriction point must be positive");
  }
  const std::size_t n = chain.draws.size();
  if (n < 10) throw InvalidParam("too few draws for a density estimate");

  SavageDickeyResult result;
  result.prior_density_at_zero = prior_density_at_zero;

  // Silverman bandwidth per restricted coordinate.
  for (std::size_t c : columns) {
    auto col = chain.column(c);
    double mean = 0.0;
    for (double x : col) mean += x;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double x : col) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    const double iqr = quantile(col, 0.75) - quantile(col, 0.25);
    double spread = std::min(sd, iqr / 1.34);
    if (spread <= 0.0) spread = std::max(sd, 1e-12);
    result.bandwidths.push_back(0.9 * spread *
                                std::pow(static_cast<double>(n), -0.2));
  }

  double density = 0.0;
  std::size_t near_origin = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double k = 1.0;
    bool near = true;
    for (std::size_t j = 0; j < columns.size(); ++j) {
      const double x = chain.draws[i][columns[j]];
      const double h = result.bandwidths[j];
      k *= normal_density(x, 0.0, h);
      if (std::abs(x) > 3.0 * h) near = false;
    }
    density += k;
    if (near) ++near_origin;
  }
  density /= static_cast<double>(n);
  result.posterior_density_at_zero = density;
  result.unstable = near_origin < 50;
  result.log10_bayes_factor = std::log10(density / prior_density_at_zero);
  return result;
}

}  // namespace mbp
