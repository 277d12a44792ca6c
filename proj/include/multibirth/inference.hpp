#ifndef MULTIBIRTH_INFERENCE_HPP
#define MULTIBIRTH_INFERENCE_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "multibirth/likelihood.hpp"
#include "multibirth/rng.hpp"

namespace mbp {

using LogDensity = std::function<double(std::span<const double>)>;
// Returns the log density and its gradient; the gradient may be empty when
// the density is -infinity.
using LogDensityGrad =
    std::function<std::pair<double, std::vector<double>>(std::span<const double>)>;

struct ChainOutput {
  std::vector<std::string> names;
  std::vector<std::vector<double>> draws;  // retained draws x parameters
  double acceptance_rate = 0.0;
  std::vector<double> ess;
  std::uint64_t seed = 0;
  int divergences = 0;
  std::vector<double> abs_delta_h;  // |dH| per trajectory (HMC only)

  std::vector<double> column(std::size_t j) const;
};

struct HMCConfig {
  double step_size = 0.05;
  int leapfrog_steps = 20;
  std::vector<double> mass;  // per-coordinate momentum variances; empty = identity
  int iterations = 10000;
  int burn_in = 2000;
  int thinning = 1;
  std::uint64_t seed = 1;
  std::vector<double> init;
};

// Hamiltonian Monte Carlo with leapfrog trajectories and momentum negation.
// Trajectories with |dH| > 1000 count as divergent and are rejected.
ChainOutput hmc_sample(const LogDensityGrad& target, const HMCConfig& cfg,
                       std::vector<std::string> names = {});

struct RWMConfig {
  std::vector<double> proposal_scale;  // per-coordinate Gaussian step widths
  // Optional dense lower-triangular Cholesky factor (row-major d*d) of the
  // proposal covariance; when set it replaces proposal_scale.  Fixed across
  // the run, so detailed balance is untouched.
  std::vector<double> proposal_cholesky;
  int iterations = 10000;
  int burn_in = 2000;
  int thinning = 1;
  std::uint64_t seed = 1;
  std::vector<double> init;
};

ChainOutput rw_metropolis_sample(const LogDensity& target, const RWMConfig& cfg,
                                 std::vector<std::string> names = {});

// Log posterior over log-parameters for a fully observed series with
// independent normal priors on each log-parameter.
class LogParamPosterior {
 public:
  LogParamPosterior(const CompartmentalModel& model, const ObservationSeries& series,
                    std::vector<double> prior_mean, std::vector<double> prior_sd,
                    InversionConfig cfg = {}, int threads = 1);
  double logpost(std::span<const double> q);
  std::pair<double, std::vector<double>> logpost_grad(std::span<const double> q);
  std::vector<std::string> names() const;

 private:
  double prior_logdensity(std::span<const double> q) const;
  std::pair<double, std::vector<double>> evaluate(std::span<const double> q,
                                                  bool want_gradient);
  LikelihoodEvaluator eval_;
  std::vector<double> mean_, sd_;
};

// One surveillance unit for the hierarchical sampler: weekly cumulative
// infection-event counts with unobserved removals.
struct HierUnit {
  std::string name;
  long population = 0;
  int initial_infected = 0;
  int initial_removed = 0;
  std::vector<double> times;
  std::vector<long> cum_infections;  // event counts N_SI, first entry 0
  // Optional constraints: a set entry pins the removal count at that time,
  // collapsing its latent draw.  Entry 0, when present, must be zero.
  std::vector<std::optional<long>> observed_removals;
};

struct HierConfig {
  double t0 = 0.0;  // change week for the reproduction-number scale factor
  int iterations = 4000;
  int burn_in = 1000;
  int thinning = 1;
  std::uint64_t seed = 1;
  std::array<double, 3> proposal_scale = {0.15, 0.25, 0.15};  // log r0, log delta, log gamma
  int param_updates_per_sweep = 1;   // random-walk refreshes of the unit parameters
  double hyper_mean_sd = 10.0;       // Normal(0, sd^2) hyperprior on each grand mean
  double hyper_var_shape = 1e-3;     // InverseGamma hyperprior on each variance
  double hyper_var_rate = 1e-3;
  int threads = 1;
  InversionConfig inversion;
};

struct HierOutput {
  ChainOutput chain;  // per-unit log r0/log delta/log gamma, then hyperparameters
  std::vector<std::vector<double>> latent_mean;  // per unit, mean N_IR per time
  std::vector<std::string> unit_names;
  // Column offsets into chain.names: unit p parameters start at 3*p; the six
  // hyperparameter columns (mu_r, mu_delta, mu_gamma, var_r, var_delta,
  // var_gamma) follow all units.
  std::size_t hyper_offset = 0;
};

// Metropolis-within-Gibbs for the hierarchical time-inhomogeneous SIR model:
// exact full-conditional draws of the latent removal counts, random-walk
// updates of the per-unit log parameters, and conjugate normal/inverse-gamma
// updates of the hyperparameters.
HierOutput hierarchical_gibbs(const std::vector<HierUnit>& units, const HierConfig& cfg);

struct SavageDickeyResult {
  double log10_bayes_factor = 0.0;
  double posterior_density_at_zero = 0.0;
  double prior_density_at_zero = 0.0;
  std::vector<double> bandwidths;
  bool unstable = false;  // fewer than 50 draws within 3 bandwidths of the origin
};

// Savage-Dickey density ratio for the nested restriction that the given
// chain columns are all zero: Gaussian product-kernel density estimate at
// the origin over the joint prior density there.
SavageDickeyResult savage_dickey(const ChainOutput& chain, std::span<const std::size_t> columns,
                                 double prior_density_at_zero);

double normal_density(double x, double mean, double sd);

// Chain diagnostics.
double ess_estimate(std::span<const double> draws);
double quantile(std::span<const double> draws, double p);

// Conjugate Gibbs updates shared by the hierarchical sampler and its tests.
// Values x ~ N(mu, var) with mu ~ N(0, prior_sd^2) draws mu | x, var; and
// with var ~ InverseGamma(shape, rate) draws var | x, mu.
double draw_conjugate_mean(std::span<const double> values, double var, double prior_sd,
                           Rng& rng);
double draw_conjugate_variance(std::span<const double> values, double mu, double shape,
                               double rate, Rng& rng);

// Normalized full-conditional distribution of the removal count at time
// index j (1-based within times) given the neighbours; first entry
// corresponds to the smallest feasible count.  Exposed for verification.
struct LatentConditional {
  long support_begin = 0;
  std::vector<double> probabilities;
};
LatentConditional latent_removal_conditional(const HierUnit& unit,
                                             const std::array<double, 3>& log_params,
                                             double t0, const std::vector<long>& removals,
                                             std::size_t j, const InversionConfig& cfg = {});

}  // namespace mbp

#endif
