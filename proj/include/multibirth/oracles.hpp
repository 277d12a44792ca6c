#ifndef MULTIBIRTH_ORACLES_HPP
#define MULTIBIRTH_ORACLES_HPP

#include <cstdint>
#include <vector>

#include "multibirth/models.hpp"
#include "multibirth/rng.hpp"

namespace mbp {

struct SimulationPath {
  std::vector<double> times;     // event times, increasing
  std::vector<int> channels;     // fired channel per event
  std::vector<StateVector> states;  // starting state followed by post-event states

  const StateVector& final_state() const { return states.back(); }
};

// Exact stochastic simulation: exponential waiting with the total rate,
// channel chosen proportionally to the individual rates.  Absorbing states
// end the path before the horizon.
SimulationPath gillespie_simulate(const CompartmentalModel& model, const StateVector& y0,
                                  double horizon, Rng& rng);
SimulationPath gillespie_simulate(const CompartmentalModel& model, const StateVector& y0,
                                  double horizon, std::uint64_t seed);

struct UniformizationResult {
  std::vector<StateVector> states;      // enumerated reachable states
  std::vector<double> probabilities;    // row of exp(Qt) for the start state
  double leak = 0.0;                    // mass lost to truncation
  int poisson_terms = 0;

  double probability_of(const StateVector& v) const;
};

// Transition probabilities by uniformization on the reachable state set:
// Poisson-weighted powers of I + Q/Lambda.  Fully independent of the
// Laplace-domain machinery.  Throws TruncationLeak when the lost mass
// exceeds tol.
UniformizationResult uniformization_probs(const CompartmentalModel& model,
                                          const StateVector& u, double t,
                                          std::size_t max_states = 2'000'000,
                                          double tol = 1e-10);

}  // namespace mbp

#endif
