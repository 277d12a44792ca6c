#include "multibirth/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_map>

#include "multibirth/errors.hpp"

namespace mbp {

namespace {

struct StateHash {
  std::size_t operator()(const std::vector<int>& v) const {
    std::size_t h = 1469598103934665603ULL;
    for (int x : v) {
      h ^= static_cast<std::size_t>(x) + 0x9E3779B97F4A7C15ULL;
      h *= 1099511628211ULL;
    }
    return h;
  }
};

}  // namespace

SimulationPath gillespie_simulate(const CompartmentalModel& model, const StateVector& y0,
                                  double horizon, Rng& rng) {
  if (!(horizon > 0.0)) throw InvalidTime("simulation horizon must be > 0");
  const int d = model.channels();
  const int m = model.compartments();
  if (static_cast<int>(y0.counts.size()) != m) {
    throw InvalidParam("initial state has the wrong number of compartments");
  }

  SimulationPath path;
  path.states.push_back(y0);
  StateVector y = y0;
  double t = 0.0;
  std::vector<double> rates(static_cast<std::size_t>(d));
  for (;;) {
    double total = 0.0;
    for (int k = 0; k < d; ++k) {
      rates[static_cast<std::size_t>(k)] = model.rate(k, y.counts);
      total += rates[static_cast<std::size_t>(k)];
    }
    if (total <= 0.0) break;  // absorbing
    t += rng.exponential(total);
    if (t >= horizon) break;
    const int k = static_cast<int>(rng.categorical(rates));
    for (int c = 0; c < m; ++c) y.counts[static_cast<std::size_t>(c)] += model.incidence(c, k);
    path.times.push_back(t);
    path.channels.push_back(k);
    path.states.push_back(y);
  }
  return path;
}

SimulationPath gillespie_simulate(const CompartmentalModel& model, const StateVector& y0,
                                  double horizon, std::uint64_t seed) {
  Rng rng(seed);
  return gillespie_simulate(model, y0, horizon, rng);
}

double UniformizationResult::probability_of(const StateVector& v) const {
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (states[i] == v) return probabilities[i];
  }
  return 0.0;
}

UniformizationResult uniformization_probs(const CompartmentalModel& model,
                                          const StateVector& u, double t,
                                          std::size_t max_states, double tol) {
  if (t < 0.0) throw InvalidTime("time must be nonnegative");
  if (!(tol > 0.0)) throw InvalidParam("tolerance must be positive");
  const int d = model.channels();
  const int m = model.compartments();
  if (static_cast<int>(u.counts.size()) != m) {
    throw InvalidParam("start state has the wrong number of compartments");
  }

  // Breadth-first enumeration of the reachable set, capped at max_states.
  std::unordered_map<std::vector<int>, std::size_t, StateHash> index;
  std::vector<std::vector<int>> states;
  states.push_back(u.counts);
  index.emplace(u.counts, 0);
  bool capped = false;
  for (std::size_t head = 0; head < states.size(); ++head) {
    const std::vector<int> y = states[head];
    for (int k = 0; k < d; ++k) {
      if (model.rate(k, y) <= 0.0) continue;
      std::vector<int> y2 = y;
      for (int c = 0; c < m; ++c) y2[static_cast<std::size_t>(c)] += model.incidence(c, k);
      if (index.count(y2)) continue;
      if (states.size() >= max_states) {
        capped = true;
        continue;
      }
      index.emplace(y2, states.size());
      states.push_back(std::move(y2));
    }
  }
  const std::size_t n = states.size();

  // Sparse off-diagonal rates; transitions out of the enumerated set (only
  // possible when capped) accumulate in the leak column.
  std::vector<std::vector<std::pair<std::size_t, double>>> rows(n);
  std::vector<double> leak_rate(n, 0.0);
  std::vector<double> exit(n, 0.0);
  double lambda = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& y = states[i];
    for (int k = 0; k < d; ++k) {
      const double r = model.rate(k, y);
      if (r <= 0.0) continue;
      std::vector<int> y2 = y;
      for (int c = 0; c < m; ++c) y2[static_cast<std::size_t>(c)] += model.incidence(c, k);
      auto it = index.find(y2);
      if (it == index.end()) {
        leak_rate[i] += r;
      } else {
        rows[i].emplace_back(it->second, r);
      }
      exit[i] += r;
    }
    lambda = std::max(lambda, exit[i]);
  }

  UniformizationResult result;
  result.states.reserve(n);
  for (auto& y : states) result.states.push_back(StateVector{y});

  if (t == 0.0 || lambda == 0.0) {
    result.probabilities.assign(n, 0.0);
    result.probabilities[0] = 1.0;
    result.poisson_terms = 0;
    result.leak = 0.0;
    return result;
  }

  // result = sum_k Poisson(lambda t; k) v P^k with P = I + Q/Lambda, the sum
  // truncated once the accumulated Poisson mass covers 1 - tol/2.
  const double rate = lambda * t;
  std::vector<double> v(n, 0.0), next(n, 0.0), acc(n, 0.0);
  v[0] = 1.0;
  double poisson_mass = 0.0;
  int k = 0;
  const int hard_cap = static_cast<int>(rate + 12.0 * std::sqrt(rate) + 200.0);
  for (; k <= hard_cap; ++k) {
    const double logw = -rate + k * std::log(rate) - std::lgamma(static_cast<double>(k) + 1.0);
    const double w = std::exp(logw);
    for (std::size_t i = 0; i < n; ++i) acc[i] += w * v[i];
    poisson_mass += w;
    if (poisson_mass >= 1.0 - tol / 2.0) {
      ++k;
      break;
    }
    // v <- v (I + Q/Lambda)
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double vi = v[i];
      if (vi == 0.0) continue;
      next[i] += vi * (1.0 - exit[i] / lambda);
      for (const auto& [j, r] : rows[i]) next[j] += vi * (r / lambda);
      // mass flowing outside the enumerated set disappears from v
    }
    v.swap(next);
  }
  result.poisson_terms = k;
  result.probabilities = std::move(acc);
  double total = 0.0;
  for (double p : result.probabilities) total += p;
  result.leak = 1.0 - total;
  if (result.leak > tol) {
    char msg[128];
    std::snprintf(msg, sizeof msg, "uniformization leaked %.3g probability mass (tol %.3g)%s",
                  result.leak, tol, capped ? " after hitting the state cap" : "");
    throw TruncationLeak(msg);
  }
  return result;
}

}  // namespace mbp
