#ifndef MULTIBIRTH_TESTS_SUPPORT_HPP
#define MULTIBIRTH_TESTS_SUPPORT_HPP

// Shared test fixtures and independent oracles.  Everything here is
// deliberately brute-force and kept apart from the library code it checks.

#include <cmath>
#include <complex>
#include <functional>
#include <stdexcept>
#include <vector>

#include "multibirth/lattice.hpp"
#include "multibirth/likelihood.hpp"
#include "multibirth/oracles.hpp"

namespace mbp::testing {

inline double positive(double a) { return a > 0.0 ? a : 0.0; }

// Event-count birth process of the SIR model: x1 infection events, x2
// removal events from (s0, i0).
inline BirthProcessSpec make_sir_spec(int s0, int i0, double beta, double gamma) {
  BirthProcessSpec spec;
  spec.dim = 2;
  spec.bound = {s0, s0 + i0};
  spec.n_params = 2;
  spec.rate = [=](int k, std::span<const int> x) {
    const double s = positive(s0 - x[0]);
    const double i = positive(i0 + x[0] - x[1]);
    return k == 0 ? beta * s * i : gamma * i;
  };
  spec.sensitivity = [=](int k, std::span<const int> x, int j) {
    const double s = positive(s0 - x[0]);
    const double i = positive(i0 + x[0] - x[1]);
    if (k == 0 && j == 0) return s * i;
    if (k == 1 && j == 1) return i;
    return 0.0;
  };
  return spec;
}

// Path-sum form of the forward transform: enumerate every monotone lattice
// path from the origin to x and sum the per-path products.  Usable only at
// tiny sizes; the caller caps the path count.
inline std::complex<double> path_sum_transform(const BirthProcessSpec& spec,
                                               std::span<const int> x,
                                               std::complex<double> s,
                                               std::size_t max_paths = 10000) {
  using cd = std::complex<double>;
  const int d = spec.dim;
  auto total_rate = [&](std::span<const int> at) {
    double sum = 0.0;
    for (int k = 0; k < d; ++k) sum += spec.rate(k, at);
    return sum;
  };
  std::size_t paths_seen = 0;
  cd total = 0.0;
  std::vector<int> cur(x.begin(), x.end());
  // walk backwards from x to 0; product collects lambda/(s + exit) factors
  std::function<void(cd)> walk = [&](cd product) {
    bool at_origin = true;
    for (int k = 0; k < d; ++k) {
      if (cur[static_cast<std::size_t>(k)] > 0) at_origin = false;
    }
    if (at_origin) {
      if (++paths_seen > max_paths) throw std::runtime_error("path cap exceeded");
      total += product;
      return;
    }
    for (int k = 0; k < d; ++k) {
      if (cur[static_cast<std::size_t>(k)] == 0) continue;
      const cd denom = s + total_rate(cur);
      --cur[static_cast<std::size_t>(k)];
      const double lambda = spec.rate(k, cur);
      if (lambda > 0.0) walk(product * lambda / denom);
      ++cur[static_cast<std::size_t>(k)];
    }
  };
  walk(1.0);
  cd origin_factor = 1.0 / (s + total_rate(std::vector<int>(static_cast<std::size_t>(d), 0)));
  return origin_factor * total;
}

// Susceptible/infectious/removed counts for the 1666 plague in Eyam
// (Raggett 1982); closed village population of 261, times in months.
inline ObservationSeries eyam_series() {
  ObservationSeries series;
  series.times = {0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0};
  const int table[8][3] = {{254, 7, 0},   {235, 14, 12}, {201, 22, 38}, {153, 29, 79},
                           {121, 20, 120}, {108, 8, 145}, {97, 8, 156},  {83, 0, 178}};
  for (const auto& row : table) {
    series.counts.push_back({row[0], row[1], row[2]});
  }
  series.time_unit = "month";
  series.population_total = 261;
  return series;
}

// Log likelihood of a fully observed series computed entirely through the
// uniformization oracle; independent of the Laplace-domain engine.
inline double uniformization_loglik(const CompartmentalModel& model,
                                    const ObservationSeries& series) {
  double ll = 0.0;
  for (std::size_t r = 0; r + 1 < series.rows(); ++r) {
    const auto uni = uniformization_probs(model, series.state_at(r),
                                          series.times[r + 1] - series.times[r]);
    const double p = uni.probability_of(series.state_at(r + 1));
    ll += std::log(p);
  }
  return ll;
}

// Closed-form count of monotone paths when all rates are positive.
inline double lattice_path_count(std::span<const int> bound) {
  auto log_fact = [](int n) {
    double v = 0.0;
    for (int i = 2; i <= n; ++i) v += std::log(static_cast<double>(i));
    return v;
  };
  double log_count = 0.0;
  int suffix = 0;
  for (int k = static_cast<int>(bound.size()) - 1; k >= 0; --k) {
    const int b = bound[static_cast<std::size_t>(k)];
    log_count += log_fact(suffix + b) - log_fact(b) - log_fact(suffix);
    suffix += b;
  }
  return std::round(std::exp(log_count));
}

}  // namespace mbp::testing

#endif
