#include <cmath>
#include <limits>

#include <doctest.h>

#include "multibirth/errors.hpp"
#include "multibirth/likelihood.hpp"
#include "multibirth/rng.hpp"
#include "support.hpp"

using namespace mbp;

TEST_SUITE_BEGIN("likelihood");

TEST_CASE("eyam log likelihood matches the uniformization oracle") {
  const auto model = CompartmentalModel::sir(0.0178, 2.73);
  const auto series = testing::eyam_series();
  const auto report = loglik(model, series);
  const double oracle = testing::uniformization_loglik(model, series);
  CHECK(std::abs(report.loglik - oracle) < 1e-6);
  CHECK(report.per_interval.size() == 7);
  double total = 0.0;
  for (double lp : report.per_interval) total += lp;
  CHECK(report.loglik == doctest::Approx(total));
}

TEST_CASE("a frozen interval contributes log one") {
  const auto model = CompartmentalModel::sir(0.3, 1.1);
  ObservationSeries series;
  series.times = {0.0, 1.0};
  series.counts = {{5, 0, 2}, {5, 0, 2}};
  const auto report = loglik(model, series);
  CHECK(report.loglik == 0.0);
  CHECK(!report.impossible_interval);
}

TEST_CASE("a susceptible increase is structurally impossible") {
  const auto model = CompartmentalModel::sir(0.3, 1.1);
  ObservationSeries series;
  series.times = {0.0, 1.0, 2.0};
  series.counts = {{10, 2, 0}, {8, 3, 1}, {9, 2, 1}};
  const auto report = loglik(model, series);
  CHECK(report.loglik == -std::numeric_limits<double>::infinity());
  REQUIRE(report.impossible_interval);
  CHECK(*report.impossible_interval == 1);
  CHECK(std::isfinite(report.per_interval[0]));
}

TEST_CASE("underflowing but feasible transitions raise") {
  const auto model = CompartmentalModel::sir(1e-30, 1e-30);
  ObservationSeries series;
  series.times = {0.0, 1.0};
  series.counts = {{20, 1, 0}, {0, 1, 20}};
  CHECK_THROWS_AS(loglik(model, series), NumericalUnderflow);
}

TEST_CASE("gradient on the log scale matches central differences") {
  const auto series = testing::eyam_series();
  Rng rng(314);
  for (int trial = 0; trial < 2; ++trial) {
    const double lbeta = std::log(0.0178) + rng.uniform(-0.4, 0.4);
    const double lgamma = std::log(2.73) + rng.uniform(-0.4, 0.4);
    const auto model = CompartmentalModel::sir(std::exp(lbeta), std::exp(lgamma));
    const auto report = loglik(model, series, {}, true);
    REQUIRE(report.gradient);

    const double h = 1e-5;
    auto ll = [&](double lb, double lg) {
      return loglik(CompartmentalModel::sir(std::exp(lb), std::exp(lg)), series).loglik;
    };
    const double fd_beta = (ll(lbeta + h, lgamma) - ll(lbeta - h, lgamma)) / (2 * h);
    const double fd_gamma = (ll(lbeta, lgamma + h) - ll(lbeta, lgamma - h)) / (2 * h);
    CHECK((*report.gradient)[0] == doctest::Approx(fd_beta).epsilon(1e-4));
    CHECK((*report.gradient)[1] == doctest::Approx(fd_gamma).epsilon(1e-4));
  }
}

TEST_CASE("marginalizing an inserted mid point leaves the likelihood invariant") {
  const auto model = CompartmentalModel::sir(0.25, 0.9);
  const StateVector u{{7, 2, 0}};
  const StateVector v{{4, 2, 3}};
  const double t1 = 0.4, t2 = 0.7;
  const double direct = transition_probability(model, u, v, t1 + t2).probability;
  double composed = 0.0;
  for (const auto& [mid, p] : full_distribution(model, u, t1)) {
    if (p == 0.0) continue;
    composed += p * transition_probability(model, mid, v, t2).probability;
  }
  CHECK(std::abs(composed - direct) < 1e-7);
}

TEST_CASE("interval kernel enumerates latent removal completions") {
  const auto model = CompartmentalModel::sir(0.12, 0.8);
  const StateVector u{{10, 2, 0}};
  // three new infections observed, removals unobserved
  std::vector<std::optional<long>> partial = {7, std::nullopt, std::nullopt};
  const auto dist = interval_kernel(model, u, partial, 1.0);
  REQUIRE(dist.states.size() == 6);  // N_IR in 0..5, listed in lexicographic state order
  for (std::size_t i = 0; i < dist.states.size(); ++i) {
    CHECK(dist.states[i].counts[0] == 7);
    CHECK(dist.states[i].counts[1] == static_cast<int>(i));
    CHECK(dist.states[i].counts[2] == 5 - static_cast<int>(i));
  }

  // the completion masses sum to the marginal over the observed coordinate
  double total = 0.0;
  for (double p : dist.probabilities) total += p;
  const auto spec = as_birth_process(model, u);
  const auto lat = transition_probabilities(spec, 1.0);
  LatticeGeometry geom(spec.bound);
  double marginal = 0.0;
  for (int r = 0; r <= spec.bound[1]; ++r) {
    marginal += lat.probabilities[geom.flat(std::vector<int>{3, r})];
  }
  CHECK(std::abs(total - marginal) < 1e-10);
}

TEST_CASE("a fully observed endpoint is a degenerate completion") {
  const auto model = CompartmentalModel::sir(0.12, 0.8);
  const StateVector u{{10, 2, 0}};
  std::vector<std::optional<long>> partial = {7, 3, 2};
  const auto dist = interval_kernel(model, u, partial, 1.0);
  REQUIRE(dist.states.size() == 1);
  const auto direct = transition_probability(model, u, StateVector{{7, 3, 2}}, 1.0);
  CHECK(dist.probabilities[0] == doctest::Approx(direct.probability).epsilon(1e-12));
}

TEST_CASE("infeasible observations have empty support") {
  const auto model = CompartmentalModel::sir(0.12, 0.8);
  const StateVector u{{10, 2, 0}};
  // more removals than individuals ever infected
  std::vector<std::optional<long>> partial = {9, std::nullopt, 7};
  CHECK_THROWS_AS(interval_kernel(model, u, partial, 1.0), EmptySupport);
}

TEST_CASE("prepared evaluator matches one-shot calls across parameters") {
  const auto series = testing::eyam_series();
  LikelihoodEvaluator evaluator(CompartmentalModel::sir(0.0178, 2.73), series, {}, 1);
  for (const auto& [b, g] : {std::pair{0.0178, 2.73}, {0.02, 3.0}, {0.015, 2.2}}) {
    const std::vector<double> theta = {b, g};
    const auto a = evaluator.eval(theta, true);
    const auto fresh = loglik(CompartmentalModel::sir(b, g), series, {}, true);
    CHECK(a.loglik == fresh.loglik);
    CHECK((*a.gradient)[0] == (*fresh.gradient)[0]);
    CHECK((*a.gradient)[1] == (*fresh.gradient)[1]);
  }
}

TEST_CASE("piecewise schedules use the interval-local parameters") {
  PiecewiseModel scheduled{CompartmentalModel::sir(0.4, 1.0), {}};
  scheduled.change_points.push_back({1.0, {{"beta", 0.1}}});
  ObservationSeries series;
  series.times = {0.0, 1.0, 2.0};
  series.counts = {{9, 3, 0}, {6, 4, 2}, {5, 3, 4}};

  const auto report = loglik(scheduled, series);
  const double first =
      std::log(transition_probability(CompartmentalModel::sir(0.4, 1.0),
                                      series.state_at(0), series.state_at(1), 1.0)
                   .probability);
  const double second =
      std::log(transition_probability(CompartmentalModel::sir(0.1, 1.0),
                                      series.state_at(1), series.state_at(2), 1.0)
                   .probability);
  CHECK(report.loglik == doctest::Approx(first + second).epsilon(1e-12));

  scheduled.change_points[0].time = 1.5;  // now interior to the second interval
  CHECK_THROWS_AS(loglik(scheduled, series), InvalidParam);
}

TEST_CASE("series validation") {
  const auto model = CompartmentalModel::sir(0.3, 1.1);
  ObservationSeries series;
  series.times = {0.0, 0.0};
  series.counts = {{5, 1, 0}, {5, 1, 0}};
  CHECK_THROWS_AS(loglik(model, series), InvalidParam);
  series.times = {0.0};
  series.counts = {{5, 1, 0}};
  CHECK_THROWS_AS(loglik(model, series), InvalidParam);
  series.times = {0.0, 1.0};
  series.counts = {{5, 1, 0}, {5, std::nullopt, 1}};
  CHECK_THROWS_AS(loglik(model, series), InvalidParam);
}

TEST_SUITE_END();
