#include <cmath>
#include <complex>
#include <numeric>

#include <doctest.h>

#include "multibirth/errors.hpp"
#include "multibirth/lattice.hpp"
#include "support.hpp"

using namespace mbp;
using cd = std::complex<double>;

TEST_SUITE_BEGIN("lattice");

namespace {

BirthProcessSpec pure_birth(std::vector<double> rates) {
  BirthProcessSpec spec;
  spec.dim = 1;
  spec.bound = {static_cast<int>(rates.size()) - 1};
  spec.rate = [rates](int, std::span<const int> x) {
    return rates[static_cast<std::size_t>(x[0])];
  };
  return spec;
}

}  // namespace

TEST_CASE("origin transform is one over s plus the total exit rate") {
  auto spec = testing::make_sir_spec(4, 2, 0.7, 1.3);
  const cd s(3.0, 1.5);
  const auto lat = sweep_forward(spec, s);
  const double exit0 = 0.7 * 4 * 2 + 1.3 * 2;
  CHECK(std::abs(lat.values[0] - 1.0 / (s + exit0)) < 1e-15);
}

TEST_CASE("one-dimensional pure birth telescopes") {
  const std::vector<double> rates = {1.0, 2.5, 0.3, 4.0, 0.9};
  auto spec = pure_birth(rates);
  const cd s(2.0, -1.0);
  const auto lat = sweep_forward(spec, s);
  cd expected = 1.0 / (s + rates[0]);
  CHECK(std::abs(lat.values[0] - expected) < 1e-15);
  for (std::size_t n = 1; n < rates.size(); ++n) {
    expected *= rates[n - 1] / (s + rates[n]);
    CHECK(std::abs(lat.values[n] - expected) < 1e-14);
  }
}

TEST_CASE("forward sweep equals the path-sum form on a 2x2 lattice") {
  BirthProcessSpec spec;
  spec.dim = 2;
  spec.bound = {2, 2};
  spec.rate = [](int, std::span<const int>) { return 1.0; };
  CHECK(testing::lattice_path_count(spec.bound) == 6.0);

  const cd s(1.0, 2.0);
  const auto lat = sweep_forward(spec, s);
  LatticeGeometry geom(spec.bound);
  std::vector<int> x(2);
  for (std::size_t idx = 0; idx < geom.size(); ++idx) {
    geom.coords(idx, x);
    const cd oracle = testing::path_sum_transform(spec, x, s);
    CHECK(std::abs(lat.values[idx] - oracle) < 1e-13);
  }
}

TEST_CASE("path-sum oracle also validates an asymmetric-rate lattice") {
  auto spec = testing::make_sir_spec(3, 2, 0.8, 1.7);
  const cd s(2.5, 4.0);
  const auto lat = sweep_forward(spec, s);
  LatticeGeometry geom(spec.bound);
  std::vector<int> x(2);
  for (std::size_t idx = 0; idx < geom.size(); ++idx) {
    geom.coords(idx, x);
    const cd oracle = testing::path_sum_transform(spec, x, s);
    CHECK(std::abs(lat.values[idx] - oracle) < 1e-13);
  }
}

TEST_CASE("absorbing bound gives f_BB equal to one over s") {
  auto spec = testing::make_sir_spec(3, 1, 1.0, 1.0);  // rates vanish at the bound
  const cd s(2.0, 0.5);
  const auto lat = sweep_backward(spec, s);
  CHECK(std::abs(lat.values.back() - 1.0 / s) < 1e-15);
}

TEST_CASE("one-dimensional backward matches the reversed forward relabeling") {
  const std::vector<double> rates = {1.2, 0.4, 2.0, 3.3, 0.0};
  auto spec = pure_birth(rates);
  const cd s(1.5, -0.7);
  const auto bwd = sweep_backward(spec, s);
  // f_{x,B} telescopes as prod_{i=x}^{B-1} lambda_i/(s+lambda_i) * 1/(s+lambda_B)
  const std::size_t last = rates.size() - 1;
  cd expected = 1.0 / (s + rates[last]);
  CHECK(std::abs(bwd.values[last] - expected) < 1e-15);
  for (std::size_t x = last; x-- > 0;) {
    expected *= rates[x] / (s + rates[x]);
    CHECK(std::abs(bwd.values[x] - expected) < 1e-14);
  }
}

TEST_CASE("forward and backward sweeps agree on the corner transform") {
  auto spec = testing::make_sir_spec(4, 3, 0.35, 1.1);
  const cd s(2.2, 3.1);
  const auto fwd = sweep_forward(spec, s);
  const auto bwd = sweep_backward(spec, s);
  const cd a = fwd.values.back();
  const cd b = bwd.values.front();
  CHECK(std::abs(a - b) / std::abs(a) < 1e-12);
}

TEST_CASE("derivative recursion seeds at the origin") {
  const int s0 = 6, i0 = 2;
  const double beta = 0.4, gamma = 1.2;
  auto spec = testing::make_sir_spec(s0, i0, beta, gamma);
  const cd s(3.0, 2.0);
  const auto lats = sweep_forward_with_derivatives(spec, s);
  REQUIRE(lats.size() == 3);
  const cd denom = s + beta * s0 * i0 + gamma * i0;
  const cd expected_beta = -static_cast<double>(s0) * i0 * lats[0].values[0] / denom;
  const cd expected_gamma = -static_cast<double>(i0) * lats[0].values[0] / denom;
  CHECK(std::abs(lats[1].values[0] - expected_beta) < 1e-15);
  CHECK(std::abs(lats[2].values[0] - expected_gamma) < 1e-15);
}

TEST_CASE("zero sensitivities give identically zero derivative lattices") {
  auto spec = testing::make_sir_spec(4, 2, 0.5, 1.0);
  spec.sensitivity = [](int, std::span<const int>, int) { return 0.0; };
  const auto lats = sweep_forward_with_derivatives(spec, cd(2.0, 1.0));
  for (std::size_t j = 1; j < lats.size(); ++j) {
    for (const cd& v : lats[j].values) CHECK(v == cd(0.0, 0.0));
  }
}

TEST_CASE("inverted derivative lattices match central finite differences") {
  const int s0 = 5, i0 = 2;
  const double beta = 0.3, gamma = 1.0, t = 0.4;
  InversionConfig cfg;

  auto probs_at = [&](double b, double g) {
    return transition_probabilities(testing::make_sir_spec(s0, i0, b, g), t, cfg, false);
  };
  const auto with_derivs =
      transition_probabilities(testing::make_sir_spec(s0, i0, beta, gamma), t, cfg, true);

  const double hb = 1e-5 * beta;
  const auto beta_hi = probs_at(beta + hb, gamma);
  const auto beta_lo = probs_at(beta - hb, gamma);
  const double hg = 1e-5 * gamma;
  const auto gamma_hi = probs_at(beta, gamma + hg);
  const auto gamma_lo = probs_at(beta, gamma - hg);

  for (std::size_t i = 0; i < with_derivs.probabilities.size(); ++i) {
    const double fd_beta = (beta_hi.probabilities[i] - beta_lo.probabilities[i]) / (2 * hb);
    const double fd_gamma = (gamma_hi.probabilities[i] - gamma_lo.probabilities[i]) / (2 * hg);
    if (std::abs(fd_beta) > 1e-8) {
      CHECK(with_derivs.derivatives[0][i] == doctest::Approx(fd_beta).epsilon(1e-4));
    }
    if (std::abs(fd_gamma) > 1e-8) {
      CHECK(with_derivs.derivatives[1][i] == doctest::Approx(fd_gamma).epsilon(1e-4));
    }
  }
}

TEST_CASE("frozen process keeps all mass at the origin") {
  BirthProcessSpec spec;
  spec.dim = 2;
  spec.bound = {3, 3};
  spec.rate = [](int, std::span<const int>) { return 0.0; };
  const auto lat = transition_probabilities(spec, 1.0);
  CHECK(lat.probabilities[0] == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t i = 1; i < lat.probabilities.size(); ++i) {
    CHECK(lat.probabilities[i] == 0.0);
  }
}

TEST_CASE("poisson counting process matches the closed form") {
  const double lambda = 2.0, t = 1.0;
  const int cap = 30;
  BirthProcessSpec spec;
  spec.dim = 1;
  spec.bound = {cap};
  spec.rate = [=](int, std::span<const int> x) { return x[0] < cap ? lambda : 0.0; };
  const auto lat = transition_probabilities(spec, t);
  double log_fact = 0.0;
  for (int k = 0; k <= 10; ++k) {
    if (k > 0) log_fact += std::log(static_cast<double>(k));
    const double expected = std::exp(-lambda * t + k * std::log(lambda * t) - log_fact);
    CHECK(std::abs(lat.probabilities[static_cast<std::size_t>(k)] - expected) < 1e-9);
  }
}

TEST_CASE("lattice normalizes over the full reachable box") {
  for (double t : {0.1, 1.0, 10.0}) {
    const auto lat = transition_probabilities(testing::make_sir_spec(6, 2, 0.4, 1.0), t);
    const double total =
        std::accumulate(lat.probabilities.begin(), lat.probabilities.end(), 0.0);
    CHECK(std::abs(total - 1.0) < 1e-8);
  }
}

TEST_CASE("batched inversion of a full grid normalizes") {
  auto spec = testing::make_sir_spec(3, 1, 1.0, 1.0);
  SweepWorkspace ws(spec, false);
  const std::size_t n = ws.geometry().size();
  auto eval = [&](int, cd s, std::span<cd> out) { ws.forward(s, out.data()); };
  const auto reports = invert_grid(eval, n, 0.5);
  double total = 0.0;
  for (const auto& rep : reports) total += rep.value;
  CHECK(std::abs(total - 1.0) < 1e-8);
  // shared term count across the batch
  for (const auto& rep : reports) CHECK(rep.terms_used == reports[0].terms_used);
}

TEST_CASE("any monotone visit order reproduces the sweep bit for bit") {
  auto spec = testing::make_sir_spec(5, 3, 0.45, 0.9);
  const cd s(4.0, 5.0);
  const auto lat = sweep_forward(spec, s);

  // anti-diagonal order, same ascending per-cell channel summation
  LatticeGeometry geom(spec.bound);
  std::vector<cd> alt(geom.size());
  std::vector<double> exit(geom.size());
  std::vector<int> x(2);
  for (std::size_t idx = 0; idx < geom.size(); ++idx) {
    geom.coords(idx, x);
    exit[idx] = spec.rate(0, x) + spec.rate(1, x);
  }
  const int maxdiag = spec.bound[0] + spec.bound[1];
  for (int diag = 0; diag <= maxdiag; ++diag) {
    for (int x1 = std::min(diag, spec.bound[0]); x1 >= 0; --x1) {
      const int x2 = diag - x1;
      if (x2 < 0 || x2 > spec.bound[1]) continue;
      const std::vector<int> here = {x1, x2};
      const std::size_t idx = geom.flat(here);
      cd acc = (x1 == 0 && x2 == 0) ? 1.0 : 0.0;
      if (x1 > 0) {
        const std::vector<int> a = {x1 - 1, x2};
        acc += spec.rate(0, a) * alt[geom.flat(a)];
      }
      if (x2 > 0) {
        const std::vector<int> a = {x1, x2 - 1};
        acc += spec.rate(1, a) * alt[geom.flat(a)];
      }
      const double dre = s.real() + exit[idx];
      const double inv_norm = 1.0 / (dre * dre + s.imag() * s.imag());
      alt[idx] = acc * cd(dre * inv_norm, -s.imag() * inv_norm);
    }
  }
  for (std::size_t idx = 0; idx < geom.size(); ++idx) {
    CHECK(lat.values[idx].real() == alt[idx].real());
    CHECK(lat.values[idx].imag() == alt[idx].imag());
  }
}

TEST_CASE("chapman-kolmogorov semigroup holds through restarts") {
  const int s0 = 3, i0 = 1;
  const double beta = 0.9, gamma = 0.8;
  const double t1 = 0.3, t2 = 0.5;
  auto spec = testing::make_sir_spec(s0, i0, beta, gamma);
  const auto first = transition_probabilities(spec, t1);
  const auto both = transition_probabilities(spec, t1 + t2);
  LatticeGeometry geom(spec.bound);

  std::vector<double> composed(geom.size(), 0.0);
  std::vector<int> y(2);
  for (std::size_t idx = 0; idx < geom.size(); ++idx) {
    if (first.probabilities[idx] == 0.0) continue;
    geom.coords(idx, y);
    // restart the birth process at y
    BirthProcessSpec restarted;
    restarted.dim = 2;
    restarted.bound = {spec.bound[0] - y[0], spec.bound[1] - y[1]};
    const std::vector<int> base = y;
    restarted.rate = [&spec, base](int k, std::span<const int> z) {
      const std::vector<int> shifted = {base[0] + z[0], base[1] + z[1]};
      return spec.rate(k, shifted);
    };
    const auto second = transition_probabilities(restarted, t2);
    LatticeGeometry g2(restarted.bound);
    std::vector<int> z(2);
    for (std::size_t jdx = 0; jdx < g2.size(); ++jdx) {
      g2.coords(jdx, z);
      const std::vector<int> target = {base[0] + z[0], base[1] + z[1]};
      composed[geom.flat(target)] += first.probabilities[idx] * second.probabilities[jdx];
    }
  }
  for (std::size_t idx = 0; idx < geom.size(); ++idx) {
    CHECK(std::abs(composed[idx] - both.probabilities[idx]) < 1e-7);
  }
}

TEST_CASE("preconditions and validation") {
  auto spec = testing::make_sir_spec(2, 1, 1.0, 1.0);
  CHECK_THROWS_AS(sweep_forward(spec, cd(0.0, 1.0)), InvalidParam);
  CHECK_THROWS_AS(sweep_forward(spec, cd(-1.0, 0.0)), InvalidParam);
  spec.rate = [](int, std::span<const int>) { return -1.0; };
  CHECK_THROWS_AS(sweep_forward(spec, cd(1.0, 0.0)), InvalidParam);
}

TEST_SUITE_END();
