#include "multibirth/laplace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "multibirth/errors.hpp"

namespace mbp {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kClampSlack = 1e-6;
constexpr double kTinyFloor = 1e-12;   // floor in the relative stopping rule
constexpr double kTinyOmega = 1e-280;  // stand-in remainder for exact-zero terms
constexpr double kTimeEpsilon = 1e-12;
constexpr int kMinSeriesTerms = 12;
// Changes below this multiple of the largest partial-sum magnitude are
// floating-point noise; demanding more would never terminate on lattice
// points whose series cancel almost perfectly.
constexpr double kNoiseFactor = 32.0 * 2.220446049250313e-16;
constexpr int kLevinWindow = 256;  // table depth cap; bounds memory on big grids
constexpr double kLevinBeta = 1.0;
constexpr int kEulerOrder = 12;

const double kEulerWeights[kEulerOrder + 1] = {1,   12,  66,  220, 495, 792, 924,
                                               792, 495, 220, 66,  12,  1};

void validate(const InversionConfig& cfg) {
  if (!(cfg.precision > 0.0)) throw InvalidParam("inversion precision M must be > 0");
  if (cfg.max_terms < 8) throw InvalidParam("inversion max_terms must be >= 8");
  if (!(cfg.rel_tol > 0.0)) throw InvalidParam("inversion rel_tol must be > 0");
}

InversionReport finalize(double raw, int terms, double err) {
  if (raw < -kClampSlack || raw > 1.0 + kClampSlack) {
    char msg[160];
    std::snprintf(msg, sizeof msg,
                  "inverted value %.6g lies outside [0,1] beyond the clamp slack", raw);
    throw NonConvergence(msg);
  }
  InversionReport rep;
  rep.value = std::clamp(raw, 0.0, 1.0);
  rep.clamped = raw < 0.0 || raw > 1.0;
  rep.terms_used = terms;
  rep.est_error = err;
  return rep;
}

}  // namespace

std::complex<double> inversion_abscissa(double precision, double t, int k) {
  return {precision / (2.0 * t), static_cast<double>(k) * kPi / t};
}

double discretization_bound(double precision) { return 1.0 / std::expm1(precision); }

SeriesAccelerator::SeriesAccelerator(Acceleration mode, std::size_t n_points)
    : mode_(mode),
      n_points_(n_points),
      partial_(n_points, 0.0),
      estimate_(n_points, 0.0),
      change_(n_points, 0.0),
      magnitude_(n_points, 0.0) {
  if (mode_ == Acceleration::euler) {
    euler_ring_.assign(static_cast<std::size_t>(kEulerOrder + 1) * n_points, 0.0);
  }
}

void SeriesAccelerator::push(std::span<const double> terms) {
  switch (mode_) {
    case Acceleration::levin_u:
      push_levin(terms);
      break;
    case Acceleration::euler:
      push_euler(terms);
      break;
    case Acceleration::none: {
      for (std::size_t p = 0; p < n_points_; ++p) {
        partial_[p] += terms[p];
        magnitude_[p] = std::max(magnitude_[p], std::abs(partial_[p]));
        change_[p] = std::abs(partial_[p] - estimate_[p]);
        estimate_[p] = partial_[p];
      }
      ++n_terms_;
      break;
    }
  }
}

void SeriesAccelerator::push_levin(std::span<const double> terms) {
  const int m = n_terms_++;
  if (static_cast<int>(numer_.size()) == kLevinWindow) {
    numer_.erase(numer_.begin());
    denom_.erase(denom_.begin());
    ++base_;
  }
  numer_.emplace_back(n_points_);
  denom_.emplace_back(n_points_);
  auto& num_row = numer_.back();
  auto& den_row = denom_.back();
  for (std::size_t p = 0; p < n_points_; ++p) {
    partial_[p] += terms[p];
    magnitude_[p] = std::max(magnitude_[p], std::abs(partial_[p]));
    double omega = (kLevinBeta + m) * terms[p];
    if (omega == 0.0) omega = kTinyOmega;
    den_row[p] = 1.0 / omega;
    num_row[p] = partial_[p] / omega;
  }

  // Triangle update: row r holds index n = base_ + r; the recurrence for the
  // Levin u-transform combines each row with the freshly updated row above it.
  const double bm = kLevinBeta + m;
  const double bm1 = kLevinBeta + m - 1;
  double c = 1.0;
  for (int n = m - 1; n >= base_; --n) {
    const std::size_t r = static_cast<std::size_t>(n - base_);
    double* nu = numer_[r].data();
    double* de = denom_[r].data();
    const double* nu1 = numer_[r + 1].data();
    const double* de1 = denom_[r + 1].data();
    for (std::size_t p = 0; p < n_points_; ++p) {
      nu[p] = nu1[p] - c * nu[p];
      de[p] = de1[p] - c * de[p];
    }
    c *= ((kLevinBeta + n - 1) / (kLevinBeta + n)) * (bm1 / bm);
  }

  for (std::size_t p = 0; p < n_points_; ++p) {
    const double d = denom_[0][p];
    const double est = std::abs(d) < 1e-300 ? estimate_[p] : numer_[0][p] / d;
    change_[p] = std::abs(est - estimate_[p]);
    estimate_[p] = est;
  }
}

void SeriesAccelerator::push_euler(std::span<const double> terms) {
  const int m = n_terms_++;
  const std::size_t slot = static_cast<std::size_t>(m % (kEulerOrder + 1)) * n_points_;
  for (std::size_t p = 0; p < n_points_; ++p) {
    partial_[p] += terms[p];
    magnitude_[p] = std::max(magnitude_[p], std::abs(partial_[p]));
    euler_ring_[slot + p] = partial_[p];
  }
  if (m < kEulerOrder) {  // not enough sums to average yet
    for (std::size_t p = 0; p < n_points_; ++p) {
      change_[p] = std::abs(partial_[p] - estimate_[p]);
      estimate_[p] = partial_[p];
    }
    return;
  }
  for (std::size_t p = 0; p < n_points_; ++p) {
    double acc = 0.0;
    for (int i = 0; i <= kEulerOrder; ++i) {
      const int idx = (m - kEulerOrder + i) % (kEulerOrder + 1);
      acc += kEulerWeights[i] * euler_ring_[static_cast<std::size_t>(idx) * n_points_ + p];
    }
    const double est = acc / 4096.0;
    change_[p] = std::abs(est - estimate_[p]);
    estimate_[p] = est;
  }
}

std::vector<InversionReport> invert_grid_mixed(
    const std::function<void(int k, std::complex<double> s,
                             std::span<std::complex<double>> out)>& evaluate,
    std::size_t n_points, std::size_t n_clamped, double t, const InversionConfig& cfg) {
  validate(cfg);
  if (!(t > 0.0)) throw InvalidTime("inversion time must be > 0");

  std::vector<std::complex<double>> buf(n_points);
  std::vector<InversionReport> reports(n_points);
  auto wrap = [&](double raw, std::size_t p, int terms, double err) {
    if (p < n_clamped) return finalize(raw, terms, err);
    InversionReport rep;
    rep.value = raw;
    rep.terms_used = terms;
    rep.est_error = err;
    return rep;
  };

  if (t < kTimeEpsilon) {
    // Abscissae scale as 1/t; below the cutoff return the t -> 0 limit
    // s * f(s) as s -> infinity instead of inverting.
    const std::complex<double> s = inversion_abscissa(cfg.precision, kTimeEpsilon, 0);
    evaluate(0, s, buf);
    for (std::size_t p = 0; p < n_points; ++p) {
      reports[p] = wrap((s * buf[p]).real(), p, 1, discretization_bound(cfg.precision));
    }
    return reports;
  }

  const double disc = discretization_bound(cfg.precision);
  const double half_exp = std::exp(cfg.precision / 2.0);
  const double scale0 = half_exp / (2.0 * t);
  const double scale = half_exp / t;

  // k = 0 carries weight 1/2; the remaining terms alternate in sign.
  std::vector<double> offset(n_points);
  evaluate(0, inversion_abscissa(cfg.precision, t, 0), buf);
  for (std::size_t p = 0; p < n_points; ++p) offset[p] = scale0 * buf[p].real();

  SeriesAccelerator acc(cfg.acceleration, n_points);
  std::vector<double> term(n_points);
  int evaluations = 1;
  bool converged = false;
  for (int k = 1; k < cfg.max_terms; ++k) {
    evaluate(k, inversion_abscissa(cfg.precision, t, k), buf);
    ++evaluations;
    const double sign = (k % 2 == 0) ? 1.0 : -1.0;
    for (std::size_t p = 0; p < n_points; ++p) term[p] = sign * scale * buf[p].real();
    acc.push(term);
    if (acc.terms_seen() < kMinSeriesTerms) continue;
    converged = true;
    for (std::size_t p = 0; p < n_points; ++p) {
      const double val = offset[p] + acc.estimates()[p];
      const double thresh =
          std::max(cfg.rel_tol * std::max(std::abs(val), kTinyFloor),
                   kNoiseFactor * std::max(acc.magnitude()[p], std::abs(offset[p])));
      if (acc.last_change()[p] >= thresh) {
        converged = false;
        break;
      }
    }
    if (converged) break;
  }
  if (!converged) {
    char msg[128];
    std::snprintf(msg, sizeof msg, "inversion failed the stopping rule within %d terms",
                  cfg.max_terms);
    throw NonConvergence(msg);
  }
  for (std::size_t p = 0; p < n_points; ++p) {
    reports[p] =
        wrap(offset[p] + acc.estimates()[p], p, evaluations, disc + acc.last_change()[p]);
  }
  return reports;
}

std::vector<InversionReport> invert_grid(
    const std::function<void(int k, std::complex<double> s,
                             std::span<std::complex<double>> out)>& evaluate,
    std::size_t n_points, double t, const InversionConfig& cfg) {
  return invert_grid_mixed(evaluate, n_points, n_points, t, cfg);
}

InversionReport invert_at(
    const std::function<std::complex<double>(std::complex<double>)>& transform,
    double t, const InversionConfig& cfg) {
  auto eval = [&](int, std::complex<double> s, std::span<std::complex<double>> out) {
    out[0] = transform(s);
  };
  return invert_grid(eval, 1, t, cfg)[0];
}

}  // namespace mbp
