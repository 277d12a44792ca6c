#include "multibirth/lattice.hpp"

#include <cmath>

#include "multibirth/errors.hpp"

namespace mbp {

LatticeGeometry::LatticeGeometry(std::span<const int> bound)
    : bound_(bound.begin(), bound.end()), stride_(bound.size()) {
  if (bound_.empty()) throw InvalidParam("lattice must have at least one dimension");
  size_ = 1;
  for (int b : bound_) {
    if (b < 0) throw InvalidParam("lattice bound must be nonnegative");
    size_ *= static_cast<std::size_t>(b) + 1;
  }
  std::size_t s = 1;
  for (int k = dim() - 1; k >= 0; --k) {
    stride_[static_cast<std::size_t>(k)] = s;
    s *= static_cast<std::size_t>(bound_[static_cast<std::size_t>(k)]) + 1;
  }
}

std::size_t LatticeGeometry::flat(std::span<const int> x) const {
  std::size_t idx = 0;
  for (int k = 0; k < dim(); ++k) {
    idx += static_cast<std::size_t>(x[static_cast<std::size_t>(k)]) * stride_[static_cast<std::size_t>(k)];
  }
  return idx;
}

void LatticeGeometry::coords(std::size_t idx, std::span<int> out) const {
  for (int k = 0; k < dim(); ++k) {
    const std::size_t s = stride_[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(k)] = static_cast<int>(idx / s);
    idx %= s;
  }
}

SweepWorkspace::SweepWorkspace(LatticeGeometry geom, int n_params)
    : geom_(std::move(geom)), dim_(geom_.dim()), n_params_(n_params) {
  const std::size_t n = geom_.size();
  rates_.assign(static_cast<std::size_t>(dim_) * n, 0.0);
  exit_.assign(n, 0.0);
  if (n_params_ > 0) {
    sens_.assign(static_cast<std::size_t>(n_params_) * dim_ * n, 0.0);
    exit_sens_.assign(static_cast<std::size_t>(n_params_) * n, 0.0);
  }
  reach_.assign(n, 0);
}

SweepWorkspace::SweepWorkspace(const BirthProcessSpec& spec, bool with_sensitivities)
    : SweepWorkspace(LatticeGeometry(spec.bound),
                     with_sensitivities ? spec.n_params : 0) {
  if (spec.dim != geom_.dim()) throw InvalidParam("spec dim does not match bound size");
  if (n_params_ > 0 && !spec.sensitivity) {
    throw InvalidParam("sensitivities requested but spec has no sensitivity function");
  }
  const std::size_t n = geom_.size();
  std::vector<int> x(static_cast<std::size_t>(dim_), 0);
  for (std::size_t idx = 0; idx < n; ++idx) {
    for (int k = 0; k < dim_; ++k) {
      const double r = spec.rate(k, x);
      if (!(r >= 0.0) || !std::isfinite(r)) {
        throw InvalidParam("birth rates must be finite and nonnegative");
      }
      rates_[static_cast<std::size_t>(k) * n + idx] = r;
      for (int j = 0; j < n_params_; ++j) {
        const double d = spec.sensitivity(k, x, j);
        if (!std::isfinite(d)) throw InvalidParam("rate sensitivities must be finite");
        sens_[(static_cast<std::size_t>(j) * dim_ + static_cast<std::size_t>(k)) * n + idx] = d;
      }
    }
    for (int k = dim_ - 1; k >= 0; --k) {
      if (++x[static_cast<std::size_t>(k)] <= geom_.bound()[static_cast<std::size_t>(k)]) break;
      x[static_cast<std::size_t>(k)] = 0;
    }
  }
  finalize();
}

std::span<double> SweepWorkspace::rates(int channel) {
  return {rates_.data() + static_cast<std::size_t>(channel) * geom_.size(), geom_.size()};
}

std::span<const double> SweepWorkspace::rates(int channel) const {
  return {rates_.data() + static_cast<std::size_t>(channel) * geom_.size(), geom_.size()};
}

std::span<double> SweepWorkspace::sensitivities(int param, int channel) {
  const std::size_t n = geom_.size();
  return {sens_.data() + (static_cast<std::size_t>(param) * dim_ + static_cast<std::size_t>(channel)) * n, n};
}

void SweepWorkspace::finalize() {
  const std::size_t n = geom_.size();
  for (std::size_t idx = 0; idx < n; ++idx) {
    double e = 0.0;
    for (int k = 0; k < dim_; ++k) e += rates_[static_cast<std::size_t>(k) * n + idx];
    exit_[idx] = e;
  }
  for (int j = 0; j < n_params_; ++j) {
    for (std::size_t idx = 0; idx < n; ++idx) {
      double e = 0.0;
      for (int k = 0; k < dim_; ++k) {
        e += sens_[(static_cast<std::size_t>(j) * dim_ + static_cast<std::size_t>(k)) * n + idx];
      }
      exit_sens_[static_cast<std::size_t>(j) * n + idx] = e;
    }
  }
  // Reachability from the origin through positive rates; ascending flat
  // order visits ancestors first.
  std::vector<int> x(static_cast<std::size_t>(dim_), 0);
  for (std::size_t idx = 0; idx < n; ++idx) {
    if (idx == 0) {
      reach_[idx] = 1;
    } else {
      std::uint8_t r = 0;
      for (int k = 0; k < dim_; ++k) {
        if (x[static_cast<std::size_t>(k)] > 0) {
          const std::size_t anc = idx - geom_.stride(k);
          if (reach_[anc] && rates_[static_cast<std::size_t>(k) * n + anc] > 0.0) {
            r = 1;
            break;
          }
        }
      }
      reach_[idx] = r;
    }
    for (int k = dim_ - 1; k >= 0; --k) {
      if (++x[static_cast<std::size_t>(k)] <= geom_.bound()[static_cast<std::size_t>(k)]) break;
      x[static_cast<std::size_t>(k)] = 0;
    }
  }
}

void SweepWorkspace::check_finite(const std::complex<double>* f, std::size_t n) const {
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(f[i].real()) || !std::isfinite(f[i].imag())) {
      throw OverflowDomain("lattice sweep produced a non-finite value");
    }
  }
}

void SweepWorkspace::forward(std::complex<double> s, std::complex<double>* f,
                             std::complex<double>* derivs) const {
  if (!(s.real() > 0.0)) throw InvalidParam("sweep abscissa must have positive real part");
  const std::size_t n = geom_.size();
  const double sr = s.real(), si = s.imag();
  std::vector<int> x(static_cast<std::size_t>(dim_), 0);
  for (std::size_t idx = 0; idx < n; ++idx) {
    std::complex<double> acc = idx == 0 ? 1.0 : 0.0;
    for (int k = 0; k < dim_; ++k) {
      if (x[static_cast<std::size_t>(k)] > 0) {
        const std::size_t anc = idx - geom_.stride(k);
        acc += rates_[static_cast<std::size_t>(k) * n + anc] * f[anc];
      }
    }
    const double dre = sr + exit_[idx];
    const double inv_norm = 1.0 / (dre * dre + si * si);
    const std::complex<double> inv(dre * inv_norm, -si * inv_norm);
    f[idx] = acc * inv;
    for (int j = 0; j < n_params_ && derivs != nullptr; ++j) {
      std::complex<double>* g = derivs + static_cast<std::size_t>(j) * n;
      std::complex<double> gacc = -exit_sens_[static_cast<std::size_t>(j) * n + idx] * f[idx];
      for (int k = 0; k < dim_; ++k) {
        if (x[static_cast<std::size_t>(k)] > 0) {
          const std::size_t anc = idx - geom_.stride(k);
          gacc += rates_[static_cast<std::size_t>(k) * n + anc] * g[anc] +
                  sens_[(static_cast<std::size_t>(j) * dim_ + static_cast<std::size_t>(k)) * n + anc] * f[anc];
        }
      }
      g[idx] = gacc * inv;
    }
    for (int k = dim_ - 1; k >= 0; --k) {
      if (++x[static_cast<std::size_t>(k)] <= geom_.bound()[static_cast<std::size_t>(k)]) break;
      x[static_cast<std::size_t>(k)] = 0;
    }
  }
  check_finite(f, n);
  if (derivs != nullptr) check_finite(derivs, static_cast<std::size_t>(n_params_) * n);
}

void SweepWorkspace::backward(std::complex<double> s, std::complex<double>* f) const {
  if (!(s.real() > 0.0)) throw InvalidParam("sweep abscissa must have positive real part");
  const std::size_t n = geom_.size();
  const double sr = s.real(), si = s.imag();
  std::vector<int> x(geom_.bound().begin(), geom_.bound().end());
  for (std::size_t rev = 0; rev < n; ++rev) {
    const std::size_t idx = n - 1 - rev;
    std::complex<double> acc = idx == n - 1 ? 1.0 : 0.0;
    for (int k = 0; k < dim_; ++k) {
      if (x[static_cast<std::size_t>(k)] < geom_.bound()[static_cast<std::size_t>(k)]) {
        acc += rates_[static_cast<std::size_t>(k) * n + idx] * f[idx + geom_.stride(k)];
      }
    }
    const double dre = sr + exit_[idx];
    const double inv_norm = 1.0 / (dre * dre + si * si);
    f[idx] = acc * std::complex<double>(dre * inv_norm, -si * inv_norm);
    for (int k = dim_ - 1; k >= 0; --k) {
      if (--x[static_cast<std::size_t>(k)] >= 0) break;
      x[static_cast<std::size_t>(k)] = geom_.bound()[static_cast<std::size_t>(k)];
    }
  }
  check_finite(f, n);
}

LaplaceLattice sweep_forward(const BirthProcessSpec& spec, std::complex<double> s) {
  SweepWorkspace ws(spec, false);
  LaplaceLattice lat;
  lat.bound = spec.bound;
  lat.values.resize(ws.geometry().size());
  ws.forward(s, lat.values.data());
  return lat;
}

LaplaceLattice sweep_backward(const BirthProcessSpec& spec, std::complex<double> s) {
  SweepWorkspace ws(spec, false);
  LaplaceLattice lat;
  lat.bound = spec.bound;
  lat.values.resize(ws.geometry().size());
  ws.backward(s, lat.values.data());
  return lat;
}

std::vector<LaplaceLattice> sweep_forward_with_derivatives(const BirthProcessSpec& spec,
                                                           std::complex<double> s) {
  SweepWorkspace ws(spec, true);
  const std::size_t n = ws.geometry().size();
  std::vector<std::complex<double>> f(n);
  std::vector<std::complex<double>> g(static_cast<std::size_t>(spec.n_params) * n);
  ws.forward(s, f.data(), g.data());
  std::vector<LaplaceLattice> out(static_cast<std::size_t>(spec.n_params) + 1);
  out[0].bound = spec.bound;
  out[0].values = std::move(f);
  for (int j = 0; j < spec.n_params; ++j) {
    auto& lat = out[static_cast<std::size_t>(j) + 1];
    lat.bound = spec.bound;
    lat.derivative_of = j;
    lat.values.assign(g.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(j) * n),
                      g.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(j + 1) * n));
  }
  return out;
}

LatticeProbabilities transition_probabilities(const BirthProcessSpec& spec, double t,
                                              const InversionConfig& cfg,
                                              bool want_derivatives) {
  SweepWorkspace ws(spec, want_derivatives);
  const std::size_t n = ws.geometry().size();
  const int npar = want_derivatives ? spec.n_params : 0;
  auto eval = [&](int, std::complex<double> s, std::span<std::complex<double>> out) {
    ws.forward(s, out.data(), npar > 0 ? out.data() + n : nullptr);
  };
  const auto reports =
      invert_grid_mixed(eval, n * (1 + static_cast<std::size_t>(npar)), n, t, cfg);

  LatticeProbabilities result;
  result.bound = spec.bound;
  result.probabilities.resize(n);
  result.terms_used = reports[0].terms_used;
  for (std::size_t i = 0; i < n; ++i) {
    result.probabilities[i] = reports[i].value;
    result.max_est_error = std::max(result.max_est_error, reports[i].est_error);
  }
  result.derivatives.resize(static_cast<std::size_t>(npar));
  for (int j = 0; j < npar; ++j) {
    auto& d = result.derivatives[static_cast<std::size_t>(j)];
    d.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      d[i] = reports[(static_cast<std::size_t>(j) + 1) * n + i].value;
    }
  }
  return result;
}

}  // namespace mbp
