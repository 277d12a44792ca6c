#ifndef MULTIBIRTH_LATTICE_HPP
#define MULTIBIRTH_LATTICE_HPP

#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "multibirth/laplace.hpp"

namespace mbp {

// A d-dimensional birth process restricted to the box {0..B1} x ... x {0..Bd}.
// rate(k, x) is the birth rate of channel k at lattice state x; rates are
// used exactly as given, so a spec whose bound truncates the support still
// yields exact transform values at every cell of the box.
struct BirthProcessSpec {
  int dim = 0;
  std::vector<int> bound;
  std::function<double(int channel, std::span<const int> x)> rate;
  // Optional: d rate(k, x) / d theta_j for parameters j = 0..n_params-1.
  std::function<double(int channel, std::span<const int> x, int param)> sensitivity;
  int n_params = 0;
};

// Row-major box geometry; the last coordinate varies fastest, so ascending
// flat order is lexicographic and every ancestor x - e_k precedes x.
class LatticeGeometry {
 public:
  LatticeGeometry() = default;
  explicit LatticeGeometry(std::span<const int> bound);

  int dim() const { return static_cast<int>(bound_.size()); }
  std::size_t size() const { return size_; }
  std::span<const int> bound() const { return bound_; }
  std::size_t stride(int k) const { return stride_[static_cast<std::size_t>(k)]; }
  std::size_t flat(std::span<const int> x) const;
  void coords(std::size_t idx, std::span<int> out) const;

 private:
  std::vector<int> bound_;
  std::vector<std::size_t> stride_;
  std::size_t size_ = 0;
};

// Laplace-domain lattice produced by one sweep at a fixed s.
struct LaplaceLattice {
  std::vector<int> bound;
  std::vector<std::complex<double>> values;
  int derivative_of = -1;  // -1: probability channel, else parameter index
};

// Materialized rate tables for repeated sweeps over one box.  Building the
// workspace evaluates every rate once; the per-abscissa sweeps then run on
// flat arrays.  Construction validates that rates are finite and nonnegative.
class SweepWorkspace {
 public:
  SweepWorkspace(const BirthProcessSpec& spec, bool with_sensitivities);
  // Caller-filled variant: fill rates()/sensitivities() then call finalize().
  SweepWorkspace(LatticeGeometry geom, int n_params);

  const LatticeGeometry& geometry() const { return geom_; }
  int n_params() const { return n_params_; }

  std::span<double> rates(int channel);
  std::span<const double> rates(int channel) const;
  std::span<double> sensitivities(int param, int channel);
  void finalize();  // recompute exit-rate sums and the reachability mask

  // Forward sweep {f_0x(s)}; f must hold geometry().size() values.  When
  // derivs is non-null it must hold n_params * size values and receives the
  // parameter-derivative lattices computed in the same pass.
  void forward(std::complex<double> s, std::complex<double>* f,
               std::complex<double>* derivs = nullptr) const;
  // Backward sweep {f_xB(s)}.
  void backward(std::complex<double> s, std::complex<double>* f) const;

  // True if x is reachable from 0 through strictly positive rates.
  bool reachable(std::size_t idx) const { return reach_[idx] != 0; }

 private:
  void check_finite(const std::complex<double>* f, std::size_t n) const;

  LatticeGeometry geom_;
  int dim_ = 0;
  int n_params_ = 0;
  std::vector<double> rates_;      // [channel][cell]
  std::vector<double> exit_;       // total exit rate per cell
  std::vector<double> sens_;       // [param][channel][cell]
  std::vector<double> exit_sens_;  // [param][cell]
  std::vector<std::uint8_t> reach_;
};

LaplaceLattice sweep_forward(const BirthProcessSpec& spec, std::complex<double> s);
LaplaceLattice sweep_backward(const BirthProcessSpec& spec, std::complex<double> s);
// Probability lattice first, then one lattice per parameter.
std::vector<LaplaceLattice> sweep_forward_with_derivatives(const BirthProcessSpec& spec,
                                                           std::complex<double> s);

struct LatticeProbabilities {
  std::vector<int> bound;
  std::vector<double> probabilities;             // row-major over the box
  std::vector<std::vector<double>> derivatives;  // one lattice per parameter
  int terms_used = 0;
  double max_est_error = 0.0;
};

// Full transition-probability lattice {P_0x(t)} by inverse transform of the
// per-abscissa forward sweeps; cost O(L * prod(B_k + 1)).
LatticeProbabilities transition_probabilities(const BirthProcessSpec& spec, double t,
                                              const InversionConfig& cfg = {},
                                              bool want_derivatives = false);

}  // namespace mbp

#endif
