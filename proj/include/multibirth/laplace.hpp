#ifndef MULTIBIRTH_LAPLACE_HPP
#define MULTIBIRTH_LAPLACE_HPP

#include <complex>
#include <functional>
#include <span>
#include <vector>

namespace mbp {

enum class Acceleration { levin_u, euler, none };

// Controls for the numerical inverse Laplace transform.  The alternating
// series is evaluated at abscissae (M + 2*k*pi*i)/(2t); M trades the
// discretization error 1/(e^M - 1) against conditioning of the series.
struct InversionConfig {
  double precision = 20.0;  // M
  int max_terms = 2000;     // hard cap on transform evaluations
  double rel_tol = 1e-10;
  Acceleration acceleration = Acceleration::levin_u;
};

struct InversionReport {
  double value = 0.0;
  int terms_used = 0;
  double est_error = 0.0;
  bool clamped = false;
};

// k-th abscissa of the inversion series at time t.
std::complex<double> inversion_abscissa(double precision, double t, int k);

// Bound on the discretization error for originals bounded in [0,1].
double discretization_bound(double precision);

// Invert a single Laplace transform at time t.  The original must be a
// probability-like function bounded in [0,1]; the result is clamped into
// [0,1] (within a small slack) and the clamping is flagged.
InversionReport invert_at(
    const std::function<std::complex<double>(std::complex<double>)>& transform,
    double t, const InversionConfig& cfg = {});

// Batched inversion of many transforms sharing the abscissae at one time t.
// evaluate(k, s, out) must fill out[i] with the i-th transform value at
// s = inversion_abscissa(cfg.precision, t, k).  All points share the
// realized term count; the stopping rule uses the worst residual over the
// batch.  Within a call, evaluate is invoked for k = 0, 1, 2, ... in order.
std::vector<InversionReport> invert_grid(
    const std::function<void(int k, std::complex<double> s,
                             std::span<std::complex<double>> out)>& evaluate,
    std::size_t n_points, double t, const InversionConfig& cfg = {});

// As invert_grid, but only the first n_clamped points are probabilities
// subject to the [0,1] clamp; the remaining points are unconstrained
// originals such as parameter derivatives.
std::vector<InversionReport> invert_grid_mixed(
    const std::function<void(int k, std::complex<double> s,
                             std::span<std::complex<double>> out)>& evaluate,
    std::size_t n_points, std::size_t n_clamped, double t,
    const InversionConfig& cfg = {});

// Accelerator for an alternating series fed one term at a time across a
// batch of points.  Used by invert_grid; exposed for tests.
class SeriesAccelerator {
 public:
  SeriesAccelerator(Acceleration mode, std::size_t n_points);

  // Feed the next term for every point and refresh the estimates.
  void push(std::span<const double> terms);

  std::span<const double> estimates() const { return estimate_; }
  std::span<const double> last_change() const { return change_; }
  // Running max of |partial sum| per point; changes below the floating-point
  // noise at this magnitude cannot be resolved further.
  std::span<const double> magnitude() const { return magnitude_; }
  int terms_seen() const { return n_terms_; }

 private:
  void push_levin(std::span<const double> terms);
  void push_euler(std::span<const double> terms);

  Acceleration mode_;
  std::size_t n_points_;
  int n_terms_ = 0;
  std::vector<double> partial_;    // running partial sums
  std::vector<double> estimate_;   // current accelerated estimates
  std::vector<double> change_;     // |estimate - previous estimate|
  std::vector<double> magnitude_;  // running max |partial sum|
  // Levin u-transform state: numerator/denominator tables, one row per
  // retained term, each row holding one entry per point.  The table depth
  // is capped; older rows are dropped, which restarts the transform on the
  // tail of the series and keeps memory linear in the batch size.
  std::vector<std::vector<double>> numer_, denom_;
  int base_ = 0;  // index of the first retained term
  std::vector<double> euler_ring_;  // last (euler_m+1) partial sums per point
};

}  // namespace mbp

#endif
