#ifndef MULTIBIRTH_LIKELIHOOD_HPP
#define MULTIBIRTH_LIKELIHOOD_HPP

#include <optional>
#include <string>
#include <vector>

#include "multibirth/models.hpp"

namespace mbp {

// Discretely observed compartment counts.  An absent entry marks that
// compartment unobserved at that time.
struct ObservationSeries {
  std::vector<double> times;
  std::vector<std::vector<std::optional<long>>> counts;  // rows x compartments
  std::string time_unit;
  std::string population_label;
  std::optional<long> population_total;

  std::size_t rows() const { return times.size(); }
  bool fully_observed() const;
  // Observed counts at a row as a StateVector; throws if any entry is absent.
  StateVector state_at(std::size_t row) const;
};

struct LogLikReport {
  double loglik = 0.0;
  std::vector<double> per_interval;              // log transition probability per interval
  std::optional<std::vector<double>> gradient;   // d loglik / d log(theta_j)
  std::optional<std::size_t> impossible_interval;  // first structurally impossible interval
};

// Log-likelihood of a fully observed series; per-interval lattice bounds
// follow the observed increments.  The gradient is on the log-parameter
// scale.  Structurally impossible transitions yield -infinity with the
// offending interval recorded; probabilities below the floor that are not
// structural zeros raise NumericalUnderflow.
LogLikReport loglik(const CompartmentalModel& model, const ObservationSeries& series,
                    const InversionConfig& cfg = {}, bool want_gradient = false,
                    int threads = 1);
LogLikReport loglik(const PiecewiseModel& model, const ObservationSeries& series,
                    const InversionConfig& cfg = {}, bool want_gradient = false,
                    int threads = 1);

// Prepared evaluator for repeated likelihood evaluation at different
// parameter values over one fixed series; interval geometry, reconstructed
// states and event-count solutions are built once.
class LikelihoodEvaluator {
 public:
  LikelihoodEvaluator(const CompartmentalModel& model, const ObservationSeries& series,
                      InversionConfig cfg = {}, int threads = 1);
  // params on the natural scale, ordered like model.param_names().
  LogLikReport eval(std::span<const double> params, bool want_gradient);
  const CompartmentalModel& model() const { return model_; }

 private:
  struct Interval;
  CompartmentalModel model_;
  InversionConfig cfg_;
  int threads_ = 1;
  std::vector<Interval> intervals_;

 public:
  ~LikelihoodEvaluator();
  LikelihoodEvaluator(LikelihoodEvaluator&&) noexcept;
  LikelihoodEvaluator& operator=(LikelihoodEvaluator&&) noexcept;
};

struct CompletionDistribution {
  std::vector<StateVector> states;       // feasible completions, lexicographic
  std::vector<double> probabilities;     // exact transition probabilities
};

// Distribution over completions of a partially observed endpoint after time
// t, starting from u.  Throws EmptySupport when no completion is feasible.
CompletionDistribution interval_kernel(const CompartmentalModel& model, const StateVector& u,
                                       const std::vector<std::optional<long>>& partial_v,
                                       double t, const InversionConfig& cfg = {});

}  // namespace mbp

#endif
