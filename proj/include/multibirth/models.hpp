#ifndef MULTIBIRTH_MODELS_HPP
#define MULTIBIRTH_MODELS_HPP

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "multibirth/lattice.hpp"

namespace mbp {

struct StateVector {
  std::vector<int> counts;

  long total() const {
    long t = 0;
    for (int c : counts) t += c;
    return t;
  }
  bool operator==(const StateVector&) const = default;
};

// A continuous-time Markov jump process on compartment counts.  Each channel
// moves one individual from compartment `from` to compartment `to` at a
// state-dependent rate; the incidence matrix has column k equal to
// e_to - e_from.  Parameters are named, nonnegative reals.
class CompartmentalModel {
 public:
  struct Channel {
    int from = 0;
    int to = 0;
    std::function<double(std::span<const double> params, std::span<const int> y)> rate;
    std::function<double(std::span<const double> params, std::span<const int> y, int param)>
        sensitivity;
  };

  CompartmentalModel(std::string kind, std::vector<std::string> labels,
                     std::vector<Channel> channels, std::vector<std::string> param_names,
                     std::vector<double> params, int loop_bound);

  static CompartmentalModel sir(double beta, double gamma);
  static CompartmentalModel seir(double beta, double kappa, double gamma);
  static CompartmentalModel sirs(double beta, double gamma, double nu, int loop_bound);
  static CompartmentalModel general_sir(double beta, double gamma, double alpha,
                                        double omega, double eta);
  // SIR with the infection rate expressed through the basic reproduction
  // number: beta = r0 * gamma / population.
  static CompartmentalModel sir_from_r0(double r0, double gamma, long population);

  const std::string& kind() const { return kind_; }
  int compartments() const { return static_cast<int>(labels_.size()); }
  int channels() const { return static_cast<int>(channels_.size()); }
  const std::vector<std::string>& labels() const { return labels_; }
  int compartment_index(std::string_view label) const;  // -1 if unknown
  int loop_bound() const { return loop_bound_; }
  int channel_from(int k) const { return channels_[static_cast<std::size_t>(k)].from; }
  int channel_to(int k) const { return channels_[static_cast<std::size_t>(k)].to; }
  int incidence(int compartment, int channel) const;

  const std::vector<std::string>& param_names() const { return param_names_; }
  std::span<const double> params() const { return params_; }
  double param(std::string_view name) const;
  void set_param(std::string_view name, double value);
  void set_params(std::span<const double> values);

  double rate(int channel, std::span<const int> y) const;
  double rate_sensitivity(int channel, std::span<const int> y, int param) const;

  // Batched evaluation over packed states (n rows of compartments() ints);
  // counts are clamped at zero, matching the positive-part rate convention.
  void rates_into(int channel, std::span<const int> states, std::size_t n,
                  std::span<double> out) const;
  void sensitivities_into(int channel, int param, std::span<const int> states,
                          std::size_t n, std::span<double> out) const;

  bool closed() const;   // every incidence column sums to zero
  bool acyclic() const;  // the transition digraph has no directed cycle

 private:
  std::string kind_;
  std::vector<std::string> labels_;
  std::vector<Channel> channels_;
  std::vector<std::string> param_names_;
  std::vector<double> params_;
  int loop_bound_ = 1;
};

// Named-parameter factory used by the model-file loader; kind is one of
// "sir", "seir", "sirs", "general_sir".
CompartmentalModel builtin_model(std::string_view kind,
                                 const std::map<std::string, double>& params,
                                 std::optional<int> loop_bound = std::nullopt);

// Piecewise-constant parameter schedule: parameters change only at the given
// times.  Rates varying within an observation interval are not supported.
struct PiecewiseModel {
  CompartmentalModel base;
  struct ChangePoint {
    double time;
    std::vector<std::pair<std::string, double>> assignments;
  };
  std::vector<ChangePoint> change_points;  // strictly increasing times

  // Model in force on [t_begin, t_end); throws InvalidParam if a change
  // point lies strictly inside the interval.
  CompartmentalModel at_interval(double t_begin, double t_end) const;
};

// Event-count re-parameterization: the d-dimensional birth process counting
// channel firings, with rates evaluated at the reconstructed compartment
// state y0 + A x (zero whenever any reconstructed coordinate is negative)
// and per-channel bounds derived from the loop bound and conservation.
BirthProcessSpec as_birth_process(const CompartmentalModel& model, const StateVector& y0);

// All nonnegative integer event-count vectors w with u + (A w)^T = v and
// w <= loop_bound * total componentwise.  Empty means probability zero.
std::vector<std::vector<int>> enumerate_event_solutions(const CompartmentalModel& model,
                                                        const StateVector& u,
                                                        const StateVector& v);

struct TransitionResult {
  double probability = 0.0;
  std::vector<double> derivatives;  // dP/dtheta_j, natural parameter scale
  bool structural_zero = false;     // no reachable event-count solution
  int terms_used = 0;
};

// Pr{Y(t) = v | Y(0) = u} summed over the event-count solution set, with
// interval-local lattice bounds.  Derivatives use the same solution set.
TransitionResult transition_probability(const CompartmentalModel& model, const StateVector& u,
                                        const StateVector& v, double t,
                                        const InversionConfig& cfg = {},
                                        bool want_derivatives = false);

// Full distribution of Y(t) from u: lattice probabilities aggregated by the
// reconstructed compartment state, in lexicographic state order.
std::vector<std::pair<StateVector, double>> full_distribution(const CompartmentalModel& model,
                                                              const StateVector& u, double t,
                                                              const InversionConfig& cfg = {});

}  // namespace mbp

#endif
