#include "multibirth/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "multibirth/errors.hpp"
#include "multibirth/parallel.hpp"

namespace mbp {

namespace {

constexpr double kProbFloor = 1e-300;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void validate_series(const CompartmentalModel& model, const ObservationSeries& series) {
  if (series.rows() < 2) throw InvalidParam("series needs at least two observation times");
  for (std::size_t r = 0; r + 1 < series.rows(); ++r) {
    if (!(series.times[r] < series.times[r + 1])) {
      throw InvalidParam("observation times must be strictly increasing");
    }
  }
  const int m = model.compartments();
  for (const auto& row : series.counts) {
    if (static_cast<int>(row.size()) != m) {
      throw InvalidParam("observation rows must match the model's compartments");
    }
    for (const auto& c : row) {
      if (c && *c < 0) throw InvalidParam("observed counts must be nonnegative");
    }
  }
}

}  // namespace

bool ObservationSeries::fully_observed() const {
  for (const auto& row : counts) {
    for (const auto& c : row) {
      if (!c) return false;
    }
  }
  return true;
}

StateVector ObservationSeries::state_at(std::size_t row) const {
  StateVector s;
  s.counts.reserve(counts[row].size());
  for (const auto& c : counts[row]) {
    if (!c) throw InvalidParam("state requested at a row with unobserved entries");
    s.counts.push_back(static_cast<int>(*c));
  }
  return s;
}

// One observation interval prepared for repeated evaluation: fixed box
// geometry, reconstructed compartment states per cell, and the event-count
// targets of the observed endpoint.
struct LikelihoodEvaluator::Interval {
  double dt = 0.0;
  LatticeGeometry geom;
  std::vector<int> states;          // geom.size() x m reconstructed counts
  std::vector<std::size_t> targets; // flat indices of the endpoint solutions
  bool impossible = false;          // no event-count solution at all
  SweepWorkspace ws;
  std::vector<std::complex<double>> f, g;

  Interval(LatticeGeometry g_, int n_params)
      : geom(std::move(g_)), ws(geom, n_params) {}
};

LikelihoodEvaluator::~LikelihoodEvaluator() = default;
LikelihoodEvaluator::LikelihoodEvaluator(LikelihoodEvaluator&&) noexcept = default;
LikelihoodEvaluator& LikelihoodEvaluator::operator=(LikelihoodEvaluator&&) noexcept = default;

LikelihoodEvaluator::LikelihoodEvaluator(const CompartmentalModel& model,
                                         const ObservationSeries& series,
                                         InversionConfig cfg, int threads)
    : model_(model), cfg_(cfg), threads_(threads) {
  validate_series(model, series);
  if (!series.fully_observed()) {
    throw InvalidParam("likelihood over a partially observed series is not defined; "
                       "use interval_kernel for the missing-coordinate building block");
  }
  const int m = model.compartments();
  const int d = model.channels();
  const int npar = static_cast<int>(model.param_names().size());

  for (std::size_t r = 0; r + 1 < series.rows(); ++r) {
    const StateVector u = series.state_at(r);
    const StateVector v = series.state_at(r + 1);
    BirthProcessSpec spec = as_birth_process(model, u);
    auto solutions = enumerate_event_solutions(model, u, v);
    std::erase_if(solutions, [&spec](const std::vector<int>& w) {
      for (int k = 0; k < spec.dim; ++k) {
        if (w[static_cast<std::size_t>(k)] > spec.bound[static_cast<std::size_t>(k)]) return true;
      }
      return false;
    });

    std::vector<int> box(static_cast<std::size_t>(d), 0);
    for (const auto& w : solutions) {
      for (int k = 0; k < d; ++k) {
        box[static_cast<std::size_t>(k)] =
            std::max(box[static_cast<std::size_t>(k)], w[static_cast<std::size_t>(k)]);
      }
    }
    Interval iv(LatticeGeometry(box), npar);
    iv.dt = series.times[r + 1] - series.times[r];
    iv.impossible = solutions.empty();
    const std::size_t n = iv.geom.size();
    iv.states.resize(n * static_cast<std::size_t>(m));
    std::vector<int> x(static_cast<std::size_t>(d), 0);
    for (std::size_t idx = 0; idx < n; ++idx) {
      int* y = iv.states.data() + idx * static_cast<std::size_t>(m);
      for (int c = 0; c < m; ++c) {
        int val = u.counts[static_cast<std::size_t>(c)];
        for (int k = 0; k < d; ++k) val += model.incidence(c, k) * x[static_cast<std::size_t>(k)];
        y[c] = val;
      }
      for (int k = d - 1; k >= 0; --k) {
        if (++x[static_cast<std::size_t>(k)] <= box[static_cast<std::size_t>(k)]) break;
        x[static_cast<std::size_t>(k)] = 0;
      }
    }
    for (const auto& w : solutions) iv.targets.push_back(iv.geom.flat(w));
    iv.f.resize(n);
    iv.g.resize(static_cast<std::size_t>(npar) * n);
    intervals_.push_back(std::move(iv));
  }
}

LogLikReport LikelihoodEvaluator::eval(std::span<const double> params, bool want_gradient) {
  model_.set_params(params);
  const int d = model_.channels();
  const int npar = want_gradient ? static_cast<int>(model_.param_names().size()) : 0;
  const std::size_t n_intervals = intervals_.size();

  struct IntervalOut {
    double prob = 0.0;
    std::vector<double> dprob;
    bool impossible = false;
    bool underflow = false;
  };
  std::vector<IntervalOut> outs(n_intervals);

  parallel_for(n_intervals, threads_, [&](std::size_t mi) {
    Interval& iv = intervals_[mi];
    IntervalOut& out = outs[mi];
    out.dprob.assign(static_cast<std::size_t>(npar), 0.0);
    if (iv.impossible) {
      out.impossible = true;
      return;
    }
    const std::size_t n = iv.geom.size();
    for (int k = 0; k < d; ++k) {
      model_.rates_into(k, iv.states, n, iv.ws.rates(k));
      for (int j = 0; j < npar; ++j) {
        model_.sensitivities_into(k, j, iv.states, n, iv.ws.sensitivities(j, k));
      }
    }
    iv.ws.finalize();

    std::vector<std::size_t> live;
    for (std::size_t t : iv.targets) {
      if (iv.ws.reachable(t)) live.push_back(t);
    }
    if (live.empty()) {
      out.impossible = true;
      return;
    }
    const std::size_t nt = live.size();
    auto evalf = [&](int, std::complex<double> s, std::span<std::complex<double>> o) {
      iv.ws.forward(s, iv.f.data(), npar > 0 ? iv.g.data() : nullptr);
      for (std::size_t i = 0; i < nt; ++i) {
        o[i] = iv.f[live[i]];
        for (int j = 0; j < npar; ++j) {
          o[(static_cast<std::size_t>(j) + 1) * nt + i] =
              iv.g[static_cast<std::size_t>(j) * n + live[i]];
        }
      }
    };
    const auto reports = invert_grid_mixed(
        evalf, nt * (1 + static_cast<std::size_t>(npar)), nt, iv.dt, cfg_);
    for (std::size_t i = 0; i < nt; ++i) out.prob += reports[i].value;
    for (int j = 0; j < npar; ++j) {
      for (std::size_t i = 0; i < nt; ++i) {
        out.dprob[static_cast<std::size_t>(j)] +=
            reports[(static_cast<std::size_t>(j) + 1) * nt + i].value;
      }
    }
    if (out.prob < kProbFloor) out.underflow = true;
  });

  LogLikReport report;
  report.per_interval.resize(n_intervals);
  if (want_gradient) {
    report.gradient.emplace(model_.param_names().size(), 0.0);
  }
  for (std::size_t mi = 0; mi < n_intervals; ++mi) {
    const IntervalOut& out = outs[mi];
    if (out.impossible) {
      report.per_interval[mi] = kNegInf;
      if (!report.impossible_interval) report.impossible_interval = mi;
      continue;
    }
    if (out.underflow) {
      char msg[128];
      std::snprintf(msg, sizeof msg,
                    "interval %zu probability fell below the floor without being "
                    "structurally zero",
                    mi);
      throw NumericalUnderflow(msg);
    }
    report.per_interval[mi] = std::log(out.prob);
    if (want_gradient) {
      for (std::size_t j = 0; j < report.gradient->size(); ++j) {
        // chain rule onto the log-parameter scale
        (*report.gradient)[j] += params[j] * out.dprob[j] / out.prob;
      }
    }
  }
  report.loglik = 0.0;
  for (double lp : report.per_interval) report.loglik += lp;
  if (report.impossible_interval && want_gradient) report.gradient.reset();
  return report;
}

LogLikReport loglik(const CompartmentalModel& model, const ObservationSeries& series,
                    const InversionConfig& cfg, bool want_gradient, int threads) {
  LikelihoodEvaluator evaluator(model, series, cfg, threads);
  return evaluator.eval(model.params(), want_gradient);
}

LogLikReport loglik(const PiecewiseModel& model, const ObservationSeries& series,
                    const InversionConfig& cfg, bool want_gradient, int threads) {
  if (model.change_points.empty()) {
    return loglik(model.base, series, cfg, want_gradient, threads);
  }
  if (want_gradient) {
    throw InvalidParam("gradients are not supported for piecewise-constant schedules");
  }
  validate_series(model.base, series);
  if (!series.fully_observed()) {
    throw InvalidParam("likelihood over a partially observed series is not defined");
  }
  LogLikReport report;
  report.per_interval.resize(series.rows() - 1);
  struct Out {
    double logp = 0.0;
    bool impossible = false;
  };
  std::vector<Out> outs(series.rows() - 1);
  parallel_for(series.rows() - 1, threads, [&](std::size_t r) {
    const CompartmentalModel m = model.at_interval(series.times[r], series.times[r + 1]);
    const auto res =
        transition_probability(m, series.state_at(r), series.state_at(r + 1),
                               series.times[r + 1] - series.times[r], cfg, false);
    if (res.structural_zero) {
      outs[r].impossible = true;
    } else if (res.probability < kProbFloor) {
      throw NumericalUnderflow("interval probability fell below the floor");
    } else {
      outs[r].logp = std::log(res.probability);
    }
  });
  report.loglik = 0.0;
  for (std::size_t r = 0; r < outs.size(); ++r) {
    report.per_interval[r] = outs[r].impossible ? kNegInf : outs[r].logp;
    if (outs[r].impossible && !report.impossible_interval) report.impossible_interval = r;
    report.loglik += report.per_interval[r];
  }
  return report;
}

CompletionDistribution interval_kernel(const CompartmentalModel& model, const StateVector& u,
                                       const std::vector<std::optional<long>>& partial_v,
                                       double t, const InversionConfig& cfg) {
  if (!(t > 0.0)) throw InvalidTime("interval length must be > 0");
  const int m = model.compartments();
  if (static_cast<int>(partial_v.size()) != m) {
    throw InvalidParam("partial state has the wrong number of compartments");
  }
  if (!model.closed()) {
    throw InvalidParam("interval completions require a closed model");
  }

  // Enumerate completions consistent with conservation.
  const long total = u.total();
  long observed_sum = 0;
  std::vector<int> missing;
  for (int c = 0; c < m; ++c) {
    if (partial_v[static_cast<std::size_t>(c)]) {
      const long v = *partial_v[static_cast<std::size_t>(c)];
      if (v < 0) throw InvalidParam("observed counts must be nonnegative");
      observed_sum += v;
    } else {
      missing.push_back(c);
    }
  }
  if (static_cast<int>(missing.size()) == m) {
    throw InvalidParam("at least one endpoint coordinate must be observed");
  }
  std::vector<StateVector> completions;
  if (observed_sum <= total) {
    StateVector v;
    v.counts.resize(static_cast<std::size_t>(m), 0);
    for (int c = 0; c < m; ++c) {
      if (partial_v[static_cast<std::size_t>(c)]) {
        v.counts[static_cast<std::size_t>(c)] = static_cast<int>(*partial_v[static_cast<std::size_t>(c)]);
      }
    }
    const long budget = total - observed_sum;
    std::function<void(std::size_t, long)> fill = [&](std::size_t mi, long left) {
      if (mi == missing.size()) {
        if (left == 0) completions.push_back(v);
        return;
      }
      const bool last = mi + 1 == missing.size();
      for (long val = last ? left : 0; val <= left; ++val) {
        v.counts[static_cast<std::size_t>(missing[mi])] = static_cast<int>(val);
        fill(mi + 1, left - val);
      }
      v.counts[static_cast<std::size_t>(missing[mi])] = 0;
    };
    fill(0, budget);
  }

  BirthProcessSpec spec = as_birth_process(model, u);
  struct Entry {
    StateVector state;
    std::vector<std::vector<int>> solutions;
  };
  std::vector<Entry> entries;
  for (auto& comp : completions) {
    auto sols = enumerate_event_solutions(model, u, comp);
    std::erase_if(sols, [&spec](const std::vector<int>& w) {
      for (int k = 0; k < spec.dim; ++k) {
        if (w[static_cast<std::size_t>(k)] > spec.bound[static_cast<std::size_t>(k)]) return true;
      }
      return false;
    });
    if (!sols.empty()) entries.push_back({std::move(comp), std::move(sols)});
  }
  if (entries.empty()) {
    throw EmptySupport("no feasible completion of the partially observed state");
  }

  std::vector<int> box(static_cast<std::size_t>(spec.dim), 0);
  for (const auto& e : entries) {
    for (const auto& w : e.solutions) {
      for (int k = 0; k < spec.dim; ++k) {
        box[static_cast<std::size_t>(k)] =
            std::max(box[static_cast<std::size_t>(k)], w[static_cast<std::size_t>(k)]);
      }
    }
  }
  BirthProcessSpec truncated = spec;
  truncated.bound = box;
  SweepWorkspace ws(truncated, false);

  std::vector<std::size_t> targets;
  std::vector<std::pair<std::size_t, std::size_t>> slices;  // per entry: [begin, end)
  for (const auto& e : entries) {
    const std::size_t begin = targets.size();
    for (const auto& w : e.solutions) {
      const std::size_t idx = ws.geometry().flat(w);
      if (ws.reachable(idx)) targets.push_back(idx);
    }
    slices.emplace_back(begin, targets.size());
  }

  CompletionDistribution dist;
  std::vector<double> probs(targets.size(), 0.0);
  if (!targets.empty()) {
    const std::size_t n = ws.geometry().size();
    std::vector<std::complex<double>> f(n);
    auto evalf = [&](int, std::complex<double> s, std::span<std::complex<double>> o) {
      ws.forward(s, f.data());
      for (std::size_t i = 0; i < targets.size(); ++i) o[i] = f[targets[i]];
    };
    const auto reports = invert_grid_mixed(evalf, targets.size(), targets.size(), t, cfg);
    for (std::size_t i = 0; i < targets.size(); ++i) probs[i] = reports[i].value;
  }
  for (std::size_t e = 0; e < entries.size(); ++e) {
    double p = 0.0;
    for (std::size_t i = slices[e].first; i < slices[e].second; ++i) p += probs[i];
    dist.states.push_back(entries[e].state);
    dist.probabilities.push_back(p);
  }
  return dist;
}

}  // namespace mbp
