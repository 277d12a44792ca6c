#include "multibirth/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "multibirth/errors.hpp"

namespace mbp {

namespace {


double posi(int a) { return a > 0 ? static_cast<double>(a) : 0.0; }

enum class BuiltinKind { custom, sir, seir, sirs, general_sir };

BuiltinKind kind_of(std::string_view kind) {
  if (kind == "sir") return BuiltinKind::sir;
  if (kind == "seir") return BuiltinKind::seir;
  if (kind == "sirs") return BuiltinKind::sirs;
  if (kind == "general_sir") return BuiltinKind::general_sir;
  return BuiltinKind::custom;
}

void require_nonnegative(std::string_view name, double v) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw InvalidParam("parameter '" + std::string(name) + "' must be finite and nonnegative");
  }
}

// General SIR infection rate beta * S^alpha * I^omega with the convention
// that the rate vanishes whenever a base count is zero.
double general_infection(double beta, double alpha, double omega, double s, double i) {
  if (s <= 0.0 || i <= 0.0) return 0.0;
  return beta * std::pow(s, alpha) * std::pow(i, omega);
}

double general_removal(double gamma, double eta, double i) {
  if (i <= 0.0) return 0.0;
  return gamma * std::pow(i, eta);
}

}  // namespace

CompartmentalModel::CompartmentalModel(std::string kind, std::vector<std::string> labels,
                                       std::vector<Channel> channels,
                                       std::vector<std::string> param_names,
                                       std::vector<double> params, int loop_bound)
    : kind_(std::move(kind)),
      labels_(std::move(labels)),
      channels_(std::move(channels)),
      param_names_(std::move(param_names)),
      params_(std::move(params)),
      loop_bound_(loop_bound) {
  if (labels_.empty()) throw InvalidParam("model must have at least one compartment");
  if (param_names_.size() != params_.size()) {
    throw InvalidParam("parameter names and values differ in length");
  }
  const int m = compartments();
  for (const auto& ch : channels_) {
    if (ch.from < 0 || ch.from >= m || ch.to < 0 || ch.to >= m) {
      throw InvalidParam("channel endpoints out of range");
    }
    if (ch.from == ch.to) throw InvalidParam("self-transitions are excluded");
    if (!ch.rate) throw InvalidParam("channel rate function missing");
  }
  for (std::size_t j = 0; j < params_.size(); ++j) {
    require_nonnegative(param_names_[j], params_[j]);
  }
  if (loop_bound_ < 1) throw InvalidParam("loop bound must be >= 1");
  if (acyclic() && loop_bound_ != 1) {
    throw InvalidParam("acyclic models must have loop bound 1");
  }
}

int CompartmentalModel::compartment_index(std::string_view label) const {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) return static_cast<int>(i);
  }
  return -1;
}

int CompartmentalModel::incidence(int compartment, int channel) const {
  const auto& ch = channels_[static_cast<std::size_t>(channel)];
  if (compartment == ch.from) return -1;
  if (compartment == ch.to) return 1;
  return 0;
}

double CompartmentalModel::param(std::string_view name) const {
  for (std::size_t j = 0; j < param_names_.size(); ++j) {
    if (param_names_[j] == name) return params_[j];
  }
  throw InvalidParam("unknown parameter '" + std::string(name) + "'");
}

void CompartmentalModel::set_param(std::string_view name, double value) {
  require_nonnegative(name, value);
  for (std::size_t j = 0; j < param_names_.size(); ++j) {
    if (param_names_[j] == name) {
      params_[j] = value;
      return;
    }
  }
  throw InvalidParam("unknown parameter '" + std::string(name) + "'");
}

void CompartmentalModel::set_params(std::span<const double> values) {
  if (values.size() != params_.size()) throw InvalidParam("parameter vector length mismatch");
  for (std::size_t j = 0; j < values.size(); ++j) require_nonnegative(param_names_[j], values[j]);
  params_.assign(values.begin(), values.end());
}

double CompartmentalModel::rate(int channel, std::span<const int> y) const {
  return channels_[static_cast<std::size_t>(channel)].rate(params_, y);
}

double CompartmentalModel::rate_sensitivity(int channel, std::span<const int> y,
                                            int param) const {
  const auto& ch = channels_[static_cast<std::size_t>(channel)];
  if (!ch.sensitivity) return 0.0;
  return ch.sensitivity(params_, y, param);
}

void CompartmentalModel::rates_into(int channel, std::span<const int> states, std::size_t n,
                                    std::span<double> out) const {
  const int m = compartments();
  switch (kind_of(kind_)) {
    case BuiltinKind::sir:
    case BuiltinKind::sirs: {
      // channels 0: beta*S*I, 1: gamma*I, (sirs) 2: nu*R
      const double c = channel == 0 ? params_[0] : (channel == 1 ? params_[1] : params_[2]);
      for (std::size_t i = 0; i < n; ++i) {
        const int* y = states.data() + i * static_cast<std::size_t>(m);
        if (channel == 0) {
          out[i] = c * posi(y[0]) * posi(y[1]);
        } else if (channel == 1) {
          out[i] = c * posi(y[1]);
        } else {
          out[i] = c * posi(y[2]);
        }
      }
      return;
    }
    case BuiltinKind::general_sir: {
      const double beta = params_[0], gamma = params_[1];
      const double alpha = params_[2], omega = params_[3], eta = params_[4];
      for (std::size_t i = 0; i < n; ++i) {
        const int* y = states.data() + i * static_cast<std::size_t>(m);
        out[i] = channel == 0
                     ? general_infection(beta, alpha, omega, posi(y[0]), posi(y[1]))
                     : general_removal(gamma, eta, posi(y[1]));
      }
      return;
    }
    default:
      break;
  }
  std::vector<int> clamped(static_cast<std::size_t>(m));
  for (std::size_t i = 0; i < n; ++i) {
    const int* y = states.data() + i * static_cast<std::size_t>(m);
    for (int c = 0; c < m; ++c) clamped[static_cast<std::size_t>(c)] = std::max(y[c], 0);
    out[i] = rate(channel, clamped);
  }
}

void CompartmentalModel::sensitivities_into(int channel, int param, std::span<const int> states,
                                            std::size_t n, std::span<double> out) const {
  const int m = compartments();
  switch (kind_of(kind_)) {
    case BuiltinKind::sir:
    case BuiltinKind::sirs: {
      const bool match = channel == param;  // channel k depends only on parameter k
      for (std::size_t i = 0; i < n; ++i) {
        const int* y = states.data() + i * static_cast<std::size_t>(m);
        if (!match) {
          out[i] = 0.0;
        } else if (channel == 0) {
          out[i] = posi(y[0]) * posi(y[1]);
        } else if (channel == 1) {
          out[i] = posi(y[1]);
        } else {
          out[i] = posi(y[2]);
        }
      }
      return;
    }
    case BuiltinKind::general_sir: {
      const double beta = params_[0], gamma = params_[1];
      const double alpha = params_[2], omega = params_[3], eta = params_[4];
      for (std::size_t i = 0; i < n; ++i) {
        const int* y = states.data() + i * static_cast<std::size_t>(m);
        const double s = posi(y[0]), in = posi(y[1]);
        double v = 0.0;
        if (channel == 0 && s > 0.0 && in > 0.0) {
          const double base = std::pow(s, alpha) * std::pow(in, omega);
          if (param == 0) v = base;
          else if (param == 2) v = beta * base * std::log(s);
          else if (param == 3) v = beta * base * std::log(in);
        } else if (channel == 1 && in > 0.0) {
          const double base = std::pow(in, eta);
          if (param == 1) v = base;
          else if (param == 4) v = gamma * base * std::log(in);
        }
        out[i] = v;
      }
      return;
    }
    default:
      break;
  }
  std::vector<int> clamped(static_cast<std::size_t>(m));
  for (std::size_t i = 0; i < n; ++i) {
    const int* y = states.data() + i * static_cast<std::size_t>(m);
    for (int c = 0; c < m; ++c) clamped[static_cast<std::size_t>(c)] = std::max(y[c], 0);
    out[i] = rate_sensitivity(channel, clamped, param);
  }
}

bool CompartmentalModel::closed() const {
  for (int k = 0; k < channels(); ++k) {
    int sum = 0;
    for (int c = 0; c < compartments(); ++c) sum += incidence(c, k);
    if (sum != 0) return false;
  }
  return true;
}

bool CompartmentalModel::acyclic() const {
  // Kahn's algorithm on the transition digraph.
  const int m = compartments();
  std::vector<int> indeg(static_cast<std::size_t>(m), 0);
  for (const auto& ch : channels_) ++indeg[static_cast<std::size_t>(ch.to)];
  std::vector<int> queue;
  for (int c = 0; c < m; ++c) {
    if (indeg[static_cast<std::size_t>(c)] == 0) queue.push_back(c);
  }
  int seen = 0;
  while (!queue.empty()) {
    const int c = queue.back();
    queue.pop_back();
    ++seen;
    for (const auto& ch : channels_) {
      if (ch.from == c && --indeg[static_cast<std::size_t>(ch.to)] == 0) {
        queue.push_back(ch.to);
      }
    }
  }
  return seen == m;
}

CompartmentalModel CompartmentalModel::sir(double beta, double gamma) {
  require_nonnegative("beta", beta);
  require_nonnegative("gamma", gamma);
  std::vector<Channel> ch(2);
  ch[0].from = 0;
  ch[0].to = 1;
  ch[0].rate = [](std::span<const double> p, std::span<const int> y) {
    return p[0] * posi(y[0]) * posi(y[1]);
  };
  ch[0].sensitivity = [](std::span<const double>, std::span<const int> y, int j) {
    return j == 0 ? posi(y[0]) * posi(y[1]) : 0.0;
  };
  ch[1].from = 1;
  ch[1].to = 2;
  ch[1].rate = [](std::span<const double> p, std::span<const int> y) {
    return p[1] * posi(y[1]);
  };
  ch[1].sensitivity = [](std::span<const double>, std::span<const int> y, int j) {
    return j == 1 ? posi(y[1]) : 0.0;
  };
  return CompartmentalModel("sir", {"S", "I", "R"}, std::move(ch), {"beta", "gamma"},
                            {beta, gamma}, 1);
}

CompartmentalModel CompartmentalModel::seir(double beta, double kappa, double gamma) {
  require_nonnegative("beta", beta);
  require_nonnegative("kappa", kappa);
  require_nonnegative("gamma", gamma);
  std::vector<Channel> ch(3);
  ch[0].from = 0;
  ch[0].to = 1;
  ch[0].rate = [](std::span<const double> p, std::span<const int> y) {
    return p[0] * posi(y[0]) * posi(y[2]);
  };
  ch[0].sensitivity = [](std::span<const double>, std::span<const int> y, int j) {
    return j == 0 ? posi(y[0]) * posi(y[2]) : 0.0;
  };
  ch[1].from = 1;
  ch[1].to = 2;
  ch[1].rate = [](std::span<const double> p, std::span<const int> y) {
    return p[1] * posi(y[1]);
  };
  ch[1].sensitivity = [](std::span<const double>, std::span<const int> y, int j) {
    return j == 1 ? posi(y[1]) : 0.0;
  };
  ch[2].from = 2;
  ch[2].to = 3;
  ch[2].rate = [](std::span<const double> p, std::span<const int> y) {
    return p[2] * posi(y[2]);
  };
  ch[2].sensitivity = [](std::span<const double>, std::span<const int> y, int j) {
    return j == 2 ? posi(y[2]) : 0.0;
  };
  return CompartmentalModel("seir", {"S", "E", "I", "R"}, std::move(ch),
                            {"beta", "kappa", "gamma"}, {beta, kappa, gamma}, 1);
}

CompartmentalModel CompartmentalModel::sirs(double beta, double gamma, double nu,
                                            int loop_bound) {
  require_nonnegative("beta", beta);
  require_nonnegative("gamma", gamma);
  require_nonnegative("nu", nu);
  std::vector<Channel> ch(3);
  ch[0].from = 0;
  ch[0].to = 1;
  ch[0].rate = [](std::span<const double> p, std::span<const int> y) {
    return p[0] * posi(y[0]) * posi(y[1]);
  };
  ch[0].sensitivity = [](std::span<const double>, std::span<const int> y, int j) {
    return j == 0 ? posi(y[0]) * posi(y[1]) : 0.0;
  };
  ch[1].from = 1;
  ch[1].to = 2;
  ch[1].rate = [](std::span<const double> p, std::span<const int> y) {
    return p[1] * posi(y[1]);
  };
  ch[1].sensitivity = [](std::span<const double>, std::span<const int> y, int j) {
    return j == 1 ? posi(y[1]) : 0.0;
  };
  ch[2].from = 2;
  ch[2].to = 0;
  ch[2].rate = [](std::span<const double> p, std::span<const int> y) {
    return p[2] * posi(y[2]);
  };
  ch[2].sensitivity = [](std::span<const double>, std::span<const int> y, int j) {
    return j == 2 ? posi(y[2]) : 0.0;
  };
  return CompartmentalModel("sirs", {"S", "I", "R"}, std::move(ch), {"beta", "gamma", "nu"},
                            {beta, gamma, nu}, loop_bound);
}

CompartmentalModel CompartmentalModel::general_sir(double beta, double gamma, double alpha,
                                                   double omega, double eta) {
  require_nonnegative("beta", beta);
  require_nonnegative("gamma", gamma);
  require_nonnegative("alpha", alpha);
  require_nonnegative("omega", omega);
  require_nonnegative("eta", eta);
  std::vector<Channel> ch(2);
  ch[0].from = 0;
  ch[0].to = 1;
  ch[0].rate = [](std::span<const double> p, std::span<const int> y) {
    return general_infection(p[0], p[2], p[3], posi(y[0]), posi(y[1]));
  };
  ch[0].sensitivity = [](std::span<const double> p, std::span<const int> y, int j) {
    const double s = posi(y[0]), in = posi(y[1]);
    if (s <= 0.0 || in <= 0.0) return 0.0;
    const double base = std::pow(s, p[2]) * std::pow(in, p[3]);
    if (j == 0) return base;
    if (j == 2) return p[0] * base * std::log(s);
    if (j == 3) return p[0] * base * std::log(in);
    return 0.0;
  };
  ch[1].from = 1;
  ch[1].to = 2;
  ch[1].rate = [](std::span<const double> p, std::span<const int> y) {
    return general_removal(p[1], p[4], posi(y[1]));
  };
  ch[1].sensitivity = [](std::span<const double> p, std::span<const int> y, int j) {
    const double in = posi(y[1]);
    if (in <= 0.0) return 0.0;
    const double base = std::pow(in, p[4]);
    if (j == 1) return base;
    if (j == 4) return p[1] * base * std::log(in);
    return 0.0;
  };
  return CompartmentalModel("general_sir", {"S", "I", "R"}, std::move(ch),
                            {"beta", "gamma", "alpha", "omega", "eta"},
                            {beta, gamma, alpha, omega, eta}, 1);
}

CompartmentalModel CompartmentalModel::sir_from_r0(double r0, double gamma, long population) {
  require_nonnegative("r0", r0);
  require_nonnegative("gamma", gamma);
  if (population <= 0) throw InvalidParam("population must be positive");
  return sir(r0 * gamma / static_cast<double>(population), gamma);
}

CompartmentalModel builtin_model(std::string_view kind,
                                 const std::map<std::string, double>& params,
                                 std::optional<int> loop_bound) {
  auto take = [&params](const char* name) {
    auto it = params.find(name);
    if (it == params.end()) {
      throw InvalidParam("model is missing parameter '" + std::string(name) + "'");
    }
    return it->second;
  };
  auto check_known = [&params](std::initializer_list<const char*> known) {
    for (const auto& [key, value] : params) {
      (void)value;
      if (std::find_if(known.begin(), known.end(),
                       [&key](const char* k) { return key == k; }) == known.end()) {
        throw InvalidParam("unknown parameter '" + key + "' for this model kind");
      }
    }
  };
  if (kind == "sir") {
    check_known({"beta", "gamma"});
    return CompartmentalModel::sir(take("beta"), take("gamma"));
  }
  if (kind == "seir") {
    check_known({"beta", "kappa", "gamma"});
    return CompartmentalModel::seir(take("beta"), take("kappa"), take("gamma"));
  }
  if (kind == "sirs") {
    check_known({"beta", "gamma", "nu"});
    return CompartmentalModel::sirs(take("beta"), take("gamma"), take("nu"),
                                    loop_bound.value_or(1));
  }
  if (kind == "general_sir") {
    check_known({"beta", "gamma", "alpha", "omega", "eta"});
    return CompartmentalModel::general_sir(take("beta"), take("gamma"), take("alpha"),
                                           take("omega"), take("eta"));
  }
  throw InvalidParam("unknown model kind '" + std::string(kind) + "'");
}

CompartmentalModel PiecewiseModel::at_interval(double t_begin, double t_end) const {
  if (!(t_begin < t_end)) throw InvalidParam("interval must have positive length");
  CompartmentalModel model = base;
  for (const auto& cp : change_points) {
    if (cp.time > t_begin && cp.time < t_end) {
      char msg[128];
      std::snprintf(msg, sizeof msg,
                    "change point at %g falls inside the interval [%g, %g)", cp.time,
                    t_begin, t_end);
      throw InvalidParam(msg);
    }
    if (cp.time <= t_begin) {
      for (const auto& [name, value] : cp.assignments) model.set_param(name, value);
    }
  }
  return model;
}

namespace {

// Per-channel event bounds for a DAG: process compartments in topological
// order; a channel can fire at most as many times as individuals can ever
// occupy its source compartment.
std::vector<int> acyclic_bounds(const CompartmentalModel& model, const StateVector& y0) {
  const int m = model.compartments();
  const int d = model.channels();
  std::vector<int> indeg(static_cast<std::size_t>(m), 0);
  for (int k = 0; k < d; ++k) ++indeg[static_cast<std::size_t>(model.channel_to(k))];
  std::vector<int> order;
  std::vector<int> queue;
  for (int c = 0; c < m; ++c) {
    if (indeg[static_cast<std::size_t>(c)] == 0) queue.push_back(c);
  }
  while (!queue.empty()) {
    const int c = queue.back();
    queue.pop_back();
    order.push_back(c);
    for (int k = 0; k < d; ++k) {
      if (model.channel_from(k) == c &&
          --indeg[static_cast<std::size_t>(model.channel_to(k))] == 0) {
        queue.push_back(model.channel_to(k));
      }
    }
  }
  std::vector<long> maxpop(static_cast<std::size_t>(m), 0);
  std::vector<int> bound(static_cast<std::size_t>(d), 0);
  for (int c : order) {
    long pop = y0.counts[static_cast<std::size_t>(c)];
    for (int k = 0; k < d; ++k) {
      if (model.channel_to(k) == c) pop += bound[static_cast<std::size_t>(k)];
    }
    maxpop[static_cast<std::size_t>(c)] = pop;
    for (int k = 0; k < d; ++k) {
      if (model.channel_from(k) == c) bound[static_cast<std::size_t>(k)] = static_cast<int>(pop);
    }
  }
  return bound;
}

constexpr std::size_t kReachabilityCellCap = 20'000'000;

}  // namespace

BirthProcessSpec as_birth_process(const CompartmentalModel& model, const StateVector& y0) {
  const int m = model.compartments();
  const int d = model.channels();
  if (static_cast<int>(y0.counts.size()) != m) {
    throw InvalidParam("initial state has the wrong number of compartments");
  }
  for (int c : y0.counts) {
    if (c < 0) throw InvalidParam("initial compartment counts must be nonnegative");
  }
  if (!model.closed()) {
    throw UnboundedLattice("event lattice cannot be bounded for an open model");
  }

  std::vector<int> bound;
  if (model.acyclic()) {
    bound = acyclic_bounds(model, y0);
  } else {
    const long cap = static_cast<long>(model.loop_bound()) * y0.total();
    bound.assign(static_cast<std::size_t>(d), static_cast<int>(cap));
  }

  // Rates evaluate the model at the reconstructed compartment state and
  // vanish whenever any reconstructed coordinate is negative.
  auto reconstruct = [model, y0](std::span<const int> x, std::span<int> y) {
    const int mm = model.compartments();
    for (int c = 0; c < mm; ++c) {
      int v = y0.counts[static_cast<std::size_t>(c)];
      for (int k = 0; k < model.channels(); ++k) {
        v += model.incidence(c, k) * x[static_cast<std::size_t>(k)];
      }
      y[static_cast<std::size_t>(c)] = v;
    }
  };

  BirthProcessSpec spec;
  spec.dim = d;
  spec.bound = bound;
  spec.n_params = static_cast<int>(model.param_names().size());
  spec.rate = [model, reconstruct, m](int k, std::span<const int> x) {
    std::vector<int> y(static_cast<std::size_t>(m));
    reconstruct(x, y);
    for (int v : y) {
      if (v < 0) return 0.0;
    }
    return model.rate(k, y);
  };
  spec.sensitivity = [model, reconstruct, m](int k, std::span<const int> x, int j) {
    std::vector<int> y(static_cast<std::size_t>(m));
    reconstruct(x, y);
    for (int v : y) {
      if (v < 0) return 0.0;
    }
    return model.rate_sensitivity(k, y, j);
  };

  if (!model.acyclic()) {
    // Tighten the loop-bound box to the coordinates actually reachable
    // through positive rates.
    LatticeGeometry geom(spec.bound);
    if (geom.size() <= kReachabilityCellCap) {
      std::vector<std::uint8_t> reach(geom.size(), 0);
      std::vector<int> tight(static_cast<std::size_t>(d), 0);
      std::vector<int> x(static_cast<std::size_t>(d), 0);
      for (std::size_t idx = 0; idx < geom.size(); ++idx) {
        bool r = idx == 0;
        for (int k = 0; k < d && !r; ++k) {
          if (x[static_cast<std::size_t>(k)] > 0) {
            const std::size_t anc = idx - geom.stride(k);
            if (reach[anc]) {
              std::vector<int> xa(x.begin(), x.end());
              --xa[static_cast<std::size_t>(k)];
              r = spec.rate(k, xa) > 0.0;
            }
          }
        }
        if (r) {
          reach[idx] = 1;
          for (int k = 0; k < d; ++k) {
            tight[static_cast<std::size_t>(k)] =
                std::max(tight[static_cast<std::size_t>(k)], x[static_cast<std::size_t>(k)]);
          }
        }
        for (int k = d - 1; k >= 0; --k) {
          if (++x[static_cast<std::size_t>(k)] <= spec.bound[static_cast<std::size_t>(k)]) break;
          x[static_cast<std::size_t>(k)] = 0;
        }
      }
      spec.bound = tight;
    }
  }
  return spec;
}

std::vector<std::vector<int>> enumerate_event_solutions(const CompartmentalModel& model,
                                                        const StateVector& u,
                                                        const StateVector& v) {
  const int m = model.compartments();
  const int d = model.channels();
  if (static_cast<int>(u.counts.size()) != m || static_cast<int>(v.counts.size()) != m) {
    throw InvalidParam("states have the wrong number of compartments");
  }
  std::vector<long> target(static_cast<std::size_t>(m));
  for (int c = 0; c < m; ++c) {
    target[static_cast<std::size_t>(c)] =
        static_cast<long>(v.counts[static_cast<std::size_t>(c)]) - u.counts[static_cast<std::size_t>(c)];
  }
  const long cap = static_cast<long>(model.loop_bound()) * u.total();

  // Suffix contribution intervals for pruning the depth-first search.
  std::vector<long> suf_lo(static_cast<std::size_t>((d + 1) * m), 0);
  std::vector<long> suf_hi(static_cast<std::size_t>((d + 1) * m), 0);
  for (int k = d - 1; k >= 0; --k) {
    for (int c = 0; c < m; ++c) {
      const long a = model.incidence(c, k);
      const std::size_t cur = static_cast<std::size_t>(k * m + c);
      const std::size_t nxt = static_cast<std::size_t>((k + 1) * m + c);
      suf_lo[cur] = suf_lo[nxt] + std::min(0L, a * cap);
      suf_hi[cur] = suf_hi[nxt] + std::max(0L, a * cap);
    }
  }

  std::vector<std::vector<int>> solutions;
  std::vector<int> w(static_cast<std::size_t>(d), 0);
  std::vector<long> partial(static_cast<std::size_t>(m), 0);

  auto feasible = [&](int k) {
    for (int c = 0; c < m; ++c) {
      const long rem = target[static_cast<std::size_t>(c)] - partial[static_cast<std::size_t>(c)];
      if (rem < suf_lo[static_cast<std::size_t>(k * m + c)] ||
          rem > suf_hi[static_cast<std::size_t>(k * m + c)]) {
        return false;
      }
    }
    return true;
  };

  std::function<void(int)> dfs = [&](int k) {
    if (!feasible(k)) return;
    if (k == d) {
      solutions.push_back(w);
      return;
    }
    for (long wk = 0; wk <= cap; ++wk) {
      w[static_cast<std::size_t>(k)] = static_cast<int>(wk);
      if (wk > 0) {
        for (int c = 0; c < m; ++c) {
          partial[static_cast<std::size_t>(c)] += model.incidence(c, k);
        }
      }
      dfs(k + 1);
    }
    for (int c = 0; c < m; ++c) {
      partial[static_cast<std::size_t>(c)] -= static_cast<long>(model.incidence(c, k)) * cap;
    }
    w[static_cast<std::size_t>(k)] = 0;
  };
  dfs(0);
  return solutions;
}

TransitionResult transition_probability(const CompartmentalModel& model, const StateVector& u,
                                        const StateVector& v, double t,
                                        const InversionConfig& cfg, bool want_derivatives) {
  if (!(t > 0.0)) throw InvalidTime("transition time must be > 0");
  const int npar = want_derivatives ? static_cast<int>(model.param_names().size()) : 0;

  BirthProcessSpec spec = as_birth_process(model, u);
  auto solutions = enumerate_event_solutions(model, u, v);
  // Solutions beyond the reachable event bounds carry zero probability.
  std::erase_if(solutions, [&spec](const std::vector<int>& w) {
    for (int k = 0; k < spec.dim; ++k) {
      if (w[static_cast<std::size_t>(k)] > spec.bound[static_cast<std::size_t>(k)]) return true;
    }
    return false;
  });

  TransitionResult result;
  result.derivatives.assign(static_cast<std::size_t>(npar), 0.0);
  if (solutions.empty()) {
    result.structural_zero = true;
    return result;
  }

  std::vector<int> box(static_cast<std::size_t>(spec.dim), 0);
  for (const auto& w : solutions) {
    for (int k = 0; k < spec.dim; ++k) {
      box[static_cast<std::size_t>(k)] = std::max(box[static_cast<std::size_t>(k)], w[static_cast<std::size_t>(k)]);
    }
  }
  BirthProcessSpec truncated = spec;
  truncated.bound = box;
  SweepWorkspace ws(truncated, want_derivatives);

  std::vector<std::size_t> targets;
  for (const auto& w : solutions) {
    const std::size_t idx = ws.geometry().flat(w);
    if (ws.reachable(idx)) targets.push_back(idx);
  }
  if (targets.empty()) {
    result.structural_zero = true;
    return result;
  }

  const std::size_t n = ws.geometry().size();
  const std::size_t nt = targets.size();
  std::vector<std::complex<double>> f(n);
  std::vector<std::complex<double>> g(static_cast<std::size_t>(npar) * n);
  auto eval = [&](int, std::complex<double> s, std::span<std::complex<double>> out) {
    ws.forward(s, f.data(), npar > 0 ? g.data() : nullptr);
    for (std::size_t i = 0; i < nt; ++i) {
      out[i] = f[targets[i]];
      for (int j = 0; j < npar; ++j) {
        out[(static_cast<std::size_t>(j) + 1) * nt + i] = g[static_cast<std::size_t>(j) * n + targets[i]];
      }
    }
  };
  const auto reports =
      invert_grid_mixed(eval, nt * (1 + static_cast<std::size_t>(npar)), nt, t, cfg);
  result.terms_used = reports[0].terms_used;
  for (std::size_t i = 0; i < nt; ++i) result.probability += reports[i].value;
  for (int j = 0; j < npar; ++j) {
    for (std::size_t i = 0; i < nt; ++i) {
      result.derivatives[static_cast<std::size_t>(j)] +=
          reports[(static_cast<std::size_t>(j) + 1) * nt + i].value;
    }
  }
  return result;
}

std::vector<std::pair<StateVector, double>> full_distribution(const CompartmentalModel& model,
                                                              const StateVector& u, double t,
                                                              const InversionConfig& cfg) {
  BirthProcessSpec spec = as_birth_process(model, u);
  const auto lattice = transition_probabilities(spec, t, cfg, false);
  LatticeGeometry geom(lattice.bound);
  const int m = model.compartments();
  const int d = model.channels();

  std::map<std::vector<int>, double> agg;
  std::vector<int> x(static_cast<std::size_t>(d), 0);
  std::vector<int> y(static_cast<std::size_t>(m));
  for (std::size_t idx = 0; idx < geom.size(); ++idx) {
    bool valid = true;
    for (int c = 0; c < m; ++c) {
      int val = u.counts[static_cast<std::size_t>(c)];
      for (int k = 0; k < d; ++k) val += model.incidence(c, k) * x[static_cast<std::size_t>(k)];
      y[static_cast<std::size_t>(c)] = val;
      if (val < 0) valid = false;
    }
    if (valid) agg[y] += lattice.probabilities[idx];
    for (int k = d - 1; k >= 0; --k) {
      if (++x[static_cast<std::size_t>(k)] <= lattice.bound[static_cast<std::size_t>(k)]) break;
      x[static_cast<std::size_t>(k)] = 0;
    }
  }
  std::vector<std::pair<StateVector, double>> out;
  out.reserve(agg.size());
  for (auto& [state, p] : agg) out.push_back({StateVector{state}, p});
  return out;
}

}  // namespace mbp
