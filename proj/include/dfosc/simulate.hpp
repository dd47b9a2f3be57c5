#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dfosc/error.hpp"
#include "dfosc/nonlin.hpp"
#include "dfosc/predict.hpp"

namespace dfosc {

enum class Preset {
  ring_relay,
  ring_tanh,
  series_rlc_negres,
  relaxation_two_tau,
  harmonic_relaxation,
  fitzhugh_nagumo,
  repressilator,
};

inline constexpr std::array<std::pair<Preset, std::string_view>, 7> kPresetNames{{
    {Preset::ring_relay, "ring_relay"},
    {Preset::ring_tanh, "ring_tanh"},
    {Preset::series_rlc_negres, "series_rlc_negres"},
    {Preset::relaxation_two_tau, "relaxation_two_tau"},
    {Preset::harmonic_relaxation, "harmonic_relaxation"},
    {Preset::fitzhugh_nagumo, "fitzhugh_nagumo"},
    {Preset::repressilator, "repressilator"},
}};

inline std::string_view to_string(Preset p) {
  for (const auto& [k, n] : kPresetNames)
    if (k == p) return n;
  return "?";
}

inline Preset parse_preset(std::string_view s) {
  for (const auto& [k, n] : kPresetNames)
    if (n == s) return k;
  throw ConfigError("preset", "unknown preset '" + std::string(s) + "'");
}

using ModelParams = std::map<std::string, double, std::less<>>;
using State = std::vector<double>;

/// Parameter values a preset starts from.
inline ModelParams default_params(Preset p) {
  switch (p) {
    case Preset::ring_relay: return {{"n", 3}, {"tau", 1.0}, {"Vdd", 1.0}};
    case Preset::ring_tanh: return {{"n", 3}, {"tau", 1e-3}, {"A_hat", 1.0}, {"k", 3.0}};
    case Preset::series_rlc_negres:
      return {{"R", 1.0}, {"L", 1e-3}, {"C", 1e-6}, {"V_max", 1.0}, {"R_max", 2.0}};
    case Preset::relaxation_two_tau:
    case Preset::harmonic_relaxation:
      return {{"tau_f", 2.5e-4}, {"tau_s", 1e-3}, {"k1", 2.0}, {"k2", 6.25}, {"k3", 0.4}};
    case Preset::fitzhugh_nagumo: return {{"a", 0.7}, {"b", 0.8}, {"tau", 12.5}, {"I_ext", 0.5}};
    case Preset::repressilator: return {{"alpha", 300.0}, {"alpha0", 0.03}, {"n", 2.0}, {"beta", 0.2}};
  }
  return {};
}

/// Autonomous ODE x' = F(x, modes). Modes are the frozen signs of the
/// states listed in `switch_states`; only the relay ring uses them, and the
/// integrator locates each sign change before flipping the mode.
struct OscModel {
  Preset preset{};
  ModelParams params;
  std::vector<std::string> state_names;
  std::map<std::string, std::size_t, std::less<>> aliases;
  std::vector<std::size_t> switch_states;
  std::optional<Nonlinearity> nl;
  std::function<void(const State&, const std::vector<int>&, State&)> field;
  double time_scale = 1.0;        // characteristic time constant
  double period_estimate = 1.0;   // rough oscillation period, for defaults
  State default_x0;

  std::size_t dim() const noexcept { return state_names.size(); }

  std::size_t node_index(std::string_view node) const {
    for (std::size_t i = 0; i < state_names.size(); ++i)
      if (state_names[i] == node) return i;
    auto it = aliases.find(node);
    if (it != aliases.end()) return it->second;
    throw ConfigError("node", "unknown node '" + std::string(node) + "'");
  }

  std::vector<std::string> node_names() const {
    auto out = state_names;
    for (const auto& [name, idx] : aliases) out.push_back(name);
    return out;
  }
};

namespace detail {

inline double need(const ModelParams& p, std::string_view key, bool positive = true) {
  auto it = p.find(key);
  if (it == p.end()) throw ConfigError(std::string(key), "missing parameter");
  const double v = it->second;
  if (!std::isfinite(v)) throw ConfigError(std::string(key), "must be finite");
  if (positive && !(v > 0.0)) throw ConfigError(std::string(key), "must be > 0");
  return v;
}

inline int stage_count(const ModelParams& p) {
  const double n = need(p, "n");
  if (n != std::floor(n) || n < 2 || n > 1000) throw ConfigError("n", "stage count must be an integer >= 2");
  if (static_cast<int>(n) % 2 == 0) throw ConfigError("n", "an inverter ring needs an odd stage count");
  return static_cast<int>(n);
}

inline State ramp_x0(std::size_t n) {
  State x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = 0.01 * static_cast<double>(i + 1);
  return x;
}

}  // namespace detail

/// Build a preset model. `overrides` replaces default parameter values;
/// unknown names are rejected.
inline OscModel build_model(Preset preset, const ModelParams& overrides = {}) {
  using detail::need;
  ModelParams p = default_params(preset);
  for (const auto& [k, v] : overrides) {
    if (!p.count(k)) throw ConfigError(k, "not a parameter of preset " + std::string(to_string(preset)));
    p[k] = v;
  }
  OscModel m;
  m.preset = preset;
  m.params = p;

  switch (preset) {
    case Preset::ring_relay:
    case Preset::ring_tanh: {
      const int n = detail::stage_count(p);
      const double tau = need(p, "tau");
      for (int i = 0; i < n; ++i) m.state_names.push_back("v" + std::to_string(i + 1));
      m.aliases["e_in1"] = static_cast<std::size_t>(n - 1);
      m.time_scale = tau;
      m.period_estimate = 3.0 * tau;
      m.default_x0 = detail::ramp_x0(static_cast<std::size_t>(n));
      const auto un = static_cast<std::size_t>(n);
      if (preset == Preset::ring_relay) {
        const double vdd = need(p, "Vdd");
        for (std::size_t i = 0; i < un; ++i) m.switch_states.push_back(i);
        m.nl = make_nonlinearity(NlKind::relay, {{"M", vdd}, {"scale", -1.0}});
        m.field = [un, tau, vdd](const State& x, const std::vector<int>& modes, State& dx) {
          for (std::size_t i = 0; i < un; ++i) {
            const std::size_t prev = (i + un - 1) % un;
            dx[i] = (-vdd * modes[prev] - x[i]) / tau;
          }
        };
      } else {
        const double ah = need(p, "A_hat"), k = need(p, "k");
        m.nl = make_nonlinearity(NlKind::tanh_inverter, {{"A_hat", ah}, {"k", k}});
        m.field = [un, tau, ah, k](const State& x, const std::vector<int>&, State& dx) {
          for (std::size_t i = 0; i < un; ++i) {
            const std::size_t prev = (i + un - 1) % un;
            dx[i] = (-ah * std::tanh(k * x[prev]) - x[i]) / tau;
          }
        };
      }
      break;
    }
    case Preset::series_rlc_negres: {
      const double R = need(p, "R", false), L = need(p, "L"), C = need(p, "C");
      if (R < 0.0) throw ConfigError("R", "must be >= 0");
      const double vmax = need(p, "V_max"), rmax = need(p, "R_max");
      m.state_names = {"i", "v_C"};
      m.nl = make_nonlinearity(NlKind::tanh_resistor, {{"V_max", vmax}, {"R_max", rmax}});
      m.time_scale = std::sqrt(L * C);
      m.period_estimate = 2.0 * std::numbers::pi * std::sqrt(L * C);
      m.default_x0 = detail::ramp_x0(2);
      // Series loop: L di/dt + R i + v_C + f(i) = 0, C dv_C/dt = i.
      m.field = [R, L, C, vmax, rmax](const State& x, const std::vector<int>&, State& dx) {
        const double v2 = -vmax * std::tanh(rmax / vmax * x[0]);
        dx[0] = (-R * x[0] - x[1] - v2) / L;
        dx[1] = x[0] / C;
      };
      break;
    }
    case Preset::relaxation_two_tau:
    case Preset::harmonic_relaxation: {
      const double tf = need(p, "tau_f"), ts = need(p, "tau_s");
      const double k1 = need(p, "k1", false), k2 = need(p, "k2", false), k3 = need(p, "k3");
      m.state_names = {"v_o", "v_i"};
      m.nl = make_nonlinearity(NlKind::tanh_relaxation, {{"k1", k1}, {"k2", k2}, {"k3", k3}});
      m.time_scale = tf;
      m.period_estimate = 2.0 * std::numbers::pi * std::sqrt(tf * ts);
      m.default_x0 = detail::ramp_x0(2);
      const bool integrator = preset == Preset::harmonic_relaxation;
      m.field = [tf, ts, k1, k2, k3, integrator](const State& x, const std::vector<int>&, State& dx) {
        const double f = -k1 * x[0] + k2 * std::tanh(k3 * x[0]);
        dx[0] = (f - x[1]) / tf;
        dx[1] = integrator ? x[0] / ts : (x[0] - x[1]) / ts;
      };
      break;
    }
    case Preset::fitzhugh_nagumo: {
      const double a = need(p, "a", false), b = need(p, "b", false), tau = need(p, "tau");
      const double I = need(p, "I_ext", false);
      m.state_names = {"v", "w"};
      m.nl = make_nonlinearity(NlKind::cubic_fn, {{"I_ext", I}});
      m.time_scale = 1.0;
      m.period_estimate = 3.0 * tau;
      m.default_x0 = detail::ramp_x0(2);
      m.field = [a, b, tau, I](const State& x, const std::vector<int>&, State& dx) {
        dx[0] = x[0] - x[0] * x[0] * x[0] / 3.0 - x[1] + I;
        dx[1] = (x[0] + a - b * x[1]) / tau;
      };
      break;
    }
    case Preset::repressilator: {
      const double alpha = need(p, "alpha"), alpha0 = need(p, "alpha0", false);
      const double n = need(p, "n"), beta = need(p, "beta");
      if (alpha0 < 0.0) throw ConfigError("alpha0", "must be >= 0");
      if (n < 1.0) throw ConfigError("n", "must be >= 1");
      m.state_names = {"m1", "m2", "m3", "p1", "p2", "p3"};
      m.nl = make_nonlinearity(NlKind::hill, {{"alpha", alpha}, {"alpha0", alpha0}, {"n", n}});
      m.time_scale = 1.0 / beta;
      m.period_estimate = 10.0 / beta;
      m.default_x0 = {1.0, 1.0, 1.2, 1.0, 1.0, 1.0};
      m.field = [alpha, alpha0, n, beta](const State& x, const std::vector<int>&, State& dx) {
        for (std::size_t i = 0; i < 3; ++i) {
          const double pj = std::max(x[3 + (i + 2) % 3], 0.0);
          dx[i] = -x[i] + alpha / (1.0 + std::pow(pj, n)) + alpha0;
          dx[3 + i] = -beta * (x[3 + i] - x[i]);
        }
      };
      break;
    }
  }
  return m;
}

/// Replace the nonlinearity of a single-nonlinearity model (relaxation
/// family, ring_tanh). Used e.g. to turn the redesigned block into a
/// lossless tank with f = 0.
inline OscModel with_nonlinearity(OscModel m, Nonlinearity nl) {
  if (nl.has_memory()) throw UnsupportedError("simulation of hysteresis relays is not supported");
  const auto f = [nl](double x) { return eval_y(nl, x); };
  switch (m.preset) {
    case Preset::relaxation_two_tau:
    case Preset::harmonic_relaxation: {
      const double tf = m.params.at("tau_f"), ts = m.params.at("tau_s");
      const bool integrator = m.preset == Preset::harmonic_relaxation;
      m.field = [tf, ts, integrator, f](const State& x, const std::vector<int>&, State& dx) {
        dx[0] = (f(x[0]) - x[1]) / tf;
        dx[1] = integrator ? x[0] / ts : (x[0] - x[1]) / ts;
      };
      break;
    }
    case Preset::ring_tanh: {
      const double tau = m.params.at("tau");
      const std::size_t un = m.dim();
      m.field = [un, tau, f](const State& x, const std::vector<int>&, State& dx) {
        for (std::size_t i = 0; i < un; ++i) dx[i] = (f(x[(i + un - 1) % un]) - x[i]) / tau;
      };
      break;
    }
    default:
      throw UnsupportedError("preset " + std::string(to_string(m.preset)) +
                             " does not take a replacement nonlinearity");
  }
  m.nl = std::move(nl);
  return m;
}

enum class Method { rk4, rk45 };

inline std::string_view to_string(Method m) { return m == Method::rk4 ? "rk4" : "rk45"; }

inline Method parse_method(std::string_view s) {
  if (s == "rk4") return Method::rk4;
  if (s == "rk45") return Method::rk45;
  throw ConfigError("method", "expected rk4 or rk45");
}

struct IntegrateOptions {
  Method method = Method::rk4;
  double dt = 0.0;     // rk4 step and record interval for both methods
  double t_max = 0.0;
  double rtol = 1e-8;  // rk45 only
  double atol = 1e-10;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;
  std::vector<std::string> state_names;
  std::map<std::string, std::size_t, std::less<>> aliases;

  std::size_t node_index(std::string_view node) const {
    for (std::size_t i = 0; i < state_names.size(); ++i)
      if (state_names[i] == node) return i;
    auto it = aliases.find(node);
    if (it != aliases.end()) return it->second;
    throw ConfigError("node", "unknown node '" + std::string(node) + "'");
  }

  std::vector<double> signal(std::string_view node) const {
    const std::size_t k = node_index(node);
    std::vector<double> out(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) out[i] = states[i][k];
    return out;
  }
};

namespace detail {

struct Stepper {
  const OscModel& model;
  std::vector<int> modes;
  State k1, k2, k3, k4, k5, k6, k7, tmp;

  explicit Stepper(const OscModel& m)
      : model(m), k1(m.dim()), k2(m.dim()), k3(m.dim()), k4(m.dim()), k5(m.dim()), k6(m.dim()),
        k7(m.dim()), tmp(m.dim()) {}

  void f(const State& x, State& dx) { model.field(x, modes, dx); }

  void axpy(const State& x, double h, std::initializer_list<std::pair<double, const State*>> terms) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      double acc = 0.0;
      for (const auto& [c, k] : terms) acc += c * (*k)[i];
      tmp[i] = x[i] + h * acc;
    }
  }

  State rk4(const State& x, double h) {
    f(x, k1);
    axpy(x, h, {{0.5, &k1}});
    f(tmp, k2);
    axpy(x, h, {{0.5, &k2}});
    f(tmp, k3);
    axpy(x, h, {{1.0, &k3}});
    f(tmp, k4);
    State out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    return out;
  }

  // Dormand-Prince 5(4). Returns the 5th-order solution and the error
  // estimate difference to the embedded 4th-order one.
  std::pair<State, State> dopri(const State& x, double h) {
    f(x, k1);
    axpy(x, h, {{1.0 / 5, &k1}});
    f(tmp, k2);
    axpy(x, h, {{3.0 / 40, &k1}, {9.0 / 40, &k2}});
    f(tmp, k3);
    axpy(x, h, {{44.0 / 45, &k1}, {-56.0 / 15, &k2}, {32.0 / 9, &k3}});
    f(tmp, k4);
    axpy(x, h, {{19372.0 / 6561, &k1}, {-25360.0 / 2187, &k2}, {64448.0 / 6561, &k3}, {-212.0 / 729, &k4}});
    f(tmp, k5);
    axpy(x, h,
         {{9017.0 / 3168, &k1}, {-355.0 / 33, &k2}, {46732.0 / 5247, &k3}, {49.0 / 176, &k4},
          {-5103.0 / 18656, &k5}});
    f(tmp, k6);
    State y(x.size()), err(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      y[i] = x[i] + h * (35.0 / 384 * k1[i] + 500.0 / 1113 * k3[i] + 125.0 / 192 * k4[i] -
                         2187.0 / 6784 * k5[i] + 11.0 / 84 * k6[i]);
    f(y, k7);
    for (std::size_t i = 0; i < x.size(); ++i)
      err[i] = h * ((35.0 / 384 - 5179.0 / 57600) * k1[i] + (500.0 / 1113 - 7571.0 / 16695) * k3[i] +
                    (125.0 / 192 - 393.0 / 640) * k4[i] + (-2187.0 / 6784 + 92097.0 / 339200) * k5[i] +
                    (11.0 / 84 - 187.0 / 2100) * k6[i] - 1.0 / 40 * k7[i]);
    return {y, err};
  }
};

inline bool all_finite(const State& x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

inline int sign_of(double v) { return v >= 0.0 ? 1 : -1; }

}  // namespace detail

/// Integrate from x0 and record the state every `dt` up to `t_max`.
///
/// rk4 takes fixed steps of dt; rk45 adapts its step to the tolerances and
/// lands on every record time. Sign changes of switching states are located
/// by bisection on the step length to 1e-12 of the model time scale, and
/// the mode flips there.
inline Trajectory integrate(const OscModel& model, State x0, const IntegrateOptions& opt) {
  if (!model.field) throw ConfigError("model", "model has no vector field");
  if (x0.empty()) x0 = model.default_x0;
  if (x0.size() != model.dim())
    throw ConfigError("x0", "expected " + std::to_string(model.dim()) + " initial values");
  if (!detail::all_finite(x0)) throw ConfigError("x0", "must be finite");
  if (!(opt.dt > 0.0) || !std::isfinite(opt.dt)) throw ConfigError("dt", "must be > 0");
  if (!(opt.t_max > 0.0) || !std::isfinite(opt.t_max)) throw ConfigError("t_max", "must be > 0");
  if (opt.method == Method::rk45 && (!(opt.rtol > 0.0) || !(opt.atol > 0.0)))
    throw ConfigError("tolerance", "rk45 tolerances must be > 0");
  if (model.preset == Preset::repressilator)
    for (double v : x0)
      if (v < 0.0) throw ConfigError("x0", "repressilator concentrations must be >= 0");

  Trajectory tr;
  tr.state_names = model.state_names;
  tr.aliases = model.aliases;
  detail::Stepper st(model);
  st.modes.assign(model.dim(), 1);
  for (std::size_t k : model.switch_states) st.modes[k] = detail::sign_of(x0[k]);

  const auto n_records = static_cast<std::size_t>(std::floor(opt.t_max / opt.dt + 1e-9));
  tr.times.reserve(n_records + 1);
  tr.states.reserve(n_records + 1);
  tr.times.push_back(0.0);
  tr.states.push_back(x0);

  State x = x0;
  double t = 0.0;
  double h_adapt = opt.dt;
  const double event_tol = 1e-12 * model.time_scale;

  auto crossed = [&](const State& y) -> bool {
    for (std::size_t k : model.switch_states)
      if (detail::sign_of(y[k]) != st.modes[k]) return true;
    return false;
  };

  // One trial step of length h with the current modes.
  auto trial = [&](const State& xs, double h) -> State {
    if (opt.method == Method::rk4) return st.rk4(xs, h);
    return st.dopri(xs, h).first;
  };

  // Advance exactly by h, splitting at switching events.
  auto advance_with_events = [&](State xs, double ts, double h, State y) -> State {
    double remaining = h;
    while (crossed(y)) {
      double lo = 0.0, hi = remaining;
      while (hi - lo > event_tol) {
        const double mid = 0.5 * (lo + hi);
        if (crossed(trial(xs, mid))) hi = mid;
        else lo = mid;
      }
      xs = trial(xs, hi);
      ts += hi;
      remaining -= hi;
      for (std::size_t k : model.switch_states) st.modes[k] = detail::sign_of(xs[k]);
      if (!detail::all_finite(xs)) throw IntegrationError(ts, "non-finite state");
      if (remaining <= 0.0) return xs;
      y = trial(xs, remaining);
    }
    return y;
  };

  for (std::size_t rec = 1; rec <= n_records; ++rec) {
    const double t_next = static_cast<double>(rec) * opt.dt;
    if (opt.method == Method::rk4) {
      const double h = t_next - t;
      State y = st.rk4(x, h);
      if (!model.switch_states.empty()) y = advance_with_events(x, t, h, y);
      x = std::move(y);
      t = t_next;
    } else {
      while (t < t_next) {
        double h = std::min(h_adapt, t_next - t);
        if (h < 1e-14 * std::max(1.0, std::abs(t)) && t_next - t > h)
          throw IntegrationError(t, "step size underflow");
        auto [y, err] = st.dopri(x, h);
        double en = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double sc = opt.atol + opt.rtol * std::max(std::abs(x[i]), std::abs(y[i]));
          en += (err[i] / sc) * (err[i] / sc);
        }
        en = std::sqrt(en / static_cast<double>(x.size()));
        if (!std::isfinite(en)) {
          h_adapt = 0.25 * h;
          if (h_adapt < 1e-14 * std::max(1.0, std::abs(t))) throw IntegrationError(t, "non-finite state");
          continue;
        }
        if (en <= 1.0) {
          if (!model.switch_states.empty()) y = advance_with_events(x, t, h, y);
          const bool landed = h == t_next - t;
          x = std::move(y);
          t = landed ? t_next : t + h;
          const double grow = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
          if (!landed || grow < 1.0) h_adapt = h * grow;
          else h_adapt = std::max(h_adapt, h * grow);
        } else {
          h_adapt = h * std::clamp(0.9 * std::pow(en, -0.25), 0.1, 0.9);
        }
      }
    }
    if (!detail::all_finite(x)) throw IntegrationError(t, "non-finite state");
    tr.times.push_back(t);
    tr.states.push_back(x);
  }
  return tr;
}

struct WaveformMetrics {
  bool oscillating = false;
  bool steady = false;
  double amplitude = 0.0;
  double offset = 0.0;
  double period = 0.0;
  double dispersion = 0.0;  // std / mean of the period samples in the window
  double thd = 0.0;
  double window_start = 0.0;
  double window_end = 0.0;
  int periods_in_window = 0;

  double frequency() const { return period > 0.0 ? 1.0 / period : 0.0; }
  double swing() const { return 2.0 * amplitude; }
};

namespace detail {

// Time average of samples on [a, b] by the trapezoid rule, with linear
// interpolation at the window edges.
inline double window_mean(const std::vector<double>& t, const std::vector<double>& s, double a, double b) {
  double acc = 0.0;
  auto value_at = [&](double tt) {
    auto it = std::upper_bound(t.begin(), t.end(), tt);
    if (it == t.begin()) return s.front();
    if (it == t.end()) return s.back();
    const auto i = static_cast<std::size_t>(it - t.begin());
    const double w = (tt - t[i - 1]) / (t[i] - t[i - 1]);
    return s[i - 1] + w * (s[i] - s[i - 1]);
  };
  double prev_t = a, prev_s = value_at(a);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] <= a) continue;
    if (t[i] >= b) break;
    acc += 0.5 * (prev_s + s[i]) * (t[i] - prev_t);
    prev_t = t[i];
    prev_s = s[i];
  }
  acc += 0.5 * (prev_s + value_at(b)) * (b - prev_t);
  return acc / (b - a);
}

}  // namespace detail

/// Complex harmonic amplitudes c_1..c_kmax of a node over the last
/// `n_periods` periods of the trajectory, so that the signal is about
/// c0 + sum Re(c_k e^{j k w t}). Trapezoid quadrature.
inline std::vector<std::complex<double>> fourier_coeffs(const Trajectory& tr, std::string_view node,
                                                        double period, int k_max, int n_periods = 5) {
  if (!(period > 0.0) || !std::isfinite(period)) throw DomainError("period must be > 0");
  if (k_max < 1) throw DomainError("k_max must be >= 1");
  if (n_periods < 3) throw DomainError("window needs at least 3 periods");
  if (tr.times.size() < 2) throw DomainError("trajectory too short");
  const double b = tr.times.back();
  const double a = b - n_periods * period;
  if (a < tr.times.front() - 1e-12 * period)
    throw DomainError("window of " + std::to_string(n_periods) + " periods exceeds the trajectory");
  const auto s = tr.signal(node);
  const auto& t = tr.times;

  auto value_at = [&](double tt) {
    auto it = std::upper_bound(t.begin(), t.end(), tt);
    if (it == t.begin()) return s.front();
    if (it == t.end()) return s.back();
    const auto i = static_cast<std::size_t>(it - t.begin());
    const double w = (tt - t[i - 1]) / (t[i] - t[i - 1]);
    return s[i - 1] + w * (s[i] - s[i - 1]);
  };

  std::vector<std::pair<double, double>> pts;
  pts.emplace_back(a, value_at(a));
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t[i] > a && t[i] < b) pts.emplace_back(t[i], s[i]);
  pts.emplace_back(b, value_at(b));

  const double w0 = 2.0 * std::numbers::pi / period;
  std::vector<std::complex<double>> c(static_cast<std::size_t>(k_max));
  for (int k = 1; k <= k_max; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      const auto e0 = std::polar(1.0, -k * w0 * (pts[i - 1].first - a));
      const auto e1 = std::polar(1.0, -k * w0 * (pts[i].first - a));
      acc += 0.5 * (pts[i - 1].second * e0 + pts[i].second * e1) * (pts[i].first - pts[i - 1].first);
    }
    c[static_cast<std::size_t>(k - 1)] = acc * 2.0 / (b - a);
  }
  return c;
}

/// sqrt(sum_{k>=2} |c_k|^2) / |c_1|.
inline double thd(const std::vector<std::complex<double>>& c) {
  if (c.empty() || std::abs(c[0]) == 0.0) throw DomainError("fundamental is zero");
  double acc = 0.0;
  for (std::size_t k = 1; k < c.size(); ++k) acc += std::norm(c[k]);
  return std::sqrt(acc) / std::abs(c[0]);
}

/// Steady-state amplitude, offset, period and distortion of one node.
///
/// The period is the mean spacing of rising crossings of the signal through
/// its post-settle mean. Amplitude (half peak-to-peak) and offset come from
/// the last five full periods. Fewer than three crossings means the
/// waveform has decayed or is constant.
inline WaveformMetrics waveform_metrics(const Trajectory& tr, std::string_view node,
                                        double settle_fraction = 0.5, int thd_harmonics = 49) {
  if (!(settle_fraction >= 0.0 && settle_fraction < 1.0))
    throw ConfigError("settle_fraction", "must be in [0, 1)");
  if (tr.times.size() < 4) throw DomainError("trajectory too short");
  WaveformMetrics wm;
  const auto s = tr.signal(node);
  const auto& t = tr.times;
  const double t0 = t.front() + settle_fraction * (t.back() - t.front());
  const auto first = static_cast<std::size_t>(std::lower_bound(t.begin(), t.end(), t0) - t.begin());
  if (t.size() - first < 4) return wm;
  const double mean = detail::window_mean(t, s, t[first], t.back());

  std::vector<double> rising;
  for (std::size_t i = first + 1; i < t.size(); ++i) {
    const double a = s[i - 1] - mean, b = s[i] - mean;
    if (a < 0.0 && b >= 0.0) rising.push_back(t[i - 1] + (t[i] - t[i - 1]) * (-a) / (b - a));
  }
  wm.window_start = t[first];
  wm.window_end = t.back();
  if (rising.size() < 3) return wm;
  wm.oscillating = true;

  const std::size_t n_int = std::min<std::size_t>(5, rising.size() - 1);
  const std::size_t last = rising.size() - 1;
  std::vector<double> spacing;
  for (std::size_t i = last - n_int; i < last; ++i) spacing.push_back(rising[i + 1] - rising[i]);
  const double ws = rising[last - n_int], we = rising[last];
  wm.period = (we - ws) / static_cast<double>(n_int);
  double var = 0.0;
  for (double d : spacing) var += (d - wm.period) * (d - wm.period);
  wm.dispersion = std::sqrt(var / static_cast<double>(spacing.size())) / wm.period;
  wm.steady = wm.dispersion < 1e-3;
  wm.window_start = ws;
  wm.window_end = we;
  wm.periods_in_window = static_cast<int>(n_int);

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t[i] >= ws && t[i] <= we) {
      lo = std::min(lo, s[i]);
      hi = std::max(hi, s[i]);
    }
  wm.amplitude = 0.5 * (hi - lo);
  wm.offset = detail::window_mean(t, s, ws, we);

  // Harmonics over the same whole-period window.
  if (n_int >= 3) {
    auto value_at = [&](double tt) {
      auto it = std::upper_bound(t.begin(), t.end(), tt);
      if (it == t.end()) return s.back();
      const auto i = static_cast<std::size_t>(it - t.begin());
      const double w = (tt - t[i - 1]) / (t[i] - t[i - 1]);
      return s[i - 1] + w * (s[i] - s[i - 1]);
    };
    Trajectory cut;
    cut.state_names = {"s"};
    cut.times.push_back(ws);
    cut.states.push_back({value_at(ws)});
    for (std::size_t i = 0; i < t.size(); ++i)
      if (t[i] > ws && t[i] < we) {
        cut.times.push_back(t[i]);
        cut.states.push_back({s[i]});
      }
    cut.times.push_back(we);
    cut.states.push_back({value_at(we)});
    const double per_period = static_cast<double>(cut.times.size()) / static_cast<double>(n_int);
    const int kmax = std::max(2, std::min(thd_harmonics, static_cast<int>(per_period / 2.0) - 1));
    try {
      wm.thd = thd(fourier_coeffs(cut, "s", wm.period, kmax, static_cast<int>(n_int)));
    } catch (const DomainError&) {
      wm.thd = 0.0;
    }
  }
  return wm;
}

struct Comparison {
  double predicted_amplitude = 0.0;
  double predicted_period = 0.0;
  double simulated_amplitude = 0.0;
  double simulated_period = 0.0;
  double amplitude_error = 0.0;  // relative to the simulation
  double period_error = 0.0;
  double frequency_error = 0.0;
  bool within_tolerance = false;
  bool oscillation_matches = false;
};

struct CompareTolerance {
  double amplitude = 0.1;
  double period = 0.1;
};

/// Relative errors between a prediction (amplitude at the probed node,
/// period) and simulated metrics. Never fails on mismatch.
inline Comparison compare(double predicted_amplitude, double predicted_period, const WaveformMetrics& m,
                          const CompareTolerance& tol = {}) {
  Comparison c;
  c.predicted_amplitude = predicted_amplitude;
  c.predicted_period = predicted_period;
  c.simulated_amplitude = m.amplitude;
  c.simulated_period = m.period;
  c.oscillation_matches = m.oscillating;
  if (!m.oscillating) {
    c.amplitude_error = c.period_error = c.frequency_error = std::numeric_limits<double>::infinity();
    return c;
  }
  auto rel = [](double p, double s) {
    if (p == s) return 0.0;
    return std::abs(p - s) / std::abs(s);
  };
  c.amplitude_error = rel(predicted_amplitude, m.amplitude);
  c.period_error = rel(predicted_period, m.period);
  c.frequency_error = rel(1.0 / predicted_period, 1.0 / m.period);
  c.within_tolerance = c.amplitude_error <= tol.amplitude && c.period_error <= tol.period;
  return c;
}

inline Comparison compare(const PredictedOscillation& p, const WaveformMetrics& m,
                          const CompareTolerance& tol = {}) {
  return compare(p.A_star, p.period, m, tol);
}

}  // namespace dfosc
