#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dfosc/error.hpp"

namespace dfosc {

enum class NlKind {
  saturation,
  relay,
  dead_zone,
  relay_hysteresis,
  tanh_resistor,
  tanh_inverter,
  tanh_relaxation,
  cubic_fn,
  hill,
  polynomial,
  tabulated,
};

inline constexpr std::array<std::pair<NlKind, std::string_view>, 11> kNlKindNames{{
    {NlKind::saturation, "saturation"},
    {NlKind::relay, "relay"},
    {NlKind::dead_zone, "dead_zone"},
    {NlKind::relay_hysteresis, "relay_hysteresis"},
    {NlKind::tanh_resistor, "tanh_resistor"},
    {NlKind::tanh_inverter, "tanh_inverter"},
    {NlKind::tanh_relaxation, "tanh_relaxation"},
    {NlKind::cubic_fn, "cubic_fn"},
    {NlKind::hill, "hill"},
    {NlKind::polynomial, "polynomial"},
    {NlKind::tabulated, "tabulated"},
}};

inline std::string_view to_string(NlKind k) {
  for (const auto& [kind, name] : kNlKindNames)
    if (kind == k) return name;
  return "unknown";
}

inline NlKind parse_nl_kind(std::string_view s) {
  for (const auto& [kind, name] : kNlKindNames)
    if (name == s) return kind;
  throw ConfigError("kind", "unknown nonlinearity kind '" + std::string(s) + "'");
}

using ParamValue = std::variant<double, std::vector<double>>;
using ParamMap = std::map<std::string, ParamValue, std::less<>>;

/// A memoryless scalar map f(x), optionally multiplied by an output scale.
///
/// Values are immutable once built by make_nonlinearity(). The hysteresis
/// relay is the one kind with memory; its switching state is passed in and
/// out of eval() explicitly so the type itself stays plain data.
class Nonlinearity {
public:
  NlKind kind() const noexcept { return kind_; }

  /// Scalar parameter by name; throws ConfigError if absent.
  double param(std::string_view name) const {
    auto it = scalars_.find(name);
    if (it == scalars_.end()) throw ConfigError(std::string(name), "no such parameter");
    return it->second;
  }
  const std::map<std::string, double, std::less<>>& scalars() const noexcept { return scalars_; }
  const std::vector<double>& coeffs() const noexcept { return coeffs_; }
  const std::vector<double>& table_x() const noexcept { return xs_; }
  const std::vector<double>& table_y() const noexcept { return ys_; }
  double scale() const noexcept { return scale_; }
  bool has_memory() const noexcept { return kind_ == NlKind::relay_hysteresis; }

  /// Same map with the output multiplied by c.
  Nonlinearity scaled(double c) const {
    if (!std::isfinite(c) || c == 0.0) throw ConfigError("scale", "must be finite and nonzero");
    Nonlinearity out = *this;
    out.scale_ *= c;
    return out;
  }

  /// Inputs where f is not smooth. The quadrature in dfcore splits there.
  std::vector<double> breakpoints() const {
    switch (kind_) {
      case NlKind::saturation: return {-param("a"), param("a")};
      case NlKind::relay: return {0.0};
      case NlKind::dead_zone: return {-param("Delta"), param("Delta")};
      case NlKind::relay_hysteresis: return {-param("h"), param("h")};
      case NlKind::hill: return {0.0};
      case NlKind::tabulated: return xs_;
      default: return {};
    }
  }

  friend bool operator==(const Nonlinearity&, const Nonlinearity&) = default;

private:
  friend Nonlinearity make_nonlinearity(NlKind, const ParamMap&);

  NlKind kind_ = NlKind::relay;
  std::map<std::string, double, std::less<>> scalars_;
  std::vector<double> coeffs_;
  std::vector<double> xs_, ys_;
  double scale_ = 1.0;
};

namespace detail {

enum class Constraint { positive, nonnegative, finite, at_least_one };

struct ScalarSpec {
  std::string_view name;
  Constraint constraint;
};

inline std::vector<ScalarSpec> scalar_specs(NlKind k) {
  using C = Constraint;
  switch (k) {
    case NlKind::saturation: return {{"K", C::positive}, {"a", C::positive}};
    case NlKind::relay: return {{"M", C::positive}};
    case NlKind::dead_zone: return {{"K", C::positive}, {"Delta", C::positive}};
    case NlKind::relay_hysteresis: return {{"M", C::positive}, {"h", C::positive}};
    case NlKind::tanh_resistor: return {{"V_max", C::positive}, {"R_max", C::positive}};
    case NlKind::tanh_inverter: return {{"A_hat", C::positive}, {"k", C::positive}};
    case NlKind::tanh_relaxation:
      return {{"k1", C::nonnegative}, {"k2", C::nonnegative}, {"k3", C::positive}};
    case NlKind::cubic_fn: return {{"I_ext", C::finite}};
    case NlKind::hill:
      return {{"alpha", C::positive}, {"alpha0", C::nonnegative}, {"n", C::at_least_one}};
    case NlKind::polynomial:
    case NlKind::tabulated: return {};
  }
  return {};
}

inline std::vector<std::string_view> list_specs(NlKind k) {
  if (k == NlKind::polynomial) return {"coeffs"};
  if (k == NlKind::tabulated) return {"x", "y"};
  return {};
}

inline void check_constraint(std::string_view name, double v, Constraint c) {
  const std::string key(name);
  if (!std::isfinite(v)) throw ConfigError(key, "must be finite");
  switch (c) {
    case Constraint::positive:
      if (!(v > 0.0)) throw ConfigError(key, "must be > 0");
      break;
    case Constraint::nonnegative:
      if (!(v >= 0.0)) throw ConfigError(key, "must be >= 0");
      break;
    case Constraint::at_least_one:
      if (!(v >= 1.0)) throw ConfigError(key, "must be >= 1");
      break;
    case Constraint::finite: break;
  }
}

}  // namespace detail

/// Parameter names accepted by a kind, in canonical order. `scale` is
/// accepted by every kind and is optional.
inline std::vector<std::string> parameter_names(NlKind k) {
  std::vector<std::string> out;
  for (const auto& s : detail::scalar_specs(k)) out.emplace_back(s.name);
  for (auto l : detail::list_specs(k)) out.emplace_back(l);
  out.emplace_back("scale");
  return out;
}

inline Nonlinearity make_nonlinearity(NlKind kind, const ParamMap& params) {
  Nonlinearity nl;
  nl.kind_ = kind;
  const auto scalars = detail::scalar_specs(kind);
  const auto lists = detail::list_specs(kind);

  for (const auto& [name, value] : params) {
    const bool known = name == "scale" ||
                       std::any_of(scalars.begin(), scalars.end(),
                                   [&](const auto& s) { return s.name == name; }) ||
                       std::find(lists.begin(), lists.end(), name) != lists.end();
    if (!known)
      throw ConfigError(name, "not a parameter of " + std::string(to_string(kind)));
  }

  auto scalar_of = [&](std::string_view name) -> std::optional<double> {
    auto it = params.find(name);
    if (it == params.end()) return std::nullopt;
    if (const double* d = std::get_if<double>(&it->second)) return *d;
    throw ConfigError(std::string(name), "expected a number, got a list");
  };
  auto list_of = [&](std::string_view name) -> std::vector<double> {
    auto it = params.find(name);
    if (it == params.end()) throw ConfigError(std::string(name), "missing parameter");
    if (const auto* v = std::get_if<std::vector<double>>(&it->second)) return *v;
    throw ConfigError(std::string(name), "expected a list");
  };

  for (const auto& s : scalars) {
    auto v = scalar_of(s.name);
    if (!v) throw ConfigError(std::string(s.name), "missing parameter");
    detail::check_constraint(s.name, *v, s.constraint);
    nl.scalars_.emplace(std::string(s.name), *v);
  }
  if (auto s = scalar_of("scale")) {
    if (!std::isfinite(*s) || *s == 0.0) throw ConfigError("scale", "must be finite and nonzero");
    nl.scale_ = *s;
  }

  if (kind == NlKind::polynomial) {
    nl.coeffs_ = list_of("coeffs");
    if (nl.coeffs_.empty()) throw ConfigError("coeffs", "must not be empty");
    for (double c : nl.coeffs_)
      if (!std::isfinite(c)) throw ConfigError("coeffs", "must be finite");
  }
  if (kind == NlKind::tabulated) {
    nl.xs_ = list_of("x");
    nl.ys_ = list_of("y");
    if (nl.xs_.size() != nl.ys_.size()) throw ConfigError("y", "length differs from x");
    if (nl.xs_.size() < 2) throw ConfigError("x", "need at least two samples");
    for (std::size_t i = 0; i < nl.xs_.size(); ++i) {
      if (!std::isfinite(nl.xs_[i])) throw ConfigError("x", "must be finite");
      if (!std::isfinite(nl.ys_[i])) throw ConfigError("y", "must be finite");
      if (i > 0 && !(nl.xs_[i] > nl.xs_[i - 1]))
        throw ConfigError("x", "must be strictly increasing");
    }
  }
  return nl;
}

/// Output of a single evaluation. `state` is set only for the hysteresis
/// relay: true means the relay currently outputs +M.
struct EvalResult {
  double y = 0.0;
  std::optional<bool> state;
};

/// Startup state for the hysteresis relay: sign of the first input, +M on ties.
inline bool initial_hysteresis_state(double x) noexcept { return x >= 0.0; }

namespace detail {

inline double eval_memoryless(const Nonlinearity& nl, double x) {
  switch (nl.kind()) {
    case NlKind::saturation: {
      const double a = nl.param("a");
      return nl.param("K") * std::clamp(x, -a, a);
    }
    case NlKind::relay:
      // Midpoint convention at the switching point.
      if (x > 0.0) return nl.param("M");
      if (x < 0.0) return -nl.param("M");
      return 0.0;
    case NlKind::dead_zone: {
      const double d = nl.param("Delta");
      if (x > d) return nl.param("K") * (x - d);
      if (x < -d) return nl.param("K") * (x + d);
      return 0.0;
    }
    case NlKind::tanh_resistor: {
      const double vmax = nl.param("V_max");
      return -vmax * std::tanh(nl.param("R_max") / vmax * x);
    }
    case NlKind::tanh_inverter: return -nl.param("A_hat") * std::tanh(nl.param("k") * x);
    case NlKind::tanh_relaxation:
      return -nl.param("k1") * x + nl.param("k2") * std::tanh(nl.param("k3") * x);
    case NlKind::cubic_fn: return x - x * x * x / 3.0 + nl.param("I_ext");
    case NlKind::hill: {
      // Repressor concentration cannot go negative; below zero the
      // promoter sees no repressor.
      const double p = std::max(x, 0.0);
      return nl.param("alpha") / (1.0 + std::pow(p, nl.param("n"))) + nl.param("alpha0");
    }
    case NlKind::polynomial: {
      const auto& c = nl.coeffs();
      double acc = 0.0;
      for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * x + *it;
      return acc;
    }
    case NlKind::tabulated: {
      const auto& xs = nl.table_x();
      const auto& ys = nl.table_y();
      if (x < xs.front() || x > xs.back())
        throw ExtrapolationError("tabulated nonlinearity queried at x = " + std::to_string(x) +
                                 " outside [" + std::to_string(xs.front()) + ", " +
                                 std::to_string(xs.back()) + "]");
      auto hi = std::upper_bound(xs.begin(), xs.end(), x);
      if (hi == xs.end()) return ys.back();
      const auto i = static_cast<std::size_t>(hi - xs.begin());
      const double t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
      return ys[i - 1] + t * (ys[i] - ys[i - 1]);
    }
    case NlKind::relay_hysteresis: break;
  }
  throw UnsupportedError("memoryless evaluation of a hysteresis relay");
}

}  // namespace detail

/// Pointwise evaluation. `prev_state` must be given exactly when the kind
/// is relay_hysteresis.
inline EvalResult eval(const Nonlinearity& nl, double x,
                       std::optional<bool> prev_state = std::nullopt) {
  if (nl.kind() == NlKind::relay_hysteresis) {
    if (!prev_state) throw DomainError("relay_hysteresis evaluation needs the previous state");
    const double h = nl.param("h");
    bool s = *prev_state;
    if (x >= h) s = true;
    else if (x <= -h) s = false;
    const double m = nl.param("M");
    return {nl.scale() * (s ? m : -m), s};
  }
  if (prev_state) throw DomainError(std::string(to_string(nl.kind())) + " is memoryless");
  return {nl.scale() * detail::eval_memoryless(nl, x), std::nullopt};
}

/// Convenience for memoryless kinds.
inline double eval_y(const Nonlinearity& nl, double x) { return eval(nl, x).y; }

enum class Symmetry { odd, even, none };

inline std::string_view to_string(Symmetry s) {
  switch (s) {
    case Symmetry::odd: return "odd";
    case Symmetry::even: return "even";
    case Symmetry::none: return "none";
  }
  return "none";
}

/// Classify f as odd, even or neither by sampling (0, halfwidth].
/// The hysteresis relay is tested as f(x; s) against f(-x; !s).
inline Symmetry symmetry_check(const Nonlinearity& nl, double domain_halfwidth, int n_samples) {
  if (n_samples < 8) throw DomainError("symmetry_check needs n_samples >= 8");
  double w = domain_halfwidth;
  if (nl.kind() == NlKind::tabulated) {
    const double lo = nl.table_x().front(), hi = nl.table_x().back();
    if (lo >= 0.0 || hi <= 0.0) return Symmetry::none;
    w = std::min({w, -lo, hi});
  }
  double odd_err = 0.0, even_err = 0.0, scale = 0.0;
  for (int i = 1; i <= n_samples; ++i) {
    const double x = w * i / n_samples;
    double fp, fm;
    if (nl.has_memory()) {
      const double f_up = eval(nl, x, true).y, f_down = eval(nl, -x, false).y;
      odd_err = std::max(odd_err, std::abs(f_up + f_down));
      even_err = std::max(even_err, std::abs(f_up - f_down));
      scale = std::max({scale, std::abs(f_up), std::abs(f_down)});
      fp = eval(nl, x, false).y;
      fm = eval(nl, -x, true).y;
    } else {
      fp = eval_y(nl, x);
      fm = eval_y(nl, -x);
    }
    odd_err = std::max(odd_err, std::abs(fp + fm));
    even_err = std::max(even_err, std::abs(fp - fm));
    scale = std::max({scale, std::abs(fp), std::abs(fm)});
  }
  const double tol = 1e-12 * scale;
  if (odd_err <= tol) return Symmetry::odd;
  if (even_err <= tol) return Symmetry::even;
  return Symmetry::none;
}

}  // namespace dfosc
