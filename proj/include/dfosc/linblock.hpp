#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dfosc/error.hpp"

namespace dfosc {

using cplx = std::complex<double>;

/// How a period-fraction delay rho acts on negative frequencies.
///
/// conjugate_symmetric: factor exp(-j 2 pi rho sign(w)), so G(-jw) = conj G(jw).
/// fixed_phasor: factor exp(-j 2 pi rho) for every w != 0, the reading used
/// when a lumped delay of rho periods is written as one constant phasor and
/// the loop equation is then also solved on the w < 0 branch.
enum class DelayConvention { conjugate_symmetric, fixed_phasor };

inline std::string_view to_string(DelayConvention c) {
  return c == DelayConvention::fixed_phasor ? "fixed_phasor" : "conjugate_symmetric";
}

inline DelayConvention parse_delay_convention(std::string_view s) {
  if (s == "conjugate_symmetric") return DelayConvention::conjugate_symmetric;
  if (s == "fixed_phasor") return DelayConvention::fixed_phasor;
  throw ConfigError("delay_convention", "expected conjugate_symmetric or fixed_phasor");
}

/// Evaluate an ascending-coefficient real polynomial at complex s.
inline cplx polyval(const std::vector<double>& c, cplx s) {
  cplx acc = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * s + *it;
  return acc;
}

/// Sum of |c_k| |s|^k: the natural scale for deciding that polyval is zero.
inline double polyscale(const std::vector<double>& c, double abs_s) {
  double acc = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * abs_s + std::abs(*it);
  return acc;
}

inline std::vector<double> polymul(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) return {};
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

/// Roots of an ascending-coefficient polynomial (Aberth-Ehrlich iteration).
inline std::vector<cplx> poly_roots(std::vector<double> c) {
  while (!c.empty() && c.back() == 0.0) c.pop_back();
  if (c.size() <= 1) return {};
  const std::size_t n = c.size() - 1;
  std::vector<double> dc(n);
  for (std::size_t k = 1; k <= n; ++k) dc[k - 1] = c[k] * static_cast<double>(k);

  // Initial guesses on a circle sized by the Cauchy bound.
  double bound = 0.0;
  for (std::size_t k = 0; k < n; ++k) bound = std::max(bound, std::abs(c[k] / c[n]));
  const double r0 = std::min(1.0 + bound, 1e12);
  std::vector<cplx> z(n);
  for (std::size_t k = 0; k < n; ++k)
    z[k] = std::polar(r0 * 0.5 + 0.1, 2.0 * std::numbers::pi * (k + 0.25) / n + 0.4);

  for (int iter = 0; iter < 500; ++iter) {
    double max_step = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const cplx p = polyval(c, z[i]);
      if (p == cplx(0.0)) continue;
      const cplx ratio = p / polyval(dc, z[i]);
      cplx sum = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) sum += 1.0 / (z[i] - z[j]);
      const cplx step = ratio / (1.0 - ratio * sum);
      z[i] -= step;
      max_step = std::max(max_step, std::abs(step) / std::max(1.0, std::abs(z[i])));
    }
    if (max_step < 1e-15) break;
  }
  std::sort(z.begin(), z.end(), [](cplx a, cplx b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  return z;
}

/// Rational transfer function num(s)/den(s) with real ascending coefficients,
/// times a delay expressed as a fraction rho of the oscillation period.
class LinearBlock {
public:
  LinearBlock() : LinearBlock({1.0}, {1.0}) {}

  LinearBlock(std::vector<double> num, std::vector<double> den, double rho = 0.0,
              DelayConvention convention = DelayConvention::conjugate_symmetric)
      : num_(std::move(num)), den_(std::move(den)), convention_(convention) {
    if (den_.empty()) throw ConfigError("den", "must not be empty");
    if (den_.back() == 0.0) throw ConfigError("den", "leading coefficient must be nonzero");
    for (double d : den_)
      if (!std::isfinite(d)) throw ConfigError("den", "must be finite");
    for (double v : num_)
      if (!std::isfinite(v)) throw ConfigError("num", "must be finite");
    if (num_.empty()) num_.push_back(0.0);
    if (!std::isfinite(rho) || rho < 0.0) throw ConfigError("rho", "must be finite and >= 0");
    rho_ = rho - std::floor(rho);
    if (rho_ >= 1.0) rho_ = 0.0;
  }

  const std::vector<double>& num() const noexcept { return num_; }
  const std::vector<double>& den() const noexcept { return den_; }
  double rho() const noexcept { return rho_; }
  DelayConvention convention() const noexcept { return convention_; }
  bool has_delay() const noexcept { return rho_ != 0.0; }

  /// Rational part at an arbitrary complex s (no delay factor).
  cplx rational(cplx s) const {
    const cplx d = polyval(den_, s);
    if (std::abs(d) <= 1e-14 * polyscale(den_, std::abs(s)))
      throw SingularityError("pole of G at s = (" + std::to_string(s.real()) + ", " +
                             std::to_string(s.imag()) + ")");
    return polyval(num_, s) / d;
  }

  /// The delay phasor applied at angular frequency w.
  cplx delay_factor(double w) const {
    if (rho_ == 0.0 || w == 0.0) return 1.0;
    const double sgn = convention_ == DelayConvention::fixed_phasor ? 1.0 : (w > 0.0 ? 1.0 : -1.0);
    return std::polar(1.0, -2.0 * std::numbers::pi * rho_ * sgn);
  }

  /// Relative order: deg(num) - deg(den) after trimming zero leading terms.
  int relative_degree() const {
    int dn = static_cast<int>(num_.size()) - 1;
    while (dn > 0 && num_[static_cast<std::size_t>(dn)] == 0.0) --dn;
    return dn - (static_cast<int>(den_.size()) - 1);
  }

  friend bool operator==(const LinearBlock&, const LinearBlock&) = default;

private:
  std::vector<double> num_, den_;
  double rho_ = 0.0;
  DelayConvention convention_ = DelayConvention::conjugate_symmetric;
};

/// Series connection a * b. Delays add; both must share a convention.
inline LinearBlock series(const LinearBlock& a, const LinearBlock& b) {
  if (a.has_delay() && b.has_delay() && a.convention() != b.convention())
    throw ConfigError("delay_convention", "cannot combine blocks with different delay conventions");
  const auto conv = a.has_delay() ? a.convention() : b.convention();
  return LinearBlock(polymul(a.num(), b.num()), polymul(a.den(), b.den()), a.rho() + b.rho(), conv);
}

/// Frequency response G(jw) including the delay phasor.
inline cplx eval_response(const LinearBlock& g, double w) {
  if (!std::isfinite(w)) throw DomainError("omega must be finite");
  const cplx s(0.0, w);
  const cplx d = polyval(g.den(), s);
  if (std::abs(d) <= 1e-14 * polyscale(g.den(), std::abs(w)))
    throw SingularityError("G(jw) has a pole at omega = " + std::to_string(w));
  return polyval(g.num(), s) / d * g.delay_factor(w);
}

/// Strictly increasing finite angular frequencies.
class FrequencyGrid {
public:
  explicit FrequencyGrid(std::vector<double> w) : w_(std::move(w)) {
    if (w_.empty()) throw DomainError("frequency grid must not be empty");
    for (std::size_t i = 0; i < w_.size(); ++i) {
      if (!std::isfinite(w_[i])) throw DomainError("frequency grid values must be finite");
      if (i > 0 && !(w_[i] > w_[i - 1])) throw DomainError("frequency grid must be increasing");
    }
  }

  /// n log-spaced points on [lo, hi]. With symmetric, the mirrored negative
  /// points are prepended so the grid covers [-hi, -lo] U [lo, hi].
  static FrequencyGrid log(double lo, double hi, int n, bool symmetric = false) {
    if (!(lo > 0.0) || !(hi > lo) || n < 2) throw DomainError("log grid needs 0 < lo < hi, n >= 2");
    std::vector<double> pos(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      pos[static_cast<std::size_t>(i)] = lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
    pos.back() = hi;
    if (!symmetric) return FrequencyGrid(std::move(pos));
    std::vector<double> all;
    all.reserve(pos.size() * 2);
    for (auto it = pos.rbegin(); it != pos.rend(); ++it) all.push_back(-*it);
    all.insert(all.end(), pos.begin(), pos.end());
    return FrequencyGrid(std::move(all));
  }

  const std::vector<double>& values() const noexcept { return w_; }
  std::size_t size() const noexcept { return w_.size(); }

private:
  std::vector<double> w_;
};

struct NyquistPoint {
  double omega;
  cplx value;
};

inline std::vector<NyquistPoint> nyquist(const LinearBlock& g, const FrequencyGrid& grid) {
  std::vector<NyquistPoint> out;
  out.reserve(grid.size());
  for (double w : grid.values()) out.push_back({w, eval_response(g, w)});
  return out;
}

struct BodePoint {
  double omega;
  double magnitude_db;
  double phase_deg;
};

/// Magnitude in dB and phase in degrees. The first phase lies in
/// (-180, 180]; later ones are unwrapped to stay continuous along the grid.
inline std::vector<BodePoint> bode(const LinearBlock& g, const FrequencyGrid& grid) {
  std::vector<BodePoint> out;
  out.reserve(grid.size());
  double prev = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double w = grid.values()[i];
    const cplx v = eval_response(g, w);
    double ph = std::arg(v) * 180.0 / std::numbers::pi;
    if (ph <= -180.0) ph += 360.0;
    if (i > 0) ph += 360.0 * std::round((prev - ph) / 360.0);
    prev = ph;
    out.push_back({w, 20.0 * std::log10(std::abs(v)), ph});
  }
  return out;
}

/// A frequency where G(jw) is real. At an imaginary-axis pole G is
/// unbounded; `at_pole` is set and `value` is infinite.
struct AxisCrossing {
  double omega;
  cplx value;
  bool at_pole = false;
};

namespace detail {

// Im(num(jw) D(w) conj(den(jw))): same sign as Im G(jw) wherever G is
// finite, and well defined through imaginary-axis poles.
inline double cleared_imag(const LinearBlock& g, double w) {
  const cplx s(0.0, w);
  return (polyval(g.num(), s) * g.delay_factor(w) * std::conj(polyval(g.den(), s))).imag();
}

inline double cleared_scale(const LinearBlock& g, double w) {
  const cplx s(0.0, w);
  return std::abs(polyval(g.num(), s)) * std::abs(polyval(g.den(), s));
}

}  // namespace detail

/// All w in [lo, hi] (both positive) where Im G(jw) changes sign, located on
/// a log grid and refined by bisection.
inline std::vector<AxisCrossing> real_axis_crossings(const LinearBlock& g, double lo, double hi,
                                                     int grid_points = 4000) {
  if (!(lo > 0.0) || !(hi > lo) || !std::isfinite(hi))
    throw DomainError("real_axis_crossings needs a positive finite bracket");
  const auto grid = FrequencyGrid::log(lo, hi, std::max(grid_points, 2));
  const auto& w = grid.values();
  std::vector<AxisCrossing> out;

  auto refine = [&](double a, double b, double fa) {
    for (int it = 0; it < 200 && b - a > 4.0 * std::numeric_limits<double>::epsilon() * b; ++it) {
      const double m = 0.5 * (a + b);
      const double fm = detail::cleared_imag(g, m);
      if (fm == 0.0) return m;
      if ((fm < 0.0) == (fa < 0.0)) {
        a = m;
        fa = fm;
      } else {
        b = m;
      }
    }
    return 0.5 * (a + b);
  };

  double prev = detail::cleared_imag(g, w[0]);
  for (std::size_t i = 1; i < w.size(); ++i) {
    const double cur = detail::cleared_imag(g, w[i]);
    double root;
    if (cur == 0.0 && prev != 0.0) {
      root = w[i];
    } else if (prev != 0.0 && cur != 0.0 && (prev < 0.0) != (cur < 0.0)) {
      root = refine(w[i - 1], w[i], prev);
    } else {
      prev = cur;
      continue;
    }
    prev = cur;
    const cplx s(0.0, root);
    const cplx d = polyval(g.den(), s);
    const double den_scale = polyscale(g.den(), root);
    if (std::abs(d) <= 1e-9 * den_scale) {
      out.push_back({root, cplx(std::numeric_limits<double>::infinity(), 0.0), true});
      continue;
    }
    const cplx v = eval_response(g, root);
    // A sign change without a small imaginary part is a jump, not a crossing.
    if (std::abs(v.imag()) > 1e-10 * std::abs(v)) continue;
    out.push_back({root, v, false});
  }
  return out;
}

struct MagnitudePeak {
  double omega;
  double magnitude;
  bool interior;  // false when |G| is monotone on the bracket
};

/// Golden-section maximization of |G(jw)| on a log scale.
inline MagnitudePeak magnitude_peak(const LinearBlock& g, double lo, double hi) {
  if (!(lo > 0.0) || !(hi > lo) || !std::isfinite(hi))
    throw DomainError("magnitude_peak needs a positive finite bracket");
  auto mag = [&](double lw) {
    try {
      return std::abs(eval_response(g, std::exp(lw)));
    } catch (const SingularityError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  constexpr int n_scan = 400;
  const double llo = std::log(lo), lhi = std::log(hi);
  int best = 0;
  double best_val = -1.0;
  for (int i = 0; i < n_scan; ++i) {
    const double v = mag(llo + (lhi - llo) * i / (n_scan - 1));
    if (v > best_val) {
      best_val = v;
      best = i;
    }
  }
  if (best == 0) return {lo, mag(llo), false};
  if (best == n_scan - 1) return {hi, mag(lhi), false};

  const double step = (lhi - llo) / (n_scan - 1);
  double a = llo + (best - 1) * step, b = llo + (best + 1) * step;
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - invphi * (b - a), d = a + invphi * (b - a);
  double fc = mag(c), fd = mag(d);
  // Stop at relative omega tolerance 1e-9, i.e. 1e-9 in log omega.
  while (b - a > 1e-10) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = mag(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = mag(d);
    }
  }
  const double lw = 0.5 * (a + b);
  return {std::exp(lw), mag(lw), true};
}

/// Named constructors for the blocks used by the oscillator presets.
namespace blocks {

/// gain / (tau s + 1)
inline LinearBlock first_order_lag(double tau, double gain = 1.0) {
  if (!(tau > 0.0)) throw ConfigError("tau", "must be > 0");
  return LinearBlock({gain}, {1.0, tau});
}

/// gain (1 - tau s) / (1 + tau s): unit-magnitude, phase 0 to -180 degrees.
inline LinearBlock first_order_allpass(double tau, double gain = 1.0) {
  if (!(tau > 0.0)) throw ConfigError("tau", "must be > 0");
  return LinearBlock({gain, -gain * tau}, {1.0, tau});
}

/// 1 / (tau_f s + 1 / (tau_s s + b)) = (tau_s s + b) / (tau_f tau_s s^2 + tau_f b s + 1)
inline LinearBlock relaxation(double tau_f, double tau_s, double b = 1.0) {
  if (!(tau_f > 0.0)) throw ConfigError("tau_f", "must be > 0");
  if (!(tau_s > 0.0)) throw ConfigError("tau_s", "must be > 0");
  return LinearBlock({b, tau_s}, {1.0, tau_f * b, tau_f * tau_s});
}

/// 1 / (tau_f s + 1 / (tau_s s)) = tau_s s / (tau_f tau_s s^2 + 1), an LC tank.
inline LinearBlock harmonic_relaxation(double tau_f, double tau_s) {
  if (!(tau_f > 0.0)) throw ConfigError("tau_f", "must be > 0");
  if (!(tau_s > 0.0)) throw ConfigError("tau_s", "must be > 0");
  return LinearBlock({0.0, tau_s}, {1.0, 0.0, tau_f * tau_s});
}

/// Series RLC admittance s C / (L C s^2 + R C s + 1).
inline LinearBlock series_rlc(double r, double l, double c) {
  if (!(r > 0.0)) throw ConfigError("R", "must be > 0");
  if (!(l > 0.0)) throw ConfigError("L", "must be > 0");
  if (!(c > 0.0)) throw ConfigError("C", "must be > 0");
  return LinearBlock({0.0, c}, {1.0, r * c, l * c});
}

}  // namespace blocks

/// w1: where the relaxation block is real, (1/tau_s) sqrt((tau_s - tau_f)/tau_f).
inline double relaxation_phase_crossover(double tau_f, double tau_s) {
  return std::sqrt((tau_s - tau_f) / tau_f) / tau_s;
}

/// w2: where |relaxation block| peaks.
inline double relaxation_magnitude_peak(double tau_f, double tau_s) {
  return std::sqrt((-tau_f + std::sqrt(tau_s * tau_s + 2.0 * tau_f * tau_s)) /
                   (tau_f * tau_s * tau_s));
}

}  // namespace dfosc
