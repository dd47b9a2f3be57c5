#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include "dfosc/error.hpp"
#include "dfosc/nonlin.hpp"

namespace dfosc {

using cplx = std::complex<double>;

inline constexpr int kDefaultDfSamples = 1024;

/// One point of a describing function: input x = bias + A sin(theta) maps to
/// an output whose mean is a0 and whose fundamental phasor is N * A.
struct DFSample {
  double A = 0.0;
  double bias = 0.0;
  double a0 = 0.0;
  cplx N{};
};

struct DFCurve {
  std::vector<DFSample> samples;  // strictly increasing A
  Nonlinearity nl;
};

/// Closed-form N(A) for the four classic control nonlinearities and the
/// FitzHugh-Nagumo cubic. Returns nullopt for kinds without one.
/// Throws DomainError when A is below the validity threshold.
inline std::optional<cplx> df_closed_form(const Nonlinearity& nl, double A) {
  using std::numbers::pi;
  if (!(A > 0.0) || !std::isfinite(A)) throw DomainError("describing function needs A > 0");
  auto need = [&](double threshold, const char* name) {
    if (A < threshold)
      throw DomainError("closed form needs A >= " + std::string(name) + " = " +
                        std::to_string(threshold));
  };
  const double s = nl.scale();
  switch (nl.kind()) {
    case NlKind::saturation: {
      const double a = nl.param("a");
      need(a, "a");
      const double r = a / A;
      return s * 2.0 * nl.param("K") / pi * (std::asin(r) + r * std::sqrt(1.0 - r * r));
    }
    case NlKind::relay: return s * 4.0 * nl.param("M") / (pi * A);
    case NlKind::dead_zone: {
      const double d = nl.param("Delta");
      need(d, "Delta");
      const double r = d / A;
      return s * 2.0 * nl.param("K") / pi * (pi / 2.0 - std::asin(r) - r * std::sqrt(1.0 - r * r));
    }
    case NlKind::relay_hysteresis: {
      const double h = nl.param("h");
      need(h, "h");
      const double m = nl.param("M"), r = h / A;
      return s * cplx(4.0 * m / (pi * A) * std::sqrt(1.0 - r * r), -4.0 * m * h / (pi * A * A));
    }
    case NlKind::cubic_fn: return s * (1.0 - 0.75 * A * A);
    default: return std::nullopt;
  }
}

namespace detail {

// 8-point Gauss-Legendre on [-1, 1].
inline constexpr std::array<double, 8> kGlNodes{
    -0.9602898564975363, -0.7966664774136267, -0.5255324099163290, -0.1834346424956498,
    0.1834346424956498,  0.5255324099163290,  0.7966664774136267,  0.9602898564975363};
inline constexpr std::array<double, 8> kGlWeights{
    0.1012285362903763, 0.2223810344533745, 0.3137066458778873, 0.3626837833783620,
    0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};

inline bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Phases in [0, 2pi) where bias + A sin(theta) equals one of the breakpoints.
inline std::vector<double> crossing_phases(const Nonlinearity& nl, double A, double bias) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::vector<double> out;
  auto wrap = [&](double th) {
    th = std::fmod(th, two_pi);
    if (th < 0.0) th += two_pi;
    if (th >= two_pi) th = 0.0;
    return th;
  };
  for (double xb : nl.breakpoints()) {
    const double s = (xb - bias) / A;
    if (!(std::abs(s) <= 1.0)) continue;
    const double th = std::asin(s);
    out.push_back(wrap(th));
    out.push_back(wrap(std::numbers::pi - th));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end(),
                        [](double a, double b) { return std::abs(a - b) < 1e-14; }),
            out.end());
  return out;
}

struct Moments {
  double a0 = 0.0, a1 = 0.0, b1 = 0.0;
};

// Fourier moments of y(t) = f(bias + A sin(omega t)) over one period
// P = 2 pi / omega. Smooth maps use the periodic trapezoid rule, which
// converges spectrally. Piecewise maps are split at the breakpoint crossings
// and each smooth piece gets composite Gauss-Legendre.
inline Moments fourier_moments(const Nonlinearity& nl, double A, double bias, int n_samples,
                               double omega) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double period = two_pi / omega;
  auto phase = [&](double t) { return omega * t; };
  std::vector<double> cuts = crossing_phases(nl, A, bias);

  Moments m;
  if (cuts.empty() && !nl.has_memory()) {
    const double dt = period / n_samples;
    for (int k = 0; k < n_samples; ++k) {
      const double th = phase(k * dt);
      const double y = eval_y(nl, bias + A * std::sin(th));
      m.a0 += y;
      m.a1 += y * std::sin(th);
      m.b1 += y * std::cos(th);
    }
    m.a0 /= n_samples;
    m.a1 *= 2.0 / n_samples;
    m.b1 *= 2.0 / n_samples;
    return m;
  }

  // Segment boundaries in time, always including t = 0 so the hysteresis
  // march starts where the initial state is defined.
  std::vector<double> bounds{0.0};
  for (double c : cuts)
    if (c > 1e-14) bounds.push_back(c / omega);
  bounds.push_back(period);
  const std::size_t n_seg = bounds.size() - 1;

  // Hysteresis: the output is constant on each segment. March two cycles
  // from the startup state and keep the second.
  std::vector<std::optional<bool>> seg_state(n_seg);
  if (nl.has_memory()) {
    bool s = initial_hysteresis_state(bias);
    for (int cycle = 0; cycle < 2; ++cycle) {
      for (std::size_t i = 0; i < n_seg; ++i) {
        // The boundary itself matters when A touches the threshold exactly.
        const double tm = 0.5 * (bounds[i] + bounds[i + 1]);
        s = *eval(nl, bias + A * std::sin(phase(bounds[i])), s).state;
        s = *eval(nl, bias + A * std::sin(phase(tm)), s).state;
        if (cycle == 1) seg_state[i] = s;
      }
    }
  }

  const double per_panel = static_cast<double>(kGlNodes.size());
  for (std::size_t i = 0; i < n_seg; ++i) {
    const double lo = bounds[i], hi = bounds[i + 1];
    if (!(hi > lo)) continue;
    const int panels = std::max(1, static_cast<int>(std::ceil(n_samples / per_panel *
                                                                 (hi - lo) / period)));
    const double w = (hi - lo) / panels;
    for (int p = 0; p < panels; ++p) {
      const double c = lo + (p + 0.5) * w;
      for (std::size_t g = 0; g < kGlNodes.size(); ++g) {
        const double t = c + 0.5 * w * kGlNodes[g];
        const double th = phase(t);
        const double x = bias + A * std::sin(th);
        const double y = nl.has_memory() ? eval(nl, x, seg_state[i]).y : eval_y(nl, x);
        const double wt = 0.5 * w * kGlWeights[g];
        m.a0 += wt * y;
        m.a1 += wt * y * std::sin(th);
        m.b1 += wt * y * std::cos(th);
      }
    }
  }
  m.a0 /= period;
  m.a1 *= 2.0 / period;
  m.b1 *= 2.0 / period;
  return m;
}

}  // namespace detail

/// Numerical describing function with DC offset.
///
/// Evaluates y = f(bias + A sin(theta)) over one cycle and projects onto the
/// mean and the fundamental: a0 = <y>, a1 = 2<y sin>, b1 = 2<y cos>,
/// N = (a1 + j b1) / A. The hysteresis relay is marched with its state and
/// one warm-up cycle is discarded. n_samples must be a power of two >= 256.
inline DFSample df_numeric(const Nonlinearity& nl, double A, double bias = 0.0,
                           int n_samples = kDefaultDfSamples) {
  if (!(A > 0.0) || !std::isfinite(A)) throw DomainError("describing function needs A > 0");
  if (!std::isfinite(bias)) throw DomainError("bias must be finite");
  if (n_samples < 256 || !detail::is_power_of_two(n_samples))
    throw DomainError("n_samples must be a power of two >= 256");
  const auto m = detail::fourier_moments(nl, A, bias, n_samples, 1.0);
  return {A, bias, m.a0, cplx(m.a1, m.b1) / A};
}

/// Same as df_numeric() but parameterized by time at angular frequency
/// omega. The result does not depend on omega up to rounding.
inline DFSample df_numeric_at_frequency(const Nonlinearity& nl, double A, double bias,
                                        int n_samples, double omega) {
  if (!(omega > 0.0) || !std::isfinite(omega)) throw DomainError("omega must be > 0");
  if (!(A > 0.0) || !std::isfinite(A)) throw DomainError("describing function needs A > 0");
  if (n_samples < 256 || !detail::is_power_of_two(n_samples))
    throw DomainError("n_samples must be a power of two >= 256");
  const auto m = detail::fourier_moments(nl, A, bias, n_samples, omega);
  return {A, bias, m.a0, cplx(m.a1, m.b1) / A};
}

/// Describing function at one point, preferring the closed form when it
/// exists and applies (zero bias, A above the validity threshold).
inline DFSample df_eval(const Nonlinearity& nl, double A, double bias = 0.0,
                        int n_samples = kDefaultDfSamples) {
  if (bias == 0.0) {
    std::optional<cplx> closed;
    try {
      closed = df_closed_form(nl, A);
    } catch (const DomainError&) {
      closed.reset();
    }
    if (closed) {
      const double a0 = nl.kind() == NlKind::cubic_fn ? nl.scale() * nl.param("I_ext") : 0.0;
      return {A, 0.0, a0, *closed};
    }
  }
  return df_numeric(nl, A, bias, n_samples);
}

/// Geometric sweep of A over [A_min, A_max].
inline DFCurve df_curve(const Nonlinearity& nl, double A_min, double A_max, int n_points,
                        double bias = 0.0, int n_samples = kDefaultDfSamples) {
  if (!(A_min > 0.0) || !(A_max > A_min) || !std::isfinite(A_max))
    throw DomainError("df_curve needs 0 < A_min < A_max");
  if (n_points < 2) throw DomainError("df_curve needs n_points >= 2");
  DFCurve curve{{}, nl};
  curve.samples.reserve(static_cast<std::size_t>(n_points));
  const double ratio = A_max / A_min;
  for (int i = 0; i < n_points; ++i) {
    double A = A_min * std::pow(ratio, static_cast<double>(i) / (n_points - 1));
    if (i == n_points - 1) A = A_max;
    curve.samples.push_back(df_eval(nl, A, bias, n_samples));
  }
  return curve;
}

/// Points sigma / N(A) along the curve, in A order.
inline std::vector<std::pair<double, cplx>> critical_locus(const DFCurve& curve, int sign) {
  if (sign != 1 && sign != -1) throw DomainError("sign must be +1 or -1");
  std::vector<std::pair<double, cplx>> out;
  out.reserve(curve.samples.size());
  for (const auto& s : curve.samples) {
    if (s.N == cplx(0.0, 0.0))
      throw SingularityError("describing function vanishes at A = " + std::to_string(s.A));
    out.emplace_back(s.A, static_cast<double>(sign) / s.N);
  }
  return out;
}

/// Truncated Taylor-series describing function for the tanh family.
struct TaylorDF {
  double value = 0.0;
  double term_ratio = 0.0;  // |last included term / the one before it|
  bool inaccurate = false;  // term_ratio > 0.3
};

/// Series coefficients c0, c2, c4 of N(A) = c0 + c2 A^2 + c4 A^4 + o(A^4).
inline std::array<double, 3> taylor_coefficients(const Nonlinearity& nl) {
  const double s = nl.scale();
  switch (nl.kind()) {
    case NlKind::tanh_resistor: {
      const double r = nl.param("R_max"), v = nl.param("V_max");
      return {-s * r, s * std::pow(r, 3) / (4.0 * v * v), -s * std::pow(r, 5) / (12.0 * std::pow(v, 4))};
    }
    case NlKind::tanh_inverter: {
      const double ah = nl.param("A_hat"), k = nl.param("k");
      return {-s * ah * k, s * ah * std::pow(k, 3) / 4.0, -s * ah * std::pow(k, 5) / 12.0};
    }
    case NlKind::tanh_relaxation: {
      const double k1 = nl.param("k1"), k2 = nl.param("k2"), k3 = nl.param("k3");
      return {s * (-k1 + k2 * k3), -s * k2 * std::pow(k3, 3) / 4.0, s * k2 * std::pow(k3, 5) / 12.0};
    }
    default:
      throw UnsupportedError("Taylor describing function is only defined for the tanh family, not " +
                             std::string(to_string(nl.kind())));
  }
}

inline TaylorDF df_taylor(const Nonlinearity& nl, double A, int order) {
  if (order != 2 && order != 4) throw DomainError("Taylor order must be 2 or 4");
  const auto c = taylor_coefficients(nl);
  const std::array<double, 3> terms{c[0], c[1] * A * A, c[2] * A * A * A * A};
  const std::size_t last = order == 2 ? 1 : 2;
  TaylorDF out;
  for (std::size_t i = 0; i <= last; ++i) out.value += terms[i];
  const double prev = std::abs(terms[last - 1]);
  out.term_ratio = prev > 0.0 ? std::abs(terms[last]) / prev
                              : (terms[last] == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
  out.inaccurate = out.term_ratio > 0.3;
  return out;
}

/// Positive amplitudes where the truncated series equals `target`, sorted.
/// Empty when the truncated polynomial never reaches the target.
inline std::vector<double> taylor_amplitudes(const Nonlinearity& nl, double target, int order) {
  if (order != 2 && order != 4) throw DomainError("Taylor order must be 2 or 4");
  const auto c = taylor_coefficients(nl);
  // Polynomial in u = A^2.
  std::vector<double> us;
  if (order == 2 || c[2] == 0.0) {
    if (c[1] != 0.0) us.push_back((target - c[0]) / c[1]);
  } else {
    const double qa = c[2], qb = c[1], qc = c[0] - target;
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      const double q = -0.5 * (qb + std::copysign(sq, qb));
      if (q != 0.0) us.push_back(qc / q);
      us.push_back(q / qa);
    }
  }
  std::vector<double> out;
  for (double u : us)
    if (u > 0.0 && std::isfinite(u)) out.push_back(std::sqrt(u));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace dfosc
