#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dfosc/dfcore.hpp"
#include "dfosc/error.hpp"
#include "dfosc/linblock.hpp"
#include "dfosc/nonlin.hpp"

namespace dfosc {

/// How the DC offset B at the nonlinearity input is chosen.
///   off             - fixed, LoopSpec::bias (default 0)
///   dc_balance      - solved from B = sigma G(0) a0(A, B)
///   track_amplitude - B = A, i.e. the input sinusoid bottoms out at zero
enum class BiasMode { off, dc_balance, track_amplitude };

inline std::string_view to_string(BiasMode m) {
  switch (m) {
    case BiasMode::off: return "off";
    case BiasMode::dc_balance: return "dc_balance";
    case BiasMode::track_amplitude: return "track_amplitude";
  }
  return "off";
}

inline BiasMode parse_bias_mode(std::string_view s) {
  if (s == "off") return BiasMode::off;
  if (s == "dc_balance") return BiasMode::dc_balance;
  if (s == "track_amplitude") return BiasMode::track_amplitude;
  throw ConfigError("bias_mode", "expected off, dc_balance or track_amplitude");
}

/// A named point of the loop whose amplitude is reported. The signal there
/// is `transfer` applied either to the nonlinearity input or to its output.
struct ProbeNode {
  LinearBlock transfer;
  bool after_nonlinearity = false;
  friend bool operator==(const ProbeNode&, const ProbeNode&) = default;
};

/// Feedback loop of a linear block G and a nonlinearity f. Harmonic balance
/// requires G(jw) N(A) = sign: sign = -1 for the negative-feedback
/// arrangement, +1 when the loop closes without inversion.
struct LoopSpec {
  LinearBlock linear;
  Nonlinearity nl;
  int sign = -1;
  BiasMode bias_mode = BiasMode::off;
  double bias = 0.0;
  std::map<std::string, ProbeNode, std::less<>> nodes{};

  friend bool operator==(const LoopSpec&, const LoopSpec&) = default;
};

enum class Stability { stable, unstable, marginal_undetermined };

inline std::string_view to_string(Stability s) {
  switch (s) {
    case Stability::stable: return "stable";
    case Stability::unstable: return "unstable";
    case Stability::marginal_undetermined: return "marginal-undetermined";
  }
  return "marginal-undetermined";
}

struct PredictedOscillation {
  double A_star = 0.0;
  double omega_star = 0.0;  // |omega|
  double omega_signed = 0.0;
  double period = 0.0;
  double residual = 0.0;
  Stability stability = Stability::marginal_undetermined;
  std::optional<double> bias;
  cplx N{};
  cplx G{};
  bool negative_branch = false;
  bool at_pole = false;  // G unbounded at omega*, balance reached through N(A*) = 0

  double frequency_hz() const { return omega_star / (2.0 * std::numbers::pi); }
};

struct SolveOptions {
  double A_min = 1e-3;
  double A_max = 1e3;
  double omega_min = 1e-3;
  double omega_max = 1e6;
  int grid_A = 200;
  int grid_omega = 200;
  double tol = 1e-9;
  int df_samples = kDefaultDfSamples;
  int crossing_grid = 4000;
  // Range of B scanned in dc_balance mode.
  double bias_min = -100.0;
  double bias_max = 100.0;
  int grid_bias = 100;
};

namespace detail {

inline void check_spec(const LoopSpec& spec) {
  if (spec.sign != 1 && spec.sign != -1) throw ConfigError("sign", "must be +1 or -1");
  if (spec.bias_mode == BiasMode::dc_balance && spec.nl.has_memory())
    throw ConfigError("bias_mode", "dc_balance is not supported for the hysteresis relay");
}

inline void check_options(const SolveOptions& o) {
  if (!(o.A_min > 0.0) || !(o.A_max > o.A_min) || !std::isfinite(o.A_max))
    throw ConfigError("A_range", "need 0 < A_min < A_max");
  if (!(o.omega_min > 0.0) || !(o.omega_max > o.omega_min) || !std::isfinite(o.omega_max))
    throw ConfigError("omega_range", "need 0 < omega_min < omega_max");
  if (o.grid_A < 2 || o.grid_omega < 2) throw ConfigError("grid", "need at least 2 points per axis");
  if (!(o.tol > 0.0)) throw ConfigError("tol", "must be > 0");
}

inline double bias_for(const LoopSpec& spec, double A, double dc_bias) {
  switch (spec.bias_mode) {
    case BiasMode::off: return spec.bias;
    case BiasMode::track_amplitude: return A;
    case BiasMode::dc_balance: return dc_bias;
  }
  return spec.bias;
}

// Frequency branch of the loop equation. The negative branch only exists
// as a separate equation for fixed-phasor delays; there G(-j|w|) equals
// conj(Gm(j|w|)) with Gm the same rational part and delay 1 - rho.
struct Branch {
  LinearBlock block;  // evaluated at +|w|
  bool negative = false;

  cplx response(double w_abs) const {
    const cplx v = eval_response(block, w_abs);
    return negative ? std::conj(v) : v;
  }

  // sigma / G at +|w|, finite at poles of G. Infinite at zeros of G.
  cplx critical(double w_abs, int sign) const {
    const cplx s(0.0, w_abs);
    const cplx num = polyval(block.num(), s) * block.delay_factor(w_abs);
    const cplx den = polyval(block.den(), s);
    if (num == cplx(0.0)) return {std::numeric_limits<double>::infinity(), 0.0};
    cplx v = den / num;
    if (negative) v = std::conj(v);
    return static_cast<double>(sign) * v;
  }
};

inline std::vector<Branch> branches(const LinearBlock& g) {
  std::vector<Branch> out{{g, false}};
  if (g.has_delay() && g.convention() == DelayConvention::fixed_phasor) {
    LinearBlock mirrored(g.num(), g.den(), 1.0 - g.rho(), DelayConvention::conjugate_symmetric);
    out.push_back({mirrored, true});
  }
  return out;
}

struct NewtonResult {
  std::array<double, 2> x{};
  double norm = std::numeric_limits<double>::infinity();
  bool ok = false;
};

// Damped Newton for two equations in two unknowns with a finite-difference
// Jacobian. Step halving up to 20 times whenever the residual grows.
template <class F>
NewtonResult newton2(F&& f, std::array<double, 2> x, std::array<double, 2> fd_step,
                     double target, int max_iter = 80) {
  NewtonResult res;
  auto norm = [](const std::array<double, 2>& r) { return std::hypot(r[0], r[1]); };
  std::array<double, 2> r;
  try {
    r = f(x);
  } catch (const Error&) {
    return res;
  }
  double nr = norm(r);
  for (int it = 0; it < max_iter && nr > target; ++it) {
    double J[2][2];
    try {
      for (int j = 0; j < 2; ++j) {
        auto xp = x, xm = x;
        xp[j] += fd_step[j];
        xm[j] -= fd_step[j];
        const auto rp = f(xp), rm = f(xm);
        J[0][j] = (rp[0] - rm[0]) / (2.0 * fd_step[j]);
        J[1][j] = (rp[1] - rm[1]) / (2.0 * fd_step[j]);
      }
    } catch (const Error&) {
      break;
    }
    const double det = J[0][0] * J[1][1] - J[0][1] * J[1][0];
    if (det == 0.0 || !std::isfinite(det)) break;
    const std::array<double, 2> dx{(J[1][1] * r[0] - J[0][1] * r[1]) / det,
                                   (-J[1][0] * r[0] + J[0][0] * r[1]) / det};
    double lambda = 1.0;
    bool improved = false;
    for (int halving = 0; halving <= 20; ++halving, lambda *= 0.5) {
      const std::array<double, 2> xn{x[0] - lambda * dx[0], x[1] - lambda * dx[1]};
      try {
        const auto rn = f(xn);
        const double nn = norm(rn);
        if (std::isfinite(nn) && nn < nr) {
          x = xn;
          r = rn;
          nr = nn;
          improved = true;
          break;
        }
      } catch (const Error&) {
      }
    }
    if (!improved) break;
  }
  res.x = x;
  res.norm = nr;
  res.ok = std::isfinite(nr);
  return res;
}

// Both components of each corner value take both signs.
inline bool sign_structure(const std::array<cplx, 4>& corners) {
  bool re_pos = false, re_neg = false, im_pos = false, im_neg = false;
  for (const auto& c : corners) {
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) return false;
    (c.real() >= 0.0 ? re_pos : re_neg) = true;
    (c.imag() >= 0.0 ? im_pos : im_neg) = true;
  }
  return re_pos && re_neg && im_pos && im_neg;
}

}  // namespace detail

/// DF sample for the loop at amplitude A, honoring the bias mode. In
/// dc_balance mode `dc_bias` is the offset to use.
inline DFSample loop_df(const LoopSpec& spec, double A, double dc_bias = 0.0,
                        int n_samples = kDefaultDfSamples) {
  return df_eval(spec.nl, A, detail::bias_for(spec, A, dc_bias), n_samples);
}

/// |G(jw) N(A) - sign| for a signed frequency w.
inline double loop_residual(const LoopSpec& spec, double A, double w, double dc_bias = 0.0,
                            int n_samples = kDefaultDfSamples) {
  const cplx n = loop_df(spec, A, dc_bias, n_samples).N;
  return std::abs(eval_response(spec.linear, w) * n - static_cast<double>(spec.sign));
}

/// Closed-loop instability count at a frozen describing-function value.
///
/// Counts clockwise encirclements of the critical point c = sign / N by the
/// Nyquist locus of G (both frequency signs, imaginary-axis poles indented
/// to the right) and adds the open-loop right-half-plane poles. A zero
/// result means the linearized loop is stable at that amplitude. A
/// period-fraction delay is applied as a true time delay rho * delay_period.
inline int unstable_closed_loop_poles(const LinearBlock& g, cplx c, double delay_rho = 0.0,
                                      double delay_period = 0.0) {
  const double tau_d = delay_rho * delay_period;
  auto G = [&](cplx s) { return g.rational(s) * std::exp(-s * tau_d); };

  const auto poles = poly_roots(g.den());
  double pole_scale = 1.0;
  for (const auto& p : poles) pole_scale = std::max(pole_scale, std::abs(p));
  for (const auto& z : poly_roots(g.num())) pole_scale = std::max(pole_scale, std::abs(z));
  if (delay_period > 0.0) pole_scale = std::max(pole_scale, 2.0 * std::numbers::pi / delay_period);

  int rhp = 0;
  std::vector<double> axis;
  for (const auto& p : poles) {
    if (std::abs(p.real()) <= 1e-9 * std::max(1.0, std::abs(p))) axis.push_back(p.imag());
    else if (p.real() > 0.0) ++rhp;
  }
  std::sort(axis.begin(), axis.end());

  // Limit of G along the imaginary axis; the big right-half arc maps there.
  cplx g_inf = 0.0;
  if (g.relative_degree() == 0 && tau_d == 0.0)
    g_inf = g.num()[g.den().size() - 1] / g.den().back();
  const double far_gap = std::abs(c - g_inf);
  if (far_gap == 0.0) throw SingularityError("critical point coincides with G at infinity");

  double w_max = 1e3 * pole_scale;
  for (int k = 0; k < 40; ++k) {
    const double e1 = std::abs(G(cplx(0.0, w_max)) - g_inf);
    const double e2 = std::abs(G(cplx(0.0, -w_max)) - g_inf);
    if (std::max(e1, e2) <= 1e-4 * far_gap) break;
    w_max *= 10.0;
  }

  // Contour pieces: axis segments between indentations, and right-side
  // semicircles around each imaginary-axis pole.
  struct Piece {
    bool arc;
    double a, b;  // axis: omega range; arc: angle range
    double center = 0.0, radius = 0.0;
  };
  std::vector<Piece> pieces;
  double cursor = -w_max;
  for (double wp : axis) {
    double eps = 1e-6 * std::max(1.0, std::abs(wp));
    for (int k = 0; k < 80; ++k) {
      const double m = std::abs(G(cplx(eps, wp)));
      if (m > 1e3 * (std::abs(c) + 1.0)) break;
      eps *= 0.5;
    }
    pieces.push_back({false, cursor, wp - eps});
    pieces.push_back({true, -std::numbers::pi / 2.0, std::numbers::pi / 2.0, wp, eps});
    cursor = wp + eps;
  }
  pieces.push_back({false, cursor, w_max});

  auto point = [&](const Piece& p, double t) {
    return p.arc ? cplx(0.0, p.center) + std::polar(p.radius, t) : cplx(0.0, t);
  };
  auto F = [&](const Piece& p, double t) { return G(point(p, t)) - c; };

  // Accumulated argument with adaptive subdivision.
  std::function<double(const Piece&, double, cplx, double, cplx, int)> sweep =
      [&](const Piece& p, double t0, cplx f0, double t1, cplx f1, int depth) -> double {
    const double d = std::arg(f1 / f0);
    if (std::abs(d) < 0.2 || depth > 40) return d;
    const double tm = 0.5 * (t0 + t1);
    const cplx fm = F(p, tm);
    return sweep(p, t0, f0, tm, fm, depth + 1) + sweep(p, tm, fm, t1, f1, depth + 1);
  };

  const double w_ref = pole_scale;
  double total = 0.0;
  std::optional<cplx> last;
  for (const auto& p : pieces) {
    if (!(p.b > p.a)) continue;
    std::vector<double> ts;
    constexpr int n0 = 400;
    if (p.arc) {
      for (int i = 0; i <= 64; ++i) ts.push_back(p.a + (p.b - p.a) * i / 64.0);
    } else {
      const double ua = std::asinh(p.a / w_ref), ub = std::asinh(p.b / w_ref);
      for (int i = 0; i <= n0; ++i) ts.push_back(w_ref * std::sinh(ua + (ub - ua) * i / n0));
      ts.front() = p.a;
      ts.back() = p.b;
    }
    cplx prev = F(p, ts.front());
    if (last) total += std::arg(prev / *last);
    for (std::size_t i = 1; i < ts.size(); ++i) {
      const cplx cur = F(p, ts[i]);
      total += sweep(p, ts[i - 1], prev, ts[i], cur, 0);
      prev = cur;
    }
    last = prev;
  }
  // Close through the big arc from +j w_max back to -j w_max.
  const cplx start = F(pieces.front(), pieces.front().a);
  total += std::arg(start / *last);

  const int ccw = static_cast<int>(std::lround(total / (2.0 * std::numbers::pi)));
  return rhp - ccw;
}

namespace detail {

// Delay used by the stability analysis for an intersection on a branch.
inline double analysis_rho(const LinearBlock& g, bool negative_branch) {
  if (!g.has_delay()) return 0.0;
  return negative_branch ? 1.0 - g.rho() : g.rho();
}

inline std::optional<double> solve_dc_bias(const LoopSpec& spec, double A, double guess,
                                           int n_samples) {
  const double g0 = eval_response(spec.linear, 0.0).real();
  double b = guess;
  for (int it = 0; it < 60; ++it) {
    const double h = 1e-7 * std::max(1.0, std::abs(b));
    auto r = [&](double bb) {
      return spec.sign * g0 * df_eval(spec.nl, A, bb, n_samples).a0 - bb;
    };
    const double rb = r(b);
    if (std::abs(rb) <= 1e-12 * std::max(1.0, std::abs(b))) return b;
    const double d = (r(b + h) - r(b - h)) / (2.0 * h);
    if (d == 0.0 || !std::isfinite(d)) return std::nullopt;
    b -= rb / d;
    if (!std::isfinite(b)) return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace detail

/// Stability of a predicted limit cycle from the perturbation argument:
/// stable when a slightly larger amplitude gives a stable closed loop and a
/// slightly smaller one an unstable closed loop; unstable for the reverse.
inline Stability classify(const LoopSpec& spec, const PredictedOscillation& osc,
                          double tol = 1e-9, int n_samples = kDefaultDfSamples) {
  if (!(osc.residual <= tol)) return Stability::marginal_undetermined;
  if (osc.negative_branch && spec.nl.has_memory()) return Stability::marginal_undetermined;
  constexpr double eps = 1e-3;
  const double rho = detail::analysis_rho(spec.linear, osc.negative_branch);
  const LinearBlock rational(spec.linear.num(), spec.linear.den());

  auto count = [&](double A) -> std::optional<int> {
    try {
      double b = osc.bias.value_or(0.0);
      if (spec.bias_mode == BiasMode::dc_balance) {
        auto solved = detail::solve_dc_bias(spec, A, b, n_samples);
        if (!solved) return std::nullopt;
        b = *solved;
      }
      const cplx n = loop_df(spec, A, b, n_samples).N;
      if (n == cplx(0.0)) return std::nullopt;
      return unstable_closed_loop_poles(rational, static_cast<double>(spec.sign) / n, rho,
                                        osc.period);
    } catch (const Error&) {
      return std::nullopt;
    }
  };
  // A below the DF domain (e.g. A < h for the hysteresis relay).
  if (spec.nl.kind() == NlKind::relay_hysteresis && osc.A_star * (1.0 - eps) < spec.nl.param("h"))
    return Stability::marginal_undetermined;
  const auto up = count(osc.A_star * (1.0 + eps));
  const auto down = count(osc.A_star * (1.0 - eps));
  if (!up || !down) return Stability::marginal_undetermined;
  if (*up == 0 && *down > 0) return Stability::stable;
  if (*up > 0 && *down == 0) return Stability::unstable;
  return Stability::marginal_undetermined;
}

/// All intersections of the Nyquist locus of G with the critical locus
/// sign / N(A), polished to |G N - sign| <= tol and classified.
///
/// Real describing functions (every memoryless map) take the frequency from
/// the real-axis crossings of G and then solve for A in one dimension.
/// Complex ones (hysteresis) are bracketed on a log A x log w grid. Every
/// candidate is polished by damped Newton on (log A, log w).
inline std::vector<PredictedOscillation> solve_loop(const LoopSpec& spec,
                                                    const SolveOptions& opt = {},
                                                    std::vector<std::string>* diagnostics = nullptr) {
  detail::check_spec(spec);
  detail::check_options(opt);
  const int ns = opt.df_samples;
  const double sigma = static_cast<double>(spec.sign);
  auto note = [&](const std::string& msg) {
    if (diagnostics) diagnostics->push_back(msg);
  };

  struct Candidate {
    double A, w_abs, bias;
    std::size_t branch;
  };
  std::vector<Candidate> candidates;
  const auto brs = detail::branches(spec.linear);
  const bool complex_df = spec.nl.has_memory();

  const int nA = opt.grid_A;
  std::vector<double> As(static_cast<std::size_t>(nA));
  for (int i = 0; i < nA; ++i)
    As[static_cast<std::size_t>(i)] =
        opt.A_min * std::pow(opt.A_max / opt.A_min, static_cast<double>(i) / (nA - 1));
  As.back() = opt.A_max;

  auto safe_df = [&](double A, double b) -> std::optional<DFSample> {
    try {
      return loop_df(spec, A, b, ns);
    } catch (const Error&) {
      return std::nullopt;
    }
  };

  for (std::size_t bi = 0; bi < brs.size(); ++bi) {
    const auto& br = brs[bi];
    if (!complex_df) {
      const auto crossings =
          real_axis_crossings(br.block, opt.omega_min, opt.omega_max, opt.crossing_grid);
      for (const auto& cr : crossings) {
        const cplx crit = br.critical(cr.omega, spec.sign);
        if (!std::isfinite(crit.real())) continue;
        const double c = crit.real();
        if (spec.bias_mode == BiasMode::dc_balance) {
          const double g0 = eval_response(spec.linear, 0.0).real();
          const int nB = std::max(opt.grid_bias, 2);
          std::vector<std::vector<std::array<double, 2>>> grid(As.size());
          for (std::size_t i = 0; i < As.size(); ++i) {
            grid[i].resize(static_cast<std::size_t>(nB));
            for (int j = 0; j < nB; ++j) {
              const double b = opt.bias_min + (opt.bias_max - opt.bias_min) * j / (nB - 1);
              const auto s = safe_df(As[i], b);
              grid[i][static_cast<std::size_t>(j)] =
                  s ? std::array<double, 2>{s->N.real() - c, sigma * g0 * s->a0 - b}
                    : std::array<double, 2>{std::nan(""), std::nan("")};
            }
          }
          for (std::size_t i = 0; i + 1 < As.size(); ++i)
            for (int j = 0; j + 1 < nB; ++j) {
              std::array<cplx, 4> corners;
              int k = 0;
              for (int di = 0; di < 2; ++di)
                for (int dj = 0; dj < 2; ++dj) {
                  const auto& v = grid[i + static_cast<std::size_t>(di)][static_cast<std::size_t>(j + dj)];
                  corners[static_cast<std::size_t>(k++)] = cplx(v[0], v[1]);
                }
              if (!detail::sign_structure(corners)) continue;
              const double b = opt.bias_min + (opt.bias_max - opt.bias_min) * (j + 0.5) / (nB - 1);
              // Polish (A, B) at the fixed crossing frequency.
              auto f = [&](const std::array<double, 2>& x) {
                const auto s = loop_df(spec, std::exp(x[0]), x[1], ns);
                return std::array<double, 2>{s.N.real() - c, sigma * g0 * s.a0 - x[1]};
              };
              const double la = 0.5 * (std::log(As[i]) + std::log(As[i + 1]));
              const auto nr = detail::newton2(f, {la, b}, {1e-7, 1e-7 * std::max(1.0, std::abs(b))},
                                              1e-14);
              if (!nr.ok || nr.norm > opt.tol) {
                note("dc_balance candidate near A = " + std::to_string(std::exp(la)) +
                     " did not converge");
                continue;
              }
              candidates.push_back({std::exp(nr.x[0]), cr.omega, nr.x[1], bi});
            }
          continue;
        }
        // One-dimensional scan of Re N(A) - c.
        std::vector<double> phi(As.size(), std::nan(""));
        for (std::size_t i = 0; i < As.size(); ++i)
          if (auto s = safe_df(As[i], 0.0)) phi[i] = s->N.real() - c;
        for (std::size_t i = 0; i + 1 < As.size(); ++i) {
          if (!std::isfinite(phi[i]) || !std::isfinite(phi[i + 1])) continue;
          if (phi[i] == 0.0) {
            candidates.push_back({As[i], cr.omega, 0.0, bi});
            continue;
          }
          if ((phi[i] < 0.0) == (phi[i + 1] < 0.0) || phi[i + 1] == 0.0) continue;
          double lo = std::log(As[i]), hi = std::log(As[i + 1]), flo = phi[i];
          for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
            const double mid = 0.5 * (lo + hi);
            const auto s = safe_df(std::exp(mid), 0.0);
            if (!s) break;
            const double fm = s->N.real() - c;
            if (fm == 0.0) {
              lo = hi = mid;
              break;
            }
            if ((fm < 0.0) == (flo < 0.0)) {
              lo = mid;
              flo = fm;
            } else {
              hi = mid;
            }
          }
          candidates.push_back({std::exp(0.5 * (lo + hi)), cr.omega, 0.0, bi});
        }
        if (std::isfinite(phi.back()) && phi.back() == 0.0)
          candidates.push_back({As.back(), cr.omega, 0.0, bi});
      }
    } else {
      // Two-dimensional scan of N(A) - sigma / G(jw).
      const int nw = opt.grid_omega;
      std::vector<double> ws(static_cast<std::size_t>(nw));
      for (int j = 0; j < nw; ++j)
        ws[static_cast<std::size_t>(j)] =
            opt.omega_min * std::pow(opt.omega_max / opt.omega_min, static_cast<double>(j) / (nw - 1));
      std::vector<cplx> Ns(As.size(), cplx(std::nan(""), std::nan("")));
      for (std::size_t i = 0; i < As.size(); ++i)
        if (auto s = safe_df(As[i], 0.0)) Ns[i] = s->N;
      std::vector<cplx> crit(ws.size());
      for (std::size_t j = 0; j < ws.size(); ++j) crit[j] = br.critical(ws[j], spec.sign);
      for (std::size_t i = 0; i + 1 < As.size(); ++i)
        for (std::size_t j = 0; j + 1 < ws.size(); ++j) {
          const std::array<cplx, 4> corners{Ns[i] - crit[j], Ns[i + 1] - crit[j],
                                            Ns[i] - crit[j + 1], Ns[i + 1] - crit[j + 1]};
          if (!detail::sign_structure(corners)) continue;
          candidates.push_back({std::sqrt(As[i] * As[i + 1]), std::sqrt(ws[j] * ws[j + 1]), 0.0, bi});
        }
    }
  }

  // Polish every candidate on (log A, log |w|).
  std::vector<PredictedOscillation> out;
  for (const auto& cand : candidates) {
    const auto& br = brs[cand.branch];
    const double b_fixed = cand.bias;
    auto f = [&](const std::array<double, 2>& x) {
      const double A = std::exp(x[0]), w = std::exp(x[1]);
      const cplx n = loop_df(spec, A, b_fixed, ns).N;
      const cplx r = n - br.critical(w, spec.sign);
      return std::array<double, 2>{r.real(), r.imag()};
    };
    const auto nr = detail::newton2(f, {std::log(cand.A), std::log(cand.w_abs)}, {1e-7, 1e-7}, 1e-15);
    if (!nr.ok) {
      note("candidate near A = " + std::to_string(cand.A) + ", w = " + std::to_string(cand.w_abs) +
           " dropped: Newton failed");
      continue;
    }
    PredictedOscillation osc;
    osc.A_star = std::exp(nr.x[0]);
    osc.omega_star = std::exp(nr.x[1]);
    osc.omega_signed = br.negative ? -osc.omega_star : osc.omega_star;
    osc.period = 2.0 * std::numbers::pi / osc.omega_star;
    osc.negative_branch = br.negative;
    if (spec.bias_mode != BiasMode::off || spec.bias != 0.0)
      osc.bias = detail::bias_for(spec, osc.A_star, b_fixed);
    if (osc.A_star < opt.A_min * (1 - 1e-9) || osc.A_star > opt.A_max * (1 + 1e-9) ||
        osc.omega_star < opt.omega_min * (1 - 1e-9) || osc.omega_star > opt.omega_max * (1 + 1e-9)) {
      note("candidate converged outside the search ranges and was dropped");
      continue;
    }
    try {
      osc.N = loop_df(spec, osc.A_star, b_fixed, ns).N;
      const cplx s(0.0, osc.omega_star);
      const double den_mag = std::abs(polyval(spec.linear.den(), s));
      if (den_mag <= 1e-9 * polyscale(spec.linear.den(), osc.omega_star)) {
        osc.at_pole = true;
        osc.G = {std::numeric_limits<double>::infinity(), 0.0};
        osc.residual = std::abs(osc.N - br.critical(osc.omega_star, spec.sign));
      } else {
        osc.G = br.response(osc.omega_star);
        osc.residual = std::abs(osc.G * osc.N - sigma);
      }
    } catch (const Error& e) {
      note(std::string("candidate dropped: ") + e.what());
      continue;
    }
    if (!(osc.residual <= opt.tol)) {
      note("candidate near A = " + std::to_string(osc.A_star) + " stalled at residual " +
           std::to_string(osc.residual));
      continue;
    }
    const bool dup = std::any_of(out.begin(), out.end(), [&](const PredictedOscillation& o) {
      return std::abs(o.A_star - osc.A_star) <= 1e-6 * o.A_star &&
             std::abs(o.omega_signed - osc.omega_signed) <= 1e-6 * o.omega_star;
    });
    if (dup) continue;
    out.push_back(osc);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.omega_star != b.omega_star ? a.omega_star < b.omega_star : a.A_star < b.A_star;
  });
  for (auto& o : out) o.stability = classify(spec, o, opt.tol, ns);
  return out;
}

struct ExistenceMargin {
  bool oscillates = false;
  /// Distance between the critical locus and the Nyquist locus when they
  /// are apart; when they intersect, minus the deepest penetration of the
  /// critical locus into the encircled region.
  double margin = 0.0;
  std::vector<PredictedOscillation> intersections;
};

namespace detail {

inline double point_segment_distance(cplx p, cplx a, cplx b) {
  const cplx ab = b - a;
  const double len2 = std::norm(ab);
  if (len2 == 0.0) return std::abs(p - a);
  const double t = std::clamp(((p - a) * std::conj(ab)).real() / len2, 0.0, 1.0);
  return std::abs(p - (a + t * ab));
}

}  // namespace detail

inline ExistenceMargin existence_margin(const LoopSpec& spec, const SolveOptions& opt = {}) {
  ExistenceMargin em;
  em.intersections = solve_loop(spec, opt);
  em.oscillates = !em.intersections.empty();

  // Each sweep is the locus of one branch (or its mirror) on the log grid.
  // The polyline finds the nearest stretch; a golden-section search on the
  // true curve then removes the chord error.
  struct Sweep {
    std::function<cplx(double)> at;
    std::vector<double> lw;
    std::vector<cplx> pts;
  };
  const auto grid = FrequencyGrid::log(opt.omega_min, opt.omega_max, std::max(opt.grid_omega * 10, 200));
  std::vector<Sweep> sweeps;
  for (const auto& br : detail::branches(spec.linear)) {
    for (bool mirror : {false, true}) {
      // Mirror half of the locus; the conjugate-symmetric reading covers w < 0.
      if (mirror && br.negative) continue;
      Sweep sw;
      sw.at = [br, mirror](double w) { return mirror ? std::conj(br.response(w)) : br.response(w); };
      for (double w : grid.values()) {
        try {
          sw.pts.push_back(sw.at(w));
          sw.lw.push_back(std::log(w));
        } catch (const SingularityError&) {
          if (sw.pts.size() > 1) sweeps.push_back(sw);
          sw.pts.clear(), sw.lw.clear();
        }
      }
      if (sw.pts.size() > 1) sweeps.push_back(std::move(sw));
    }
  }
  auto distance = [&](cplx p) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& sw : sweeps) {
      std::size_t kb = 0;
      double db = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k + 1 < sw.pts.size(); ++k) {
        const double d = detail::point_segment_distance(p, sw.pts[k], sw.pts[k + 1]);
        if (d < db) db = d, kb = k;
      }
      double a = sw.lw[kb > 0 ? kb - 1 : 0], b = sw.lw[std::min(kb + 2, sw.lw.size() - 1)];
      auto f = [&](double lw) {
        try {
          return std::abs(p - sw.at(std::exp(lw)));
        } catch (const SingularityError&) {
          return std::numeric_limits<double>::infinity();
        }
      };
      const double g = 0.5 * (std::sqrt(5.0) - 1.0);
      double x1 = b - g * (b - a), x2 = a + g * (b - a), f1 = f(x1), f2 = f(x2);
      for (int it = 0; it < 100 && b - a > 1e-13; ++it) {
        if (f1 < f2) b = x2, x2 = x1, f2 = f1, x1 = b - g * (b - a), f1 = f(x1);
        else a = x1, x1 = x2, f1 = f2, x2 = a + g * (b - a), f2 = f(x2);
      }
      const double refined = std::min(f1, f2);
      best = std::min(best, std::isfinite(refined) ? refined : db);
    }
    return best;
  };

  std::vector<std::pair<double, cplx>> locus;
  const int nA = std::max(opt.grid_A, 2) * 5;
  std::vector<double> amplitudes;
  for (int i = 0; i < nA; ++i)
    amplitudes.push_back(opt.A_min * std::pow(opt.A_max / opt.A_min, static_cast<double>(i) / (nA - 1)));
  // The hysteresis locus starts at A = h; include the endpoint exactly.
  if (spec.nl.kind() == NlKind::relay_hysteresis) {
    const double h = spec.nl.param("h");
    if (h >= opt.A_min && h <= opt.A_max) amplitudes.push_back(h);
  }
  for (double A : amplitudes) {
    try {
      double b = 0.0;
      if (spec.bias_mode == BiasMode::dc_balance) {
        auto solved = detail::solve_dc_bias(spec, A, 0.0, opt.df_samples);
        if (!solved) continue;
        b = *solved;
      }
      const cplx n = loop_df(spec, A, b, opt.df_samples).N;
      if (n == cplx(0.0)) continue;
      locus.emplace_back(A, static_cast<double>(spec.sign) / n);
    } catch (const Error&) {
    }
  }

  if (!em.oscillates) {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& [A, c] : locus) d = std::min(d, distance(c));
    em.margin = d;
    return em;
  }
  const auto& first = em.intersections.front();
  const double rho = detail::analysis_rho(spec.linear, first.negative_branch);
  const LinearBlock rational(spec.linear.num(), spec.linear.den());
  double depth = 0.0;
  for (const auto& [A, c] : locus) {
    try {
      if (unstable_closed_loop_poles(rational, c, rho, first.period) > 0) depth = std::max(depth, distance(c));
    } catch (const Error&) {
    }
  }
  em.margin = -depth;
  return em;
}

/// Amplitude and offset predicted at one probe node.
struct NodePrediction {
  std::string node;
  double amplitude = 0.0;
  double offset = 0.0;
};

struct PredictionReport {
  PredictedOscillation osc;
  std::vector<NodePrediction> nodes;
};

/// Every loop exposes nl_in, nl_out and linear_out in addition to its own
/// named nodes.
inline std::map<std::string, ProbeNode, std::less<>> all_nodes(const LoopSpec& spec) {
  auto nodes = spec.nodes;
  nodes.emplace("nl_in", ProbeNode{LinearBlock(), false});
  nodes.emplace("nl_out", ProbeNode{LinearBlock(), true});
  nodes.emplace("linear_out", ProbeNode{spec.linear, true});
  return nodes;
}

/// Propagate A* to the requested nodes: amplitude = A* |H(jw*)| for nodes
/// fed by the nonlinearity input, A* |N(A*) H(jw*)| for nodes fed by its
/// output. Offsets propagate B* and a0 through H(0).
inline PredictionReport report(const LoopSpec& spec, const PredictedOscillation& osc,
                               const std::vector<std::string>& probe_nodes,
                               int n_samples = kDefaultDfSamples) {
  const auto nodes = all_nodes(spec);
  PredictionReport rep{osc, {}};
  const double b = osc.bias.value_or(spec.bias_mode == BiasMode::off ? spec.bias : 0.0);
  const DFSample s = df_eval(spec.nl, osc.A_star, b, n_samples);
  for (const auto& name : probe_nodes) {
    auto it = nodes.find(name);
    if (it == nodes.end()) throw ConfigError("probe", "unknown node '" + name + "'");
    const auto& node = it->second;
    cplx h;
    if (osc.at_pole && node.transfer == spec.linear) {
      // G N is pinned to sign even though both factors degenerate.
      h = 1.0 / s.N;
    } else {
      h = eval_response(node.transfer, osc.omega_signed);
    }
    const double dc = eval_response(node.transfer, 0.0).real();
    NodePrediction np{name, 0.0, 0.0};
    if (node.after_nonlinearity) {
      np.amplitude = osc.A_star * std::abs(s.N * h);
      np.offset = s.a0 * dc;
    } else {
      np.amplitude = osc.A_star * std::abs(h);
      np.offset = b * dc;
    }
    rep.nodes.push_back(np);
  }
  return rep;
}

}  // namespace dfosc
