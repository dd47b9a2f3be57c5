// Acceptance run: one PASS/FAIL line per criterion with the measured values.
// Exit status is nonzero when any criterion fails.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "dfosc/cli.hpp"
#include "dfosc/dfosc.hpp"

using namespace dfosc;
using std::numbers::pi;
namespace fs = std::filesystem;

namespace {

// Tolerances, fixed here so every threshold is visible in one place.
constexpr double kTable1Rel = 1e-6;
constexpr double kSaturationB1 = 1e-10;
constexpr double kRingRelayA = 1e-4;
constexpr double kRingRelayT = 0.005;
constexpr double kRingSim = 0.02;
constexpr double kRingGapLo = 0.25, kRingGapHi = 0.26;
constexpr double kTanhA = 0.02, kTanhT = 0.01, kTanhSimA = 0.02, kTanhSimT = 0.06;
constexpr double kTaylorTarget = 2.0 / 3.0, kTaylorTol = 0.05;
constexpr double kRelaxOmega = 0.1, kRelaxA = 0.05, kRelaxF = 1.0, kRelaxSimA = 0.03, kRelaxSimF = 10.0;
constexpr double kFnA = 0.03, kFnT = 2.0, kFnSimT = 3.0, kFnSimAmin = 1.1;
constexpr double kRepSwing = 115.0, kRepSwingTol = 0.10, kRepPeriodTol = 0.25, kRepPredSwing = 80.0,
                 kRepPredTol = 0.10;
constexpr double kTankFreqTol = 0.05;
constexpr double kRk4Lo = 8.0, kRk4Hi = 32.0, kEnergyDrift = 1e-6, kResidual = 1e-9;

struct Check {
  bool pass = true;
  std::ostringstream detail;

  void expect(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (detail.tellp() > 0) detail << "; ";
    detail << what << (ok ? "" : " [x]");
  }
};

std::string num(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

bool near_rel(double v, double target, double rel) { return std::abs(v - target) <= rel * std::abs(target); }
bool near_abs(double v, double target, double tol) { return std::abs(v - target) <= tol; }

Trajectory simulate_preset(Preset p, const ModelParams& overrides = {}) {
  const auto spec = preset_spec(p);
  return integrate(build_model(p, overrides), {}, spec.simulate->integrate);
}

PredictedOscillation only_prediction(Preset p, Check& c) {
  const auto spec = preset_spec(p);
  const auto r = solve_loop(spec.loop, spec.solve);
  c.expect(r.size() == 1, "intersections " + std::to_string(r.size()));
  return r.empty() ? PredictedOscillation{} : r.front();
}

void table1(Check& c) {
  const std::vector<std::pair<Nonlinearity, double>> kinds{
      {make_nonlinearity(NlKind::saturation, {{"K", 1.7}, {"a", 0.6}}), 0.6},
      {make_nonlinearity(NlKind::relay, {{"M", 1.3}}), 0.05},
      {make_nonlinearity(NlKind::dead_zone, {{"K", 0.8}, {"Delta", 0.4}}), 0.4},
      {make_nonlinearity(NlKind::relay_hysteresis, {{"M", 0.9}, {"h", 0.35}}), 0.35}};
  for (const auto& [nl, threshold] : kinds) {
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const double A = threshold * std::pow(200.0, (i + 0.5) / 20.0);
      const cplx exact = *df_closed_form(nl, A);
      const cplx numeric = df_numeric(nl, A).N;
      worst = std::max(worst, std::abs(numeric - exact) / std::abs(exact));
    }
    c.expect(worst <= kTable1Rel, std::string(to_string(nl.kind())) + " max rel " + num(worst, 2));
  }
}

void saturation_b1(Check& c) {
  const auto nl = make_nonlinearity(NlKind::saturation, {{"K", 2.0}, {"a", 1.0}});
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const double A = std::pow(100.0, i / 49.0);
    worst = std::max(worst, std::abs(df_numeric(nl, A).N.imag() * A));
  }
  c.expect(worst <= kSaturationB1, "max |b1| " + num(worst, 2));
}

void ring_relay_prediction(Check& c) {
  const auto o = only_prediction(Preset::ring_relay, c);
  c.expect(near_abs(o.A_star, 2 / pi, kRingRelayA), "A* " + num(o.A_star, 8));
  c.expect(near_rel(o.period, 2 * pi / std::sqrt(3.0), kRingRelayT), "T " + num(o.period, 8));
}

void ring_relay_simulation(Check& c) {
  const auto wm = waveform_metrics(simulate_preset(Preset::ring_relay), "e_in1");
  c.expect(wm.oscillating && near_rel(wm.amplitude, 0.618, kRingSim), "A " + num(wm.amplitude));
  c.expect(wm.oscillating && near_rel(wm.period, 2.89, kRingSim), "T " + num(wm.period));
  const auto spec = preset_spec(Preset::ring_relay);
  const auto pred = solve_loop(spec.loop, spec.solve);
  if (pred.empty()) return c.expect(false, "no prediction");
  const auto cmp = compare(pred.front(), wm);
  c.expect(cmp.period_error >= kRingGapLo && cmp.period_error <= kRingGapHi,
           "period gap " + num(100 * cmp.period_error, 4) + "%");
}

void ring_tanh(Check& c) {
  const auto o = only_prediction(Preset::ring_tanh, c);
  c.expect(near_abs(o.A_star, 0.51, kTanhA), "A* " + num(o.A_star));
  c.expect(near_rel(o.period, 3.628e-3, kTanhT), "T* " + num(o.period));
  const auto wm = waveform_metrics(simulate_preset(Preset::ring_tanh), "e_in1");
  c.expect(wm.oscillating && near_abs(wm.amplitude, 0.50, kTanhSimA), "sim A " + num(wm.amplitude));
  c.expect(wm.oscillating && near_rel(wm.period, 3.5e-3, kTanhSimT), "sim T " + num(wm.period));
  // Truncated series: N(A) = -2 solved with the order-4 polynomial.
  const auto nl = preset_spec(Preset::ring_tanh).loop.nl;
  const auto roots = taylor_amplitudes(nl, -2.0, 4);
  bool near_two_thirds = false;
  for (double a : roots) near_two_thirds = near_two_thirds || near_abs(a, kTaylorTarget, kTaylorTol);
  std::string found = roots.empty() ? "none" : num(roots.front());
  c.expect(near_two_thirds, "Taylor root " + found);
  c.expect(df_taylor(nl, o.A_star, 4).inaccurate, "Taylor warning at A*");
}

void relaxation(Check& c) {
  const auto spec = preset_spec(Preset::relaxation_two_tau);
  const auto x = real_axis_crossings(spec.loop.linear, 1.0, 1e6);
  c.expect(x.size() == 1 && near_abs(x.front().omega, 1732.05, kRelaxOmega),
           "crossing " + (x.empty() ? std::string("none") : num(x.front().omega, 8)));
  const auto o = only_prediction(Preset::relaxation_two_tau, c);
  c.expect(near_abs(o.A_star, 1.72, kRelaxA), "A* " + num(o.A_star));
  c.expect(near_abs(o.frequency_hz(), 275.7, kRelaxF), "f* " + num(o.frequency_hz()));
  c.expect(o.stability == Stability::stable, std::string("classify ") + std::string(to_string(o.stability)));
  const auto wm = waveform_metrics(simulate_preset(Preset::relaxation_two_tau), "v_o");
  c.expect(wm.oscillating && near_rel(wm.amplitude, 1.65, kRelaxSimA), "sim A " + num(wm.amplitude));
  c.expect(wm.oscillating && near_abs(wm.frequency(), 260.0, kRelaxSimF), "sim f " + num(wm.frequency()));
}

void fitzhugh_nagumo(Check& c) {
  const auto o = only_prediction(Preset::fitzhugh_nagumo, c);
  c.expect(near_abs(o.A_star, 1.11, kFnA), "A* " + num(o.A_star));
  c.expect(near_abs(o.period, 25.0, kFnT), "T* " + num(o.period));
  const auto wm = waveform_metrics(simulate_preset(Preset::fitzhugh_nagumo), "v");
  c.expect(wm.oscillating && near_abs(wm.period, 40.0, kFnSimT), "sim T " + num(wm.period));
  c.expect(wm.oscillating && wm.amplitude > kFnSimAmin, "sim A " + num(wm.amplitude));
}

void repressilator(Check& c) {
  const auto tr = simulate_preset(Preset::repressilator);
  const auto p = waveform_metrics(tr, "p1");
  const auto m = waveform_metrics(tr, "m1");
  const double beta = preset_spec(Preset::repressilator).simulate->params.at("beta");
  c.expect(p.oscillating && near_rel(p.swing(), kRepSwing, kRepSwingTol),
           "sim swing p1 " + num(p.swing()) + " (m1 " + num(m.swing()) + ")");
  c.expect(p.oscillating && near_rel(p.period, 10.0 / beta, kRepPeriodTol), "sim T " + num(p.period));
  const auto spec = preset_spec(Preset::repressilator);
  const auto o = only_prediction(Preset::repressilator, c);
  const auto rep = report(spec.loop, o, {"nl_in"});
  const double swing = 2.0 * rep.nodes.front().amplitude;
  c.expect(near_rel(swing, kRepPredSwing, kRepPredTol), "predicted swing " + num(swing) + ", T* " + num(o.period));
}

void hysteresis_regimes(Check& c) {
  // Fixed first-order all-pass block; h swept through pi h = 4 M.
  const double M = 1.0;
  SolveOptions opt;
  opt.A_min = 1e-2, opt.A_max = 1e2, opt.omega_min = 1e-2, opt.omega_max = 1e2;
  double prev_margin = -1e300;
  int flips = 0;
  bool prev_osc = true, monotone = true, shapes = true;
  std::string edge;
  for (int i = 0; i < 17; ++i) {
    const double h = 0.5 + 0.1 * i;
    const LoopSpec spec{blocks::first_order_allpass(1.0),
                        make_nonlinearity(NlKind::relay_hysteresis, {{"M", M}, {"h", h}}), -1};
    const auto em = existence_margin(spec, opt);
    if (em.margin < prev_margin) monotone = false;
    if (i > 0 && em.oscillates != prev_osc) {
      ++flips;
      edge = num(h - 0.1, 3) + "->" + num(h, 3);
    }
    if (em.oscillates)
      shapes = shapes && em.intersections.size() == 1 && em.intersections.front().stability == Stability::stable;
    shapes = shapes && em.oscillates == (pi * h < 4 * M);
    prev_margin = em.margin;
    prev_osc = em.oscillates;
  }
  c.expect(flips == 1, "single flip at h " + edge);
  c.expect(monotone, "margin monotone in h");
  c.expect(shapes, "one stable intersection iff pi h < 4M");
}

void redesign(Check& c) {
  int tested = 0;
  bool distinct = true;
  for (double tf : {1e-5, 1e-4, 2.5e-4, 1e-3, 1e-2})
    for (double ratio : {1.5, 2.0, 4.0, 10.0, 100.0, 1000.0}) {
      const double ts = tf * ratio;
      const auto g = blocks::relaxation(tf, ts);
      const double w1c = relaxation_phase_crossover(tf, ts);
      const auto x = real_axis_crossings(g, w1c / 100, w1c * 100);
      const auto peak = magnitude_peak(g, w1c / 100, w1c * 100);
      ++tested;
      if (x.size() != 1 || std::abs(x.front().omega - peak.omega) <= 1e-6 * peak.omega) distinct = false;
    }
  c.expect(distinct, "w1 != w2 on " + std::to_string(tested) + " (tau_f, tau_s) pairs");

  const auto relax = waveform_metrics(simulate_preset(Preset::relaxation_two_tau), "v_o");
  const auto tank = waveform_metrics(simulate_preset(Preset::harmonic_relaxation), "v_o");
  c.expect(tank.oscillating && relax.oscillating && tank.thd < relax.thd,
           "THD redesign " + num(tank.thd, 4) + " vs two-tau " + num(relax.thd, 4));
  const double tf = 2.5e-4, ts = 1e-3, f0 = 1.0 / (2 * pi * std::sqrt(tf * ts));
  c.expect(tank.oscillating && near_rel(tank.frequency(), f0, kTankFreqTol),
           "redesign f " + num(tank.frequency()) + " vs " + num(f0));
}

void properties(Check& c) {
  // RK4 order on the lossless tank.
  const auto tank_model = with_nonlinearity(build_model(Preset::harmonic_relaxation),
                                            make_nonlinearity(NlKind::polynomial, {{"coeffs", std::vector<double>{0.0}}}));
  const double tf = 2.5e-4, ts = 1e-3, w = 1.0 / std::sqrt(tf * ts), T = 2 * pi / w;
  auto err = [&](int n) {
    IntegrateOptions o;
    o.dt = T / n, o.t_max = 10 * T;
    const auto tr = integrate(tank_model, {1.0, 0.0}, o);
    const double vo = std::cos(w * o.t_max), vi = std::sin(w * o.t_max) / (ts * w);
    return std::hypot(tr.states.back()[0] - vo, tr.states.back()[1] - vi);
  };
  const double ratio = err(40) / err(80);
  c.expect(ratio >= kRk4Lo && ratio <= kRk4Hi, "rk4 ratio " + num(ratio, 4));

  IntegrateOptions o;
  o.dt = T / 1000, o.t_max = 100 * T;
  const auto tr = integrate(tank_model, {1.0, 0.0}, o);
  double drift = 0.0;
  for (const auto& x : tr.states) drift = std::max(drift, std::abs(tf * x[0] * x[0] + ts * x[1] * x[1] - tf) / tf);
  c.expect(drift < kEnergyDrift, "energy drift " + num(drift, 2));

  double worst = 0.0;
  int count = 0;
  for (const auto& [p, name] : kPresetNames) {
    const auto spec = preset_spec(p);
    for (const auto& r : solve_loop(spec.loop, spec.solve)) worst = std::max(worst, r.residual), ++count;
  }
  c.expect(count > 0 && worst <= kResidual, std::to_string(count) + " predictions, max residual " + num(worst, 2));

  const auto base = fs::temp_directory_path() / "dfosc_acceptance";
  fs::remove_all(base);
  const std::string spec = (fs::path(DFOSC_SPEC_DIR) / "relaxation_two_tau.spec").string();
  std::ostringstream sink;
  auto run = [&](const fs::path& out) {
    const std::string o = out.string();
    const char* argv[] = {"dfosc", "compare", "--spec", spec.c_str(), "--out", o.c_str()};
    return run_command(6, argv, sink, sink);
  };
  const bool ran = run(base / "a") == 0 && run(base / "b") == 0;
  bool identical = ran;
  for (const char* f : {"comparison.csv", "metrics.csv"}) {
    std::ifstream fa(base / "a" / f, std::ios::binary), fb(base / "b" / f, std::ios::binary);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    identical = identical && !sa.str().empty() && sa.str() == sb.str();
  }
  fs::remove_all(base);
  c.expect(identical, "byte-identical reruns");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria{
      {"1  closed-form DF table vs quadrature", table1},
      {"2  saturation quadrature term vanishes", saturation_b1},
      {"3  ring relay prediction", ring_relay_prediction},
      {"4  ring relay simulation and prediction gap", ring_relay_simulation},
      {"5  tanh ring prediction, simulation, Taylor path", ring_tanh},
      {"6  relaxation oscillator", relaxation},
      {"7  FitzHugh-Nagumo", fitzhugh_nagumo},
      {"8  repressilator", repressilator},
      {"9  hysteresis regimes", hysteresis_regimes},
      {"10 integrator redesign", redesign},
      {"11 property suites", properties},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Check c;
    try {
      fn(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    if (!c.pass) ++failed;
    std::cout << (c.pass ? "PASS " : "FAIL ") << name << ": " << c.detail.str() << "\n";
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
