#pragma once

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dfosc/config.hpp"
#include "dfosc/csv.hpp"
#include "dfosc/dfcore.hpp"
#include "dfosc/error.hpp"
#include "dfosc/linblock.hpp"
#include "dfosc/predict.hpp"
#include "dfosc/simulate.hpp"

namespace dfosc {

enum ExitCode : int { kExitOk = 0, kExitNoOscillation = 1, kExitConfig = 2, kExitNumerical = 3 };

inline OscillatorSpec load_spec(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("spec", "cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_spec(ss.str());
}

namespace detail {

struct RunContext {
  OscillatorSpec spec;
  std::filesystem::path out_dir;
  bool csv = true;
  std::ostream& out;
  std::vector<std::string> warnings;
};

inline std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw ConfigError("out", "cannot create " + dir.string());
}

inline void write_output(RunContext& ctx, const std::string& stem, const std::vector<Row>& rows,
                         const std::string& text) {
  ensure_dir(ctx.out_dir);
  if (ctx.csv) emit_csv(rows, ctx.out_dir / (stem + ".csv"));
  else write_atomically(ctx.out_dir / (stem + ".txt"), text);
}

inline std::vector<double> amplitude_grid(const SolveOptions& o) {
  std::vector<double> a(static_cast<std::size_t>(o.grid_A));
  for (int i = 0; i < o.grid_A; ++i)
    a[static_cast<std::size_t>(i)] = o.A_min * std::pow(o.A_max / o.A_min, static_cast<double>(i) / (o.grid_A - 1));
  a.back() = o.A_max;
  return a;
}

inline int cmd_df(RunContext& ctx) {
  const auto& s = ctx.spec;
  std::vector<Row> rows{{std::string("A"), std::string("a0"), std::string("ReN"), std::string("ImN")}};
  std::ostringstream text;
  text << "describing function of " << to_string(s.loop.nl.kind()) << "\n";
  for (double A : amplitude_grid(s.solve)) {
    const auto d = loop_df(s.loop, A, s.loop.bias, s.solve.df_samples);
    rows.push_back({A, d.a0, d.N.real(), d.N.imag()});
    text << "A = " << fmt(A) << "  a0 = " << fmt(d.a0) << "  N = " << fmt(d.N.real()) << " + "
         << fmt(d.N.imag()) << "j\n";
  }
  write_output(ctx, "df", rows, text.str());
  ctx.out << "df: " << rows.size() - 1 << " amplitudes\n";
  return kExitOk;
}

inline int cmd_nyquist(RunContext& ctx) {
  const auto& s = ctx.spec;
  const auto grid = FrequencyGrid::log(s.solve.omega_min, s.solve.omega_max, s.solve.grid_omega);
  std::vector<Row> rows{{std::string("omega"), std::string("re"), std::string("im")}};
  std::ostringstream text;
  for (const auto& p : nyquist(s.loop.linear, grid)) {
    rows.push_back({p.omega, p.value.real(), p.value.imag()});
    text << "omega = " << fmt(p.omega) << "  G = " << fmt(p.value.real()) << " + " << fmt(p.value.imag()) << "j\n";
  }
  write_output(ctx, "nyquist", rows, text.str());
  ctx.out << "nyquist: " << rows.size() - 1 << " frequencies\n";
  return kExitOk;
}

inline int cmd_bode(RunContext& ctx) {
  const auto& s = ctx.spec;
  const auto grid = FrequencyGrid::log(s.solve.omega_min, s.solve.omega_max, s.solve.grid_omega);
  std::vector<Row> rows{{std::string("omega"), std::string("magnitude_db"), std::string("phase_deg")}};
  std::ostringstream text;
  for (const auto& p : bode(s.loop.linear, grid)) {
    rows.push_back({p.omega, p.magnitude_db, p.phase_deg});
    text << "omega = " << fmt(p.omega) << "  |G| = " << fmt(p.magnitude_db) << " dB  phase = "
         << fmt(p.phase_deg) << " deg\n";
  }
  write_output(ctx, "bode", rows, text.str());
  ctx.out << "bode: " << rows.size() - 1 << " frequencies\n";
  return kExitOk;
}

inline bool tanh_family(NlKind k) {
  return k == NlKind::tanh_resistor || k == NlKind::tanh_inverter || k == NlKind::tanh_relaxation;
}

struct PredictOutcome {
  std::vector<PredictedOscillation> oscillations;
  std::vector<PredictionReport> reports;
};

inline PredictOutcome run_predict(RunContext& ctx, std::ostream& text) {
  const auto& s = ctx.spec;
  std::vector<std::string> diag;
  PredictOutcome res;
  res.oscillations = solve_loop(s.loop, s.solve, &diag);
  for (const auto& d : diag) ctx.warnings.push_back(d);
  text << "prediction for " << s.name << " (sign " << (s.loop.sign > 0 ? "+1" : "-1") << ", "
       << to_string(s.loop.nl.kind()) << ")\n";
  if (res.oscillations.empty()) text << "  no intersection: no oscillation predicted\n";
  for (std::size_t i = 0; i < res.oscillations.size(); ++i) {
    const auto& o = res.oscillations[i];
    text << "  #" << i + 1 << "  A* = " << fmt(o.A_star, 8) << "  omega* = " << fmt(o.omega_star, 8)
         << " rad/s  f* = " << fmt(o.frequency_hz(), 8) << " Hz  T* = " << fmt(o.period, 8)
         << "  " << to_string(o.stability) << "  residual = " << fmt(o.residual, 3) << "\n";
    if (o.bias) text << "      bias B* = " << fmt(*o.bias, 8) << "\n";
    if (o.negative_branch)
      ctx.warnings.push_back("intersection #" + std::to_string(i + 1) + " lies on the negative-frequency branch");
    if (tanh_family(s.loop.nl.kind())) {
      const auto t = df_taylor(s.loop.nl, o.A_star, 4);
      if (t.inaccurate)
        ctx.warnings.push_back("intersection #" + std::to_string(i + 1) + ": Taylor describing function is inaccurate at A* (term ratio " +
                               fmt(t.term_ratio, 3) + ")");
    }
    auto rep = report(s.loop, o, s.probes, s.solve.df_samples);
    for (const auto& n : rep.nodes)
      text << "      node " << n.node << ": amplitude " << fmt(n.amplitude, 8) << ", swing "
           << fmt(2.0 * n.amplitude, 8) << ", offset " << fmt(n.offset, 8) << "\n";
    res.reports.push_back(std::move(rep));
  }
  return res;
}

inline void print_warnings(RunContext& ctx, std::ostream& text) {
  for (const auto& w : ctx.warnings) text << "warning: " << w << "\n";
}

inline int cmd_predict(RunContext& ctx) {
  std::ostringstream text;
  const auto res = run_predict(ctx, text);
  print_warnings(ctx, text);
  std::vector<Row> rows{{std::string("A_star"), std::string("omega_star"), std::string("period"),
                         std::string("stability"), std::string("residual")}};
  for (const auto& o : res.oscillations)
    rows.push_back({o.A_star, o.omega_star, o.period, std::string(to_string(o.stability)), o.residual});
  write_output(ctx, "predictions", rows, text.str());
  if (ctx.csv) {
    std::vector<Row> nodes{{std::string("intersection"), std::string("node"), std::string("amplitude"),
                            std::string("offset")}};
    for (std::size_t i = 0; i < res.reports.size(); ++i)
      for (const auto& n : res.reports[i].nodes)
        nodes.push_back({static_cast<long long>(i + 1), n.node, n.amplitude, n.offset});
    emit_csv(nodes, ctx.out_dir / "nodes.csv");
  }
  ctx.out << text.str();
  return res.oscillations.empty() ? kExitNoOscillation : kExitOk;
}

struct SimulateOutcome {
  Trajectory trajectory;
  std::vector<WaveformMetrics> metrics;
};

inline SimulateOutcome run_simulate(RunContext& ctx, std::ostream& text) {
  const auto& s = ctx.spec;
  if (!s.simulate) throw ConfigError("simulate", "section is required for this command");
  const auto& sim = *s.simulate;
  const auto model = build_model(sim.model, sim.params);
  SimulateOutcome res;
  res.trajectory = integrate(model, sim.x0, sim.integrate);
  text << "simulation of " << to_string(sim.model) << " (" << to_string(sim.integrate.method) << ", dt "
       << fmt(sim.integrate.dt) << ", t_max " << fmt(sim.integrate.t_max) << ")\n";
  for (const auto& node : sim.probes) {
    auto m = waveform_metrics(res.trajectory, node, sim.settle_fraction);
    if (!m.oscillating) {
      text << "  node " << node << ": no sustained oscillation\n";
      ctx.warnings.push_back("node " + node + " does not oscillate");
    } else {
      text << "  node " << node << ": amplitude " << fmt(m.amplitude, 8) << ", swing " << fmt(m.swing(), 8)
           << ", offset " << fmt(m.offset, 8) << ", period " << fmt(m.period, 8) << " (f "
           << fmt(m.frequency(), 8) << " Hz), thd " << fmt(m.thd, 4) << "\n";
      if (!m.steady)
        ctx.warnings.push_back("node " + node + " is not steady (period dispersion " + fmt(m.dispersion, 3) + ")");
    }
    res.metrics.push_back(m);
  }
  return res;
}

inline std::vector<Row> metrics_rows(const std::vector<std::string>& nodes, const std::vector<WaveformMetrics>& ms) {
  std::vector<Row> rows{{std::string("node"), std::string("amplitude"), std::string("offset"), std::string("period"),
                         std::string("thd")}};
  for (std::size_t i = 0; i < ms.size(); ++i)
    rows.push_back({nodes[i], ms[i].amplitude, ms[i].offset, ms[i].period, ms[i].thd});
  return rows;
}

inline int cmd_simulate(RunContext& ctx) {
  std::ostringstream text;
  const auto res = run_simulate(ctx, text);
  print_warnings(ctx, text);
  const auto& tr = res.trajectory;
  ensure_dir(ctx.out_dir);
  if (ctx.csv) {
    std::vector<Row> rows;
    Row header{std::string("time")};
    for (const auto& n : tr.state_names) header.push_back(n);
    rows.push_back(std::move(header));
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
      Row r{tr.times[i]};
      for (double v : tr.states[i]) r.push_back(v);
      rows.push_back(std::move(r));
    }
    emit_csv(rows, ctx.out_dir / "trajectory.csv");
    emit_csv(metrics_rows(ctx.spec.simulate->probes, res.metrics), ctx.out_dir / "metrics.csv");
  } else {
    write_atomically(ctx.out_dir / "simulate.txt", text.str());
  }
  ctx.out << text.str();
  return kExitOk;
}

inline int cmd_compare(RunContext& ctx) {
  std::ostringstream text;
  const auto pred = run_predict(ctx, text);
  const auto sim = run_simulate(ctx, text);
  const auto& s = ctx.spec;
  std::vector<Row> rows{{std::string("predict_node"), std::string("simulate_node"),
                         std::string("predicted_amplitude"), std::string("simulated_amplitude"),
                         std::string("amplitude_error"), std::string("predicted_period"),
                         std::string("simulated_period"), std::string("period_error")}};
  if (!pred.oscillations.empty()) {
    std::size_t pick = 0;
    for (std::size_t i = 0; i < pred.oscillations.size(); ++i)
      if (pred.oscillations[i].stability == Stability::stable) {
        pick = i;
        break;
      }
    const auto& rep = pred.reports[pick];
    text << "comparison (intersection #" << pick + 1 << ")\n";
    for (std::size_t i = 0; i < rep.nodes.size() && i < sim.metrics.size(); ++i) {
      const auto c = compare(rep.nodes[i].amplitude, rep.osc.period, sim.metrics[i]);
      const auto& sn = s.simulate->probes[i];
      rows.push_back({rep.nodes[i].node, sn, c.predicted_amplitude, c.simulated_amplitude, c.amplitude_error,
                      c.predicted_period, c.simulated_period, c.period_error});
      text << "  " << rep.nodes[i].node << " vs " << sn << ": amplitude " << fmt(c.predicted_amplitude, 6)
           << " vs " << fmt(c.simulated_amplitude, 6) << " (error " << fmt(100.0 * c.amplitude_error, 3)
           << "%), period " << fmt(c.predicted_period, 6) << " vs " << fmt(c.simulated_period, 6) << " (error "
           << fmt(100.0 * c.period_error, 3) << "%), frequency " << fmt(1.0 / c.predicted_period, 6) << " Hz vs "
           << fmt(sim.metrics[i].frequency(), 6) << " Hz";
      text << (c.within_tolerance ? "\n" : "  [outside 10% tolerance]\n");
    }
  } else {
    text << "comparison: nothing predicted\n";
  }
  print_warnings(ctx, text);
  write_output(ctx, "comparison", rows, text.str());
  if (ctx.csv) emit_csv(metrics_rows(s.simulate->probes, sim.metrics), ctx.out_dir / "metrics.csv");
  ctx.out << text.str();
  return pred.oscillations.empty() ? kExitNoOscillation : kExitOk;
}

}  // namespace detail

/// Entry point of the command-line tool. Returns the process exit code:
/// 0 success, 1 no oscillation predicted, 2 configuration error,
/// 3 numerical failure.
inline int run_command(int argc, const char* const* argv, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  CLI::App app{"Describing-function oscillator analysis"};
  app.require_subcommand(1);
  std::string spec_path, out_dir = ".", format = "csv";
  long long seed = 0;
  std::optional<int> samples;
  std::optional<double> tol;

  auto add_common = [&](CLI::App* sc) {
    sc->add_option("--spec", spec_path, "Oscillator spec file")->required();
    sc->add_option("--out", out_dir, "Output directory");
    sc->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "text"}));
    sc->add_option("--seed", seed, "Accepted for compatibility; runs are deterministic");
    sc->add_option("--samples", samples, "Samples per period for numeric describing functions");
    sc->add_option("--tol", tol, "Solver residual tolerance");
  };
  std::vector<std::pair<std::string, CLI::App*>> subs;
  for (const char* name : {"df", "nyquist", "bode", "predict", "simulate", "compare"})
    subs.emplace_back(name, app.add_subcommand(name));
  subs[0].second->description("Describing function over the predict amplitude range");
  subs[1].second->description("Nyquist locus of the linear block");
  subs[2].second->description("Bode magnitude and phase of the linear block");
  subs[3].second->description("Solve the harmonic-balance equation and classify the limit cycles");
  subs[4].second->description("Integrate the oscillator model and measure its waveform");
  subs[5].second->description("Predict, simulate and tabulate the differences");
  for (auto& [name, sc] : subs) add_common(sc);
  auto* catalog = app.add_subcommand("catalog", "List the built-in presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (catalog->parsed()) {
      for (const auto& [p, name] : kPresetNames) out << name << "\n";
      return kExitOk;
    }
    detail::RunContext ctx{load_spec(spec_path), out_dir, format == "csv", out, {}};
    if (samples) {
      if (*samples < 256 || !detail::is_power_of_two(*samples))
        throw ConfigError("samples", "must be a power of two >= 256");
      ctx.spec.solve.df_samples = *samples;
    }
    if (tol) {
      if (!(*tol > 0.0)) throw ConfigError("tol", "must be > 0");
      ctx.spec.solve.tol = *tol;
    }
    for (auto& [name, sc] : subs) {
      if (!sc->parsed()) continue;
      if (name == "df") return detail::cmd_df(ctx);
      if (name == "nyquist") return detail::cmd_nyquist(ctx);
      if (name == "bode") return detail::cmd_bode(ctx);
      if (name == "predict") return detail::cmd_predict(ctx);
      if (name == "simulate") return detail::cmd_simulate(ctx);
      if (name == "compare") return detail::cmd_compare(ctx);
    }
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}

}  // namespace dfosc
