#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <ostream>

#include "nvsim/effective_theory.hpp"
#include "nvsim/errors.hpp"
#include "nvsim/estimation.hpp"
#include "nvsim/json_io.hpp"
#include "nvsim/parallel.hpp"
#include "nvsim/workbench.hpp"

#ifndef NVSIM_VERSION
#define NVSIM_VERSION "unknown"
#endif

namespace nvsim {

namespace {

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

int run_guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::non_convergence;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::io;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::io;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::validation;
  }
}

WorkbenchConfig resolve_config(const std::optional<std::string>& path) {
  return path ? load_config(*path) : WorkbenchConfig{};
}

std::string prepare_dir(const std::optional<std::string>& cli, const WorkbenchConfig& cfg) {
  const std::string dir = cli ? *cli : cfg.output_dir;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  return dir;
}

std::string join(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

ojson config_json(const WorkbenchConfig& cfg) { return ojson::parse(config_to_json(cfg)); }

ojson provenance(const WorkbenchConfig& cfg, std::uint64_t seed, const std::string& command) {
  ojson p = ojson::object();
  p["tool"] = "nvwb";
  p["version"] = NVSIM_VERSION;
  p["command"] = command;
  p["rng"] = Pcg32::kVersion;
  p["config_hash"] = "fnv1a64:" + hex64(fnv1a64(config_to_json(cfg)));
  p["seed"] = seed;
  return p;
}

std::vector<std::string> provenance_comments(const ojson& prov) {
  std::vector<std::string> c;
  c.push_back("nvwb " + prov["version"].get<std::string>() + " " + prov["command"].get<std::string>());
  c.push_back("config_hash: " + prov["config_hash"].get<std::string>());
  c.push_back("seed: " + std::to_string(prov["seed"].get<std::uint64_t>()));
  c.push_back("rng: " + prov["rng"].get<std::string>());
  return c;
}

const std::map<std::string, std::string>& column_units() {
  static const std::map<std::string, std::string> u = {
      {"tau_us", "free-evolution time between pi/2 pulses [us]"},
      {"duration_us", "RF pulse duration [us]"},
      {"rf_mhz", "RF frequency [MHz]"},
      {"mw_mhz", "microwave frequency [MHz]"},
      {"b_gauss", "magnetic field along the NV axis [G]"},
      {"signal", "normalized fluorescence [dimensionless]"},
      {"contrast", "Rabi contrast [dimensionless]"},
      {"t_us", "time since laser turn-on [us]"},
      {"rate_plus1_per_us", "photon emission rate from |0,+1> [1/us]"},
      {"rate_0_per_us", "photon emission rate from |0,0> [1/us]"},
      {"rate_minus1_per_us", "photon emission rate from |0,-1> [1/us]"},
      {"p_0_plus1", "population of |mS=0,mI=+1> after pumping [dimensionless]"},
      {"p_nuc_plus1", "ground-state nuclear population mI=+1 [dimensionless]"},
      {"p_nuc_0", "ground-state nuclear population mI=0 [dimensionless]"},
      {"p_nuc_minus1", "ground-state nuclear population mI=-1 [dimensionless]"},
      {"f1_mhz", "nuclear transition |0,+1>-|0,0> [MHz]"},
      {"f2_mhz", "nuclear transition |0,-1>-|0,0> [MHz]"},
      {"sigma_mhz", "one-sigma uncertainty of f1 and f2 [MHz]"},
      {"t_kelvin", "temperature [K]"},
      {"d_mhz", "zero-field splitting [MHz]"},
  };
  return u;
}

void annotate(Table& t, const ojson& prov) {
  auto c = provenance_comments(prov);
  for (const auto& col : t.columns) {
    const auto it = column_units().find(col);
    c.push_back(col + ": " + (it != column_units().end() ? it->second : std::string("[dimensionless]")));
  }
  t.comments = std::move(c);
}

double half_range(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double h = 0.5 * (*hi - *lo);
  if (h > 0.0) return h;
  return std::abs(*hi) > 0.0 ? std::abs(*hi) : 1.0;
}

void noisy_column(Table& t, std::size_t col, double sigma_abs, Pcg32& rng) {
  if (sigma_abs == 0.0) return;
  for (auto& r : t.rows) r[col] += sigma_abs * rng.normal();
}

ojson params_json(const std::map<std::string, double>& m) {
  ojson j = ojson::object();
  for (const auto& [k, v] : m) j[k] = v;
  return j;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw InvalidParameter(msg);
}

// ---------------------------------------------------------------------------
// Simulation recipes
// ---------------------------------------------------------------------------

struct Simulated {
  Table table;
  std::map<std::string, double> parameters;
  std::size_t signal_column = 1;
};

Simulated from_trace(const Trace& tr) {
  Simulated s;
  s.table = trace_table(tr);
  s.parameters = tr.parameters;
  return s;
}

Simulated run_simulation(const std::string& protocol, const WorkbenchConfig& cfg, double B, const SimulateOptions& o) {
  if (protocol == "ramsey") {
    require(o.transition == 1 || o.transition == 2, "--transition must be 1 or 2");
    require(o.tau_max_us > 0.0, "--tau-max-us must be > 0");
    const NuclearPropagator prop(cfg.spin, B);
    const double f = prop.transition(o.transition).frequency_mhz;
    const double rf = o.rf_mhz ? *o.rf_mhz : f + 1e-3 * o.detuning_khz;
    const auto taus = linspace(0.0, o.tau_max_us, o.points.value_or(501));
    return from_trace(simulate_ramsey(cfg.spin, B, rf, taus, o.pi2_us, cfg.readout, cfg.decoherence));
  }
  if (protocol == "rabi") {
    require(o.transition == 1 || o.transition == 2, "--transition must be 1 or 2");
    require(o.duration_max_us > 0.0, "--duration-max-us must be > 0");
    const NuclearPropagator prop(cfg.spin, B);
    const double rf = o.rf_mhz ? *o.rf_mhz : prop.transition(o.transition).frequency_mhz;
    const auto durations = linspace(0.0, o.duration_max_us, o.points.value_or(501));
    return from_trace(
        simulate_rabi(cfg.spin, B, rf, o.rabi_khz.value_or(2.5), durations, cfg.readout, cfg.decoherence));
  }
  if (protocol == "odnmr") {
    require(o.pulse_us > 0.0, "--pulse-us must be > 0");
    require(o.rf_max_mhz > o.rf_min_mhz, "--rf-max-mhz must exceed --rf-min-mhz");
    const double rabi = o.rabi_khz.value_or(1e3 / (2.0 * o.pulse_us));
    const auto grid = linspace(o.rf_min_mhz, o.rf_max_mhz, o.points.value_or(1401));
    return from_trace(simulate_odnmr(cfg.spin, B, grid, o.pulse_us, rabi, cfg.readout, cfg.decoherence));
  }
  if (protocol == "pump") {
    require(o.b_max_gauss >= o.b_min_gauss && o.b_min_gauss >= 0.0, "invalid --b-min-gauss / --b-max-gauss");
    const auto grid = linspace(o.b_min_gauss, o.b_max_gauss, o.points.value_or(41));
    const auto results = parallel_map(grid.size(), [&](std::size_t i) {
      return pump_steady_state(cfg.rates, grid[i], thermal_populations());
    });
    Simulated s;
    s.table.columns = csv_schema("pump").required;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto& r = results[i];
      s.table.rows.push_back({grid[i], r.population_0_plus1, r.nuclear[0], r.nuclear[1], r.nuclear[2]});
    }
    s.parameters = {{"b_min_gauss", o.b_min_gauss}, {"b_max_gauss", o.b_max_gauss},
                    {"points", static_cast<double>(grid.size())}};
    return s;
  }
  if (protocol == "trace") {
    require(o.t_max_us > 0.0, "--t-max-us must be > 0");
    const auto grid = linspace(0.0, o.t_max_us, o.points.value_or(301));
    const std::array<NuclearPopulations, 3> starts = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    const auto traces = parallel_map(3, [&](std::size_t k) { return fluorescence_trace(cfg.rates, B, starts[k], grid); });
    Simulated s;
    s.table.columns = csv_schema("trace").required;
    for (std::size_t i = 0; i < grid.size(); ++i)
      s.table.rows.push_back({grid[i], traces[0].signal[i], traces[1].signal[i], traces[2].signal[i]});
    s.parameters = {{"b_gauss", B}, {"t_max_us", o.t_max_us}, {"points", static_cast<double>(grid.size())}};
    return s;
  }
  throw InvalidParameter("unknown simulate protocol '" + protocol + "' (odnmr|rabi|ramsey|pump|trace)");
}

// Lines of the mS = 0 <-> mS = branch electron transitions, mI = +1, 0, -1.
std::array<double, 3> odmr_lines(const SpinParameters& p, double B, int branch) {
  const auto eig = solve_ground(p, B);
  std::array<double, 3> f{};
  for (int k = 0; k < 3; ++k) {
    const int mi = 1 - k;
    f[k] = std::abs(eig.energy(branch, mi) - eig.energy(0, mi));
  }
  return f;
}

DModel load_d_model(const std::string& path) {
  const Table t = read_csv(path, csv_schema("d-table"));
  return DModel::table(t.column("t_kelvin"), t.column("d_mhz"));
}

void write_outputs(const std::string& dir, const std::string& stem, Table& table, const ojson& sidecar,
                   const ojson& prov, std::ostream& out) {
  annotate(table, prov);
  const auto csv = join(dir, stem + ".csv");
  const auto json = join(dir, stem + ".json");
  write_csv(csv, table);
  write_file(json, dump_json(sidecar));
  out << csv << "\n" << json << "\n";
}

// ---------------------------------------------------------------------------
// Fit output
// ---------------------------------------------------------------------------

ojson fit_json(const std::string& kind, const FitResult& r, const std::vector<std::string>& units) {
  ojson j = ojson::object();
  j["kind"] = kind;
  j["model"] = r.model;
  ojson params = ojson::object(), errs = ojson::object(), u = ojson::object();
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    params[r.names[i]] = r.params[i];
    errs[r.names[i]] = r.stderr_[i];
    u[r.names[i]] = i < units.size() ? units[i] : "";
  }
  j["params"] = params;
  j["stderr"] = errs;
  j["units"] = u;
  ojson cov = ojson::array();
  for (Eigen::Index a = 0; a < r.covariance.rows(); ++a) {
    ojson row = ojson::array();
    for (Eigen::Index b = 0; b < r.covariance.cols(); ++b) row.push_back(r.covariance(a, b));
    cov.push_back(row);
  }
  j["covariance"] = cov;
  j["chi2_reduced"] = r.chi2_reduced;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  return j;
}

FitData xy_data(const Table& t, const std::string& x, const std::string& y) { return {t.column(x), t.column(y), {}}; }

}  // namespace

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

int cmd_simulate(const SimulateOptions& o, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    WorkbenchConfig cfg = resolve_config(o.config_path);
    if (o.seed) cfg.seed = *o.seed;
    if (o.b_gauss) cfg.b_gauss = *o.b_gauss;
    cfg.validate();
    require(o.noise_rel >= 0.0 && std::isfinite(o.noise_rel), "--noise-rel must be >= 0");
    require(!o.points || *o.points >= 2, "--points must be >= 2");

    Simulated sim = run_simulation(o.protocol, cfg, cfg.b_gauss, o);
    const ojson prov = provenance(cfg, cfg.seed, "simulate " + o.protocol);
    if (o.noise_rel > 0.0) {
      Pcg32 rng(cfg.seed);
      for (std::size_t c = 1; c < sim.table.columns.size(); ++c) {
        std::vector<double> col;
        for (const auto& r : sim.table.rows) col.push_back(r[c]);
        noisy_column(sim.table, c, o.noise_rel * half_range(col), rng);
      }
    }
    sim.parameters["noise_rel"] = o.noise_rel;

    ojson side = ojson::object();
    side["protocol"] = o.protocol;
    side["parameters"] = params_json(sim.parameters);
    side["config"] = config_json(cfg);
    side["provenance"] = prov;
    write_outputs(prepare_dir(o.out_dir, cfg), o.protocol, sim.table, side, prov, out);
    return exit_code::ok;
  });
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

int cmd_generate(const GenerateOptions& o, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    WorkbenchConfig cfg = resolve_config(o.config_path);
    if (o.seed) cfg.seed = *o.seed;
    if (o.b_gauss) cfg.b_gauss = *o.b_gauss;
    cfg.validate();
    require(o.noise_rel >= 0.0 && std::isfinite(o.noise_rel), "noise sigma must be >= 0");
    require(o.noise_khz >= 0.0 && std::isfinite(o.noise_khz), "--noise-khz must be >= 0");
    require(!o.points || *o.points >= 2, "--points must be >= 2");

    Table table;
    ojson truth = ojson::object();
    const double B = cfg.b_gauss;
    bool frequency_series = false;

    if (o.protocol == "ramsey" || o.protocol == "rabi" || o.protocol == "odnmr") {
      SimulateOptions so;
      so.detuning_khz = o.detuning_khz;
      so.rabi_khz = o.rabi_khz;
      so.tau_max_us = o.tau_max_us;
      so.duration_max_us = o.duration_max_us;
      so.pulse_us = o.pulse_us;
      so.rf_min_mhz = o.rf_min_mhz;
      so.rf_max_mhz = o.rf_max_mhz;
      so.points = o.points;
      Simulated sim = run_simulation(o.protocol, cfg, B, so);
      table = std::move(sim.table);
      truth = params_json(sim.parameters);
      truth["t2_star_us"] = cfg.decoherence.T2_star_us;
      if (o.protocol == "ramsey") truth["detuning_khz"] = o.detuning_khz;
    } else if (o.protocol == "odmr") {
      require(o.branch == 1 || o.branch == -1, "--branch must be +1 or -1");
      require(o.odmr_fwhm_mhz > 0.0, "--fwhm-mhz must be > 0");
      const auto lines = odmr_lines(cfg.spin, B, o.branch);
      const double span = 3.0 * std::abs(lines[0] - lines[2]) / 2.0 + 5.0 * o.odmr_fwhm_mhz;
      const auto grid = linspace(lines[1] - span, lines[1] + span, o.points.value_or(801));
      table.columns = {"mw_mhz", "signal"};
      const double hw2 = 0.25 * o.odmr_fwhm_mhz * o.odmr_fwhm_mhz;
      for (double f : grid) {
        double s = 1.0;
        for (double c : lines) s -= o.odmr_depth * hw2 / ((f - c) * (f - c) + hw2);
        table.rows.push_back({f, s});
      }
      truth["b_gauss"] = B;
      truth["branch"] = o.branch;
      truth["line_plus1_mhz"] = lines[0];
      truth["line_0_mhz"] = lines[1];
      truth["line_minus1_mhz"] = lines[2];
      truth["fwhm_mhz"] = o.odmr_fwhm_mhz;
      truth["depth"] = o.odmr_depth;
    } else if (o.protocol == "contrast") {
      require(o.b_step_gauss > 0.0 && o.b_max_gauss >= o.b_min_gauss, "invalid field grid");
      table.columns = {"b_gauss", "contrast"};
      for (double b = o.b_min_gauss; b <= o.b_max_gauss + 1e-9; b += o.b_step_gauss)
        table.rows.push_back({b, contrast_curve(cfg.readout, b)});
      truth["c0"] = cfg.readout.contrast.C0;
      truth["b0_gauss"] = cfg.readout.contrast.B0;
      truth["fwhm_gauss"] = cfg.readout.contrast.fwhm;
      truth["baseline"] = cfg.readout.contrast.baseline;
    } else if (o.protocol == "field-series") {
      require(o.b_step_gauss > 0.0 && o.b_max_gauss >= o.b_min_gauss, "invalid field grid");
      frequency_series = true;
      table.columns = {"b_gauss", "f1_mhz", "f2_mhz"};
      if (o.noise_khz > 0.0) table.columns.push_back("sigma_mhz");
      const auto method = o.exact ? TransitionMethod::exact : TransitionMethod::perturbative;
      for (double b = o.b_min_gauss; b <= o.b_max_gauss + 1e-9; b += o.b_step_gauss) {
        const auto tp = transition_frequencies(cfg.spin, b, method);
        std::vector<double> row = {b, tp.f1, tp.f2};
        if (o.noise_khz > 0.0) row.push_back(1e-3 * o.noise_khz);
        table.rows.push_back(row);
      }
      truth["q_mhz"] = cfg.spin.Q;
      truth["gamma_n_mhz_per_gauss"] = cfg.spin.gamma_n;
      truth["a_perp_mhz"] = cfg.spin.A_perp;
      truth["method"] = o.exact ? "exact" : "perturbative";
    } else if (o.protocol == "temp-series") {
      require(o.t_step_kelvin > 0.0 && o.t_max_kelvin >= o.t_min_kelvin, "invalid temperature grid");
      require(o.d_table_path.has_value(), "temp-series needs --d-table (CSV t_kelvin,d_mhz)");
      frequency_series = true;
      const DModel d = load_d_model(*o.d_table_path);
      const auto poly = QPolynomial::published();
      const double Bt = o.b_gauss ? *o.b_gauss : 484.0;
      table.columns = {"t_kelvin", "f1_mhz", "f2_mhz"};
      const auto method = o.exact ? TransitionMethod::exact : TransitionMethod::perturbative;
      for (double T = o.t_min_kelvin; T <= o.t_max_kelvin + 1e-9; T += o.t_step_kelvin) {
        SpinParameters p = cfg.spin;
        p.D = d(T);
        p.Q = -1e-3 * poly.value_khz(T);
        const auto tp = transition_frequencies(p, Bt, method);
        table.rows.push_back({T, tp.f1, tp.f2});
      }
      truth["b_gauss"] = Bt;
      ojson a = ojson::array();
      for (double c : poly.a) a.push_back(c);
      truth["abs_q_poly_khz"] = a;
      truth["d_table"] = *o.d_table_path;
      truth["method"] = o.exact ? "exact" : "perturbative";
    } else {
      throw InvalidParameter("unknown generate protocol '" + o.protocol +
                             "' (ramsey|rabi|odnmr|odmr|contrast|field-series|temp-series)");
    }

    const ojson prov = provenance(cfg, cfg.seed, "generate " + o.protocol);
    Pcg32 rng(cfg.seed);
    if (frequency_series) {
      noisy_column(table, 1, 1e-3 * o.noise_khz, rng);
      noisy_column(table, 2, 1e-3 * o.noise_khz, rng);
    } else {
      noisy_column(table, 1, o.noise_rel * half_range(table.column(table.columns[1])), rng);
    }

    ojson side = ojson::object();
    side["protocol"] = o.protocol;
    side["truth"] = truth;
    ojson noise = ojson::object();
    noise["sigma_rel"] = o.noise_rel;
    noise["sigma_khz"] = o.noise_khz;
    side["noise"] = noise;
    side["config"] = config_json(cfg);
    side["provenance"] = prov;
    write_outputs(prepare_dir(o.out_dir, cfg), o.protocol, table, side, prov, out);
    return exit_code::ok;
  });
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

int cmd_fit(const FitOptionsCli& o, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const WorkbenchConfig cfg = resolve_config(o.config_path);
    const std::string text = read_file(o.input);
    ojson j;
    bool converged = true;

    if (o.kind == "ramsey" || o.kind == "rabi") {
      const Table t = parse_csv(text, csv_schema(o.kind));
      const FitResult r = fit_decaying_sinusoid(xy_data(t, o.kind == "ramsey" ? "tau_us" : "duration_us", "signal"));
      j = fit_json(o.kind, r, decaying_sinusoid_model().param_units);
      ojson d = ojson::object();
      const double f = r.value("frequency"), A = std::abs(r.value("amplitude")), off = r.value("offset");
      if (o.kind == "ramsey") {
        d["detuning_khz"] = 1e3 * f;
        d["detuning_khz_stderr"] = 1e3 * r.error("frequency");
        d["t2_star_us"] = r.value("decay_time");
        d["t2_star_us_stderr"] = r.error("decay_time");
      } else {
        d["rabi_khz"] = 1e3 * f;
        d["rabi_khz_stderr"] = 1e3 * r.error("frequency");
        d["pi_pulse_us"] = 1.0 / (2.0 * f);
        d["contrast"] = 2.0 * A / (off + A);
      }
      j["derived"] = d;
      converged = r.converged;
    } else if (o.kind == "odmr") {
      const Table t = parse_csv(text, csv_schema("odmr"));
      const double spacing = o.spacing_mhz.value_or(std::abs(cfg.spin.A_par));
      const FitResult r = fit_lorentzian_comb(xy_data(t, "mw_mhz", "signal"), spacing);
      j = fit_json(o.kind, r, lorentzian_comb_model(spacing).param_units);
      converged = r.converged;
    } else if (o.kind == "contrast") {
      const Table t = parse_csv(text, csv_schema("contrast"));
      const FitResult r = fit_lorentzian(xy_data(t, "b_gauss", "contrast"));
      j = fit_json(o.kind, r, lorentzian_model().param_units);
      converged = r.converged;
    } else if (o.kind == "field-series") {
      const Table t = parse_csv(text, csv_schema("field-series"));
      FieldSeries s;
      const bool has_sigma = t.has_column("sigma_mhz");
      const auto B = t.column("b_gauss"), f1 = t.column("f1_mhz"), f2 = t.column("f2_mhz");
      const auto sg = has_sigma ? t.column("sigma_mhz") : std::vector<double>{};
      for (std::size_t i = 0; i < B.size(); ++i)
        s.rows.push_back({B[i], f1[i], f2[i], has_sigma ? std::optional<double>(sg[i]) : std::nullopt});
      const auto res = analyze_field_series(s, cfg.spin, {o.field_systematic_gauss, o.a_perp_uncertainty});
      j = ojson::object();
      j["kind"] = o.kind;
      j["model"] = "mean and half-difference of f1, f2 vs B";
      ojson params = ojson::object(), errs = ojson::object(), units = ojson::object();
      params["Q"] = res.Q;
      params["gamma_n"] = res.gamma_n;
      errs["Q"] = res.Q_stderr;
      errs["gamma_n"] = res.gamma_n_stderr;
      units["Q"] = "MHz";
      units["gamma_n"] = "MHz/G";
      j["params"] = params;
      j["stderr"] = errs;
      j["units"] = units;
      j["covariance"] = ojson::array({ojson::array({res.Q_stderr * res.Q_stderr, 0.0}),
                                      ojson::array({0.0, res.gamma_n_stderr * res.gamma_n_stderr})});
      j["chi2_reduced"] = res.q_fit.chi2_reduced;
      j["chi2_reduced_gamma_n"] = res.gamma_fit.chi2_reduced;
      j["converged"] = res.q_fit.converged && res.gamma_fit.converged;
      ojson sys = ojson::object();
      sys["Q_field"] = res.Q_sys_field;
      sys["Q_a_perp"] = res.Q_sys_a_perp;
      sys["gamma_n_field"] = res.gamma_n_sys_field;
      sys["gamma_n_a_perp"] = res.gamma_n_sys_a_perp;
      j["systematics"] = sys;
      ojson d = ojson::object();
      d["Q_khz"] = 1e3 * res.Q;
      d["gamma_n_hz_per_gauss"] = 1e6 * res.gamma_n;
      j["derived"] = d;
      converged = res.q_fit.converged && res.gamma_fit.converged;
    } else if (o.kind == "temp-series") {
      const Table t = parse_csv(text, csv_schema("temp-series"));
      require(o.d_table_path.has_value() != o.d_constant_mhz.has_value(),
              "temp-series needs exactly one of --d-table or --d-constant-mhz");
      TemperatureSeries s;
      s.B = o.b_gauss.value_or(484.0);
      const auto T = t.column("t_kelvin"), f1 = t.column("f1_mhz"), f2 = t.column("f2_mhz");
      for (std::size_t i = 0; i < T.size(); ++i) s.rows.push_back({T[i], f1[i], f2[i]});
      const auto [tlo, thi] = std::minmax_element(T.begin(), T.end());
      const DModel dm = o.d_table_path ? load_d_model(*o.d_table_path) : DModel::constant(*o.d_constant_mhz, *tlo, *thi);
      const auto res = analyze_temperature_series(s, dm, cfg.spin.gamma_e, cfg.spin.A_perp, o.t0_kelvin);
      j = ojson::object();
      j["kind"] = o.kind;
      j["model"] = "|Q|(T) = a0 + a1 T + a2 T^2 + a3 T^3 + a4 T^4";
      ojson params = ojson::object(), errs = ojson::object(), units = ojson::object();
      for (int n = 0; n < 5; ++n) {
        const std::string k = "a" + std::to_string(n);
        params[k] = res.poly.a[static_cast<std::size_t>(n)];
        errs[k] = res.poly_stderr[static_cast<std::size_t>(n)];
        units[k] = n == 0 ? "kHz" : "kHz/K^" + std::to_string(n);
      }
      j["params"] = params;
      j["stderr"] = errs;
      j["units"] = units;
      ojson cov = ojson::array();
      for (std::size_t a = 0; a < 5; ++a) {
        ojson row = ojson::array();
        for (std::size_t b = 0; b < 5; ++b) row.push_back(a == b ? res.poly_stderr[a] * res.poly_stderr[a] : 0.0);
        cov.push_back(row);
      }
      j["covariance"] = cov;
      double ss = 0.0;
      for (const auto& r : res.rows) {
        const double dq = 1e3 * r.abs_Q_mhz - res.poly.value_khz(r.T);
        ss += dq * dq;
      }
      const double dof = static_cast<double>(res.rows.size()) - 5.0;
      j["chi2_reduced"] = dof > 0 ? ss / dof : 0.0;
      j["converged"] = true;
      ojson d = ojson::object();
      d["t0_kelvin"] = res.T0;
      d["slope_hz_per_k"] = res.slope_hz_per_k;
      ojson rows = ojson::array();
      for (const auto& r : res.rows)
        rows.push_back(ojson::array({r.T, r.mean_mhz, r.D_mhz, r.Q_signed_mhz, r.abs_Q_mhz}));
      d["rows_columns"] = ojson::array({"t_kelvin", "mean_mhz", "d_mhz", "q_signed_mhz", "abs_q_mhz"});
      d["rows"] = rows;
      j["derived"] = d;
    } else {
      throw InvalidParameter("unknown fit kind '" + o.kind + "' (ramsey|rabi|odmr|contrast|field-series|temp-series)");
    }

    ojson prov = provenance(cfg, cfg.seed, "fit " + o.kind);
    prov["input"] = std::filesystem::path(o.input).filename().string();
    prov["input_hash"] = "fnv1a64:" + hex64(fnv1a64(text));
    j["provenance"] = prov;
    const std::string doc = dump_json(j);
    if (o.out_path)
      write_file(*o.out_path, doc);
    else
      out << doc;
    if (!converged) {
      err << "error: fit did not converge\n";
      return exit_code::non_convergence;
    }
    return exit_code::ok;
  });
}

// ---------------------------------------------------------------------------
// calc
// ---------------------------------------------------------------------------

int cmd_calc(const CalcOptions& o, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    ojson j = ojson::object();
    j["kind"] = o.kind;
    ojson in = ojson::object(), res = ojson::object();
    if (o.kind == "sensitivity") {
      const SensitivityInputs s{o.contrast, o.eta, o.n_spins, o.t2_star_s, o.tau_s};
      in["contrast"] = o.contrast;
      in["eta"] = o.eta;
      in["n_spins"] = o.n_spins;
      in["t2_star_s"] = o.t2_star_s;
      in["tau_s"] = o.tau_s;
      const double dw = sensitivity(s);
      res["delta_omega_rad_per_s"] = dw;
      res["delta_f_hz"] = dw / (2.0 * M_PI);
    } else if (o.kind == "calibrate-field") {
      in["f_plus_mhz"] = o.f_plus_mhz;
      in["f_minus_mhz"] = o.f_minus_mhz;
      in["gamma_e_mhz_per_gauss"] = o.gamma_e;
      res["b_gauss"] = calibrate_field(o.f_plus_mhz, o.f_minus_mhz, o.gamma_e);
    } else if (o.kind == "q-slope") {
      require(std::isfinite(o.t_kelvin) && o.t_kelvin > 0.0, "--t-kelvin must be > 0");
      const auto poly = QPolynomial::published();
      in["t_kelvin"] = o.t_kelvin;
      ojson a = ojson::array();
      for (double c : poly.a) a.push_back(c);
      in["abs_q_poly_khz"] = a;
      res["slope_hz_per_k"] = poly.slope_hz_per_k(o.t_kelvin);
      res["abs_q_khz"] = poly.value_khz(o.t_kelvin);
    } else {
      throw InvalidParameter("unknown calc kind '" + o.kind + "' (sensitivity|calibrate-field|q-slope)");
    }
    j["inputs"] = in;
    j["result"] = res;
    ojson prov = ojson::object();
    prov["tool"] = "nvwb";
    prov["version"] = NVSIM_VERSION;
    prov["command"] = "calc " + o.kind;
    j["provenance"] = prov;
    out << dump_json(j);
    return exit_code::ok;
  });
}

}  // namespace nvsim
