// nvwb: simulate, fit, calc and generate for 14N nuclear-spin experiments in NV centers.

#include <iostream>

#include <CLI11.hpp>

#include "nvsim/workbench.hpp"

int main(int argc, char** argv) {
  using namespace nvsim;
  CLI::App app{"NV 14N nuclear-spin workbench"};
  app.set_version_flag("--version", std::string("nvwb ") + NVSIM_VERSION);
  app.require_subcommand(1);

  SimulateOptions so;
  auto* sim = app.add_subcommand("simulate", "Simulate a protocol and write CSV + JSON sidecar");
  sim->add_option("protocol", so.protocol, "odnmr | rabi | ramsey | pump | trace")->required();
  sim->add_option("--config", so.config_path, "Flat JSON config file");
  sim->add_option("--out-dir", so.out_dir, "Output directory (overrides config)");
  sim->add_option("--seed", so.seed, "RNG seed (overrides config)");
  sim->add_option("--b-gauss", so.b_gauss, "Static field [G]");
  sim->add_option("--detuning-khz", so.detuning_khz, "Ramsey detuning from the target transition [kHz]");
  sim->add_option("--transition", so.transition, "Target transition for ramsey/rabi: 1 or 2");
  sim->add_option("--rf-mhz", so.rf_mhz, "Explicit RF frequency [MHz]");
  sim->add_option("--rabi-khz", so.rabi_khz, "Nuclear Rabi frequency [kHz]");
  sim->add_option("--pulse-us", so.pulse_us, "ODNMR pulse duration [us]");
  sim->add_option("--pi2-us", so.pi2_us, "Ramsey pi/2 duration [us]; 0 = ideal pulses");
  sim->add_option("--tau-max-us", so.tau_max_us, "Ramsey maximum free evolution [us]");
  sim->add_option("--duration-max-us", so.duration_max_us, "Rabi maximum pulse duration [us]");
  sim->add_option("--t-max-us", so.t_max_us, "Fluorescence trace length [us]");
  sim->add_option("--rf-min-mhz", so.rf_min_mhz, "ODNMR sweep start [MHz]");
  sim->add_option("--rf-max-mhz", so.rf_max_mhz, "ODNMR sweep stop [MHz]");
  sim->add_option("--b-min-gauss", so.b_min_gauss, "Pump sweep start [G]");
  sim->add_option("--b-max-gauss", so.b_max_gauss, "Pump sweep stop [G]");
  sim->add_option("--points", so.points, "Number of samples");
  sim->add_option("--noise-rel", so.noise_rel, "Gaussian noise sigma relative to the signal half-range");

  GenerateOptions go;
  auto* gen = app.add_subcommand("generate", "Generate synthetic data with seeded noise and a truth sidecar");
  gen->add_option("protocol", go.protocol, "ramsey | rabi | odnmr | odmr | contrast | field-series | temp-series")
      ->required();
  gen->add_option("--config", go.config_path, "Flat JSON config file");
  gen->add_option("--out-dir", go.out_dir, "Output directory (overrides config)");
  gen->add_option("--seed", go.seed, "RNG seed (overrides config)");
  gen->add_option("--noise-rel", go.noise_rel, "Gaussian noise sigma relative to the signal half-range");
  gen->add_option("--noise-khz", go.noise_khz, "Gaussian noise on f1, f2 for frequency series [kHz]");
  gen->add_option("--points", go.points, "Number of samples");
  gen->add_option("--b-gauss", go.b_gauss, "Static field [G]");
  gen->add_option("--detuning-khz", go.detuning_khz, "Ramsey detuning [kHz]");
  gen->add_option("--rabi-khz", go.rabi_khz, "Nuclear Rabi frequency [kHz]");
  gen->add_option("--tau-max-us", go.tau_max_us, "Ramsey maximum free evolution [us]");
  gen->add_option("--duration-max-us", go.duration_max_us, "Rabi maximum pulse duration [us]");
  gen->add_option("--pulse-us", go.pulse_us, "ODNMR pulse duration [us]");
  gen->add_option("--rf-min-mhz", go.rf_min_mhz, "ODNMR sweep start [MHz]");
  gen->add_option("--rf-max-mhz", go.rf_max_mhz, "ODNMR sweep stop [MHz]");
  gen->add_option("--branch", go.branch, "ODMR branch: -1 or +1");
  gen->add_option("--fwhm-mhz", go.odmr_fwhm_mhz, "ODMR line width [MHz]");
  gen->add_option("--depth", go.odmr_depth, "ODMR line depth [dimensionless]");
  gen->add_option("--b-min-gauss", go.b_min_gauss, "Field grid start [G]");
  gen->add_option("--b-max-gauss", go.b_max_gauss, "Field grid stop [G]");
  gen->add_option("--b-step-gauss", go.b_step_gauss, "Field grid step [G]");
  gen->add_option("--t-min-kelvin", go.t_min_kelvin, "Temperature grid start [K]");
  gen->add_option("--t-max-kelvin", go.t_max_kelvin, "Temperature grid stop [K]");
  gen->add_option("--t-step-kelvin", go.t_step_kelvin, "Temperature grid step [K]");
  gen->add_option("--d-table", go.d_table_path, "D(T) table, CSV t_kelvin,d_mhz");
  gen->add_flag("!--perturbative", go.exact, "Use second-order perturbation theory instead of diagonalization");

  FitOptionsCli fo;
  auto* fit = app.add_subcommand("fit", "Fit a data file and write FitResult JSON");
  fit->add_option("kind", fo.kind, "ramsey | rabi | odmr | contrast | field-series | temp-series")->required();
  fit->add_option("input", fo.input, "Input CSV")->required();
  fit->add_option("--config", fo.config_path, "Flat JSON config file");
  fit->add_option("-o,--out", fo.out_path, "Output JSON (default: stdout)");
  fit->add_option("--spacing-mhz", fo.spacing_mhz, "ODMR hyperfine line spacing, held fixed [MHz]; default |a_par_mhz|");
  fit->add_option("--field-systematic-gauss", fo.field_systematic_gauss, "Field offset to propagate [G]");
  fit->add_option("--a-perp-uncertainty-mhz", fo.a_perp_uncertainty, "A_perp uncertainty to propagate [MHz]");
  fit->add_option("--d-table", fo.d_table_path, "D(T) table, CSV t_kelvin,d_mhz");
  fit->add_option("--d-constant-mhz", fo.d_constant_mhz, "Temperature-independent D [MHz]");
  fit->add_option("--t0-kelvin", fo.t0_kelvin, "Temperature for the reported slope [K]");
  fit->add_option("--b-gauss", fo.b_gauss, "Field of the temperature series [G]");

  CalcOptions co;
  auto* calc = app.add_subcommand("calc", "Closed-form calculators, JSON to stdout");
  calc->add_option("kind", co.kind, "sensitivity | calibrate-field | q-slope")->required();
  calc->add_option("--contrast", co.contrast, "Readout contrast C");
  calc->add_option("--eta", co.eta, "Photon collection efficiency");
  calc->add_option("--n-spins", co.n_spins, "Number of spins");
  calc->add_option("--t2-star-s", co.t2_star_s, "Dephasing time [s]");
  calc->add_option("--tau-s", co.tau_s, "Total measurement time [s]");
  calc->add_option("--f-plus-mhz,--f-plus", co.f_plus_mhz, "mS=0 <-> +1 ODMR frequency [MHz]");
  calc->add_option("--f-minus-mhz,--f-minus", co.f_minus_mhz, "mS=0 <-> -1 ODMR frequency [MHz]");
  calc->add_option("--gamma-e-mhz-per-gauss", co.gamma_e, "Electron gyromagnetic ratio [MHz/G]");
  calc->add_option("--t-kelvin", co.t_kelvin, "Temperature [K]");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code::validation;
  }

  if (*sim) return cmd_simulate(so, std::cout, std::cerr);
  if (*gen) return cmd_generate(go, std::cout, std::cerr);
  if (*fit) return cmd_fit(fo, std::cout, std::cerr);
  return cmd_calc(co, std::cout, std::cerr);
}
