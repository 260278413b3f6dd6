#pragma once

// Command-line workbench: configuration, file formats, deterministic noise
// and the simulate / fit / calc / generate commands.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nvsim/optical_readout.hpp"
#include "nvsim/pulse_dynamics.hpp"
#include "nvsim/spin_model.hpp"

namespace nvsim {

// ---------------------------------------------------------------------------
// RNG
// ---------------------------------------------------------------------------

// PCG32 (XSH-RR output on a 64-bit LCG state). The sequence for a given seed
// is fixed by this implementation and identified by kVersion.
class Pcg32 {
 public:
  static constexpr const char* kVersion = "pcg32-xsh-rr-64/1+box-muller";

  explicit Pcg32(std::uint64_t seed, std::uint64_t stream = 0x14057b7ef767814fULL);

  std::uint32_t next_u32();
  double uniform();  // [0, 1), 53 bits
  double normal();   // standard normal

 private:
  std::uint64_t state_ = 0, inc_ = 0;
  std::optional<double> spare_;
};

// Adds sigma_abs * N(0,1) to every value.
void add_gaussian_noise(std::vector<double>& values, double sigma_abs, Pcg32& rng);

// ---------------------------------------------------------------------------
// CSV tables
// ---------------------------------------------------------------------------

struct Table {
  std::vector<std::string> comments;  // written as "# ..." lines
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::vector<double> column(const std::string& name) const;
  bool has_column(const std::string& name) const;
};

struct CsvSchema {
  std::string name;
  std::vector<std::string> required;
  std::vector<std::string> optional;
};

// Known schemas keyed by protocol / series name.
const CsvSchema& csv_schema(const std::string& name);

std::string format_number(double v);  // 17 significant digits
std::string to_csv(const Table& t);
void write_csv(const std::string& path, const Table& t);
// Parses and header-validates against the schema; SchemaError with line numbers.
Table parse_csv(const std::string& text, const CsvSchema& schema);
Table read_csv(const std::string& path, const CsvSchema& schema);

Table trace_table(const Trace& tr);

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct WorkbenchConfig {
  SpinParameters spin;
  ReadoutModel readout;
  DecoherenceParams decoherence;
  ESLACRateParams rates;
  double b_gauss = 503.0;
  std::uint64_t seed = 0;
  std::string output_dir = ".";

  void validate() const;
};

// Flat JSON document; unknown keys are rejected. Errors name the offending
// field, or the line for syntax errors.
WorkbenchConfig parse_config(const std::string& json_text);
WorkbenchConfig load_config(const std::string& path);
// Every resolved value, in a fixed key order.
std::string config_to_json(const WorkbenchConfig& cfg);
std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

namespace exit_code {
constexpr int ok = 0;
constexpr int validation = 2;
constexpr int non_convergence = 3;
constexpr int io = 4;
}  // namespace exit_code

struct SimulateOptions {
  std::string protocol;  // odnmr | rabi | ramsey | pump | trace
  std::optional<std::string> config_path;
  std::optional<std::string> out_dir;
  std::optional<double> b_gauss;
  std::optional<std::uint64_t> seed;
  double detuning_khz = 5.0;
  int transition = 1;
  std::optional<double> rf_mhz;
  std::optional<double> rabi_khz;
  double pulse_us = 200.0;
  double pi2_us = 0.0;
  double tau_max_us = 1000.0;       // ramsey
  double duration_max_us = 1000.0;  // rabi
  double t_max_us = 3.0;            // trace
  double rf_min_mhz = 4.6, rf_max_mhz = 5.3;
  double b_min_gauss = 400.0, b_max_gauss = 600.0;
  std::optional<std::size_t> points;  // default depends on the protocol
  double noise_rel = 0.0;             // sigma relative to the signal half-range
};

struct GenerateOptions {
  std::string protocol;  // ramsey | rabi | odnmr | odmr | contrast | field-series | temp-series
  std::optional<std::string> config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  double noise_rel = 0.0;   // sigma relative to the signal half-range
  double noise_khz = 0.0;   // absolute noise for frequency series
  std::optional<std::size_t> points;
  double detuning_khz = 5.0;
  std::optional<double> rabi_khz;
  double tau_max_us = 1000.0;
  double duration_max_us = 1000.0;
  double pulse_us = 200.0;
  double rf_min_mhz = 4.6, rf_max_mhz = 5.3;
  int branch = -1;           // odmr: mS = 0 <-> mS = branch
  double odmr_fwhm_mhz = 0.3;
  double odmr_depth = 0.01;
  std::optional<double> b_gauss;
  double b_min_gauss = 350.0, b_max_gauss = 675.0, b_step_gauss = 25.0;
  double t_min_kelvin = 77.5, t_max_kelvin = 420.0, t_step_kelvin = 10.0;
  std::optional<std::string> d_table_path;  // temp-series: D(T) used to synthesize
  bool exact = true;  // field/temp series from exact diagonalization
};

struct FitOptionsCli {
  std::string kind;  // ramsey | rabi | odmr | contrast | field-series | temp-series
  std::string input;
  std::optional<std::string> config_path;
  std::optional<std::string> out_path;  // default: stdout
  std::optional<double> spacing_mhz;  // default: |A_par| from the config
  double field_systematic_gauss = 0.0;
  double a_perp_uncertainty = 0.0;
  std::optional<std::string> d_table_path;
  std::optional<double> d_constant_mhz;
  double t0_kelvin = 297.0;
  std::optional<double> b_gauss;
};

struct CalcOptions {
  std::string kind;  // sensitivity | calibrate-field | q-slope
  double contrast = 0.038, eta = 0.01, n_spins = 1e12, t2_star_s = 6e-4, tau_s = 1.0;
  double f_plus_mhz = 0.0, f_minus_mhz = 0.0, gamma_e = 2.803;
  double t_kelvin = 297.0;
};

// Each command returns an exit code and reports errors on `err`.
int cmd_simulate(const SimulateOptions& o, std::ostream& out, std::ostream& err);
int cmd_generate(const GenerateOptions& o, std::ostream& out, std::ostream& err);
int cmd_fit(const FitOptionsCli& o, std::ostream& out, std::ostream& err);
int cmd_calc(const CalcOptions& o, std::ostream& out, std::ostream& err);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace nvsim
