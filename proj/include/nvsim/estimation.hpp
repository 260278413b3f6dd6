#pragma once

// Least-squares engine, model-function library and the analysis pipelines
// that turn transition-frequency data into Q, gamma_n and Q(T).

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nvsim/spin_model.hpp"

namespace nvsim {

// ---------------------------------------------------------------------------
// Generic nonlinear least squares
// ---------------------------------------------------------------------------

using ModelFunction = std::function<double(double x, std::span<const double> params)>;

struct FitModel {
  std::string name;
  std::vector<std::string> param_names;
  std::vector<std::string> param_units;
  std::map<std::string, double> fixed;  // held at these values
  ModelFunction fn;

  std::size_t size() const { return param_names.size(); }
  int index_of(const std::string& param) const;
  bool is_fixed(std::size_t i) const { return fixed.count(param_names[i]) > 0; }
  void validate() const;
};

struct FitData {
  std::vector<double> x, y;
  std::vector<double> sigma;  // empty = unit weights

  std::size_t size() const { return x.size(); }
};

struct FitBounds {
  std::vector<double> lower, upper;  // empty = unbounded
};

struct FitOptions {
  int max_iterations = 200;
  double rel_cost_tol = 1e-10;
  double gradient_tol = 1e-12;
  double step_tol = 1e-14;
};

struct FitResult {
  std::string model;
  std::vector<std::string> names;
  std::vector<double> params;
  std::vector<double> stderr_;   // 0 for fixed parameters
  Eigen::MatrixXd covariance;    // full size, zero rows/cols for fixed
  double chi2_reduced = 0.0;
  double cost = 0.0;             // 0.5 * sum of weighted squared residuals
  int iterations = 0;
  bool converged = false;

  double value(const std::string& name) const;
  double error(const std::string& name) const;
};

// Levenberg-Marquardt with forward-difference Jacobian. Throws
// RankDeficiency for underdetermined or singular problems.
FitResult fit_nonlinear(const FitModel& model, const FitData& data, std::vector<double> init,
                        const FitBounds& bounds = {}, const FitOptions& opts = {});

// ---------------------------------------------------------------------------
// Model library
// ---------------------------------------------------------------------------

double model_decaying_sinusoid(double t, double A, double f, double phase, double T2, double offset);

// Three Lorentzians at center - spacing, center, center + spacing sharing one FWHM.
double model_lorentzian_comb(double f, double center, double spacing, double fwhm,
                             const std::array<double, 3>& amplitudes, double offset);

FitModel line_model();
FitModel decaying_sinusoid_model();                    // A, f, phase, T2, offset
FitModel lorentzian_comb_model(double spacing = 2.2);  // center, spacing*, fwhm, a_lo, a_mid, a_hi, offset
FitModel lorentzian_model();                           // amplitude, center, fwhm, baseline
FitModel mean_frequency_model(const SpinParameters& fixed);  // Q | D*, gamma_e*, A_perp*
FitModel gamma_eff_model(const SpinParameters& fixed);       // gamma_n | D*, gamma_e*, A_perp*

// ---------------------------------------------------------------------------
// Initial guesses
// ---------------------------------------------------------------------------

struct SinusoidGuess {
  double A, f, phase, T2, offset;
  std::vector<double> as_vector() const { return {A, f, phase, T2, offset}; }
};

// Frequency from the discrete Fourier peak (ties go to the lower frequency),
// amplitude from the signal range, decay from the log-envelope slope.
SinusoidGuess estimate_sinusoid_init(std::span<const double> t, std::span<const double> y);

// Dominant Fourier frequency only, on the k / (N dt) grid.
double dominant_frequency(std::span<const double> t, std::span<const double> y);

// Candidate inits for the comb: the strongest extremum taken as each of the three lines.
std::vector<std::vector<double>> estimate_comb_inits(std::span<const double> f, std::span<const double> y,
                                                     double spacing);

std::vector<double> estimate_lorentzian_init(std::span<const double> x, std::span<const double> y);

// Convenience fitters that run estimate + fit.
FitResult fit_decaying_sinusoid(const FitData& data, const FitOptions& opts = {});
FitResult fit_lorentzian_comb(const FitData& data, double spacing = 2.2, const FitOptions& opts = {});
FitResult fit_lorentzian(const FitData& data, const FitOptions& opts = {});

// ---------------------------------------------------------------------------
// Field calibration and sensitivity
// ---------------------------------------------------------------------------

// B = (f_plus - f_minus) / (2 gamma_e).
double calibrate_field(double f_plus_mhz, double f_minus_mhz, double gamma_e = 2.803);

struct SensitivityInputs {
  double C = 0.0;
  double eta = 0.0;
  double N = 0.0;
  double T2_star_s = 0.0;
  double tau_s = 0.0;
  void validate() const;
};

// Minimum detectable change in angular frequency, rad/s.
double sensitivity(const SensitivityInputs& in);

// ---------------------------------------------------------------------------
// Field-series pipeline
// ---------------------------------------------------------------------------

struct FieldRow {
  double B = 0.0;   // gauss
  double f1 = 0.0;  // MHz
  double f2 = 0.0;  // MHz
  std::optional<double> sigma;  // MHz, per transition
};

struct FieldSeries {
  std::vector<FieldRow> rows;
  void validate(const SpinParameters& fixed) const;
};

struct FieldSeriesOptions {
  double field_systematic_gauss = 0.0;  // uniform field offset to propagate
  double a_perp_uncertainty = 0.0;      // MHz
};

struct FieldSeriesResult {
  double Q = 0.0, Q_stderr = 0.0;
  double Q_sys_field = 0.0, Q_sys_a_perp = 0.0;
  double gamma_n = 0.0, gamma_n_stderr = 0.0;
  double gamma_n_sys_field = 0.0, gamma_n_sys_a_perp = 0.0;
  FitResult q_fit, gamma_fit;
};

// Fits (f1+f2)/2 vs B for Q and (f1-f2)/2B vs B for gamma_n with D, gamma_e
// and A_perp held at the values in `fixed`.
FieldSeriesResult analyze_field_series(const FieldSeries& series, const SpinParameters& fixed,
                                       const FieldSeriesOptions& opts = {});

// ---------------------------------------------------------------------------
// Temperature pipeline
// ---------------------------------------------------------------------------

// |Q(T)| = sum a_n T^n with a_n in kHz / K^n.
struct QPolynomial {
  std::array<double, 5> a{};

  double value_khz(double T) const;
  double slope_khz_per_k(double T) const;
  double slope_hz_per_k(double T) const { return 1e3 * slope_khz_per_k(T); }
  bool positive_on(double T_lo, double T_hi, int samples = 200) const;

  static QPolynomial published();
};

// D(T) in MHz, from a table (linear interpolation) or a polynomial with an
// explicit validity range. Extrapolation throws.
class DModel {
 public:
  static DModel table(std::vector<double> T, std::vector<double> D_mhz);
  static DModel polynomial(std::vector<double> coeffs_mhz, double T_lo, double T_hi);
  static DModel constant(double D_mhz, double T_lo, double T_hi);

  double operator()(double T) const;
  bool covers(double T_lo, double T_hi) const { return T_lo >= lo_ && T_hi <= hi_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }

 private:
  std::vector<double> x_, y_, coeffs_;
  double lo_ = 0.0, hi_ = 0.0;
};

struct TemperatureRow {
  double T = 0.0;   // K
  double f1 = 0.0;  // MHz
  double f2 = 0.0;  // MHz
};

struct TemperatureSeries {
  std::vector<TemperatureRow> rows;
  double B = 484.0;
  void validate() const;
};

struct TemperatureAnalysis {
  struct Row {
    double T, mean_mhz, D_mhz, Q_signed_mhz, abs_Q_mhz;
  };
  std::vector<Row> rows;
  QPolynomial poly;
  std::array<double, 5> poly_stderr{};
  double T0 = 297.0;
  double slope_hz_per_k = 0.0;
};

// Per row, invert the mean-frequency relation with D = D_model(T) to get
// |Q|(T); fit the quartic and report d|Q|/dT at T0.
TemperatureAnalysis analyze_temperature_series(const TemperatureSeries& series, const DModel& d_model,
                                               double gamma_e = 2.803, double A_perp = -2.62,
                                               double T0 = 297.0);

// Least-squares quartic through (T, |Q| in kHz).
QPolynomial fit_q_polynomial(std::span<const double> T, std::span<const double> abs_q_khz,
                             std::array<double, 5>* stderr_out = nullptr);

struct ShiftRatioStats {
  double mean = 0.0, stddev = 0.0, min = 0.0, max = 0.0;
  std::size_t points = 0;
};

// Pointwise ratio of fractional shifts (dD/D_ref) / (dQ/Q_ref), references at
// the start of the range; the reference point itself is excluded.
ShiftRatioStats fractional_shift_ratio(const std::function<double(double)>& q_model,
                                       const std::function<double(double)>& d_model, double T_lo,
                                       double T_hi, std::size_t grid = 100);

}  // namespace nvsim
