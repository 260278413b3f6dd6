#pragma once

// Nuclear-spin-dependent optical readout.
//
// Two tiers: a parametric model anchored to the measured Rabi-contrast
// Lorentzian (the default for all pulse simulations), and a classical rate
// model of optical pumping through the excited-state level anticrossing.
// None of the rate-model constants are measured values; they are placeholders
// chosen to give the qualitative mechanism.

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "nvsim/spin_model.hpp"
#include "nvsim/trace.hpp"

namespace nvsim {

// Nuclear populations ordered mI = {+1, 0, -1}.
using NuclearPopulations = std::array<double, 3>;

struct ContrastParams {
  double C0 = 0.038;
  double B0 = 485.0;    // gauss
  double fwhm = 90.0;   // gauss
  double baseline = 0.0;
};

struct ESLACRateParams {
  // Rates in MHz (= 1/us).
  double pump_rate = 5.0;
  double radiative_rate = 65.0;
  double isc_rate_ms0 = 11.0;
  double isc_rate_ms1 = 80.0;
  double singlet_decay_rate = 3.3;
  // Excited-state spin constants, MHz.
  double D_es = 1420.0;
  double A_par_es = -40.0;
  double A_perp_es = -40.0;
  double Q_es = -4.9457;
  double gamma_e = 2.803;
  double gamma_n = 3.075e-4;

  void validate() const;
  SpinParameters excited_spin_parameters() const;
};

enum class ReadoutMode { parametric, rate_model };

struct ReadoutModel {
  ReadoutMode mode = ReadoutMode::parametric;
  NuclearPopulations polarization{1.0, 0.0, 0.0};
  ContrastParams contrast;
  double readout_window_us = 0.5;
  // beta_-1 crosses beta_0 at this field, with a linear ramp of this width.
  double crossover_gauss = 495.0;
  double crossover_width_gauss = 40.0;
  ESLACRateParams rates;  // used only in rate_model mode

  void validate() const;
};

// Lorentzian contrast of |0,+1> vs |0,0>. Parametric mode only.
double contrast_curve(const ReadoutModel& m, double B_gauss);

// Relative brightness {beta_+1, beta_0, beta_-1}, normalized to beta_+1 = 1.
NuclearPopulations brightness(const ReadoutModel& m, double B_gauss);

// Signal for a nuclear population vector, linear in populations.
double signal_from_populations(const ReadoutModel& m, const NuclearPopulations& pop,
                               double B_gauss);

struct FlipFlopChannel {
  int from_ms, from_mi;  // mS = 0 member
  int to_ms, to_mi;      // mS = -1 member
  double detuning;       // H_bb - H_aa, MHz
  double coupling;       // H_ab, MHz
  double theta;          // tan(2 theta) = 2 V / detuning
  double transfer;       // sin^2(2 theta)
};

// Channels |0,-1> <-> |-1,0> and |0,0> <-> |-1,+1> in the excited state.
std::array<FlipFlopChannel, 2> excited_state_mixing(const ESLACRateParams& r, double B_gauss);

// Level layout of the rate model: 9 ground, 9 excited, 3 singlet (one per mI).
namespace levels {
constexpr int kGround = 0;
constexpr int kExcited = 9;
constexpr int kSinglet = 18;
constexpr int kCount = 21;
constexpr int singlet(int m_i) { return kSinglet + (1 - m_i); }
}  // namespace levels

using PopulationVector = Eigen::VectorXd;

// dp/dt = M p for the given pump rate override (negative = use r.pump_rate).
Eigen::MatrixXd rate_matrix(const ESLACRateParams& r, double B_gauss, double pump_rate = -1.0);

PopulationVector ground_state_populations(const NuclearPopulations& nuclear);
PopulationVector thermal_populations();

struct IntegratorOptions {
  double rtol = 1e-10;
  double atol = 1e-14;
  double initial_step = 1e-3;  // us
  double max_step = 1.0;       // us
};

struct PumpResult {
  PopulationVector steady;    // under continuous pumping
  PopulationVector relaxed;   // after the laser is switched off
  NuclearPopulations nuclear{};  // ground-manifold nuclear marginal, relaxed
  double population_0_plus1 = 0.0;  // |0,+1> after relaxation
  double time_us = 0.0;
  double residual = 0.0;  // max |dp/dt| at the end, 1/us
};

// Integrates to steady state (max |dp/dt| < 1e-12 / us). Throws
// ConvergenceError if the horizon is reached first.
PumpResult pump_steady_state(const ESLACRateParams& r, double B_gauss,
                             const PopulationVector& initial, double horizon_us = 1e5,
                             const IntegratorOptions& opts = {});

// Photon emission rate radiative_rate * sum(excited) on t_grid, starting from
// the ground state |0, mI> populations given by `nuclear`.
Trace fluorescence_trace(const ESLACRateParams& r, double B_gauss, const NuclearPopulations& nuclear,
                         const std::vector<double>& t_grid_us);

// Photons emitted during the first `window_us` of a pump pulse.
double windowed_signal(const ESLACRateParams& r, double B_gauss, const NuclearPopulations& nuclear,
                       double window_us);

// 1 - S(|0,0>) / S(|0,+1>) from the rate model.
double rate_model_contrast(const ESLACRateParams& r, double B_gauss, double window_us);

// Explicit adaptive Dormand-Prince integration of dp/dt = M p. Steps that
// drive any of the first `n_positive` entries below -1e-12 are rejected.
struct IntegrationResult {
  Eigen::VectorXd state;
  double time = 0.0;
  int steps = 0;
};
IntegrationResult integrate_linear(const Eigen::MatrixXd& M, Eigen::VectorXd p0, double t_end,
                                   int n_positive, const IntegratorOptions& opts = {});

}  // namespace nvsim
