#pragma once

// Nuclear-spin pulse protocols in the mS = 0 manifold: ODNMR spectra, Rabi
// oscillations and Ramsey fringes, read out through an optical model.
//
// The nuclear state is a 3x3 density matrix over {|+1>, |0>, |-1>} kept in
// the lab frame together with the sequence clock. RF drives are propagated in
// the rotating-wave approximation on the transition nearest the drive
// frequency; the rotating frame is re-entered at the current clock value, so
// phases stay coherent across segments.

#include <limits>
#include <optional>
#include <vector>

#include "nvsim/effective_theory.hpp"
#include "nvsim/optical_readout.hpp"
#include "nvsim/spin_model.hpp"
#include "nvsim/trace.hpp"

namespace nvsim {

enum class SegmentKind { rf_drive, free_evolution };

struct PulseSegment {
  SegmentKind kind = SegmentKind::free_evolution;
  double duration_us = 0.0;
  double rf_frequency_mhz = 0.0;   // drive only
  double rabi_frequency_khz = 0.0; // drive only
  double phase = 0.0;              // radians, drive only

  static PulseSegment drive(double duration_us, double rf_mhz, double rabi_khz, double phase = 0.0) {
    return {SegmentKind::rf_drive, duration_us, rf_mhz, rabi_khz, phase};
  }
  static PulseSegment wait(double duration_us) { return {SegmentKind::free_evolution, duration_us, 0, 0, 0}; }

  void validate() const;
};

struct DecoherenceParams {
  double T2_star_us = 600.0;
  double T_rabi_us = std::numeric_limits<double>::infinity();

  void validate() const;
};

class NuclearState {
 public:
  NuclearState() = default;
  static NuclearState from_populations(const NuclearPopulations& pops);
  static NuclearState pure(int m_i);
  static NuclearState from_density(const Matrix3c& rho, double clock_us = 0.0);

  const Matrix3c& rho() const { return rho_; }
  double clock_us() const { return clock_; }
  NuclearPopulations populations() const;
  cplx coherence(int m_i_row, int m_i_col) const { return rho_(1 - m_i_row, 1 - m_i_col); }

  // Hermitian, unit trace, PSD within `tol`; throws ContractViolation.
  void validate(double tol = 1e-10) const;
  double min_eigenvalue() const;

 private:
  NuclearState(const Matrix3c& rho, double clock) : rho_(rho), clock_(clock) {}
  Matrix3c rho_ = Matrix3c::Zero();
  double clock_ = 0.0;
  friend class NuclearPropagator;
};

// Which two levels a drive couples. upper/lower are indices into {+1,0,-1}.
struct DrivenTransition {
  int transition = 1;  // 1 -> f1, 2 -> f2
  int upper = 1, lower = 0;
  double frequency_mhz = 0.0;  // E_upper - E_lower > 0
};

// Effective-theory energies at one field plus the rules for evolving a state.
class NuclearPropagator {
 public:
  NuclearPropagator(const SpinParameters& p, double B_gauss);

  const std::array<double, 3>& levels() const { return levels_; }
  double f1() const { return std::abs(levels_[1] - levels_[0]); }
  double f2() const { return std::abs(levels_[1] - levels_[2]); }

  // Nearest transition to rf; AmbiguousTransition if equidistant.
  DrivenTransition select(double rf_mhz) const;
  DrivenTransition transition(int which) const;

  NuclearState free(const NuclearState& s, double t_us, const DecoherenceParams& dec) const;
  NuclearState drive(const NuclearState& s, const PulseSegment& seg, const DecoherenceParams& dec) const;
  // Instantaneous rotation by `angle` at the current clock, phase-locked to a
  // drive at rf_mhz (default: exactly resonant).
  NuclearState rotate(const NuclearState& s, const DrivenTransition& tr, double angle, double phase,
                      std::optional<double> rf_mhz = std::nullopt) const;

 private:
  std::array<double, 3> levels_{};
};

NuclearState evolve_free(const NuclearState& s, const SpinParameters& p, double B_gauss, double t_us,
                         const DecoherenceParams& dec);
NuclearState evolve_drive(const NuclearState& s, const SpinParameters& p, double B_gauss,
                          const PulseSegment& seg, const DecoherenceParams& dec);

Trace simulate_rabi(const SpinParameters& p, double B_gauss, double rf_mhz, double rabi_khz,
                    const std::vector<double>& durations_us, const ReadoutModel& readout,
                    const DecoherenceParams& dec);

// pi2_duration_us = 0 selects ideal instantaneous pi/2 pulses.
Trace simulate_ramsey(const SpinParameters& p, double B_gauss, double rf_mhz,
                      const std::vector<double>& taus_us, double pi2_duration_us,
                      const ReadoutModel& readout, const DecoherenceParams& dec);

Trace simulate_odnmr(const SpinParameters& p, double B_gauss, const std::vector<double>& rf_grid_mhz,
                     double pulse_duration_us, double rabi_khz, const ReadoutModel& readout,
                     const DecoherenceParams& dec);

// Full 9-level lab-frame propagation under a linearly polarized RF field
// B1 cos(2 pi f t + phase) along x, coupling through gamma_e Sx - gamma_n Ix.
// Piecewise-constant midpoint steps with `steps_per_period` per RF cycle.
// Used to validate the rotating-wave reduction.
struct ExactDriveResult {
  NuclearPopulations populations{};  // dressed |0,mI> populations
  double b1_gauss = 0.0;             // RF amplitude giving the requested Rabi rate
  double matrix_element = 0.0;       // |<upper|X|lower>| in MHz/G
};

ExactDriveResult exact_drive_populations(const SpinParameters& p, double B_gauss, double rf_mhz,
                                         double rabi_khz, double duration_us, int initial_m_i,
                                         int transition, int steps_per_period = 64);

// Dressed-state transition frequencies f1, f2 from the exact spectrum (MHz).
std::array<double, 2> exact_nuclear_frequencies(const SpinParameters& p, double B_gauss);

// Grid helper: n points from a to b inclusive.
std::vector<double> linspace(double a, double b, std::size_t n);

}  // namespace nvsim
