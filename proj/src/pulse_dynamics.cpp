#include "nvsim/pulse_dynamics.hpp"

#include <cmath>
#include <string>

#include "nvsim/errors.hpp"
#include "nvsim/parallel.hpp"

namespace nvsim {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

cplx phasor(double angle) { return std::polar(1.0, angle); }

Matrix3c diag_phase(const std::array<double, 3>& energies, double t) {
  Matrix3c d = Matrix3c::Zero();
  for (int i = 0; i < 3; ++i) d(i, i) = phasor(-kTwoPi * energies[i] * t);
  return d;
}

// Pure-dephasing damping of all off-diagonal elements.
void damp_coherences(Matrix3c& rho, double factor) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) rho(i, j) *= factor;
}

double decay_factor(double t, double T) { return std::isinf(T) ? 1.0 : std::exp(-t / T); }

}  // namespace

void Trace::validate() const {
  if (abscissa.size() != signal.size()) throw ContractViolation("trace: abscissa/signal length mismatch");
  for (double v : signal)
    if (!std::isfinite(v)) throw ContractViolation("trace: non-finite signal sample");
}

void PulseSegment::validate() const {
  if (!(duration_us >= 0.0) || !std::isfinite(duration_us))
    throw InvalidParameter("segment duration must be finite and >= 0");
  if (kind == SegmentKind::rf_drive) {
    if (!(rabi_frequency_khz >= 0.0) || !std::isfinite(rabi_frequency_khz))
      throw InvalidParameter("rabi frequency must be finite and >= 0");
    if (!std::isfinite(rf_frequency_mhz) || !std::isfinite(phase))
      throw InvalidParameter("drive frequency and phase must be finite");
  }
}

void DecoherenceParams::validate() const {
  if (!(T2_star_us > 0.0)) throw InvalidParameter("T2_star must be > 0");
  if (!(T_rabi_us > 0.0)) throw InvalidParameter("T_rabi must be > 0");
}

NuclearState NuclearState::from_populations(const NuclearPopulations& pops) {
  Matrix3c rho = Matrix3c::Zero();
  for (int i = 0; i < 3; ++i) rho(i, i) = pops[i];
  NuclearState s(rho, 0.0);
  s.validate();
  return s;
}

NuclearState NuclearState::pure(int m_i) {
  if (m_i < -1 || m_i > 1) throw InvalidParameter("m_I must be -1, 0 or +1");
  NuclearPopulations pops{0.0, 0.0, 0.0};
  pops[1 - m_i] = 1.0;
  return from_populations(pops);
}

NuclearState NuclearState::from_density(const Matrix3c& rho, double clock_us) {
  NuclearState s(rho, clock_us);
  s.validate();
  return s;
}

NuclearPopulations NuclearState::populations() const {
  return {rho_(0, 0).real(), rho_(1, 1).real(), rho_(2, 2).real()};
}

double NuclearState::min_eigenvalue() const {
  const Matrix3c herm = (rho_ + rho_.adjoint()) * 0.5;
  return Eigen::SelfAdjointEigenSolver<Matrix3c>(herm, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

void NuclearState::validate(double tol) const {
  if (!rho_.allFinite()) throw ContractViolation("nuclear state: non-finite entries");
  if ((rho_ - rho_.adjoint()).cwiseAbs().maxCoeff() > tol)
    throw ContractViolation("nuclear state: density matrix not Hermitian");
  if (std::abs(rho_.trace() - cplx(1.0, 0.0)) > tol) throw ContractViolation("nuclear state: trace != 1");
  if (min_eigenvalue() < -tol) throw ContractViolation("nuclear state: not positive semidefinite");
}

NuclearPropagator::NuclearPropagator(const SpinParameters& p, double B)
    : levels_(effective_levels(effective_params(p, B))) {}

DrivenTransition NuclearPropagator::transition(int which) const {
  if (which != 1 && which != 2) throw InvalidParameter("transition must be 1 or 2");
  const int other = which == 1 ? 0 : 2;  // |+1> for f1, |-1> for f2
  DrivenTransition tr;
  tr.transition = which;
  if (levels_[1] >= levels_[other]) {
    tr.upper = 1;
    tr.lower = other;
  } else {
    tr.upper = other;
    tr.lower = 1;
  }
  tr.frequency_mhz = levels_[tr.upper] - levels_[tr.lower];
  return tr;
}

DrivenTransition NuclearPropagator::select(double rf) const {
  const double d1 = std::abs(rf - f1());
  const double d2 = std::abs(rf - f2());
  if (std::abs(d1 - d2) <= 1e-12 * std::max(1.0, std::abs(rf)))
    throw AmbiguousTransition("drive at " + std::to_string(rf) + " MHz is equidistant from f1 and f2");
  return transition(d1 < d2 ? 1 : 2);
}

NuclearState NuclearPropagator::free(const NuclearState& s, double t, const DecoherenceParams& dec) const {
  s.validate();
  dec.validate();
  if (!(t >= 0.0)) throw InvalidParameter("evolution time must be >= 0");
  const Matrix3c U = diag_phase(levels_, t);
  Matrix3c rho = U * s.rho() * U.adjoint();
  damp_coherences(rho, decay_factor(t, dec.T2_star_us));
  return NuclearState(rho, s.clock_us() + t);
}

namespace {

// exp(-i 2 pi H t) for a Hermitian 3x3 H.
Matrix3c propagator(const Matrix3c& H, double t) {
  Eigen::SelfAdjointEigenSolver<Matrix3c> es(H);
  Matrix3c d = Matrix3c::Zero();
  for (int i = 0; i < 3; ++i) d(i, i) = phasor(-kTwoPi * es.eigenvalues()(i) * t);
  return es.eigenvectors() * d * es.eigenvectors().adjoint();
}

}  // namespace

NuclearState NuclearPropagator::drive(const NuclearState& s, const PulseSegment& seg,
                                      const DecoherenceParams& dec) const {
  seg.validate();
  if (seg.kind != SegmentKind::rf_drive) throw ContractViolation("drive: segment is not an rf_drive");
  s.validate();
  dec.validate();
  const auto tr = select(seg.rf_frequency_mhz);

  // Rotating frame: the upper level is referenced to E_lower + f_rf.
  std::array<double, 3> frame = levels_;
  frame[tr.upper] = levels_[tr.lower] + seg.rf_frequency_mhz;
  const double t0 = s.clock_us(), T = seg.duration_us;

  Matrix3c H = Matrix3c::Zero();
  for (int i = 0; i < 3; ++i) H(i, i) = levels_[i] - frame[i];
  const double half_rabi = seg.rabi_frequency_khz * 1e-3 / 2.0;
  H(tr.upper, tr.lower) = half_rabi * phasor(-seg.phase);
  H(tr.lower, tr.upper) = std::conj(H(tr.upper, tr.lower));

  // Lab frame propagator: R(t0+T)^dagger exp(-i 2 pi H_rot T) R(t0), R(t) = exp(+i 2 pi frame t).
  const Matrix3c U = diag_phase(frame, t0 + T) * propagator(H, T) * diag_phase(frame, t0).adjoint();
  const Matrix3c unitary_part = U * s.rho() * U.adjoint();

  // Driven-ensemble decay: contract toward the state with the driven pair
  // equalized and every coherence removed.
  const double e = decay_factor(T, dec.T_rabi_us);
  Matrix3c rho = unitary_part;
  if (e < 1.0) {
    Matrix3c mixed = Matrix3c::Zero();
    const double pair = (unitary_part(tr.upper, tr.upper) + unitary_part(tr.lower, tr.lower)).real();
    mixed(tr.upper, tr.upper) = mixed(tr.lower, tr.lower) = pair / 2.0;
    const int third = 3 - tr.upper - tr.lower;
    mixed(third, third) = unitary_part(third, third);
    rho = e * unitary_part + (1.0 - e) * mixed;
  }
  return NuclearState(rho, t0 + T);
}

NuclearState NuclearPropagator::rotate(const NuclearState& s, const DrivenTransition& tr, double angle,
                                       double phase, std::optional<double> rf_mhz) const {
  s.validate();
  std::array<double, 3> frame = levels_;
  frame[tr.upper] = levels_[tr.lower] + rf_mhz.value_or(tr.frequency_mhz);
  Matrix3c G = Matrix3c::Zero();
  G(tr.upper, tr.lower) = 0.5 * phasor(-phase);
  G(tr.lower, tr.upper) = 0.5 * phasor(phase);
  const Matrix3c R = diag_phase(frame, s.clock_us());
  const Matrix3c U = R * propagator(G, angle / kTwoPi) * R.adjoint();
  return NuclearState(U * s.rho() * U.adjoint(), s.clock_us());
}

NuclearState evolve_free(const NuclearState& s, const SpinParameters& p, double B, double t,
                         const DecoherenceParams& dec) {
  return NuclearPropagator(p, B).free(s, t, dec);
}

NuclearState evolve_drive(const NuclearState& s, const SpinParameters& p, double B, const PulseSegment& seg,
                          const DecoherenceParams& dec) {
  return NuclearPropagator(p, B).drive(s, seg, dec);
}

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = a;
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) out[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return out;
}

namespace {

Trace make_trace(const char* protocol, const char* abscissa_name, std::vector<double> x, std::vector<double> y) {
  Trace tr;
  tr.protocol = protocol;
  tr.abscissa_name = abscissa_name;
  tr.abscissa = std::move(x);
  tr.signal = std::move(y);
  tr.validate();
  return tr;
}

}  // namespace

Trace simulate_rabi(const SpinParameters& p, double B, double rf, double rabi_khz,
                    const std::vector<double>& durations, const ReadoutModel& readout,
                    const DecoherenceParams& dec) {
  readout.validate();
  const NuclearPropagator prop(p, B);
  prop.select(rf);
  const auto beta = brightness(readout, B);
  const auto initial = NuclearState::from_populations(readout.polarization);
  auto signal = parallel_map(durations.size(), [&](std::size_t i) {
    const auto s = prop.drive(initial, PulseSegment::drive(durations[i], rf, rabi_khz), dec);
    const auto pop = s.populations();
    return pop[0] * beta[0] + pop[1] * beta[1] + pop[2] * beta[2];
  });
  auto tr = make_trace("rabi", "duration_us", durations, std::move(signal));
  tr.parameters = {{"b_gauss", B}, {"rf_mhz", rf}, {"rabi_khz", rabi_khz}};
  return tr;
}

Trace simulate_ramsey(const SpinParameters& p, double B, double rf, const std::vector<double>& taus,
                      double pi2_duration, const ReadoutModel& readout, const DecoherenceParams& dec) {
  readout.validate();
  if (!(pi2_duration >= 0.0)) throw InvalidParameter("pi/2 duration must be >= 0");
  const NuclearPropagator prop(p, B);
  const auto tr = prop.select(rf);
  const double target = tr.transition == 1 ? prop.f1() : prop.f2();
  if (std::abs(rf - target) > 0.05)
    throw InvalidParameter("Ramsey drive must lie within 50 kHz of f1 or f2");
  const auto beta = brightness(readout, B);

  // f2 interrogation starts from |0>, prepared by a pi pulse on f1.
  auto initial = NuclearState::from_populations(readout.polarization);
  if (tr.transition == 2) initial = prop.rotate(initial, prop.transition(1), M_PI, 0.0);

  auto pi_half = [&](const NuclearState& s) {
    if (pi2_duration == 0.0) return prop.rotate(s, tr, M_PI / 2.0, 0.0, rf);
    return prop.drive(s, PulseSegment::drive(pi2_duration, rf, 1e3 / (4.0 * pi2_duration)), dec);
  };

  auto signal = parallel_map(taus.size(), [&](std::size_t i) {
    auto s = pi_half(initial);
    s = prop.free(s, taus[i], dec);
    s = pi_half(s);
    const auto pop = s.populations();
    return pop[0] * beta[0] + pop[1] * beta[1] + pop[2] * beta[2];
  });
  auto out = make_trace("ramsey", "tau_us", taus, std::move(signal));
  out.parameters = {{"b_gauss", B}, {"rf_mhz", rf}, {"detuning_khz", (rf - target) * 1e3},
                    {"pi2_duration_us", pi2_duration}, {"transition", tr.transition}};
  return out;
}

Trace simulate_odnmr(const SpinParameters& p, double B, const std::vector<double>& rf_grid, double pulse_duration,
                     double rabi_khz, const ReadoutModel& readout, const DecoherenceParams& dec) {
  readout.validate();
  const NuclearPropagator prop(p, B);
  const auto beta = brightness(readout, B);
  const auto initial = NuclearState::from_populations(readout.polarization);
  auto signal = parallel_map(rf_grid.size(), [&](std::size_t i) {
    const auto s = prop.drive(initial, PulseSegment::drive(pulse_duration, rf_grid[i], rabi_khz), dec);
    const auto pop = s.populations();
    return pop[0] * beta[0] + pop[1] * beta[1] + pop[2] * beta[2];
  });
  auto tr = make_trace("odnmr", "rf_mhz", rf_grid, std::move(signal));
  tr.parameters = {{"b_gauss", B}, {"pulse_us", pulse_duration}, {"rabi_khz", rabi_khz}};
  return tr;
}

}  // namespace nvsim
