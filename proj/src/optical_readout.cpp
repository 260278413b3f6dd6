#include "nvsim/optical_readout.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nvsim/errors.hpp"

namespace nvsim {

void ESLACRateParams::validate() const {
  const double rates[] = {pump_rate, radiative_rate, isc_rate_ms0, isc_rate_ms1, singlet_decay_rate};
  for (double v : rates)
    if (!std::isfinite(v) || v < 0.0) throw InvalidParameter("rate-model rates must be finite and >= 0");
  if (isc_rate_ms1 < isc_rate_ms0)
    throw InvalidParameter("isc_rate_ms1 must not be smaller than isc_rate_ms0");
  const double spin[] = {D_es, A_par_es, A_perp_es, Q_es, gamma_e, gamma_n};
  for (double v : spin)
    if (!std::isfinite(v)) throw InvalidParameter("excited-state constants must be finite");
}

SpinParameters ESLACRateParams::excited_spin_parameters() const {
  SpinParameters p;
  p.D = D_es;
  p.gamma_e = gamma_e;
  p.Q = Q_es;
  p.gamma_n = gamma_n;
  p.A_par = A_par_es;
  p.A_perp = A_perp_es;
  return p;
}

void ReadoutModel::validate() const {
  double sum = 0.0;
  for (double v : polarization) {
    if (!std::isfinite(v) || v < 0.0) throw InvalidParameter("polarization entries must be >= 0");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidParameter("polarization must sum to 1");
  if (!(contrast.C0 > 0.0 && contrast.C0 < 1.0)) throw InvalidParameter("contrast C0 must lie in (0,1)");
  if (!(contrast.fwhm > 0.0)) throw InvalidParameter("contrast fwhm must be > 0");
  if (!std::isfinite(contrast.B0) || !std::isfinite(contrast.baseline))
    throw InvalidParameter("contrast parameters must be finite");
  if (!(readout_window_us > 0.0)) throw InvalidParameter("readout window must be > 0");
  if (!(crossover_width_gauss > 0.0)) throw InvalidParameter("crossover width must be > 0");
  if (mode == ReadoutMode::rate_model) rates.validate();
}

double contrast_curve(const ReadoutModel& m, double B) {
  if (m.mode != ReadoutMode::parametric)
    throw ContractViolation("contrast_curve is parametric-only; use rate_model_contrast for the rate model");
  const double hw = m.contrast.fwhm / 2.0;
  const double d = B - m.contrast.B0;
  return m.contrast.baseline + m.contrast.C0 * hw * hw / (d * d + hw * hw);
}

NuclearPopulations brightness(const ReadoutModel& m, double B) {
  if (m.mode == ReadoutMode::rate_model) {
    const double ref = windowed_signal(m.rates, B, {1.0, 0.0, 0.0}, m.readout_window_us);
    return {1.0, windowed_signal(m.rates, B, {0.0, 1.0, 0.0}, m.readout_window_us) / ref,
            windowed_signal(m.rates, B, {0.0, 0.0, 1.0}, m.readout_window_us) / ref};
  }
  const double c = contrast_curve(m, B);
  const double beta0 = 1.0 - c;
  // Linear ramp from +c/2 (low field) to -c/2 (high field) across the crossover.
  const double s = std::clamp((m.crossover_gauss - B) / m.crossover_width_gauss, -0.5, 0.5);
  return {1.0, beta0, beta0 + c * s};
}

double signal_from_populations(const ReadoutModel& m, const NuclearPopulations& pop, double B) {
  for (double v : pop)
    if (!std::isfinite(v)) throw ContractViolation("non-finite nuclear population");
  const auto beta = brightness(m, B);
  return pop[0] * beta[0] + pop[1] * beta[1] + pop[2] * beta[2];
}

std::array<FlipFlopChannel, 2> excited_state_mixing(const ESLACRateParams& r, double B) {
  if (!std::isfinite(B) || B < 0.0) throw InvalidParameter("magnetic field must be finite and >= 0");
  const auto H = build_ground_hamiltonian(r.excited_spin_parameters(), B).entries;

  auto channel = [&](int mi_a) {
    FlipFlopChannel ch{0, mi_a, -1, mi_a + 1, 0.0, 0.0, 0.0, 0.0};
    const int a = basis_index(0, mi_a);
    const int b = basis_index(-1, mi_a + 1);
    ch.detuning = H(b, b).real() - H(a, a).real();
    ch.coupling = H(a, b).real();
    const double v2 = 4.0 * ch.coupling * ch.coupling;
    const double denom = v2 + ch.detuning * ch.detuning;
    ch.transfer = denom > 0.0 ? v2 / denom : 0.0;
    if (ch.detuning == 0.0)
      ch.theta = ch.coupling == 0.0 ? 0.0 : std::copysign(M_PI / 4.0, ch.coupling);
    else
      ch.theta = 0.5 * std::atan(2.0 * ch.coupling / ch.detuning);
    return ch;
  };
  return {channel(-1), channel(0)};
}

Eigen::MatrixXd rate_matrix(const ESLACRateParams& r, double B, double pump_rate) {
  r.validate();
  const double pump = pump_rate < 0.0 ? r.pump_rate : pump_rate;
  using namespace levels;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(kCount, kCount);
  auto add = [&M](int from, int to, double rate) {
    M(to, from) += rate;
    M(from, from) -= rate;
  };

  for (int i = 0; i < kDim; ++i) {
    const int ms = basis_ms(i), mi = basis_mi(i);
    add(kGround + i, kExcited + i, pump);
    add(kExcited + i, kGround + i, r.radiative_rate);
    add(kExcited + i, singlet(mi), ms == 0 ? r.isc_rate_ms0 : r.isc_rate_ms1);
  }
  for (int mi = -1; mi <= 1; ++mi) add(singlet(mi), kGround + basis_index(0, mi), r.singlet_decay_rate);

  // Flip-flop exchange during the excited-state dwell of the mS = 0 member.
  const double dwell_rate = r.radiative_rate + r.isc_rate_ms0;
  for (const auto& ch : excited_state_mixing(r, B)) {
    const double k = ch.transfer * dwell_rate;
    const int a = kExcited + basis_index(ch.from_ms, ch.from_mi);
    const int b = kExcited + basis_index(ch.to_ms, ch.to_mi);
    add(a, b, k);
    add(b, a, k);
  }
  return M;
}

PopulationVector ground_state_populations(const NuclearPopulations& nuclear) {
  PopulationVector p = PopulationVector::Zero(levels::kCount);
  for (int mi = -1; mi <= 1; ++mi) p(levels::kGround + basis_index(0, mi)) = nuclear[1 - mi];
  return p;
}

PopulationVector thermal_populations() {
  PopulationVector p = PopulationVector::Zero(levels::kCount);
  p.head(kDim).setConstant(1.0 / kDim);
  return p;
}

IntegrationResult integrate_linear(const Eigen::MatrixXd& M, Eigen::VectorXd p, double t_end,
                                   int n_positive, const IntegratorOptions& opts) {
  // Dormand-Prince 5(4) tableau; the system is autonomous so the c_i drop out.
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                          b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  IntegrationResult out;
  double t = 0.0;
  double h = std::min(opts.initial_step, t_end);
  Eigen::VectorXd k1 = M * p, k2, k3, k4, k5, k6, k7, y;
  while (t < t_end) {
    h = std::min({h, t_end - t, opts.max_step});
    k2 = M * (p + h * a21 * k1);
    k3 = M * (p + h * (a31 * k1 + a32 * k2));
    k4 = M * (p + h * (a41 * k1 + a42 * k2 + a43 * k3));
    k5 = M * (p + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    k6 = M * (p + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    y = p + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    k7 = M * y;
    const Eigen::VectorXd err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double norm = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double sc = opts.atol + opts.rtol * std::max(std::abs(p(i)), std::abs(y(i)));
      norm = std::max(norm, std::abs(err(i)) / sc);
    }
    const bool positive = n_positive == 0 || y.head(n_positive).minCoeff() >= -1e-12;
    if (norm <= 1.0 && positive) {
      t += h;
      p = y;
      k1 = k7;
      ++out.steps;
    }
    double factor = norm > 0.0 ? 0.9 * std::pow(norm, -0.2) : 5.0;
    factor = std::clamp(factor, 0.2, 5.0);
    if (!positive) factor = std::min(factor, 0.5);
    h *= factor;
    if (h < 1e-15) throw ConvergenceError("rate integration: step size underflow", norm);
  }
  out.state = std::move(p);
  out.time = t;
  return out;
}

PumpResult pump_steady_state(const ESLACRateParams& r, double B, const PopulationVector& initial,
                             double horizon_us, const IntegratorOptions& opts) {
  using namespace levels;
  if (initial.size() != kCount) throw ContractViolation("initial population vector has wrong size");
  if (std::abs(initial.sum() - 1.0) > 1e-9 || initial.minCoeff() < 0.0)
    throw ContractViolation("initial population vector must be a probability distribution");

  const Eigen::MatrixXd M = rate_matrix(r, B);
  PumpResult out;
  PopulationVector p = initial;
  double t = 0.0, chunk = 1.0;
  double residual = (M * p).cwiseAbs().maxCoeff();
  while (residual >= 1e-12) {
    if (t >= horizon_us)
      throw ConvergenceError("pump_steady_state: no steady state within " + std::to_string(horizon_us) +
                                 " us (residual " + std::to_string(residual) + " /us)",
                             residual);
    const double span = std::min(chunk, horizon_us - t);
    p = integrate_linear(M, p, span, kCount, opts).state;
    t += span;
    chunk = std::min(chunk * 2.0, 1000.0);
    residual = (M * p).cwiseAbs().maxCoeff();
  }
  out.steady = p;
  out.time_us = t;
  out.residual = residual;

  // Laser off: let excited and singlet populations drain back to the ground manifold.
  const Eigen::MatrixXd dark = rate_matrix(r, B, 0.0);
  PopulationVector q = p;
  for (int i = 0; i < 60 && q.tail(kCount - kDim).sum() > 1e-15; ++i)
    q = integrate_linear(dark, q, 5.0, kCount, opts).state;
  out.relaxed = q;
  for (int i = 0; i < kDim; ++i) out.nuclear[1 - basis_mi(i)] += q(kGround + i);
  const double ground = q.head(kDim).sum();
  for (double& v : out.nuclear) v /= ground;
  out.population_0_plus1 = q(kGround + basis_index(0, +1));
  return out;
}

namespace {

Eigen::MatrixXd augmented_with_counter(const ESLACRateParams& r, double B) {
  using namespace levels;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(kCount + 1, kCount + 1);
  A.topLeftCorner(kCount, kCount) = rate_matrix(r, B);
  for (int i = 0; i < kDim; ++i) A(kCount, kExcited + i) = r.radiative_rate;
  return A;
}

Eigen::VectorXd initial_with_counter(const NuclearPopulations& nuclear) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(levels::kCount + 1);
  p.head(levels::kCount) = ground_state_populations(nuclear);
  return p;
}

}  // namespace

Trace fluorescence_trace(const ESLACRateParams& r, double B, const NuclearPopulations& nuclear,
                         const std::vector<double>& t_grid) {
  using namespace levels;
  const Eigen::MatrixXd M = rate_matrix(r, B);
  Trace tr;
  tr.protocol = "trace";
  tr.abscissa_name = "t_us";
  tr.signal_name = "photon_rate_per_us";
  tr.parameters = {{"b_gauss", B}};
  PopulationVector p = ground_state_populations(nuclear);
  double t = 0.0;
  for (double tg : t_grid) {
    if (tg < t) throw ContractViolation("fluorescence_trace: time grid must be non-decreasing and >= 0");
    if (tg > t) p = integrate_linear(M, p, tg - t, kCount).state;
    t = tg;
    tr.abscissa.push_back(tg);
    tr.signal.push_back(r.radiative_rate * p.segment(kExcited, kDim).sum());
  }
  return tr;
}

double windowed_signal(const ESLACRateParams& r, double B, const NuclearPopulations& nuclear,
                       double window_us) {
  if (!(window_us > 0.0)) throw InvalidParameter("readout window must be > 0");
  const auto res = integrate_linear(augmented_with_counter(r, B), initial_with_counter(nuclear),
                                    window_us, levels::kCount);
  return res.state(levels::kCount);
}

double rate_model_contrast(const ESLACRateParams& r, double B, double window_us) {
  return 1.0 - windowed_signal(r, B, {0.0, 1.0, 0.0}, window_us) /
                   windowed_signal(r, B, {1.0, 0.0, 0.0}, window_us);
}

}  // namespace nvsim
