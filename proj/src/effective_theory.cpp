#include "nvsim/effective_theory.hpp"

#include <cmath>
#include <string>

#include "nvsim/errors.hpp"

namespace nvsim {

namespace {

double denominator(const SpinParameters& p, double B) {
  return p.D * p.D - p.gamma_e * p.gamma_e * B * B;
}

void check_field(double B) {
  if (!std::isfinite(B) || B < 0.0) throw InvalidParameter("magnetic field must be finite and >= 0");
}

}  // namespace

bool effective_theory_valid(const SpinParameters& p, double B) {
  return std::abs(denominator(p, B)) >= 10.0 * p.A_perp * p.A_perp * std::abs(p.D);
}

EffectiveNuclearParams effective_params_unchecked(const SpinParameters& p, double B) {
  p.validate();
  check_field(B);
  const double den = denominator(p, B);
  const double a2 = p.A_perp * p.A_perp;
  EffectiveNuclearParams out;
  out.B = B;
  out.Q_eff = p.Q + a2 * p.D / den;
  // gamma_n (1 - (gamma_e/gamma_n) a2/den) written without dividing by gamma_n.
  out.gamma_eff = p.gamma_n - p.gamma_e * a2 / den;
  out.validity = effective_theory_valid(p, B);
  return out;
}

EffectiveNuclearParams effective_params(const SpinParameters& p, double B) {
  auto out = effective_params_unchecked(p, B);
  if (!out.validity)
    throw OutOfValidityDomain("effective nuclear theory invalid at B = " + std::to_string(B) +
                              " G: too close to the ground-state level anticrossing (GSLAC)");
  return out;
}

double mean_transition_frequency(const SpinParameters& p, double B) {
  return std::abs(effective_params(p, B).Q_eff);
}

double effective_gyromagnetic_ratio(const SpinParameters& p, double B) {
  return effective_params(p, B).gamma_eff;
}

std::array<double, 3> effective_levels(const EffectiveNuclearParams& eff) {
  // Iz^2 - 2/3 is +1/3 for mI = +-1 and -2/3 for mI = 0.
  const double zeeman = eff.gamma_eff * eff.B;
  return {eff.Q_eff / 3.0 - zeeman, -2.0 * eff.Q_eff / 3.0, eff.Q_eff / 3.0 + zeeman};
}

TransitionPair transition_frequencies(const SpinParameters& p, double B, TransitionMethod method) {
  TransitionPair out;
  out.source = method;
  if (method == TransitionMethod::perturbative) {
    const auto lv = effective_levels(effective_params(p, B));
    out.f1 = std::abs(lv[1] - lv[0]);
    out.f2 = std::abs(lv[1] - lv[2]);
    return out;
  }
  check_field(B);
  if (B > 900.0) throw InvalidParameter("exact transition extraction is limited to B <= 900 G");
  const auto dec = solve_ground(p, B);
  out.f1 = std::abs(dec.energy(0, 0) - dec.energy(0, +1));
  out.f2 = std::abs(dec.energy(0, 0) - dec.energy(0, -1));
  out.strong_mixing = dec.strong_mixing;
  return out;
}

}  // namespace nvsim
