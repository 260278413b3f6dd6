#pragma once

// Second-order effective Hamiltonian of the 14N nucleus in the mS = 0
// manifold, with the transverse hyperfine coupling treated perturbatively:
//
//   H0 = Q_eff (Iz^2 - 2/3) - gamma_eff Iz B
//   Q_eff     = Q + A_perp^2 D / (D^2 - gamma_e^2 B^2)
//   gamma_eff = gamma_n (1 - (gamma_e / gamma_n) A_perp^2 / (D^2 - gamma_e^2 B^2))

#include "nvsim/spin_model.hpp"

namespace nvsim {

struct EffectiveNuclearParams {
  double Q_eff = 0.0;      // MHz, signed
  double gamma_eff = 0.0;  // MHz/G
  double B = 0.0;          // gauss
  bool validity = false;
};

// The denominator D^2 - gamma_e^2 B^2 must exceed 10 A_perp^2 D.
bool effective_theory_valid(const SpinParameters& p, double B_gauss);

// Unguarded evaluation; `validity` reports the guard.
EffectiveNuclearParams effective_params_unchecked(const SpinParameters& p, double B_gauss);

// Throws OutOfValidityDomain near the GSLAC.
EffectiveNuclearParams effective_params(const SpinParameters& p, double B_gauss);

double mean_transition_frequency(const SpinParameters& p, double B_gauss);
double effective_gyromagnetic_ratio(const SpinParameters& p, double B_gauss);

enum class TransitionMethod { exact, perturbative };

struct TransitionPair {
  double f1 = 0.0;  // |0,+1> <-> |0,0>, MHz
  double f2 = 0.0;  // |0,-1> <-> |0,0>, MHz
  TransitionMethod source = TransitionMethod::perturbative;
  bool strong_mixing = false;  // propagated from the exact-path labelling
};

TransitionPair transition_frequencies(const SpinParameters& p, double B_gauss,
                                      TransitionMethod method);

// Energies of |0,+1>, |0,0>, |0,-1> under the effective Hamiltonian, MHz.
std::array<double, 3> effective_levels(const EffectiveNuclearParams& eff);

}  // namespace nvsim
