#include <cmath>

#include "nvsim/errors.hpp"
#include "nvsim/pulse_dynamics.hpp"

namespace nvsim {

namespace {

Matrix9c kron3(const Matrix3c& a, const Matrix3c& b) {
  Matrix9c out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out.block<3, 3>(3 * i, 3 * j) = a(i, j) * b;
  return out;
}

}  // namespace

std::array<double, 2> exact_nuclear_frequencies(const SpinParameters& p, double B) {
  const auto dec = solve_ground(p, B);
  return {std::abs(dec.energy(0, 0) - dec.energy(0, +1)), std::abs(dec.energy(0, 0) - dec.energy(0, -1))};
}

ExactDriveResult exact_drive_populations(const SpinParameters& p, double B, double rf, double rabi_khz,
                                         double duration, int initial_m_i, int transition,
                                         int steps_per_period) {
  if (transition != 1 && transition != 2) throw InvalidParameter("transition must be 1 or 2");
  if (!(duration >= 0.0) || !(rf > 0.0) || steps_per_period < 4)
    throw InvalidParameter("exact drive: invalid duration, frequency or step count");

  const Matrix9c H0 = build_ground_hamiltonian(p, B).entries;
  const auto dec = label_states(eigensolve(HamiltonianMatrix{H0}));

  const auto ops = build_spin_operators();
  const Matrix3c id = Matrix3c::Identity();
  const Matrix9c X = p.gamma_e * kron3(ops.Sx, id) - p.gamma_n * kron3(id, ops.Sx);

  const Vector9c v0 = dec.eigenvectors.col(dec.column_of(0, 0));
  const Vector9c vt = dec.eigenvectors.col(dec.column_of(0, transition == 1 ? +1 : -1));
  ExactDriveResult out;
  out.matrix_element = std::abs(v0.dot(X * vt));
  // RWA Rabi rate of H = B1 cos(wt) X is B1 |<u|X|l>|.
  out.b1_gauss = rabi_khz * 1e-3 / out.matrix_element;

  Vector9c psi = dec.eigenvectors.col(dec.column_of(0, initial_m_i));
  const double period = 1.0 / rf;
  const auto n_steps = static_cast<long>(std::ceil(duration / period * steps_per_period));
  const double dt = n_steps > 0 ? duration / static_cast<double>(n_steps) : 0.0;
  for (long k = 0; k < n_steps; ++k) {
    const double t_mid = (static_cast<double>(k) + 0.5) * dt;
    const Matrix9c H = H0 + out.b1_gauss * std::cos(2.0 * M_PI * rf * t_mid) * X;
    Eigen::SelfAdjointEigenSolver<Matrix9c> es(H);
    Vector9c coeff = es.eigenvectors().adjoint() * psi;
    for (int i = 0; i < kDim; ++i) coeff(i) *= std::polar(1.0, -2.0 * M_PI * es.eigenvalues()(i) * dt);
    psi = es.eigenvectors() * coeff;
  }

  for (int mi = -1; mi <= 1; ++mi)
    out.populations[1 - mi] = std::norm(dec.eigenvectors.col(dec.column_of(0, mi)).dot(psi));
  return out;
}

}  // namespace nvsim
