#pragma once

// Ground-state NV- / 14N spin Hamiltonian on the 9-dimensional product space.
//
// Units: energies in MHz (h = 1), fields in gauss. Basis ordering is
// |mS, mI> with mS in {+1, 0, -1} outer and mI in {+1, 0, -1} inner,
// i.e. index = 3 (1 - mS) + (1 - mI).

#include <array>
#include <complex>
#include <vector>

#include <Eigen/Dense>

namespace nvsim {

using cplx = std::complex<double>;
using Matrix3c = Eigen::Matrix<cplx, 3, 3>;
using Matrix9c = Eigen::Matrix<cplx, 9, 9>;
using Vector9c = Eigen::Matrix<cplx, 9, 1>;
using Vector9d = Eigen::Matrix<double, 9, 1>;

struct SpinParameters {
  double D = 2870.0;          // zero-field splitting, MHz
  double gamma_e = 2.803;     // MHz/G
  double Q = -4.9457;         // quadrupole coupling, MHz (signed)
  double gamma_n = 3.075e-4;  // MHz/G, positive for 14N
  double A_par = -2.16;       // MHz; not a fitted value, see README
  double A_perp = -2.62;      // MHz

  // Throws InvalidParameter when a field is non-finite or gamma_e <= 0.
  void validate() const;
};

struct SpinOperatorSet {
  Matrix3c Sz, S_plus, S_minus, Sx, Sy, S_squared;
};

SpinOperatorSet build_spin_operators();

constexpr int kDim = 9;

constexpr int basis_index(int m_s, int m_i) { return 3 * (1 - m_s) + (1 - m_i); }
constexpr int basis_ms(int index) { return 1 - index / 3; }
constexpr int basis_mi(int index) { return 1 - index % 3; }

struct HamiltonianMatrix {
  Matrix9c entries = Matrix9c::Zero();
};

// The excited-state manifold reuses this builder with its own constants.
// Field B is axial (along the NV axis) and must be >= 0.
HamiltonianMatrix build_ground_hamiltonian(const SpinParameters& p, double B_gauss);

// Every term of the Hamiltonian is traceless on the product space.
double analytic_trace(const SpinParameters& p, double B_gauss);

struct StateLabel {
  int m_s = 0;
  int m_i = 0;
  double overlap_weight = 0.0;
};

struct EigenDecomposition {
  Vector9d eigenvalues = Vector9d::Zero();     // ascending, MHz
  Matrix9c eigenvectors = Matrix9c::Identity();  // orthonormal columns
  std::array<StateLabel, kDim> labels{};
  bool labelled = false;
  bool strong_mixing = false;  // some label weight < 0.5

  // Index of the eigenvector carrying label (m_s, m_i). Requires labels.
  int column_of(int m_s, int m_i) const;
  double energy(int m_s, int m_i) const { return eigenvalues(column_of(m_s, m_i)); }
};

// Ascending eigenvalues with a fixed phase convention: the largest-magnitude
// component of each eigenvector is real and positive.
EigenDecomposition eigensolve(const HamiltonianMatrix& H);

// Greedy bijective assignment of |mS, mI> labels by descending overlap.
EigenDecomposition label_states(EigenDecomposition dec);

// Convenience: build, diagonalize and label in one go.
EigenDecomposition solve_ground(const SpinParameters& p, double B_gauss);

double max_abs(const Matrix9c& m);

}  // namespace nvsim
