#include "nvsim/spin_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "nvsim/errors.hpp"

namespace nvsim {

namespace {

constexpr double kHermitianTol = 1e-12;

bool finite(double x) { return std::isfinite(x); }

}  // namespace

void SpinParameters::validate() const {
  const double all[] = {D, gamma_e, Q, gamma_n, A_par, A_perp};
  for (double v : all) {
    if (!finite(v)) throw InvalidParameter("spin parameters must be finite");
  }
  if (gamma_e <= 0.0) throw InvalidParameter("gamma_e must be positive");
}

SpinOperatorSet build_spin_operators() {
  SpinOperatorSet ops;
  const double r2 = std::sqrt(2.0);
  ops.Sz = Matrix3c::Zero();
  ops.Sz(0, 0) = 1.0;
  ops.Sz(2, 2) = -1.0;

  // <m+1|S+|m> = sqrt(2 - m(m+1)); basis {+1, 0, -1}
  ops.S_plus = Matrix3c::Zero();
  ops.S_plus(0, 1) = r2;
  ops.S_plus(1, 2) = r2;
  ops.S_minus = ops.S_plus.adjoint();

  ops.Sx = (ops.S_plus + ops.S_minus) * 0.5;
  ops.Sy = (ops.S_plus - ops.S_minus) * cplx(0.0, -0.5);
  ops.S_squared = ops.Sx * ops.Sx + ops.Sy * ops.Sy + ops.Sz * ops.Sz;
  return ops;
}

namespace {

Matrix9c kron(const Matrix3c& a, const Matrix3c& b) {
  Matrix9c out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out.block<3, 3>(3 * i, 3 * j) = a(i, j) * b;
  return out;
}

}  // namespace

HamiltonianMatrix build_ground_hamiltonian(const SpinParameters& p, double B) {
  p.validate();
  if (!finite(B)) throw InvalidParameter("magnetic field must be finite");
  if (B < 0.0) throw InvalidParameter("magnetic field must be >= 0 (axial)");

  const auto ops = build_spin_operators();
  const Matrix3c id = Matrix3c::Identity();
  const Matrix3c sz2 = ops.Sz * ops.Sz - ops.S_squared / 3.0;

  HamiltonianMatrix H;
  H.entries = p.D * kron(sz2, id)
      + p.gamma_e * B * kron(ops.Sz, id)
      + p.Q * kron(id, sz2)
      - p.gamma_n * B * kron(id, ops.Sz)
      + p.A_par * kron(ops.Sz, ops.Sz)
      + (p.A_perp / 2.0) * (kron(ops.S_plus, ops.S_minus) + kron(ops.S_minus, ops.S_plus));
  return H;
}

double analytic_trace(const SpinParameters&, double) { return 0.0; }

double max_abs(const Matrix9c& m) { return m.cwiseAbs().maxCoeff(); }

EigenDecomposition eigensolve(const HamiltonianMatrix& H) {
  const Matrix9c& h = H.entries;
  if (!h.allFinite()) throw ContractViolation("eigensolve: non-finite matrix entries");
  const double scale = std::max(max_abs(h), 1.0);
  if (max_abs(h - h.adjoint()) > kHermitianTol * scale)
    throw ContractViolation("eigensolve: matrix is not Hermitian");

  Eigen::SelfAdjointEigenSolver<Matrix9c> solver(h);
  if (solver.info() != Eigen::Success) throw ContractViolation("eigensolve: solver failed");

  EigenDecomposition dec;
  dec.eigenvalues = solver.eigenvalues();
  dec.eigenvectors = solver.eigenvectors();
  for (int c = 0; c < kDim; ++c) {
    auto col = dec.eigenvectors.col(c);
    int k = 0;
    col.cwiseAbs().maxCoeff(&k);
    const cplx phase = col(k) / std::abs(col(k));
    col /= phase;
    col(k) = std::abs(col(k));
  }
  return dec;
}

int EigenDecomposition::column_of(int m_s, int m_i) const {
  if (!labelled) throw ContractViolation("state labels requested before label_states");
  for (int c = 0; c < kDim; ++c)
    if (labels[c].m_s == m_s && labels[c].m_i == m_i) return c;
  throw ContractViolation("no eigenvector carries label |" + std::to_string(m_s) + "," +
                          std::to_string(m_i) + ">");
}

EigenDecomposition label_states(EigenDecomposition dec) {
  struct Candidate {
    double weight;
    int column;
    int basis;
  };
  std::vector<Candidate> cands;
  cands.reserve(kDim * kDim);
  for (int c = 0; c < kDim; ++c)
    for (int b = 0; b < kDim; ++b) cands.push_back({std::norm(dec.eigenvectors(b, c)), c, b});

  // Descending weight; ties go to the lower basis index, then lower column.
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    if (a.basis != b.basis) return a.basis < b.basis;
    return a.column < b.column;
  });

  std::array<bool, kDim> col_used{}, basis_used{};
  int assigned = 0;
  for (const auto& cand : cands) {
    if (col_used[cand.column] || basis_used[cand.basis]) continue;
    col_used[cand.column] = basis_used[cand.basis] = true;
    dec.labels[cand.column] = {basis_ms(cand.basis), basis_mi(cand.basis), cand.weight};
    if (++assigned == kDim) break;
  }
  dec.labelled = true;
  dec.strong_mixing = std::any_of(dec.labels.begin(), dec.labels.end(),
                                  [](const StateLabel& l) { return l.overlap_weight < 0.5; });
  return dec;
}

EigenDecomposition solve_ground(const SpinParameters& p, double B) {
  return label_states(eigensolve(build_ground_hamiltonian(p, B)));
}

}  // namespace nvsim
