#include <algorithm>
#include <cmath>
#include <limits>

#include "nvsim/errors.hpp"
#include "nvsim/estimation.hpp"

namespace nvsim {

int FitModel::index_of(const std::string& param) const {
  for (std::size_t i = 0; i < param_names.size(); ++i)
    if (param_names[i] == param) return static_cast<int>(i);
  return -1;
}

void FitModel::validate() const {
  if (param_names.empty()) throw InvalidParameter("fit model '" + name + "' has no parameters");
  if (!fn) throw InvalidParameter("fit model '" + name + "' has no function");
  for (const auto& [k, v] : fixed) {
    (void)v;
    if (index_of(k) < 0) throw InvalidParameter("fixed parameter '" + k + "' not in model '" + name + "'");
  }
}

double FitResult::value(const std::string& n) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == n) return params[i];
  throw InvalidParameter("no parameter '" + n + "' in fit result");
}

double FitResult::error(const std::string& n) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == n) return stderr_[i];
  throw InvalidParameter("no parameter '" + n + "' in fit result");
}

namespace {

struct Problem {
  const FitModel& model;
  const FitData& data;
  std::vector<int> free;  // indices into the full parameter vector
  std::vector<double> lo, hi;

  Eigen::VectorXd residuals(const std::vector<double>& p) const {
    Eigen::VectorXd r(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double w = data.sigma.empty() ? 1.0 : 1.0 / data.sigma[i];
      r(static_cast<Eigen::Index>(i)) = (data.y[i] - model.fn(data.x[i], p)) * w;
    }
    return r;
  }

  // d(model)/dp for the free parameters, weighted.
  Eigen::MatrixXd jacobian(const std::vector<double>& p, const Eigen::VectorXd& r0) const {
    Eigen::MatrixXd J(data.size(), free.size());
    for (std::size_t k = 0; k < free.size(); ++k) {
      const int j = free[k];
      double h = std::max(1e-6 * std::abs(p[j]), 1e-9);
      if (p[j] + h > hi[j]) h = -h;
      std::vector<double> q = p;
      q[j] += h;
      const Eigen::VectorXd r1 = residuals(q);
      // r = (y - f) w, so df/dp = -(r1 - r0) / h.
      J.col(static_cast<Eigen::Index>(k)) = -(r1 - r0) / h;
    }
    return J;
  }

  void clamp(std::vector<double>& p) const {
    for (int j : free) p[j] = std::clamp(p[j], lo[j], hi[j]);
  }
};

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

}  // namespace

FitResult fit_nonlinear(const FitModel& model, const FitData& data, std::vector<double> p, const FitBounds& bounds,
                        const FitOptions& opts) {
  model.validate();
  const std::size_t np = model.size();
  if (p.size() != np) throw InvalidParameter("initial vector size does not match model '" + model.name + "'");
  if (data.x.size() != data.y.size() || (!data.sigma.empty() && data.sigma.size() != data.x.size()))
    throw InvalidParameter("fit data columns have different lengths");
  for (double s : data.sigma)
    if (!(s > 0.0)) throw InvalidParameter("sigma values must be > 0");

  Problem prob{model, data, {}, {}, {}};
  prob.lo.assign(np, -std::numeric_limits<double>::infinity());
  prob.hi.assign(np, std::numeric_limits<double>::infinity());
  if (!bounds.lower.empty()) prob.lo = bounds.lower;
  if (!bounds.upper.empty()) prob.hi = bounds.upper;
  if (prob.lo.size() != np || prob.hi.size() != np) throw InvalidParameter("bounds size mismatch");
  for (std::size_t i = 0; i < np; ++i) {
    if (model.is_fixed(i)) {
      p[i] = model.fixed.at(model.param_names[i]);
    } else {
      prob.free.push_back(static_cast<int>(i));
      if (p[i] < prob.lo[i] || p[i] > prob.hi[i])
        throw InvalidParameter("initial value of '" + model.param_names[i] + "' outside bounds");
    }
  }
  const std::size_t nf = prob.free.size();
  if (nf == 0) throw InvalidParameter("fit model has no free parameters");
  if (data.size() < nf)
    throw RankDeficiency("underdetermined fit: " + std::to_string(data.size()) + " points for " +
                         std::to_string(nf) + " free parameters");

  Eigen::VectorXd r = prob.residuals(p);
  if (!all_finite(r)) throw InvalidParameter("model is not finite at the initial parameters");
  double cost = 0.5 * r.squaredNorm();
  Eigen::MatrixXd J = prob.jacobian(p, r);

  auto check_rank = [&](const Eigen::MatrixXd& Jm) {
    Eigen::VectorXd norms = Jm.colwise().norm();
    if (norms.minCoeff() == 0.0 || !norms.allFinite())
      throw RankDeficiency("singular normal equations: a parameter has no influence on the model");
    const Eigen::MatrixXd Jn = Jm * norms.cwiseInverse().asDiagonal();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Jn);
    const auto& s = svd.singularValues();
    if (s(s.size() - 1) <= 1e-9 * s(0)) throw RankDeficiency("singular normal equations");
  };
  check_rank(J);

  // Marquardt damping scaled by diag(J^T J).
  double lambda = 1e-3;
  FitResult out;
  out.model = model.name;
  out.names = model.param_names;
  bool converged = false;
  int quiet_steps = 0;  // consecutive accepted steps meeting the cost/step tolerance
  int it = 0;
  for (; it < opts.max_iterations && !converged; ++it) {
    const Eigen::MatrixXd A = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    if (g.cwiseAbs().maxCoeff() < opts.gradient_tol) {
      converged = true;
      break;
    }
    const Eigen::VectorXd diag = A.diagonal();
    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd Ad = A;
      Ad.diagonal() += lambda * diag;
      const Eigen::VectorXd delta = Ad.ldlt().solve(g);
      std::vector<double> trial = p;
      for (std::size_t k = 0; k < nf; ++k) trial[prob.free[k]] += delta(static_cast<Eigen::Index>(k));
      prob.clamp(trial);
      const Eigen::VectorXd rt = prob.residuals(trial);
      const double ct = all_finite(rt) ? 0.5 * rt.squaredNorm() : std::numeric_limits<double>::infinity();

      double step = 0.0, scale = 0.0;
      for (int j : prob.free) {
        step = std::max(step, std::abs(trial[j] - p[j]));
        scale = std::max(scale, std::abs(p[j]));
      }
      if (ct < cost) {
        const double rel = (cost - ct) / cost;
        p = std::move(trial);
        r = rt;
        cost = ct;
        lambda = std::max(lambda / 10.0, 1e-15);
        accepted = true;
        const bool quiet = rel < opts.rel_cost_tol || step <= opts.step_tol * (scale + opts.step_tol);
        quiet_steps = quiet ? quiet_steps + 1 : 0;
        if (quiet_steps >= 2 || cost < 1e-30 * static_cast<double>(data.size())) converged = true;
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) {
          // No downhill step exists at any damping: a stationary point.
          converged = true;
          break;
        }
      }
    }
    if (accepted && !converged) J = prob.jacobian(p, r);
  }

  J = prob.jacobian(p, r);
  const Eigen::Index dof = static_cast<Eigen::Index>(data.size()) - static_cast<Eigen::Index>(nf);
  out.cost = cost;
  out.chi2_reduced = dof > 0 ? 2.0 * cost / static_cast<double>(dof) : 0.0;
  out.params = p;
  out.iterations = it;
  out.converged = converged;

  Eigen::MatrixXd cov_free;
  {
    const Eigen::MatrixXd A = J.transpose() * J;
    Eigen::VectorXd norms = A.diagonal().cwiseSqrt();
    if (norms.minCoeff() == 0.0) throw RankDeficiency("singular normal equations at the solution");
    const Eigen::MatrixXd An = norms.cwiseInverse().asDiagonal() * A * norms.cwiseInverse().asDiagonal();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(An);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw RankDeficiency("normal matrix not positive definite at the solution");
    cov_free = norms.cwiseInverse().asDiagonal() *
               ldlt.solve(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(nf), static_cast<Eigen::Index>(nf))) *
               norms.cwiseInverse().asDiagonal();
    if (data.sigma.empty() && dof > 0) cov_free *= out.chi2_reduced;
    cov_free = 0.5 * (cov_free + cov_free.transpose());
  }
  out.covariance = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(np), static_cast<Eigen::Index>(np));
  out.stderr_.assign(np, 0.0);
  for (std::size_t a = 0; a < nf; ++a) {
    for (std::size_t b = 0; b < nf; ++b)
      out.covariance(prob.free[a], prob.free[b]) = cov_free(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    out.stderr_[prob.free[a]] = std::sqrt(std::max(0.0, cov_free(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a))));
  }
  return out;
}

}  // namespace nvsim
