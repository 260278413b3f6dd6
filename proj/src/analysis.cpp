#include <algorithm>
#include <cmath>
#include <set>

#include "nvsim/effective_theory.hpp"
#include "nvsim/errors.hpp"
#include "nvsim/estimation.hpp"

namespace nvsim {

double calibrate_field(double f_plus, double f_minus, double gamma_e) {
  if (!std::isfinite(f_plus) || !std::isfinite(f_minus) || !(gamma_e > 0.0))
    throw InvalidParameter("calibrate_field: inputs must be finite and gamma_e > 0");
  if (f_plus < f_minus) throw InvalidParameter("calibrate_field: f_plus must not be below f_minus");
  return (f_plus - f_minus) / (2.0 * gamma_e);
}

void SensitivityInputs::validate() const {
  const double all[] = {C, eta, N, T2_star_s, tau_s};
  for (double v : all)
    if (!(v > 0.0) || !std::isfinite(v)) throw InvalidParameter("sensitivity inputs must be positive and finite");
  if (C > 1.0 || eta > 1.0) throw InvalidParameter("contrast and collection efficiency must be <= 1");
}

double sensitivity(const SensitivityInputs& in) {
  in.validate();
  return 1.0 / (in.C * std::sqrt(in.eta * in.N * in.T2_star_s * in.tau_s));
}

// ---------------------------------------------------------------------------

void FieldSeries::validate(const SpinParameters& fixed) const {
  if (rows.size() < 3) throw InvalidParameter("field series needs at least 3 rows");
  std::set<double> seen;
  for (const auto& r : rows) {
    if (!std::isfinite(r.B) || !std::isfinite(r.f1) || !std::isfinite(r.f2) || !(r.B > 0.0))
      throw InvalidParameter("field series rows must be finite with B > 0");
    if (r.sigma && !(*r.sigma > 0.0)) throw InvalidParameter("field series sigma must be > 0");
    if (!seen.insert(r.B).second) throw InvalidParameter("field series B values must be distinct");
    if (!effective_theory_valid(fixed, r.B))
      throw OutOfValidityDomain("field series row at B = " + std::to_string(r.B) +
                                " G lies too close to the ground-state level anticrossing (GSLAC)");
  }
}

namespace {

struct FieldFits {
  FitResult q, gamma;
};

FieldFits fit_field_series(const FieldSeries& s, const SpinParameters& fixed, double field_offset) {
  FitData mean, ratio;
  bool weighted = std::all_of(s.rows.begin(), s.rows.end(), [](const FieldRow& r) { return r.sigma.has_value(); });
  for (const auto& r : s.rows) {
    const double B = r.B + field_offset;
    mean.x.push_back(B);
    mean.y.push_back(0.5 * (r.f1 + r.f2));
    ratio.x.push_back(B);
    ratio.y.push_back((r.f1 - r.f2) / (2.0 * B));
    if (weighted) {
      mean.sigma.push_back(*r.sigma / std::sqrt(2.0));
      ratio.sigma.push_back(*r.sigma / (std::sqrt(2.0) * B));
    }
  }
  // Signed branch: every studied field has Q_eff < 0, so start from a negative Q.
  double avg = 0.0;
  for (double v : mean.y) avg += v;
  avg /= static_cast<double>(mean.y.size());
  FieldFits out;
  out.q = fit_nonlinear(mean_frequency_model(fixed), mean, {-avg, fixed.D, fixed.gamma_e, fixed.A_perp});

  double gavg = 0.0;
  for (double v : ratio.y) gavg += v;
  gavg /= static_cast<double>(ratio.y.size());
  out.gamma = fit_nonlinear(gamma_eff_model(fixed), ratio, {gavg, fixed.D, fixed.gamma_e, fixed.A_perp});
  return out;
}

}  // namespace

FieldSeriesResult analyze_field_series(const FieldSeries& series, const SpinParameters& fixed,
                                       const FieldSeriesOptions& opts) {
  fixed.validate();
  series.validate(fixed);
  const auto base = fit_field_series(series, fixed, 0.0);
  FieldSeriesResult out;
  out.q_fit = base.q;
  out.gamma_fit = base.gamma;
  out.Q = base.q.value("Q");
  out.Q_stderr = base.q.error("Q");
  out.gamma_n = base.gamma.value("gamma_n");
  out.gamma_n_stderr = base.gamma.error("gamma_n");

  if (opts.field_systematic_gauss > 0.0) {
    const auto shifted = fit_field_series(series, fixed, opts.field_systematic_gauss);
    out.Q_sys_field = std::abs(shifted.q.value("Q") - out.Q);
    out.gamma_n_sys_field = std::abs(shifted.gamma.value("gamma_n") - out.gamma_n);
  }
  if (opts.a_perp_uncertainty > 0.0) {
    SpinParameters alt = fixed;
    alt.A_perp = fixed.A_perp + std::copysign(opts.a_perp_uncertainty, fixed.A_perp);
    const auto shifted = fit_field_series(series, alt, 0.0);
    out.Q_sys_a_perp = std::abs(shifted.q.value("Q") - out.Q);
    out.gamma_n_sys_a_perp = std::abs(shifted.gamma.value("gamma_n") - out.gamma_n);
  }
  return out;
}

// ---------------------------------------------------------------------------

double QPolynomial::value_khz(double T) const {
  double v = 0.0;
  for (int n = 4; n >= 0; --n) v = v * T + a[static_cast<std::size_t>(n)];
  return v;
}

double QPolynomial::slope_khz_per_k(double T) const {
  double v = 0.0;
  for (int n = 4; n >= 1; --n) v = v * T + n * a[static_cast<std::size_t>(n)];
  return v;
}

bool QPolynomial::positive_on(double lo, double hi, int samples) const {
  for (int i = 0; i <= samples; ++i)
    if (!(value_khz(lo + (hi - lo) * i / samples) > 0.0)) return false;
  return true;
}

QPolynomial QPolynomial::published() { return {{4949.473, -9.32e-3, 9.2597e-5, -4.6294e-7, 3.983e-10}}; }

DModel DModel::table(std::vector<double> T, std::vector<double> D) {
  if (T.size() != D.size() || T.size() < 2) throw InvalidParameter("D(T) table needs >= 2 matching rows");
  for (std::size_t i = 1; i < T.size(); ++i)
    if (!(T[i] > T[i - 1])) throw InvalidParameter("D(T) table temperatures must be strictly increasing");
  DModel m;
  m.lo_ = T.front();
  m.hi_ = T.back();
  m.x_ = std::move(T);
  m.y_ = std::move(D);
  return m;
}

DModel DModel::polynomial(std::vector<double> coeffs, double lo, double hi) {
  if (coeffs.empty() || !(hi > lo)) throw InvalidParameter("D(T) polynomial needs coefficients and a valid range");
  DModel m;
  m.coeffs_ = std::move(coeffs);
  m.lo_ = lo;
  m.hi_ = hi;
  return m;
}

DModel DModel::constant(double D, double lo, double hi) { return polynomial({D}, lo, hi); }

double DModel::operator()(double T) const {
  if (!(T >= lo_ && T <= hi_))
    throw InvalidParameter("D(T) model queried at " + std::to_string(T) + " K outside [" + std::to_string(lo_) +
                           ", " + std::to_string(hi_) + "] K (no extrapolation)");
  if (!coeffs_.empty()) {
    double v = 0.0;
    for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) v = v * T + *it;
    return v;
  }
  const auto hi = std::upper_bound(x_.begin(), x_.end(), T);
  const std::size_t j = std::clamp<std::size_t>(static_cast<std::size_t>(hi - x_.begin()), 1, x_.size() - 1);
  const double w = (T - x_[j - 1]) / (x_[j] - x_[j - 1]);
  return y_[j - 1] + w * (y_[j] - y_[j - 1]);
}

void TemperatureSeries::validate() const {
  if (rows.empty()) throw InvalidParameter("temperature series is empty");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!std::isfinite(rows[i].T) || !std::isfinite(rows[i].f1) || !std::isfinite(rows[i].f2))
      throw InvalidParameter("temperature series rows must be finite");
    if (i > 0 && !(rows[i].T > rows[i - 1].T))
      throw InvalidParameter("temperature series must be strictly increasing in T");
  }
  if (!(B >= 0.0)) throw InvalidParameter("temperature series field must be >= 0");
}

QPolynomial fit_q_polynomial(std::span<const double> T, std::span<const double> q, std::array<double, 5>* err) {
  const auto n = static_cast<Eigen::Index>(T.size());
  if (T.size() != q.size()) throw InvalidParameter("polynomial fit: column lengths differ");
  if (n < 5) throw RankDeficiency("quartic fit needs at least 5 points");
  // Columns scaled by Tmax^k to keep the normal matrix well conditioned.
  const double s = std::max(std::abs(*std::max_element(T.begin(), T.end())), 1.0);
  Eigen::MatrixXd V(n, 5);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = T[static_cast<std::size_t>(i)] / s;
    double pw = 1.0;
    for (int k = 0; k < 5; ++k, pw *= u) V(i, k) = pw;
    y(i) = q[static_cast<std::size_t>(i)];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(V);
  if (qr.rank() < 5) throw RankDeficiency("quartic fit: temperatures do not determine 5 coefficients");
  const Eigen::VectorXd c = qr.solve(y);
  QPolynomial out;
  double scale = 1.0;
  for (int k = 0; k < 5; ++k, scale *= s) out.a[static_cast<std::size_t>(k)] = c(k) / scale;
  if (err) {
    const Eigen::VectorXd res = y - V * c;
    const double dof = static_cast<double>(n - 5);
    const double s2 = dof > 0 ? res.squaredNorm() / dof : 0.0;
    const Eigen::MatrixXd cov = (V.transpose() * V).inverse() * s2;
    scale = 1.0;
    for (int k = 0; k < 5; ++k, scale *= s) (*err)[static_cast<std::size_t>(k)] = std::sqrt(cov(k, k)) / scale;
  }
  return out;
}

TemperatureAnalysis analyze_temperature_series(const TemperatureSeries& series, const DModel& d_model,
                                               double gamma_e, double A_perp, double T0) {
  series.validate();
  if (!d_model.covers(series.rows.front().T, series.rows.back().T))
    throw InvalidParameter("D(T) model does not cover the temperature series (no extrapolation)");
  TemperatureAnalysis out;
  out.T0 = T0;
  std::vector<double> T, q_khz;
  for (const auto& r : series.rows) {
    const double D = d_model(r.T);
    const double mean = 0.5 * (r.f1 + r.f2);
    const double correction = A_perp * A_perp * D / (D * D - gamma_e * gamma_e * series.B * series.B);
    // Q_eff = Q + correction < 0 on the studied branch, so Q = -mean - correction.
    const double q_signed = -mean - correction;
    out.rows.push_back({r.T, mean, D, q_signed, std::abs(q_signed)});
    T.push_back(r.T);
    q_khz.push_back(1e3 * std::abs(q_signed));
  }
  out.poly = fit_q_polynomial(T, q_khz, &out.poly_stderr);
  out.slope_hz_per_k = out.poly.slope_hz_per_k(T0);
  return out;
}

ShiftRatioStats fractional_shift_ratio(const std::function<double(double)>& q_model,
                                       const std::function<double(double)>& d_model, double lo, double hi,
                                       std::size_t grid) {
  if (!(hi > lo) || grid < 2) throw InvalidParameter("fractional shift ratio needs a non-empty range");
  const double q_ref = q_model(lo), d_ref = d_model(lo);
  if (q_ref == 0.0 || d_ref == 0.0) throw InvalidParameter("fractional shift ratio: zero reference value");
  std::vector<double> ratios;
  for (std::size_t i = 1; i < grid; ++i) {
    const double T = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid - 1);
    const double dq = (q_model(T) - q_ref) / q_ref;
    const double dd = (d_model(T) - d_ref) / d_ref;
    if (dq == 0.0) continue;
    ratios.push_back(dd / dq);
  }
  if (ratios.empty()) throw InvalidParameter("fractional shift ratio: Q model shows no shift over the range");
  ShiftRatioStats st;
  st.points = ratios.size();
  double sum = 0.0;
  for (double r : ratios) sum += r;
  st.mean = sum / static_cast<double>(ratios.size());
  double var = 0.0;
  for (double r : ratios) var += (r - st.mean) * (r - st.mean);
  st.stddev = std::sqrt(var / static_cast<double>(ratios.size()));
  const auto [mn, mx] = std::minmax_element(ratios.begin(), ratios.end());
  st.min = *mn;
  st.max = *mx;
  return st;
}

}  // namespace nvsim
