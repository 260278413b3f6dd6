#include <doctest.h>

#include <cmath>
#include <numeric>

#include "nvsim/effective_theory.hpp"
#include "nvsim/errors.hpp"
#include "nvsim/estimation.hpp"
#include "nvsim/workbench.hpp"

using namespace nvsim;

namespace {

FitData sample(const FitModel& m, const std::vector<double>& theta, const std::vector<double>& x) {
  FitData d;
  d.x = x;
  for (double v : x) d.y.push_back(m.fn(v, theta));
  return d;
}

std::vector<double> perturb(std::vector<double> p, double frac, const FitModel& m) {
  for (std::size_t i = 0; i < p.size(); ++i)
    if (!m.is_fixed(i)) p[i] *= (i % 2 ? 1.0 + frac : 1.0 - frac);
  return p;
}

double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double e = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) e = std::max(e, std::abs(a[i] - b[i]) / std::max(std::abs(b[i]), 1e-300));
  return e;
}

FieldSeries exact_series(const SpinParameters& p, TransitionMethod method) {
  FieldSeries s;
  for (double B = 350.0; B <= 675.0 + 1e-9; B += 25.0) {
    const auto t = transition_frequencies(p, B, method);
    s.rows.push_back({B, t.f1, t.f2, std::nullopt});
  }
  return s;
}

}  // namespace

TEST_CASE("line model: exact data, exact parameters") {
  const auto m = line_model();
  const auto d = sample(m, {2.5, -0.75}, {0, 1, 2, 3, 4, 5});
  const auto r = fit_nonlinear(m, d, {1.0, 1.0});
  CHECK(r.converged);
  CHECK(r.params[0] == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(r.params[1] == doctest::Approx(-0.75).epsilon(1e-12));
  CHECK(r.cost < 1e-20);
}

TEST_CASE("underdetermined and singular problems") {
  const auto m = decaying_sinusoid_model();
  FitData d{{0.0, 1.0}, {1.0, 2.0}, {}};
  CHECK_THROWS_AS(fit_nonlinear(line_model(), FitData{{1.0}, {1.0}, {}}, {0.0, 0.0}), RankDeficiency);
  FitModel three{"three", {"a", "b", "c"}, {"", "", ""}, {}, [](double x, std::span<const double> p) {
                   return p[0] + p[1] * x + p[2] * x * x;
                 }};
  CHECK_THROWS_AS(fit_nonlinear(three, d, {0, 0, 0}), RankDeficiency);
  FitModel redundant{"redundant", {"a", "b"}, {"", ""}, {}, [](double x, std::span<const double> p) {
                       return (p[0] + p[1]) * x;
                     }};
  CHECK_THROWS_AS(fit_nonlinear(redundant, FitData{{1, 2, 3}, {1, 2, 3}, {}}, {0.3, 0.2}), RankDeficiency);
}

TEST_CASE("iteration cap gives a non-converged result") {
  const auto m = decaying_sinusoid_model();
  const auto x = linspace(0.0, 1000.0, 501);
  const auto d = sample(m, {1.0, 5e-3, 0.3, 600.0, 0.0}, x);
  FitOptions o;
  o.max_iterations = 1;
  const auto r = fit_nonlinear(m, d, {0.9, 5.2e-3, 0.2, 500.0, 0.1}, {}, o);
  CHECK_FALSE(r.converged);
}

TEST_CASE("decaying sinusoid model values") {
  CHECK(model_decaying_sinusoid(0.0, 2.0, 1e-3, 0.4, 600.0, 0.5) == doctest::Approx(0.5 + 2.0 * std::sin(0.4)));
  CHECK(model_decaying_sinusoid(600.0, 2.0, 5e-3, M_PI / 2, 600.0, 0.5) == doctest::Approx(0.5 + 2.0 / M_E));
}

TEST_CASE("noiseless round trips from a perturbed start") {
  SUBCASE("decaying sinusoid") {
    const auto m = decaying_sinusoid_model();
    const std::vector<double> theta{1.0, 5e-3, 0.3, 600.0, 0.2};
    const auto d = sample(m, theta, linspace(0.0, 1000.0, 501));
    const auto r = fit_nonlinear(m, d, perturb(theta, 0.1, m));
    CHECK(r.converged);
    CHECK(max_rel_err(r.params, theta) < 1e-6);
  }
  SUBCASE("lorentzian") {
    const auto m = lorentzian_model();
    const std::vector<double> theta{0.038, 485.0, 90.0, 0.004};
    const auto d = sample(m, theta, linspace(300.0, 700.0, 81));
    const auto r = fit_nonlinear(m, d, perturb(theta, 0.1, m));
    CHECK(max_rel_err(r.params, theta) < 1e-6);
  }
  SUBCASE("lorentzian comb") {
    const auto m = lorentzian_comb_model(2.2);
    const std::vector<double> theta{1460.0, 2.2, 0.4, -0.01, -0.02, -0.015, 1.0};
    const auto d = sample(m, theta, linspace(1452.0, 1468.0, 801));
    auto init = perturb(theta, 0.1, m);
    init[0] = theta[0] + 0.1;
    const auto r = fit_nonlinear(m, d, init);
    CHECK(max_rel_err(r.params, theta) < 1e-6);
    CHECK(r.stderr_[1] == 0.0);
  }
  SUBCASE("mean frequency") {
    const SpinParameters p;
    const auto m = mean_frequency_model(p);
    const std::vector<double> theta{p.Q, p.D, p.gamma_e, p.A_perp};
    const auto d = sample(m, theta, linspace(350.0, 675.0, 14));
    const auto r = fit_nonlinear(m, d, perturb(theta, 0.1, m));
    CHECK(max_rel_err(r.params, theta) < 1e-6);
  }
  SUBCASE("gamma_eff") {
    const SpinParameters p;
    const auto m = gamma_eff_model(p);
    const std::vector<double> theta{p.gamma_n, p.D, p.gamma_e, p.A_perp};
    const auto d = sample(m, theta, linspace(350.0, 675.0, 14));
    const auto r = fit_nonlinear(m, d, perturb(theta, 0.1, m));
    CHECK(max_rel_err(r.params, theta) < 1e-6);
  }
}

TEST_CASE("covariance is symmetric PSD with stderr on its diagonal") {
  const auto m = decaying_sinusoid_model();
  auto d = sample(m, {0.02, 5e-3, 0.1, 600.0, 0.98}, linspace(0.0, 1000.0, 501));
  Pcg32 rng(11);
  add_gaussian_noise(d.y, 2e-4, rng);
  const auto r = fit_decaying_sinusoid(d);
  CHECK((r.covariance - r.covariance.transpose()).cwiseAbs().maxCoeff() < 1e-20);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r.covariance);
  CHECK(es.eigenvalues().minCoeff() >= -1e-12 * es.eigenvalues().maxCoeff());
  for (std::size_t i = 0; i < r.params.size(); ++i)
    CHECK(r.stderr_[i] == doctest::Approx(std::sqrt(r.covariance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)))));
}

TEST_CASE("sinusoid initial estimate") {
  const auto t = linspace(0.0, 999.0, 1000);
  std::vector<double> y;
  for (double v : t) y.push_back(std::sin(2 * M_PI * 5e-3 * v));
  CHECK(std::abs(dominant_frequency(t, y) - 5e-3) <= 1.0 / 1000.0);

  std::vector<double> flat(t.size(), 0.7);
  CHECK_THROWS_AS(estimate_sinusoid_init(t, flat), FlatData);

  // Equal-amplitude tones on exact bins: the lower frequency wins.
  std::vector<double> two;
  for (double v : t) two.push_back(std::cos(2 * M_PI * 0.01 * v) + std::cos(2 * M_PI * 0.02 * v));
  CHECK(dominant_frequency(t, two) == doctest::Approx(0.01).epsilon(1e-9));
}

TEST_CASE("Ramsey fit at 1% noise: frequency within 1%") {
  const auto m = decaying_sinusoid_model();
  const auto x = linspace(0.0, 1000.0, 501);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto d = sample(m, {1.0, 5e-3, 0.0, 600.0, 0.0}, x);
    Pcg32 rng(seed);
    add_gaussian_noise(d.y, 0.01, rng);
    const auto r = fit_decaying_sinusoid(d);
    CHECK(r.converged);
    CHECK(std::abs(r.value("frequency") - 5e-3) / 5e-3 < 0.01);
  }
}

TEST_CASE("fit uncertainty is calibrated over 200 noise realizations") {
  const auto m = decaying_sinusoid_model();
  const auto x = linspace(0.0, 1000.0, 501);
  const auto clean = sample(m, {1.0, 5e-3, 0.0, 600.0, 0.0}, x);
  std::vector<double> f, se;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto d = clean;
    Pcg32 rng(1000 + seed);
    add_gaussian_noise(d.y, 0.01, rng);
    const auto r = fit_decaying_sinusoid(d);
    f.push_back(r.value("frequency"));
    se.push_back(r.error("frequency"));
  }
  const double mean = std::accumulate(f.begin(), f.end(), 0.0) / 200.0;
  double var = 0.0;
  for (double v : f) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / 199.0);
  const double se_mean = std::accumulate(se.begin(), se.end(), 0.0) / 200.0;
  CHECK(std::abs(sd / se_mean - 1.0) < 0.3);
}

TEST_CASE("Lorentzian comb model properties and ODMR round trip") {
  const std::array<double, 3> amps{-0.01, -0.01, -0.01};
  CHECK(model_lorentzian_comb(1460.0, 1460.0, 2.2, 0.3, {0.0, -0.02, 0.0}, 1.0) == doctest::Approx(0.98));
  for (double df : {0.3, 1.1, 2.2, 4.0})
    CHECK(model_lorentzian_comb(1460.0 + df, 1460.0, 2.2, 0.3, amps, 1.0) ==
          doctest::Approx(model_lorentzian_comb(1460.0 - df, 1460.0, 2.2, 0.3, amps, 1.0)).epsilon(1e-14));

  const auto grid = linspace(1454.0, 1466.0, 801);
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    FitData d;
    d.x = grid;
    for (double f : grid) d.y.push_back(model_lorentzian_comb(f, 1460.1234, 2.2, 0.3, {-0.012, -0.01, -0.008}, 1.0));
    Pcg32 rng(seed);
    add_gaussian_noise(d.y, 0.01 * 0.006, rng);
    const auto r = fit_lorentzian_comb(d, 2.2);
    CHECK(std::abs(r.value("center") - 1460.1234) < 0.01);
  }
}

TEST_CASE("field calibration") {
  CHECK(calibrate_field(4279.9, 1460.1) == doctest::Approx(503.0).epsilon(1e-5));
  CHECK(calibrate_field(2000.0, 2000.0) == 0.0);
  CHECK_THROWS_AS(calibrate_field(1460.1, 4279.9), InvalidParameter);
  const SpinParameters p;
  const auto dec = solve_ground(p, 484.0);
  const double fp = dec.energy(1, 0) - dec.energy(0, 0);
  const double fm = dec.energy(-1, 0) - dec.energy(0, 0);
  CHECK(std::abs(fp - 4226.65979) < 1e-5);
  CHECK(std::abs(fm - 1513.35869) < 1e-5);
  CHECK(std::abs(calibrate_field(fp, fm) - 484.0) < 0.05);
}

TEST_CASE("sensitivity scaling") {
  SensitivityInputs in{0.038, 0.01, 1e12, 6e-4, 1.0};
  const double base = sensitivity(in);
  CHECK(base == doctest::Approx(1.0 / (0.038 * std::sqrt(0.01 * 1e12 * 6e-4 * 1.0))));
  SensitivityInputs c2 = in;
  c2.C *= 2;
  CHECK(sensitivity(c2) / base == 0.5);
  SensitivityInputs t4 = in;
  t4.tau_s *= 4;
  CHECK(sensitivity(t4) / base == 0.5);
  SensitivityInputs c20 = in;
  c20.C = 0.02;
  CHECK(base / sensitivity(c20) == doctest::Approx(0.02 / 0.038).epsilon(1e-14));
  SensitivityInputs bad = in;
  bad.N = 0;
  CHECK_THROWS_AS(sensitivity(bad), InvalidParameter);
  bad = in;
  bad.C = 1.5;
  CHECK_THROWS_AS(sensitivity(bad), InvalidParameter);
}

TEST_CASE("field-series pipeline on exact-Hamiltonian data") {
  const SpinParameters p;
  const auto res = analyze_field_series(exact_series(p, TransitionMethod::exact), p);
  CHECK(std::abs(res.Q - p.Q) < 0.3e-3);
  CHECK(std::abs(res.gamma_n - p.gamma_n) < 0.3e-6);
  CHECK(res.q_fit.converged);
  CHECK(res.gamma_fit.converged);
}

TEST_CASE("field-series pipeline recovers perturbative data exactly") {
  const SpinParameters p;
  const auto res = analyze_field_series(exact_series(p, TransitionMethod::perturbative), p);
  CHECK(std::abs(res.Q - p.Q) <= 1e-9 * std::abs(p.Q));
  CHECK(std::abs(res.gamma_n - p.gamma_n) <= 1e-9 * p.gamma_n);

  SpinParameters z = p;
  z.A_perp = 0.0;
  const auto s = exact_series(z, TransitionMethod::perturbative);
  for (const auto& r : s.rows) CHECK(0.5 * (r.f1 + r.f2) == doctest::Approx(std::abs(z.Q)).epsilon(1e-14));
  const auto rz = analyze_field_series(s, z);
  CHECK(rz.Q == doctest::Approx(z.Q).epsilon(1e-12));
}

TEST_CASE("field-series systematics and validation") {
  const SpinParameters p;
  const auto s = exact_series(p, TransitionMethod::exact);
  const auto res = analyze_field_series(s, p, {0.3, 0.01});
  CHECK(res.Q_sys_field > 0.0);
  CHECK(res.Q_sys_a_perp > 0.0);
  CHECK(res.gamma_n_sys_field > 0.0);
  CHECK(res.Q_sys_a_perp < 1e-3);

  FieldSeries two;
  two.rows = {s.rows[0], s.rows[1]};
  CHECK_THROWS_AS(analyze_field_series(two, p), InvalidParameter);
  FieldSeries dup = s;
  dup.rows[1].B = dup.rows[0].B;
  CHECK_THROWS_AS(analyze_field_series(dup, p), InvalidParameter);
  FieldSeries near = s;
  near.rows[0].B = p.D / p.gamma_e;
  CHECK_THROWS_AS(analyze_field_series(near, p), OutOfValidityDomain);
}

TEST_CASE("published Q polynomial") {
  const auto q = QPolynomial::published();
  CHECK(q.slope_hz_per_k(297.0) == doctest::Approx(-35.085035).epsilon(1e-7));
  CHECK(q.value_khz(77.5) - q.value_khz(420.0) == doctest::Approx(9.11744).epsilon(1e-5));
  CHECK(q.positive_on(77.5, 420.0));
  for (double T : {100.0, 297.0, 400.0}) {
    const double h = 1e-3;
    const double fd = 1e3 * (q.value_khz(T + h) - q.value_khz(T - h)) / (2 * h);
    CHECK(std::abs(fd - q.slope_hz_per_k(T)) < 1e-3);
  }
}

TEST_CASE("quartic fit reproduces polynomial data") {
  const auto q = QPolynomial::published();
  std::vector<double> T, y;
  for (double t = 77.5; t <= 420.0; t += 10.0) T.push_back(t), y.push_back(q.value_khz(t));
  std::array<double, 5> se{};
  const auto fit = fit_q_polynomial(T, y, &se);
  for (double t : {80.0, 200.0, 297.0, 415.0}) CHECK(fit.value_khz(t) == doctest::Approx(q.value_khz(t)).epsilon(1e-10));
  CHECK(fit.slope_hz_per_k(297.0) == doctest::Approx(q.slope_hz_per_k(297.0)).epsilon(1e-6));
}

TEST_CASE("D model evaluation and extrapolation") {
  const auto tab = DModel::table({100.0, 200.0, 300.0}, {2877.0, 2876.0, 2870.0});
  CHECK(tab(150.0) == doctest::Approx(2876.5));
  CHECK(tab(300.0) == 2870.0);
  CHECK_THROWS_AS(tab(301.0), InvalidParameter);
  CHECK_THROWS_AS(tab(99.0), InvalidParameter);
  const auto poly = DModel::polynomial({2870.0, -0.07}, 0.0, 500.0);
  CHECK(poly(100.0) == doctest::Approx(2863.0));
  CHECK_THROWS_AS(poly(501.0), InvalidParameter);
  CHECK(DModel::constant(2870.0, 0.0, 500.0)(250.0) == 2870.0);
}

TEST_CASE("temperature pipeline") {
  SUBCASE("constant D and constant mean frequency give zero slope") {
    TemperatureSeries s;
    const double mean = 4.9426;
    for (double T = 80.0; T <= 420.0; T += 20.0) s.rows.push_back({T, mean + 0.15, mean - 0.15});
    const auto res = analyze_temperature_series(s, DModel::constant(2870.0, 0.0, 500.0));
    CHECK(std::abs(res.slope_hz_per_k) < 1e-6);
    for (const auto& r : res.rows) CHECK(r.abs_Q_mhz == doctest::Approx(res.rows[0].abs_Q_mhz).epsilon(1e-14));
  }
  SUBCASE("round trip through exact diagonalization") {
    const auto q = QPolynomial::published();
    const auto d = DModel::polynomial({2870.0 + 0.0742 * 297.0, -0.0742}, 0.0, 500.0);
    TemperatureSeries s;
    for (double T = 77.5; T <= 420.0; T += 10.0) {
      SpinParameters p;
      p.D = d(T);
      p.Q = -1e-3 * q.value_khz(T);
      const auto t = transition_frequencies(p, s.B, TransitionMethod::exact);
      s.rows.push_back({T, t.f1, t.f2});
    }
    const auto res = analyze_temperature_series(s, d);
    CHECK(std::abs(res.slope_hz_per_k - q.slope_hz_per_k(297.0)) < 0.3);
    for (const auto& r : res.rows) CHECK(std::abs(1e3 * r.abs_Q_mhz - q.value_khz(r.T)) < 0.1);
  }
  SUBCASE("validation") {
    TemperatureSeries s;
    s.rows = {{300.0, 5.0, 4.8}, {200.0, 5.0, 4.8}, {100.0, 5.0, 4.8}, {50.0, 5, 4.8}, {20.0, 5, 4.8}, {10, 5, 4.8}};
    CHECK_THROWS_AS(s.validate(), InvalidParameter);
    TemperatureSeries t;
    for (double T = 80.0; T <= 420.0; T += 20.0) t.rows.push_back({T, 5.0, 4.8});
    CHECK_THROWS_AS(analyze_temperature_series(t, DModel::constant(2870.0, 100.0, 300.0)), InvalidParameter);
  }
}

TEST_CASE("fractional shift ratio") {
  const auto q = QPolynomial::published();
  auto qf = [&](double T) { return q.value_khz(T); };
  auto scaled = [&](double T) { return 7.5 * q.value_khz(T); };
  const auto one = fractional_shift_ratio(qf, scaled, 77.5, 420.0);
  CHECK(one.mean == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(one.stddev < 1e-10);

  const double s1 = -0.02, s2 = -0.07, q_ref = 4950.0, d_ref = 2877.0;
  auto ql = [&](double T) { return q_ref + s1 * (T - 100.0); };
  auto dl = [&](double T) { return d_ref + s2 * (T - 100.0); };
  const auto lin = fractional_shift_ratio(ql, dl, 100.0, 400.0);
  CHECK(lin.mean == doctest::Approx((s2 / d_ref) / (s1 / q_ref)).epsilon(1e-10));
  CHECK(lin.stddev < 1e-9);
  CHECK_THROWS_AS(fractional_shift_ratio([](double) { return 0.0; }, dl, 100.0, 400.0), InvalidParameter);
}
