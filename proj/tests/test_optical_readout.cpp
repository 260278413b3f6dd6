#include <doctest.h>

#include <cmath>

#include "nvsim/errors.hpp"
#include "nvsim/optical_readout.hpp"

using namespace nvsim;

TEST_CASE("contrast curve values") {
  ReadoutModel m;
  CHECK(contrast_curve(m, 485.0) == doctest::Approx(0.038).epsilon(1e-14));
  CHECK(contrast_curve(m, 485.0 + 45.0) == doctest::Approx(0.019).epsilon(1e-14));
  CHECK(contrast_curve(m, 485.0 - 45.0) == doctest::Approx(0.019).epsilon(1e-14));
  CHECK(contrast_curve(m, 503.0) == doctest::Approx(0.038 * 2025.0 / 2349.0).epsilon(1e-14));
  m.contrast.baseline = 0.005;
  CHECK(contrast_curve(m, 485.0) == doctest::Approx(0.043).epsilon(1e-14));
  m.mode = ReadoutMode::rate_model;
  CHECK_THROWS_AS(contrast_curve(m, 485.0), ContractViolation);
}

TEST_CASE("parametric brightness and signal") {
  ReadoutModel m;
  CHECK(signal_from_populations(m, {1, 0, 0}, 503.0) == 1.0);
  CHECK(signal_from_populations(m, {0, 1, 0}, 485.0) == doctest::Approx(0.962).epsilon(1e-14));
  for (double B : {450.0, 494.0, 496.0, 540.0}) {
    const auto b = brightness(m, B);
    CHECK(signal_from_populations(m, {1.0 / 3, 1.0 / 3, 1.0 / 3}, B) == doctest::Approx((b[0] + b[1] + b[2]) / 3.0));
    CHECK(b[0] == 1.0);
    for (double v : b) {
      CHECK(v > 0.0);
      CHECK(v <= 1.0);
    }
    if (B < 495.0) CHECK(b[2] > b[1]);
    if (B > 495.0) CHECK(b[2] < b[1]);
  }
  const auto at = brightness(m, 495.0);
  CHECK(at[2] == doctest::Approx(at[1]));
}

TEST_CASE("signal is affine in populations") {
  ReadoutModel m;
  const NuclearPopulations a{0.7, 0.2, 0.1}, b{0.1, 0.3, 0.6};
  for (double w : {0.0, 0.25, 0.6, 1.0}) {
    NuclearPopulations c;
    for (int i = 0; i < 3; ++i) c[i] = w * a[i] + (1 - w) * b[i];
    const double lhs = signal_from_populations(m, c, 470.0);
    const double rhs = w * signal_from_populations(m, a, 470.0) + (1 - w) * signal_from_populations(m, b, 470.0);
    CHECK(std::abs(lhs - rhs) < 1e-15);
  }
}

TEST_CASE("readout model validation") {
  ReadoutModel m;
  m.polarization = {0.5, 0.5, 0.5};
  CHECK_THROWS_AS(m.validate(), InvalidParameter);
  m = ReadoutModel{};
  m.contrast.C0 = 1.2;
  CHECK_THROWS_AS(m.validate(), InvalidParameter);
  m = ReadoutModel{};
  m.contrast.fwhm = 0.0;
  CHECK_THROWS_AS(m.validate(), InvalidParameter);
  ESLACRateParams r;
  r.isc_rate_ms1 = r.isc_rate_ms0 - 1.0;
  CHECK_THROWS_AS(r.validate(), InvalidParameter);
  r = ESLACRateParams{};
  r.pump_rate = -1.0;
  CHECK_THROWS_AS(r.validate(), InvalidParameter);
}

TEST_CASE("flip-flop mixing limits") {
  ESLACRateParams r;
  // Locate the exact anticrossing of the first channel by bisection.
  double lo = 300.0, hi = 700.0;
  const double s0 = excited_state_mixing(r, lo)[0].detuning;
  for (int i = 0; i < 100; ++i) {
    const double mid = 0.5 * (lo + hi);
    (excited_state_mixing(r, mid)[0].detuning * s0 > 0 ? lo : hi) = mid;
  }
  const auto at = excited_state_mixing(r, 0.5 * (lo + hi))[0];
  CHECK(std::abs(std::abs(at.theta) - M_PI / 4) < 1e-6);
  CHECK(at.transfer == doctest::Approx(1.0).epsilon(1e-9));

  for (double B : {0.0, 250.0, 600.0}) {
    for (const auto& c : excited_state_mixing(r, B)) {
      CHECK(std::abs(std::tan(2 * c.theta) - 2 * c.coupling / c.detuning) < 1e-9 * (1 + std::abs(2 * c.coupling / c.detuning)));
      CHECK(c.transfer == doctest::Approx(std::pow(std::sin(2 * c.theta), 2)).epsilon(1e-12));
      CHECK(c.from_ms == 0);
      CHECK(c.to_ms == -1);
    }
  }
  const auto far = excited_state_mixing(r, 0.0)[0];
  CHECK(std::abs(far.theta - far.coupling / far.detuning) < 2 * far.theta * far.theta * std::abs(far.theta));

  ESLACRateParams z = r;
  z.A_perp_es = 0.0;
  for (const auto& c : excited_state_mixing(z, 500.0)) {
    CHECK(c.theta == 0.0);
    CHECK(c.transfer == 0.0);
  }
}

TEST_CASE("rate matrix conserves probability") {
  ESLACRateParams r;
  for (double B : {0.0, 480.0, 510.0, 700.0}) {
    const auto M = rate_matrix(r, B);
    REQUIRE(M.rows() == levels::kCount);
    CHECK(M.colwise().sum().cwiseAbs().maxCoeff() < 1e-12);
    for (int i = 0; i < M.rows(); ++i)
      for (int j = 0; j < M.cols(); ++j)
        if (i != j) CHECK(M(i, j) >= 0.0);
  }
}

TEST_CASE("integration keeps populations normalized and non-negative") {
  ESLACRateParams r;
  const auto M = rate_matrix(r, 500.0);
  const auto p0 = thermal_populations();
  CHECK(p0.sum() == doctest::Approx(1.0));
  for (double t : {0.01, 0.5, 3.0, 100.0}) {
    const auto res = integrate_linear(M, p0, t, levels::kCount);
    CHECK(std::abs(res.state.sum() - 1.0) < 1e-9);
    CHECK(res.state.minCoeff() >= -1e-9);
    CHECK(res.time == doctest::Approx(t));
  }
}

TEST_CASE("pumping polarizes into |0,+1> with the default rates") {
  ESLACRateParams r;
  const auto res = pump_steady_state(r, 500.0, thermal_populations());
  CHECK(res.population_0_plus1 > 0.95);
  CHECK(std::abs(res.steady.sum() - 1.0) < 1e-9);
  CHECK(std::abs(res.relaxed.sum() - 1.0) < 1e-9);
  CHECK(res.residual < 1e-12);
  CHECK(res.nuclear[0] > 0.95);
}

TEST_CASE("no transverse excited-state hyperfine: nuclear distribution unchanged") {
  ESLACRateParams r;
  r.A_perp_es = 0.0;
  const NuclearPopulations init{0.2, 0.5, 0.3};
  PopulationVector p0 = PopulationVector::Zero(levels::kCount);
  for (int ms = -1; ms <= 1; ++ms)
    for (int mi = -1; mi <= 1; ++mi) p0(basis_index(ms, mi)) = init[static_cast<std::size_t>(1 - mi)] / 3.0;
  const auto res = pump_steady_state(r, 500.0, p0);
  for (int k = 0; k < 3; ++k) CHECK(std::abs(res.nuclear[static_cast<std::size_t>(k)] - init[static_cast<std::size_t>(k)]) < 1e-9);
}

TEST_CASE("zero pump rate freezes the populations") {
  ESLACRateParams r;
  r.pump_rate = 0.0;
  const auto p0 = ground_state_populations({0.3, 0.3, 0.4});
  const auto res = integrate_linear(rate_matrix(r, 500.0), p0, 50.0, levels::kCount);
  CHECK((res.state - p0).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("fluorescence traces") {
  ESLACRateParams r;
  const double B = 503.0;
  CHECK(windowed_signal(r, B, {1, 0, 0}, 0.5) / windowed_signal(r, B, {0, 1, 0}, 0.5) > 1.0);

  const std::vector<double> late{2000.0};
  const auto a = fluorescence_trace(r, B, {1, 0, 0}, late);
  const auto b = fluorescence_trace(r, B, {0, 1, 0}, late);
  const auto c = fluorescence_trace(r, B, {0, 0, 1}, late);
  CHECK(a.signal[0] == doctest::Approx(b.signal[0]).epsilon(1e-8));
  CHECK(a.signal[0] == doctest::Approx(c.signal[0]).epsilon(1e-8));

  ESLACRateParams flat = r;
  flat.isc_rate_ms1 = flat.isc_rate_ms0;
  const auto grid = std::vector<double>{0.0, 0.1, 0.3, 0.5, 1.0, 2.0};
  const auto x = fluorescence_trace(flat, B, {1, 0, 0}, grid);
  const auto y = fluorescence_trace(flat, B, {0, 1, 0}, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) CHECK(x.signal[i] == doctest::Approx(y.signal[i]).epsilon(1e-9));
}

TEST_CASE("rate-model contrast is single-peaked near the ESLAC") {
  ESLACRateParams r;
  std::vector<double> c;
  for (double B = 400.0; B <= 600.0 + 1e-9; B += 5.0) c.push_back(rate_model_contrast(r, B, 0.5));
  const auto peak = static_cast<std::size_t>(std::max_element(c.begin(), c.end()) - c.begin());
  CHECK(peak > 0);
  CHECK(peak < c.size() - 1);
  for (std::size_t i = 1; i <= peak; ++i) CHECK(c[i] > c[i - 1]);
  for (std::size_t i = peak + 1; i < c.size(); ++i) CHECK(c[i] < c[i - 1]);
}

TEST_CASE("rate-mode brightness") {
  ReadoutModel m;
  m.mode = ReadoutMode::rate_model;
  const auto b = brightness(m, 503.0);
  CHECK(b[0] == 1.0);
  CHECK(b[1] < 1.0);
  CHECK(b[1] > 0.0);
}
