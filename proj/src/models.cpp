#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>

#include "nvsim/effective_theory.hpp"
#include "nvsim/errors.hpp"
#include "nvsim/estimation.hpp"

namespace nvsim {

namespace {
constexpr double kTwoPi = 2.0 * M_PI;
}

double model_decaying_sinusoid(double t, double A, double f, double phase, double T2, double offset) {
  return offset + A * std::sin(kTwoPi * f * t + phase) * std::exp(-t / T2);
}

double model_lorentzian_comb(double f, double center, double spacing, double fwhm,
                             const std::array<double, 3>& amp, double offset) {
  const double hw2 = 0.25 * fwhm * fwhm;
  double sum = offset;
  for (int k = 0; k < 3; ++k) {
    const double d = f - (center + (k - 1) * spacing);
    sum += amp[k] * hw2 / (d * d + hw2);
  }
  return sum;
}

FitModel line_model() {
  return {"line", {"intercept", "slope"}, {"y", "y/x"}, {},
          [](double x, std::span<const double> p) { return p[0] + p[1] * x; }};
}

FitModel decaying_sinusoid_model() {
  return {"decaying_sinusoid",
          {"amplitude", "frequency", "phase", "decay_time", "offset"},
          {"signal", "MHz", "rad", "us", "signal"},
          {},
          [](double t, std::span<const double> p) { return model_decaying_sinusoid(t, p[0], p[1], p[2], p[3], p[4]); }};
}

FitModel lorentzian_comb_model(double spacing) {
  return {"lorentzian_comb",
          {"center", "spacing", "fwhm", "amp_low", "amp_mid", "amp_high", "offset"},
          {"MHz", "MHz", "MHz", "signal", "signal", "signal", "signal"},
          {{"spacing", spacing}},
          [](double f, std::span<const double> p) {
            return model_lorentzian_comb(f, p[0], p[1], p[2], {p[3], p[4], p[5]}, p[6]);
          }};
}

FitModel lorentzian_model() {
  return {"lorentzian",
          {"amplitude", "center", "fwhm", "baseline"},
          {"signal", "x", "x", "signal"},
          {},
          [](double x, std::span<const double> p) {
            const double hw2 = 0.25 * p[2] * p[2];
            const double d = x - p[1];
            return p[3] + p[0] * hw2 / (d * d + hw2);
          }};
}

namespace {

SpinParameters with(const SpinParameters& base, std::span<const double> p) {
  SpinParameters s = base;
  s.D = p[1];
  s.gamma_e = p[2];
  s.A_perp = p[3];
  return s;
}

}  // namespace

FitModel mean_frequency_model(const SpinParameters& fixed) {
  return {"mean_frequency",
          {"Q", "D", "gamma_e", "A_perp"},
          {"MHz", "MHz", "MHz/G", "MHz"},
          {{"D", fixed.D}, {"gamma_e", fixed.gamma_e}, {"A_perp", fixed.A_perp}},
          [fixed](double B, std::span<const double> p) {
            SpinParameters s = with(fixed, p);
            s.Q = p[0];
            return std::abs(effective_params_unchecked(s, B).Q_eff);
          }};
}

FitModel gamma_eff_model(const SpinParameters& fixed) {
  return {"gamma_eff",
          {"gamma_n", "D", "gamma_e", "A_perp"},
          {"MHz/G", "MHz", "MHz/G", "MHz"},
          {{"D", fixed.D}, {"gamma_e", fixed.gamma_e}, {"A_perp", fixed.A_perp}},
          [fixed](double B, std::span<const double> p) {
            SpinParameters s = with(fixed, p);
            s.gamma_n = p[0];
            return effective_params_unchecked(s, B).gamma_eff;
          }};
}

// ---------------------------------------------------------------------------

namespace {

void require_samples(std::span<const double> x, std::span<const double> y, std::size_t min_n) {
  if (x.size() != y.size()) throw InvalidParameter("abscissa and signal lengths differ");
  if (x.size() < min_n) throw InvalidParameter("at least " + std::to_string(min_n) + " samples required");
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  const double scale = std::max(1.0, std::max(std::abs(*lo), std::abs(*hi)));
  if (*hi - *lo <= 1e-14 * scale) throw FlatData("signal is constant; nothing to fit");
}

double mean_of(std::span<const double> y) { return std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size()); }

double dft_magnitude(std::span<const double> t, std::span<const double> y, double mean, double f) {
  std::complex<double> acc = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) acc += (y[i] - mean) * std::polar(1.0, -kTwoPi * f * t[i]);
  return std::abs(acc);
}

double median_of(std::span<const double> y) {
  std::vector<double> v(y.begin(), y.end());
  std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

}  // namespace

double dominant_frequency(std::span<const double> t, std::span<const double> y) {
  require_samples(t, y, 8);
  const std::size_t n = t.size();
  const double span = t.back() - t.front();
  if (!(span > 0.0)) throw InvalidParameter("abscissa must be increasing");
  const double df = 1.0 / (span * static_cast<double>(n) / static_cast<double>(n - 1));
  const double mean = mean_of(y);
  double best = -1.0, best_f = df;
  for (std::size_t k = 1; k <= n / 2; ++k) {
    const double f = static_cast<double>(k) * df;
    const double mag = dft_magnitude(t, y, mean, f);
    // Strictly larger wins, so equal peaks resolve to the lower frequency.
    if (mag > best * (1.0 + 1e-9)) {
      best = mag;
      best_f = f;
    }
  }
  return best_f;
}

SinusoidGuess estimate_sinusoid_init(std::span<const double> t, std::span<const double> y) {
  const double f_bin = dominant_frequency(t, y);
  const std::size_t n = t.size();
  const double span = t.back() - t.front();
  const double df = 1.0 / (span * static_cast<double>(n) / static_cast<double>(n - 1));
  const double mean = mean_of(y);

  // Refine within one bin on a finer grid.
  double f0 = f_bin, best = -1.0;
  for (int k = -32; k <= 32; ++k) {
    const double f = f_bin + df * k / 32.0;
    if (f <= 0.0) continue;
    const double mag = dft_magnitude(t, y, mean, f);
    if (mag > best) {
      best = mag;
      f0 = f;
    }
  }

  // Log-envelope slope from per-segment half ranges, one segment per ~2 periods.
  const double period = 1.0 / f0;
  const auto n_seg = std::clamp<std::size_t>(static_cast<std::size_t>(span / (2.0 * period)), 2, 16);
  std::vector<double> seg_t, seg_logamp;
  for (std::size_t s = 0; s < n_seg; ++s) {
    const double a = t.front() + span * static_cast<double>(s) / static_cast<double>(n_seg);
    const double b = t.front() + span * static_cast<double>(s + 1) / static_cast<double>(n_seg);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < n; ++i)
      if (t[i] >= a && t[i] <= b) {
        lo = std::min(lo, y[i]);
        hi = std::max(hi, y[i]);
      }
    if (hi > lo) {
      seg_t.push_back(0.5 * (a + b));
      seg_logamp.push_back(std::log(0.5 * (hi - lo)));
    }
  }
  double T2 = 10.0 * span;
  if (seg_t.size() >= 2) {
    const double mt = std::accumulate(seg_t.begin(), seg_t.end(), 0.0) / static_cast<double>(seg_t.size());
    const double ml = std::accumulate(seg_logamp.begin(), seg_logamp.end(), 0.0) / static_cast<double>(seg_t.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < seg_t.size(); ++i) {
      sxy += (seg_t[i] - mt) * (seg_logamp[i] - ml);
      sxx += (seg_t[i] - mt) * (seg_t[i] - mt);
    }
    const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
    if (slope < 0.0) T2 = std::min(-1.0 / slope, 10.0 * span);
  }

  // Amplitude and phase by linear least squares at fixed f0, T2.
  Eigen::MatrixXd M(n, 3);
  Eigen::VectorXd v(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double env = std::exp(-t[i] / T2);
    M(static_cast<Eigen::Index>(i), 0) = env * std::sin(kTwoPi * f0 * t[i]);
    M(static_cast<Eigen::Index>(i), 1) = env * std::cos(kTwoPi * f0 * t[i]);
    M(static_cast<Eigen::Index>(i), 2) = 1.0;
    v(static_cast<Eigen::Index>(i)) = y[i];
  }
  const Eigen::Vector3d c = M.colPivHouseholderQr().solve(v);
  SinusoidGuess g{};
  g.A = std::hypot(c(0), c(1));
  g.phase = std::atan2(c(1), c(0));
  g.f = f0;
  g.T2 = T2;
  g.offset = c(2);
  if (!(g.A > 0.0)) {
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    g.A = 0.5 * (*hi - *lo);
  }
  return g;
}

std::vector<std::vector<double>> estimate_comb_inits(std::span<const double> f, std::span<const double> y,
                                                     double spacing) {
  require_samples(f, y, 7);
  const double base = median_of(y);
  std::size_t k = 0;
  double dev = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (std::abs(y[i] - base) > std::abs(dev)) {
      dev = y[i] - base;
      k = i;
    }
  // Half-depth width of the strongest feature.
  std::size_t l = k, r = k;
  while (l > 0 && std::abs(y[l] - base) > 0.5 * std::abs(dev)) --l;
  while (r + 1 < y.size() && std::abs(y[r] - base) > 0.5 * std::abs(dev)) ++r;
  double fwhm = f[r] - f[l];
  if (!(fwhm > 0.0)) fwhm = spacing / 5.0;
  fwhm = std::min(fwhm, spacing);

  std::vector<std::vector<double>> inits;
  for (int line = -1; line <= 1; ++line) {
    std::array<double, 3> amp{0.1 * dev, 0.1 * dev, 0.1 * dev};
    amp[static_cast<std::size_t>(line + 1)] = dev;
    inits.push_back({f[k] - line * spacing, spacing, fwhm, amp[0], amp[1], amp[2], base});
  }
  return inits;
}

std::vector<double> estimate_lorentzian_init(std::span<const double> x, std::span<const double> y) {
  require_samples(x, y, 4);
  const double base = median_of(y);
  std::size_t k = 0;
  double dev = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (std::abs(y[i] - base) > std::abs(dev)) {
      dev = y[i] - base;
      k = i;
    }
  const double floor = dev > 0 ? *std::min_element(y.begin(), y.end()) : *std::max_element(y.begin(), y.end());
  const double amp = y[k] - floor;
  std::size_t l = k, r = k;
  while (l > 0 && std::abs(y[l] - floor) > 0.5 * std::abs(amp)) --l;
  while (r + 1 < y.size() && std::abs(y[r] - floor) > 0.5 * std::abs(amp)) ++r;
  double fwhm = x[r] - x[l];
  if (!(fwhm > 0.0)) fwhm = (x.back() - x.front()) / 4.0;
  return {amp, x[k], fwhm, floor};
}

FitResult fit_decaying_sinusoid(const FitData& data, const FitOptions& opts) {
  const auto g = estimate_sinusoid_init(data.x, data.y);
  FitBounds b;
  const double inf = std::numeric_limits<double>::infinity();
  b.lower = {-inf, 0.0, -inf, 1e-9, -inf};
  b.upper = {inf, inf, inf, inf, inf};
  auto res = fit_nonlinear(decaying_sinusoid_model(), data, g.as_vector(), b, opts);
  // Canonical sign: positive amplitude, phase in (-pi, pi].
  if (res.params[0] < 0.0) {
    res.params[0] = -res.params[0];
    res.params[2] += M_PI;
    res.covariance.row(0) *= -1.0;
    res.covariance.col(0) *= -1.0;
  }
  res.params[2] = std::remainder(res.params[2], 2.0 * M_PI);
  return res;
}

FitResult fit_lorentzian_comb(const FitData& data, double spacing, const FitOptions& opts) {
  std::optional<FitResult> best;
  for (const auto& init : estimate_comb_inits(data.x, data.y, spacing)) {
    try {
      FitBounds b;
      const double inf = std::numeric_limits<double>::infinity();
      b.lower = {-inf, -inf, 1e-9, -inf, -inf, -inf, -inf};
      b.upper = {inf, inf, inf, inf, inf, inf, inf};
      auto r = fit_nonlinear(lorentzian_comb_model(spacing), data, init, b, opts);
      if (!best || r.cost < best->cost) best = std::move(r);
    } catch (const RankDeficiency&) {
    }
  }
  if (!best) throw RankDeficiency("triple-Lorentzian fit failed from every starting point");
  return *best;
}

FitResult fit_lorentzian(const FitData& data, const FitOptions& opts) {
  FitBounds b;
  const double inf = std::numeric_limits<double>::infinity();
  b.lower = {-inf, -inf, 1e-12, -inf};
  b.upper = {inf, inf, inf, inf};
  return fit_nonlinear(lorentzian_model(), data, estimate_lorentzian_init(data.x, data.y), b, opts);
}

}  // namespace nvsim
