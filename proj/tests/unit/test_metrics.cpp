#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "lightllm/metrics.hpp"
#include "lightllm/rng.hpp"
#include "lightllm/solar.hpp"

using namespace lightllm;

namespace {

// Integral of (F(z) - 1{z >= y})^2 over the real line for the empirical CDF
// F of `members`, summed exactly over the pieces between breakpoints.
double crps_integral(std::vector<double> members, double y) {
  std::vector<double> knots = members;
  knots.push_back(y);
  std::sort(knots.begin(), knots.end());
  std::sort(members.begin(), members.end());
  const double m = static_cast<double>(members.size());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const double mid = 0.5 * (knots[i] + knots[i + 1]);
    const double f = static_cast<double>(std::upper_bound(members.begin(), members.end(), mid) -
                                         members.begin()) / m;
    const double h = mid >= y ? 1.0 : 0.0;
    total += (f - h) * (f - h) * (knots[i + 1] - knots[i]);
  }
  return total;
}

}  // namespace

TEST_SUITE("solar") {
  TEST_CASE("photocurrent examples") {
    SolarCellSpec cell{1.0, std::vector<double>(kChannels, 0.5), 1.0, 1.0};
    CHECK(photocurrent(cell, standard_reading(std::vector<double>(kChannels, 0.0))) == 0.0);
    SolarCellSpec one{1.0, {0.5}, 1.0, 1.0};
    CHECK(photocurrent(one, SpectralReading{{2.0}, {500.0}, 10.0}) == doctest::Approx(5000.0));
    CHECK_THROWS_AS(photocurrent(cell, SpectralReading{{2.0}, {500.0}, 10.0}), std::invalid_argument);
  }

  TEST_CASE("photocurrent is linear and channel-permutation invariant") {
    SeededRng rng(2, 0);
    SolarCellSpec cell{3.5, {}, 1.0, 0.01};
    std::vector<double> intensity;
    for (std::size_t c = 0; c < kChannels; ++c) {
      cell.absorption.push_back(rng.uniform());
      intensity.push_back(rng.uniform(0, 5));
    }
    const SpectralReading r = standard_reading(intensity);
    const double base = photocurrent(cell, r);
    SpectralReading doubled = r;
    for (double& v : doubled.intensity) v *= 2.0;
    CHECK(photocurrent(cell, doubled) == doctest::Approx(2.0 * base).epsilon(1e-14));
    SolarCellSpec bigger = cell;
    bigger.area *= 3.0;
    CHECK(photocurrent(bigger, r) == doctest::Approx(3.0 * base).epsilon(1e-14));
    // Reverse channels and wavelengths together: the sum is unchanged. The
    // reading then has decreasing wavelengths, so evaluate the sum directly.
    double reversed = 0.0;
    for (std::size_t c = kChannels; c-- > 0;)
      reversed += cell.absorption[c] * r.intensity[c] * r.wavelengths[c];
    CHECK(cell.k * cell.area * reversed * r.delta == doctest::Approx(base).epsilon(1e-14));
  }

  TEST_CASE("incidence factor") {
    SolarCellSpec cell{1.0, {0.5}, 1.0, 1.0};
    CHECK(incidence_factor(0, cell) == 1.0);
    CHECK(incidence_factor(90, cell) == 0.0);
    CHECK(incidence_factor(60, cell) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(incidence_factor(-1, cell), std::invalid_argument);
    CHECK_THROWS_AS(incidence_factor(91, cell), std::invalid_argument);
    for (double p : {0.5, 1.0, 2.0, 4.0}) {
      cell.acceptance_p = p;
      double prev = 1.0;
      for (double t = 0; t <= 90.0; t += 0.5) {
        const double f = incidence_factor(t, cell);
        REQUIRE(f <= prev);
        REQUIRE(f >= 0.0);
        prev = f;
      }
    }
  }

  TEST_CASE("channel grid") {
    const auto& wl = channel_wavelengths();
    CHECK(wl.front() == 410.0);
    CHECK(wl.back() == doctest::Approx(940.0));
    CHECK(channel_width() == doctest::Approx(530.0 / 17));
  }
}

TEST_SUITE("metrics") {
  TEST_CASE("crps ensemble examples") {
    const double one[] = {3.0};
    CHECK(crps_ensemble(one, 1.0) == 2.0);
    const double pair[] = {0.0, 2.0};
    CHECK(crps_ensemble(pair, 1.0) == doctest::Approx(0.5));
    const double same[] = {1.5, 1.5, 1.5};
    CHECK(crps_ensemble(same, 1.5) == 0.0);
    CHECK_THROWS_AS(crps_ensemble(std::vector<double>{}, 1.0), std::invalid_argument);
  }

  TEST_CASE("crps ensemble matches the integral form") {
    SeededRng rng(6, 0);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> members(1 + rng.below(8));
      for (double& m : members) m = rng.normal(0, 3);
      const double y = rng.normal(0, 3);
      const double want = crps_integral(members, y);
      REQUIRE(std::abs(crps_ensemble(members, y) - want) <= 1e-6 * std::max(1e-12, want));
    }
  }

  TEST_CASE("crps from quantiles") {
    const double levels[] = {0.05, 0.25, 0.5, 0.75, 0.95};
    const double at_y[] = {2, 2, 2, 2, 2};
    CHECK(crps_from_quantiles(levels, at_y, 2.0) == 0.0);
    const double med[] = {0.5}, q[] = {0.0};
    CHECK(crps_from_quantiles(med, q, 2.0) == doctest::Approx(2.0));
    const double bad[] = {1, 0, 2, 3, 4};
    CHECK_THROWS_AS(crps_from_quantiles(levels, bad, 2.0), std::invalid_argument);
    // Tightening the interval around a median at y lowers the score.
    double prev = 1e300;
    for (double w = 3.0; w >= 0.0; w -= 0.25) {
      const double qs[] = {1 - w, 1 - w / 2, 1, 1 + w / 2, 1 + w};
      const double s = crps_from_quantiles(levels, qs, 1.0);
      REQUIRE(s < prev);
      prev = s;
    }
  }

  TEST_CASE("forecast skill against printed table values") {
    struct Row {
      double model, baseline, printed;
    };
    const Row rows[] = {{2.70, 2.89, 6.6},  {2.49, 2.89, 13.8}, {2.27, 2.89, 21.6},
                        {1.92, 2.89, 33.7}, {3.09, 3.67, 15.8}, {2.81, 3.67, 23.4},
                        {2.67, 3.67, 27.3}, {2.52, 3.67, 31.4}};
    for (const Row& r : rows) CHECK(std::abs(forecast_skill(r.model, r.baseline) - r.printed) <= 0.2);
    CHECK(forecast_skill(2.89, 2.89) == 0.0);
    CHECK_THROWS_AS(forecast_skill(1.0, 0.0), std::invalid_argument);
  }

  TEST_CASE("winkler score") {
    CHECK(winkler_score(0, 1, 0.5, 0.1) == 1.0);
    CHECK(winkler_score(0, 1, 2, 0.1) == doctest::Approx(21.0));
    CHECK(winkler_score(0, 1, -1, 0.1) == doctest::Approx(21.0));
    CHECK(winkler_score(0, 1, 0, 0.1) == 1.0);
    CHECK_THROWS_AS(winkler_score(1, 0, 0.5, 0.1), std::invalid_argument);
    SeededRng rng(8, 0);
    for (int i = 0; i < 200; ++i) {
      const double l = rng.normal(), u = l + rng.uniform(0, 2), y = rng.normal(0, 2);
      const double s = winkler_score(l, u, y, 0.1);
      REQUIRE(s >= u - l);
      REQUIRE((s == u - l) == (y >= l && y <= u));
    }
  }

  TEST_CASE("mape against printed table values") {
    const double blue_actual[] = {0.596, 0.547, 0.097}, blue_pred[] = {0.335, 0.306, 0.141};
    const double green_actual[] = {0.459, 0.523, 0.348}, green_pred[] = {0.249, 0.242, 0.517};
    const double first_a[] = {0.596}, first_p[] = {0.335};
    CHECK(mape(first_a, first_p) == doctest::Approx(43.79).epsilon(1e-3));
    const double blue = mape(blue_actual, blue_pred), green = mape(green_actual, green_pred);
    CHECK(std::abs(blue - 44.31) <= 0.15);
    CHECK(std::abs(green - 49.34) <= 0.15);
    CHECK(std::abs(0.5 * (blue + green) - 46.83) <= 0.15);
    CHECK(mape(blue_actual, blue_actual) == 0.0);
    const double zero[] = {0.0, 1.0}, any[] = {1.0, 1.0};
    CHECK_THROWS_WITH_AS(mape(zero, any), "mape: actual value at index 0 is zero", std::invalid_argument);
  }

  TEST_CASE("mse") {
    const double a[] = {1, 2}, b[] = {2, 4}, z[] = {0}, t[] = {3};
    CHECK(mse(a, a) == 0.0);
    CHECK(mse(z, t) == 9.0);
    CHECK(mse(a, b) == 2.5);
    CHECK_THROWS_AS(mse(a, z), std::invalid_argument);
  }

  TEST_CASE("metrics are permutation invariant and nonnegative") {
    SeededRng rng(9, 0);
    std::vector<double> a(20), p(20);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = rng.uniform(0.5, 2);
      p[i] = rng.uniform(0.5, 2);
    }
    const double m1 = mape(a, p), s1 = mse(a, p);
    std::vector<std::size_t> order(a.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = (i * 7) % order.size();
    std::vector<double> a2, p2;
    for (std::size_t i : order) a2.push_back(a[i]), p2.push_back(p[i]);
    CHECK(mape(a2, p2) == doctest::Approx(m1).epsilon(1e-14));
    CHECK(mse(a2, p2) == doctest::Approx(s1).epsilon(1e-14));
    CHECK(m1 > 0);
    CHECK(s1 > 0);
  }

  TEST_CASE("localization percentiles") {
    const Point2 truth[] = {{0, 0}, {1, 1}, {2, 2}};
    const double ps[] = {10, 50, 90};
    for (double v : localization_percentiles(truth, truth, ps)) CHECK(v == 0.0);
    const Point2 pred[] = {{1, 0}, {1, 3}, {5, 2}};  // errors 1, 2, 3
    const double median[] = {50};
    CHECK(localization_percentiles(pred, truth, median)[0] == 2.0);
    CHECK(percentile({0, 10}, 75) == 7.5);
    CHECK_THROWS_AS(localization_percentiles(std::span<const Point2>{}, std::span<const Point2>{}, ps),
                    std::invalid_argument);
  }

  TEST_CASE("smart persistence") {
    const double hist[] = {3, 5};
    const double flat[] = {7, 7, 7, 7};
    for (double v : smart_persistence_forecast(hist, flat, 2)) CHECK(v == 5.0);
    const double y_eq[] = {1, 2}, cs[] = {1, 2, 3, 4};
    const auto f = smart_persistence_forecast(y_eq, cs, 2);
    CHECK(f[0] == 3.0);
    CHECK(f[1] == 4.0);
    const double h1[] = {1}, c1[] = {2, 4};
    CHECK(smart_persistence_forecast(h1, c1, 1)[0] == 2.0);
    const double night[] = {0, 4};
    CHECK(smart_persistence_forecast(h1, night, 1)[0] == 1.0);
    CHECK_THROWS_AS(smart_persistence_forecast(h1, cs, 1), std::invalid_argument);
  }

  TEST_CASE("report writers") {
    MetricReport r{"localization", "seen", {{"median_m", 1.25}, {"p90_m", 2.5}}, 40};
    std::ostringstream csv;
    write_report_csv(csv, {r});
    CHECK(csv.str() == "task,split,metric,value,n\nlocalization,seen,median_m,1.25,40\n"
                       "localization,seen,p90_m,2.5,40\n");
    std::ostringstream table;
    write_report_table(table, {{"Normal", r}, {"w/o KG", r}});
    CHECK(table.str().find("median_m") != std::string::npos);
    CHECK(table.str().find("1.2500") != std::string::npos);
    MetricReport bad{"x", "seen", {{"m", std::nan("")}}, 1};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  }
}
