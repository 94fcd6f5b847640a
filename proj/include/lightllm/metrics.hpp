#pragma once

// Evaluation metrics: CRPS (ensemble and quantile forms), forecast skill,
// Winkler score, MAPE, MSE, localization error percentiles, and the smart
// persistence baseline; plus report containers and writers.

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lightllm/heads.hpp"

namespace lightllm {

// mean|X - y| - 0.5 mean|X - X'| over all ordered member pairs.
double crps_ensemble(std::span<const double> members, double y);

// Pinball (quantile) loss of quantile q at level tau for observation y.
double pinball(double tau, double q, double y);

// 2 * mean over levels of pinball(tau, q_tau, y) for one step of dist.
double crps_from_quantiles(std::span<const double> levels, std::span<const double> quantiles,
                           double y);
// Mean over the distribution's steps against observations y[step].
double crps_from_quantiles(const ForecastDistribution& dist, std::span<const double> y);

// (1 - crps_model / crps_baseline) * 100.
double forecast_skill(double crps_model, double crps_baseline);

// Interval width plus (2/a) times the miss distance.
double winkler_score(double lower, double upper, double y, double a);
double mean_winkler(std::span<const double> lower, std::span<const double> upper,
                    std::span<const double> y, double a);

double mape(std::span<const double> actual, std::span<const double> predicted);
double mse(std::span<const double> actual, std::span<const double> predicted);

// Linear interpolation at rank p/100 * (n - 1) of the sorted values.
double percentile(std::vector<double> values, double p);

using Point2 = std::pair<double, double>;
std::vector<double> localization_percentiles(std::span<const Point2> pred,
                                             std::span<const Point2> truth,
                                             std::span<const double> ps);

// Forecast for t+1..t+horizon from time index t:
//   clear_sky[t+h] * history[t] / clear_sky[t], or history[t] when
//   clear_sky[t] <= epsilon.
// clear_sky must cover indices up to t + horizon; history up to t.
std::vector<double> smart_persistence_forecast(std::span<const double> history,
                                               std::span<const double> clear_sky,
                                               std::size_t horizon, double epsilon = 1e-6);

struct MetricReport {
  std::string task;
  std::string split;
  std::map<std::string, double> values;
  std::size_t n = 0;

  void validate() const;
};

// Rows "task,split,metric,value,n"; with a config column first when the
// reports are labeled.
void write_report_csv(std::ostream& out, const std::vector<MetricReport>& reports);
void write_labeled_csv(std::ostream& out,
                       const std::vector<std::pair<std::string, MetricReport>>& reports);
// Fixed-width table: one row per metric, one column per labeled report.
void write_report_table(std::ostream& out,
                        const std::vector<std::pair<std::string, MetricReport>>& reports);

// Shortest round-trip decimal form.
std::string format_number(double v);

}  // namespace lightllm
