#include "lightllm/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace lightllm {

double crps_ensemble(std::span<const double> members, double y) {
  if (members.empty()) throw std::invalid_argument("crps_ensemble: empty ensemble");
  const double m = static_cast<double>(members.size());
  double spread_to_obs = 0.0, spread = 0.0;
  for (double x : members) spread_to_obs += std::abs(x - y);
  for (double x : members)
    for (double x2 : members) spread += std::abs(x - x2);
  return spread_to_obs / m - 0.5 * spread / (m * m);
}

double pinball(double tau, double q, double y) {
  return y >= q ? tau * (y - q) : (1.0 - tau) * (q - y);
}

double crps_from_quantiles(std::span<const double> levels, std::span<const double> quantiles,
                           double y) {
  if (levels.empty() || levels.size() != quantiles.size())
    throw std::invalid_argument("crps_from_quantiles: level/quantile count mismatch");
  for (std::size_t i = 1; i < quantiles.size(); ++i)
    if (quantiles[i] < quantiles[i - 1])
      throw std::invalid_argument("crps_from_quantiles: quantiles are not monotone");
  double total = 0.0;
  for (std::size_t i = 0; i < levels.size(); ++i) total += pinball(levels[i], quantiles[i], y);
  return 2.0 * total / static_cast<double>(levels.size());
}

double crps_from_quantiles(const ForecastDistribution& dist, std::span<const double> y) {
  dist.validate();
  if (dist.steps() == 0 || y.size() != dist.steps())
    throw std::invalid_argument("crps_from_quantiles: observation count mismatch");
  double total = 0.0;
  for (std::size_t t = 0; t < dist.steps(); ++t)
    total += crps_from_quantiles(dist.levels, dist.values[t], y[t]);
  return total / static_cast<double>(dist.steps());
}

double forecast_skill(double crps_model, double crps_baseline) {
  if (!(crps_baseline > 0.0)) throw std::invalid_argument("forecast_skill: baseline CRPS must be positive");
  return (1.0 - crps_model / crps_baseline) * 100.0;
}

double winkler_score(double lower, double upper, double y, double a) {
  if (lower > upper) throw std::invalid_argument("winkler_score: lower bound exceeds upper bound");
  if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("winkler_score: a must lie in (0, 1)");
  const double width = upper - lower;
  if (y < lower) return width + (2.0 / a) * (lower - y);
  if (y > upper) return width + (2.0 / a) * (y - upper);
  return width;
}

double mean_winkler(std::span<const double> lower, std::span<const double> upper,
                    std::span<const double> y, double a) {
  if (lower.empty() || lower.size() != upper.size() || lower.size() != y.size())
    throw std::invalid_argument("mean_winkler: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) total += winkler_score(lower[i], upper[i], y[i], a);
  return total / static_cast<double>(y.size());
}

double mape(std::span<const double> actual, std::span<const double> predicted) {
  if (actual.empty() || actual.size() != predicted.size())
    throw std::invalid_argument("mape: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (actual[i] == 0.0)
      throw std::invalid_argument("mape: actual value at index " + std::to_string(i) + " is zero");
    total += std::abs(actual[i] - predicted[i]) / std::abs(actual[i]);
  }
  return total / static_cast<double>(actual.size()) * 100.0;
}

double mse(std::span<const double> actual, std::span<const double> predicted) {
  if (actual.empty() || actual.size() != predicted.size())
    throw std::invalid_argument("mse: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double d = actual[i] - predicted[i];
    total += d * d;
  }
  return total / static_cast<double>(actual.size());
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile: empty input");
  if (!(p >= 0.0 && p <= 100.0)) throw std::invalid_argument("percentile: p outside [0, 100]");
  std::sort(values.begin(), values.end());
  const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<double> localization_percentiles(std::span<const Point2> pred,
                                             std::span<const Point2> truth,
                                             std::span<const double> ps) {
  if (pred.empty()) throw std::invalid_argument("localization_percentiles: empty input");
  if (pred.size() != truth.size())
    throw std::invalid_argument("localization_percentiles: length mismatch");
  std::vector<double> errors(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i)
    errors[i] = std::hypot(pred[i].first - truth[i].first, pred[i].second - truth[i].second);
  std::sort(errors.begin(), errors.end());
  std::vector<double> out;
  for (double p : ps) out.push_back(percentile(errors, p));
  return out;
}

std::vector<double> smart_persistence_forecast(std::span<const double> history,
                                               std::span<const double> clear_sky,
                                               std::size_t horizon, double epsilon) {
  if (history.empty()) throw std::invalid_argument("smart persistence: empty history");
  const std::size_t t = history.size() - 1;
  if (clear_sky.size() != t + 1 + horizon)
    throw std::invalid_argument("smart persistence: clear-sky series must cover history + horizon");
  std::vector<double> out(horizon);
  for (std::size_t h = 1; h <= horizon; ++h)
    out[h - 1] = clear_sky[t] <= epsilon ? history[t] : clear_sky[t + h] * history[t] / clear_sky[t];
  return out;
}

void MetricReport::validate() const {
  if (n == 0) throw std::invalid_argument("metric report: no samples");
  for (const auto& [name, v] : values)
    if (!std::isfinite(v)) throw std::invalid_argument("metric report: '" + name + "' is not finite");
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_report_csv(std::ostream& out, const std::vector<MetricReport>& reports) {
  out << "task,split,metric,value,n\n";
  for (const auto& r : reports)
    for (const auto& [metric, v] : r.values)
      out << r.task << ',' << r.split << ',' << metric << ',' << format_number(v) << ',' << r.n
          << '\n';
}

void write_labeled_csv(std::ostream& out,
                       const std::vector<std::pair<std::string, MetricReport>>& reports) {
  out << "config,task,split,metric,value,n\n";
  for (const auto& [label, r] : reports)
    for (const auto& [metric, v] : r.values)
      out << label << ',' << r.task << ',' << r.split << ',' << metric << ','
          << format_number(v) << ',' << r.n << '\n';
}

void write_report_table(std::ostream& out,
                        const std::vector<std::pair<std::string, MetricReport>>& reports) {
  std::vector<std::string> metrics;
  std::set<std::string> seen;
  for (const auto& [label, r] : reports)
    for (const auto& [metric, v] : r.values)
      if (seen.insert(metric).second) metrics.push_back(metric);
  std::size_t w0 = 6;
  for (const auto& m : metrics) w0 = std::max(w0, m.size());
  std::size_t w = 10;
  for (const auto& [label, r] : reports) w = std::max(w, label.size());

  out << std::left << std::setw(static_cast<int>(w0)) << "metric";
  for (const auto& [label, r] : reports) out << "  " << std::right << std::setw(static_cast<int>(w)) << label;
  out << '\n' << std::string(w0 + reports.size() * (w + 2), '-') << '\n';
  for (const auto& m : metrics) {
    out << std::left << std::setw(static_cast<int>(w0)) << m;
    for (const auto& [label, r] : reports) {
      const auto it = r.values.find(m);
      std::ostringstream cell;
      if (it != r.values.end()) cell << std::fixed << std::setprecision(4) << it->second;
      else cell << "-";
      out << "  " << std::right << std::setw(static_cast<int>(w)) << cell.str();
    }
    out << '\n';
  }
}

}  // namespace lightllm
