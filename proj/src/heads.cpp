#include "lightllm/heads.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <utility>

namespace lightllm {

void LocationCatalog::validate() const {
  if (entries.empty()) throw std::invalid_argument("location catalog is empty");
  std::set<std::size_t> ids;
  std::set<std::pair<double, double>> coords;
  for (const auto& e : entries) {
    if (!ids.insert(e.id).second) throw std::invalid_argument("location catalog: duplicate id");
    if (!coords.insert({e.x, e.y}).second)
      throw std::invalid_argument("location catalog: duplicate coordinate");
  }
}

std::size_t LocationCatalog::nearest(double x, double y) const {
  if (entries.empty()) throw std::invalid_argument("location catalog is empty");
  const CatalogEntry* best = nullptr;
  double best_d = 0.0;
  for (const auto& e : entries) {
    const double d = std::hypot(e.x - x, e.y - y);
    if (!best || d < best_d || (d == best_d && e.id < best->id)) {
      best = &e;
      best_d = d;
    }
  }
  return best->id;
}

const CatalogEntry& LocationCatalog::by_id(std::size_t id) const {
  for (const auto& e : entries)
    if (e.id == id) return e;
  throw std::invalid_argument("location catalog: unknown class id " + std::to_string(id));
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax of an empty list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

LocationPrediction classify_location(std::span<const double> logits,
                                     const LocationCatalog& catalog) {
  if (catalog.entries.empty()) throw std::invalid_argument("classify_location: empty catalog");
  if (logits.size() != catalog.entries.size())
    throw std::invalid_argument("classify_location: logit count does not match the catalog");
  Tensor probs = softmax(Tensor({logits.size()}, std::vector<double>(logits.begin(), logits.end())), 0);
  LocationPrediction out;
  out.probabilities.assign(probs.values().begin(), probs.values().end());
  // Ties between equal probabilities go to the lowest class id.
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    const double p = out.probabilities[i], q = out.probabilities[best];
    if (p > q || (p == q && catalog.entries[i].id < catalog.entries[best].id)) best = i;
  }
  out.class_id = catalog.entries[best].id;
  out.x = catalog.entries[best].x;
  out.y = catalog.entries[best].y;
  return out;
}

ClassificationHead::ClassificationHead(std::size_t d_model, std::size_t classes, SeededRng& rng) {
  if (classes == 0) throw std::invalid_argument("classification head: no classes");
  w = init_weight(d_model, classes, rng);
  b = init_zeros({classes});
}

Tensor ClassificationHead::logits(const Tensor& tokens, std::size_t tokens_per_sample) const {
  return linear(segment_mean(tokens, tokens_per_sample), w, b);
}

void ClassificationHead::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + "w", w});
  out.push_back({prefix + "b", b});
}

void ForecastDistribution::validate() const {
  if (levels.empty()) throw std::invalid_argument("forecast distribution: no levels");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!(levels[i] > 0.0 && levels[i] < 1.0))
      throw std::invalid_argument("forecast distribution: level outside (0, 1)");
    if (i > 0 && !(levels[i] > levels[i - 1]))
      throw std::invalid_argument("forecast distribution: levels must increase strictly");
  }
  for (const auto& row : values) {
    if (row.size() != levels.size())
      throw std::invalid_argument("forecast distribution: value/level count mismatch");
    for (std::size_t i = 1; i < row.size(); ++i)
      if (row[i] < row[i - 1])
        throw std::invalid_argument("forecast distribution: quantiles are not monotone");
  }
}

Tensor sort_rows(const Tensor& x) {
  if (x.rank() != 2) throw std::invalid_argument("sort_rows: expected a matrix");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  const auto v = x.values();
  std::vector<std::int64_t> idx(rows * cols);
  std::vector<std::size_t> order(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return v[r * cols + a] < v[r * cols + b]; });
    for (std::size_t c = 0; c < cols; ++c)
      idx[r * cols + c] = static_cast<std::int64_t>(r * cols + order[c]);
  }
  return gather(x, x.shape(), std::move(idx));
}

QuantileHead::QuantileHead(std::size_t d_model, std::size_t horizon, std::vector<double> levels,
                           SeededRng& rng)
    : horizon_(horizon), levels_(std::move(levels)) {
  if (horizon == 0) throw std::invalid_argument("quantile head: horizon must be at least 1");
  ForecastDistribution{levels_, {}}.validate();
  w = init_weight(d_model, levels_.size(), rng);
  b = init_zeros({horizon * levels_.size()});
}

Tensor QuantileHead::raw(const Tensor& tokens, std::size_t tokens_per_sample) const {
  if (tokens_per_sample < horizon_)
    throw std::invalid_argument("quantile head: fewer tokens than horizon steps");
  if (tokens.rank() != 2 || tokens.dim(0) % tokens_per_sample != 0)
    throw std::invalid_argument("quantile head: malformed token matrix");
  const std::size_t batch = tokens.dim(0) / tokens_per_sample, nl = levels_.size();
  std::vector<std::size_t> rows;
  rows.reserve(batch * horizon_);
  for (std::size_t s = 0; s < batch; ++s)
    for (std::size_t t = 0; t < horizon_; ++t)
      rows.push_back(s * tokens_per_sample + tokens_per_sample - horizon_ + t);
  Tensor y = matmul(select_rows(tokens, rows), w);  // (batch * horizon, levels)
  std::vector<std::int64_t> bias_idx(batch * horizon_ * nl);
  for (std::size_t s = 0; s < batch; ++s)
    for (std::size_t k = 0; k < horizon_ * nl; ++k)
      bias_idx[s * horizon_ * nl + k] = static_cast<std::int64_t>(k);
  return add(y, gather(b, {batch * horizon_, nl}, std::move(bias_idx)));
}

Tensor QuantileHead::forward(const Tensor& tokens, std::size_t tokens_per_sample) const {
  return sort_rows(raw(tokens, tokens_per_sample));
}

void QuantileHead::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + "w", w});
  out.push_back({prefix + "b", b});
}

ForecastDistribution to_distribution(std::span<const double> block, std::size_t steps,
                                     const std::vector<double>& levels, double unit) {
  if (block.size() != steps * levels.size())
    throw std::invalid_argument("to_distribution: block size mismatch");
  ForecastDistribution dist{levels, {}};
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<double> row(levels.size());
    for (std::size_t l = 0; l < levels.size(); ++l) row[l] = unit * block[t * levels.size() + l];
    dist.values.push_back(std::move(row));
  }
  return dist;
}

ScalarHead::ScalarHead(std::size_t d_model, std::size_t outputs, SeededRng& rng) {
  if (outputs == 0) throw std::invalid_argument("scalar head: no outputs");
  w = init_weight(d_model, outputs, rng);
  b = init_zeros({outputs});
}

Tensor ScalarHead::forward(const Tensor& tokens, std::size_t tokens_per_sample) const {
  return linear(segment_mean(tokens, tokens_per_sample), w, b);
}

void ScalarHead::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + "w", w});
  out.push_back({prefix + "b", b});
}

}  // namespace lightllm
