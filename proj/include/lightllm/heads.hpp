#pragma once

// Output heads: location classification, quantile forecasting and scalar
// estimation.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lightllm/module.hpp"

namespace lightllm {

struct CatalogEntry {
  std::size_t id;
  double x, y;
};

struct LocationCatalog {
  std::vector<CatalogEntry> entries;

  // Unique ids and coordinates; throws on violation (and when empty).
  void validate() const;
  // Nearest entry to (x, y); ties go to the lowest id.
  std::size_t nearest(double x, double y) const;
  const CatalogEntry& by_id(std::size_t id) const;
};

// Index of the largest value; the earliest wins ties.
std::size_t argmax(std::span<const double> values);

struct LocationPrediction {
  std::vector<double> probabilities;
  std::size_t class_id;
  double x, y;
};

// Softmax over one row of logits, ordered like catalog.entries.
LocationPrediction classify_location(std::span<const double> logits,
                                     const LocationCatalog& catalog);

class ClassificationHead {
 public:
  ClassificationHead(std::size_t d_model, std::size_t classes, SeededRng& rng);
  // Mean over each sample's n tokens, then a linear map: (batch, classes).
  Tensor logits(const Tensor& tokens, std::size_t tokens_per_sample) const;
  void collect(ParamList& out, const std::string& prefix) const;

  Tensor w, b;
};

inline const std::vector<double> kDefaultQuantileLevels = {0.05, 0.25, 0.50, 0.75, 0.95};

struct ForecastDistribution {
  std::vector<double> levels;
  std::vector<std::vector<double>> values;  // [step][level]

  // Levels strictly increasing in (0, 1) and values non-decreasing per step.
  void validate() const;
  std::size_t steps() const { return values.size(); }
};

// Sorts every row ascending; differentiable (a data-dependent permutation).
Tensor sort_rows(const Tensor& x);

class QuantileHead {
 public:
  QuantileHead(std::size_t d_model, std::size_t horizon, std::vector<double> levels,
               SeededRng& rng);

  // The last `horizon` tokens of each sample, one shared linear map plus a
  // per-step bias, rows sorted: (batch * horizon, levels).
  Tensor forward(const Tensor& tokens, std::size_t tokens_per_sample) const;
  // Raw (unsorted) outputs.
  Tensor raw(const Tensor& tokens, std::size_t tokens_per_sample) const;
  void collect(ParamList& out, const std::string& prefix) const;
  const std::vector<double>& levels() const { return levels_; }
  std::size_t horizon() const { return horizon_; }

  Tensor w, b;  // b: (horizon * levels)

 private:
  std::size_t horizon_;
  std::vector<double> levels_;
};

// Rows of a (steps, levels) block as a distribution (values multiplied by unit).
ForecastDistribution to_distribution(std::span<const double> block, std::size_t steps,
                                     const std::vector<double>& levels, double unit = 1.0);

class ScalarHead {
 public:
  ScalarHead(std::size_t d_model, std::size_t outputs, SeededRng& rng);
  // Mean over each sample's tokens, then linear: (batch, outputs).
  Tensor forward(const Tensor& tokens, std::size_t tokens_per_sample) const;
  void collect(ParamList& out, const std::string& prefix) const;

  Tensor w, b;
};

}  // namespace lightllm
