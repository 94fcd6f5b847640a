#include "lightllm/solar.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace lightllm {

const std::array<double, kChannels>& channel_wavelengths() {
  static const std::array<double, kChannels> centers = [] {
    std::array<double, kChannels> c{};
    for (std::size_t i = 0; i < kChannels; ++i)
      c[i] = 410.0 + (940.0 - 410.0) * static_cast<double>(i) / (kChannels - 1);
    return c;
  }();
  return centers;
}

double channel_width() { return (940.0 - 410.0) / (kChannels - 1); }

void SolarCellSpec::validate() const {
  if (!(area > 0.0)) throw std::invalid_argument("solar cell: area must be positive");
  if (!(k > 0.0)) throw std::invalid_argument("solar cell: calibration k must be positive");
  if (!(acceptance_p >= 0.0))
    throw std::invalid_argument("solar cell: acceptance exponent must be nonnegative");
  if (absorption.empty()) throw std::invalid_argument("solar cell: empty absorption curve");
  for (double a : absorption)
    if (!(a >= 0.0 && a <= 1.0))
      throw std::invalid_argument("solar cell: absorption outside [0, 1]");
}

void SpectralReading::validate() const {
  if (intensity.size() != wavelengths.size())
    throw std::invalid_argument("spectral reading: intensity/wavelength count mismatch");
  for (double v : intensity)
    if (!(v >= 0.0)) throw std::invalid_argument("spectral reading: negative intensity");
  for (std::size_t i = 1; i < wavelengths.size(); ++i)
    if (!(wavelengths[i] > wavelengths[i - 1]))
      throw std::invalid_argument("spectral reading: wavelengths must increase");
  if (!(delta > 0.0)) throw std::invalid_argument("spectral reading: channel width must be positive");
}

SpectralReading standard_reading(std::vector<double> intensity) {
  const auto& wl = channel_wavelengths();
  return {std::move(intensity), std::vector<double>(wl.begin(), wl.end()), channel_width()};
}

double photocurrent(const SolarCellSpec& cell, const SpectralReading& reading) {
  cell.validate();
  reading.validate();
  if (cell.absorption.size() != reading.intensity.size())
    throw std::invalid_argument("photocurrent: cell has " + std::to_string(cell.absorption.size()) +
                                " channels, reading has " +
                                std::to_string(reading.intensity.size()));
  double total = 0.0;
  for (std::size_t c = 0; c < reading.intensity.size(); ++c)
    total += cell.absorption[c] * reading.intensity[c] * reading.wavelengths[c];
  return cell.k * cell.area * total * reading.delta;
}

double incidence_factor(double theta_deg, const SolarCellSpec& cell) {
  if (!(theta_deg >= 0.0 && theta_deg <= 90.0))
    throw std::invalid_argument("incidence_factor: theta must lie in [0, 90] degrees");
  if (theta_deg == 90.0 && cell.acceptance_p > 0.0) return 0.0;
  const double c = std::cos(theta_deg * std::numbers::pi / 180.0);
  return std::pow(std::max(c, 0.0), cell.acceptance_p);
}

}  // namespace lightllm
