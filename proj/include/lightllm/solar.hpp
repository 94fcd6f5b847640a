#pragma once

// Discrete photocurrent model and angular response of a solar cell.

#include <array>
#include <cstddef>
#include <vector>

namespace lightllm {

inline constexpr std::size_t kChannels = 18;

// Channel centers (nm), uniformly spaced from 410 to 940, and their common
// width, used for the midpoint rule.
const std::array<double, kChannels>& channel_wavelengths();
double channel_width();

struct SolarCellSpec {
  double area = 1.0;               // cm^2
  std::vector<double> absorption;  // per channel, in [0, 1]
  double acceptance_p = 1.0;       // cos^p angular falloff
  double k = 1.0;                  // integral units -> mA

  void validate() const;
};

struct SpectralReading {
  std::vector<double> intensity;
  std::vector<double> wavelengths;
  double delta = 0.0;

  void validate() const;
};

// Reading on the standard 18-channel grid.
SpectralReading standard_reading(std::vector<double> intensity);

// k * A * sum_c a(c) * I(c) * lambda(c) * delta_lambda
double photocurrent(const SolarCellSpec& cell, const SpectralReading& reading);

// cos(theta)^p for theta in degrees from the surface normal, 0 <= theta <= 90.
double incidence_factor(double theta_deg, const SolarCellSpec& cell);

}  // namespace lightllm
