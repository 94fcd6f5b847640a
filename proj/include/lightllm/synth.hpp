#pragma once

// Deterministic synthetic worlds for the three light-sensing tasks, the
// fixture scenes, splits, and dataset serialization.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lightllm/errors.hpp"
#include "lightllm/heads.hpp"
#include "lightllm/rng.hpp"
#include "lightllm/scene.hpp"

namespace lightllm {

// --- spectra and fixtures ----------------------------------------------------

enum class SpectrumKind { warm_led, cool_led, halogen, daylight };
std::array<double, kChannels> light_spectrum(SpectrumKind kind, double intensity);

// Three sensors, two ceiling lights and a low wall between S1 and the others.
SceneSpec fig3_scene();
// 17 sensors in a 5 m x 5 m room.
SceneSpec apartment_scene();
// 27 sensors in a 12 m x 9 m room.
SceneSpec office_scene();
// Same room with relit lights, moved furniture and slightly shifted sensors;
// used as the held-out environment.
SceneSpec unseen_variant(const SceneSpec& base);
SceneSpec scene_by_name(const std::string& name);

// Desk rig (narrow-FOV sensor plus blue and green cells) in a lit room. The
// unseen variant adds two low standing lamps.
SceneSpec estimation_scene(bool unseen);

// Regular grid of class locations with the given spacing, inset by half a
// spacing from the walls.
LocationCatalog grid_catalog(const SceneSpec& scene, double spacing);
LocationCatalog catalog_for(const SceneSpec& scene);

// --- light transport ---------------------------------------------------------

struct Occupant {
  double x = 0.0, y = 0.0;
};

inline constexpr double kOccupantRadius = 0.25;
inline constexpr double kOccupantHeight = 1.7;
inline constexpr double kOccupantAttenuation = 0.2;
inline constexpr double kOccupantDiffuse = 0.1;
inline constexpr double kOccupantTorsoHeight = 1.2;

using Spectrum = std::array<double, kChannels>;

// Per-sensor readings: sum over lights of spectrum / d^2 * max(0, cos) inside
// the sensor's view angle, zero through obstacles, times 0.2 through the
// occupant cylinder; plus the occupant's diffuse term.
std::vector<Spectrum> simulate_readings(const SceneSpec& scene,
                                        const std::optional<Occupant>& occupant);

// Light arriving at a surface with unit normal `normal`: per channel
// sum over lights of scale_l * spectrum / d^2 * response(theta), where the
// sensor response is cos(theta) inside half_angle and 0 outside, and the cell
// response is incidence_factor(theta) with no cutoff.
Spectrum sensor_irradiance(const SceneSpec& scene, Vec3 at, Vec3 normal, double half_angle_rad,
                           const std::vector<double>& light_scale);
Spectrum cell_irradiance(const SceneSpec& scene, Vec3 at, Vec3 normal, const SolarCellSpec& cell,
                         const std::vector<double>& light_scale);

// --- localization ------------------------------------------------------------

struct LocalizationSample {
  std::string id;
  std::size_t env = 0;
  double x = 0.0, y = 0.0;
  std::size_t class_id = 0;
  std::vector<double> deltas;  // sensors * 18
};

struct GenerationConfig {
  double noise = 0.01;  // relative measurement noise
  double wall_margin = 0.3;
};

bool walkable(const SceneSpec& scene, double x, double y, double margin);

std::vector<LocalizationSample> generate_localization_dataset(const SceneSpec& scene,
                                                              const LocationCatalog& catalog,
                                                              std::size_t n, std::size_t env,
                                                              const SeededRng& rng,
                                                              const GenerationConfig& cfg = {});

// --- forecasting -------------------------------------------------------------

struct PvParams {
  double peak_kw = 30.0;
  int step_minutes = 5;
  double sunrise_hour = 6.0;
  double daylength_hours = 12.0;
  double cloud_mean = 0.7;
  double cloud_reversion = 0.05;
  double cloud_volatility = 0.06;
};

struct PvSeries {
  int step_minutes = 5;
  std::vector<std::int64_t> timestamps;  // minutes since the start
  std::vector<double> output_kw;
  std::vector<double> clear_sky_kw;
  std::vector<double> cloud_index;

  std::size_t size() const { return timestamps.size(); }
  void validate() const;
};

PvSeries generate_pv_series(std::size_t days, const PvParams& params, SeededRng& rng);

struct ForecastSample {
  std::string id;
  std::size_t env = 0;
  std::size_t t = 0;                  // index of the last observed step
  std::int64_t first_timestamp = 0;   // earliest step touched
  std::int64_t last_timestamp = 0;    // latest step touched
  std::vector<double> history_kw;     // P values ending at t
  std::vector<double> clear_sky_kw;   // P + T values
  std::vector<double> target_kw;      // T values after t
};

// Daytime windows of `history` observed steps and `horizon` targets, taken
// every `stride` steps.
std::vector<ForecastSample> forecast_windows(const PvSeries& series, std::size_t history,
                                             std::size_t horizon, std::size_t stride);

// --- estimation --------------------------------------------------------------

struct EstimationSample {
  std::string id;
  std::size_t env = 0;
  double x = 0.0, y = 0.0;
  std::vector<double> reading;  // 18 channels
  std::vector<double> current;  // mA per cell
};

inline constexpr double kRigHeight = 0.75;
inline constexpr double kRigFovDegrees = 60.0;

// Random light states (each light on with probability 0.7 at a random dimming
// level, at least one on) and rig positions.
std::vector<EstimationSample> generate_estimation_dataset(const SceneSpec& scene, std::size_t n,
                                                          std::size_t env, const SeededRng& rng,
                                                          const GenerationConfig& cfg = {});

// One estimation sample for explicit light scales at a rig position, without
// noise.
EstimationSample estimation_sample(const SceneSpec& scene, double x, double y,
                                   const std::vector<double>& light_scale);

// --- splits ------------------------------------------------------------------

enum class SplitMode { seen, unseen };
SplitMode split_mode_from_name(const std::string& name);
const char* split_mode_name(SplitMode mode);

template <class Sample>
struct Split {
  std::vector<Sample> train, test;
};

template <class Sample>
void check_disjoint(const std::vector<Sample>& train, const std::vector<Sample>& test) {
  std::set<std::string> ids;
  for (const auto& s : train) ids.insert(s.id);
  for (const auto& s : test)
    if (ids.count(s.id)) throw ContractError("split overlap: sample '" + s.id + "' in both train and test");
}

// Seen: 80/20 shuffle of environment 0. Unseen: environment 0 versus 1.
template <class Sample>
Split<Sample> make_splits(const std::vector<std::vector<Sample>>& envs, SplitMode mode,
                          SeededRng rng) {
  Split<Sample> out;
  if (envs.empty() || envs[0].empty()) throw std::invalid_argument("make_splits: no data");
  if (mode == SplitMode::seen) {
    const auto& all = envs[0];
    std::vector<std::size_t> order(all.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const std::size_t n_train = (all.size() * 8 + 5) / 10;
    for (std::size_t i = 0; i < order.size(); ++i)
      (i < n_train ? out.train : out.test).push_back(all[order[i]]);
  } else {
    if (envs.size() < 2 || envs[1].empty())
      throw std::invalid_argument("make_splits: unseen mode needs a second environment");
    out.train = envs[0];
    out.test = envs[1];
  }
  check_disjoint(out.train, out.test);
  return out;
}

// Temporal split: samples entirely before the cut train, entirely after test.
Split<ForecastSample> split_by_time(const std::vector<ForecastSample>& samples,
                                    double train_fraction);

// --- serialization -----------------------------------------------------------

void write_localization_jsonl(std::ostream& out, const SceneSpec& scene,
                              const LocationCatalog& catalog,
                              const std::vector<LocalizationSample>& samples);
struct LocalizationFile {
  std::string scene;
  LocationCatalog catalog;
  std::vector<LocalizationSample> samples;
};
LocalizationFile read_localization_jsonl(std::istream& in);

void write_estimation_jsonl(std::ostream& out, const SceneSpec& scene,
                            const std::vector<EstimationSample>& samples);
struct EstimationFile {
  std::string scene;
  std::vector<std::string> cells;
  std::vector<EstimationSample> samples;
};
EstimationFile read_estimation_jsonl(std::istream& in);

// CSV: timestamp,output_kw,clear_sky_kw
void write_pv_csv(std::ostream& out, const PvSeries& series);
PvSeries read_pv_csv(std::istream& in);

}  // namespace lightllm
