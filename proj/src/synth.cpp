#include "lightllm/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "lightllm/metrics.hpp"

namespace lightllm {

using nlohmann::json;

// --- spectra and fixtures ----------------------------------------------------

namespace {

double bump(double x, double center, double width) {
  const double z = (x - center) / width;
  return std::exp(-0.5 * z * z);
}

SensorNode upward_sensor(std::string id, double x, double y, double z) {
  return {std::move(id), {x, y, z}, {0, 0, 1}, 120.0, 3.0};
}

LightNode ceiling_light(std::string id, double x, double y, double z, SpectrumKind kind,
                        double intensity) {
  return {std::move(id), {x, y, z}, light_spectrum(kind, intensity)};
}

SpectrumKind kind_at(std::size_t i) { return static_cast<SpectrumKind>(i % 4); }

SolarCellSpec cell_spec(double peak_nm) {
  SolarCellSpec spec;
  spec.area = 10.0;
  spec.acceptance_p = 1.0;
  spec.k = 2e-6;
  for (double wl : channel_wavelengths()) spec.absorption.push_back(0.05 + 0.85 * bump(wl, peak_nm, 60.0));
  return spec;
}

}  // namespace

std::array<double, kChannels> light_spectrum(SpectrumKind kind, double intensity) {
  std::array<double, kChannels> s{};
  const auto& wl = channel_wavelengths();
  for (std::size_t c = 0; c < kChannels; ++c) {
    const double x = wl[c];
    double v = 0.0;
    switch (kind) {
      case SpectrumKind::warm_led: v = 0.35 * bump(x, 450, 12) + bump(x, 600, 60); break;
      case SpectrumKind::cool_led: v = bump(x, 450, 12) + 0.6 * bump(x, 560, 50); break;
      case SpectrumKind::halogen: v = std::pow(x / 940.0, 3.0); break;
      case SpectrumKind::daylight: v = 0.55 + 0.35 * bump(x, 480, 90) - 0.25 * bump(x, 900, 40); break;
    }
    s[c] = intensity * v;
  }
  return s;
}

SceneSpec fig3_scene() {
  SceneSpec s;
  s.name = "fig3";
  s.room_min = {-1, -2, 0};
  s.room_max = {5.5, 2, 3};
  s.sensors = {upward_sensor("S1", 0, 0, 1), upward_sensor("S2", 2, 0, 1),
               upward_sensor("S3", 3, 0, 1)};
  s.lights = {ceiling_light("L1", 1, 0, 2.8, SpectrumKind::warm_led, 6.0),
              ceiling_light("L2", 4.5, 0, 2.8, SpectrumKind::cool_led, 6.0)};
  s.obstacles = {{{0.9, -1, 0}, {1.1, 1, 1.5}}};
  s.config = {2.2, 2.5, 120.0, 3.0};
  return s;
}

SceneSpec apartment_scene() {
  SceneSpec s;
  s.name = "apartment";
  s.room_min = {0, 0, 0};
  s.room_max = {5, 5, 2.8};
  const double grid[] = {0.7, 1.9, 3.1, 4.3};
  int k = 1;
  for (double y : grid)
    for (double x : grid) s.sensors.push_back(upward_sensor("S" + std::to_string(k++), x, y, 0.8));
  s.sensors.push_back(upward_sensor("S" + std::to_string(k), 2.5, 2.5, 0.8));
  const double lights[][2] = {{1.25, 1.25}, {3.75, 1.25}, {1.25, 3.75}, {3.75, 3.75}, {2.5, 2.5}};
  for (std::size_t i = 0; i < 5; ++i)
    s.lights.push_back(ceiling_light("L" + std::to_string(i + 1), lights[i][0], lights[i][1], 2.8,
                                     kind_at(i), 6.0));
  s.obstacles = {{{0, 4.55, 0}, {1.2, 5, 2.0}},      // wardrobe
                 {{2.0, 0, 0}, {3.6, 0.5, 0.9}},     // sofa
                 {{4.45, 2.0, 0}, {5, 3.6, 0.95}}};  // counter
  s.config = {2.2, 2.5, 120.0, 3.0};
  return s;
}

SceneSpec office_scene() {
  SceneSpec s;
  s.name = "office";
  s.room_min = {0, 0, 0};
  s.room_max = {12, 9, 2.8};
  int k = 1;
  for (double y : {1.5, 4.5, 7.5})
    for (int i = 0; i < 9; ++i)
      s.sensors.push_back(upward_sensor("S" + std::to_string(k++), 0.8 + 1.3 * i, y, 0.8));
  std::size_t li = 0;
  for (double y : {1.5, 4.5, 7.5})
    for (double x : {1.5, 4.5, 7.5, 10.5}) {
      s.lights.push_back(
          ceiling_light("L" + std::to_string(li + 1), x, y, 2.8, kind_at(li), 6.0));
      ++li;
    }
  s.obstacles = {{{3.95, 0, 0}, {4.15, 3.5, 1.6}},    // partition
                 {{7.85, 5.5, 0}, {8.05, 9, 1.6}},    // partition
                 {{10.8, 5.6, 0}, {12, 6.6, 2.0}},    // cabinet
                 {{5.5, 3.8, 0}, {6.8, 5.2, 0.75}}};  // meeting table
  s.config = {2.2, 2.5, 120.0, 3.0};
  return s;
}

SceneSpec unseen_variant(const SceneSpec& base) {
  SceneSpec s = base;
  s.name = base.name + "-unseen";
  // Sensors move a few centimeters.
  for (std::size_t i = 0; i < s.sensors.size(); ++i) {
    s.sensors[i].position.x += 0.1 * std::sin(1.7 * static_cast<double>(i + 1));
    s.sensors[i].position.y += 0.1 * std::cos(2.3 * static_cast<double>(i + 1));
  }
  // Lights are relit with other spectra and intensities and nudged.
  for (std::size_t i = 0; i < s.lights.size(); ++i) {
    LightNode& l = s.lights[i];
    const double intensity = 6.0 * (i % 2 == 0 ? 0.85 : 1.15);
    l.spectrum = light_spectrum(kind_at(i + 1), intensity);
    l.position.x = std::clamp(l.position.x + (i % 2 == 0 ? 0.3 : -0.3), s.room_min.x, s.room_max.x);
    l.position.y = std::clamp(l.position.y + (i % 3 == 0 ? -0.25 : 0.2), s.room_min.y, s.room_max.y);
  }
  // Furniture is rearranged.
  if (base.name == "apartment") {
    s.obstacles = {{{3.8, 4.55, 0}, {5, 5, 2.0}},
                   {{0, 2.0, 0}, {0.45, 3.6, 0.9}},
                   {{2.0, 0, 0}, {3.6, 0.45, 0.95}}};
  } else if (base.name == "office") {
    s.obstacles = {{{5.25, 0, 0}, {5.45, 3.5, 1.6}},
                   {{9.15, 5.5, 0}, {9.35, 9, 1.6}},
                   {{0, 5.6, 0}, {0.5, 6.6, 2.0}},
                   {{2.2, 3.8, 0}, {3.6, 5.2, 0.75}}};
  } else {
    for (BoxObstacle& b : s.obstacles) {
      b.min.x += 0.4;
      b.max.x += 0.4;
    }
  }
  s.validate();
  return s;
}

SceneSpec scene_by_name(const std::string& name) {
  if (name == "fig3") return fig3_scene();
  if (name == "apartment") return apartment_scene();
  if (name == "office") return office_scene();
  if (name == "apartment-unseen") return unseen_variant(apartment_scene());
  if (name == "office-unseen") return unseen_variant(office_scene());
  if (name == "estimation") return estimation_scene(false);
  if (name == "estimation-unseen") return estimation_scene(true);
  throw std::invalid_argument("unknown scene '" + name + "'");
}

SceneSpec estimation_scene(bool unseen) {
  SceneSpec s;
  s.name = unseen ? "estimation-unseen" : "estimation";
  s.room_min = {0, 0, 0};
  s.room_max = {4, 4, 2.8};
  const double lights[][2] = {{1, 1}, {3, 1}, {1, 3}, {3, 3}};
  for (std::size_t i = 0; i < 4; ++i)
    s.lights.push_back(ceiling_light("L" + std::to_string(i + 1), lights[i][0], lights[i][1], 2.8,
                                     kind_at(i), 6.0));
  if (unseen) {
    s.lights.push_back(ceiling_light("L5", 0.3, 2.0, 1.6, SpectrumKind::halogen, 3.0));
    s.lights.push_back(ceiling_light("L6", 3.7, 3.0, 1.5, SpectrumKind::warm_led, 3.0));
  }
  s.cells = {{"blue", {2, 2, kRigHeight}, {0, 0, 1}, cell_spec(450.0)},
             {"green", {2, 2, kRigHeight}, {0, 0, 1}, cell_spec(540.0)}};
  s.config = {2.2, 2.5, kRigFovDegrees, 3.0};
  s.validate();
  return s;
}

LocationCatalog grid_catalog(const SceneSpec& scene, double spacing) {
  if (!(spacing > 0.0)) throw std::invalid_argument("grid_catalog: spacing must be positive");
  LocationCatalog cat;
  const double w = scene.room_max.x - scene.room_min.x, h = scene.room_max.y - scene.room_min.y;
  const auto nx = static_cast<std::size_t>(std::floor(w / spacing + 1e-9));
  const auto ny = static_cast<std::size_t>(std::floor(h / spacing + 1e-9));
  std::size_t id = 0;
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i)
      cat.entries.push_back({id++, scene.room_min.x + spacing * (0.5 + static_cast<double>(i)),
                             scene.room_min.y + spacing * (0.5 + static_cast<double>(j))});
  cat.validate();
  return cat;
}

LocationCatalog catalog_for(const SceneSpec& scene) {
  const double area =
      (scene.room_max.x - scene.room_min.x) * (scene.room_max.y - scene.room_min.y);
  return grid_catalog(scene, area <= 40.0 ? 1.0 : 1.5);
}

// --- light transport ---------------------------------------------------------

std::vector<Spectrum> simulate_readings(const SceneSpec& scene,
                                        const std::optional<Occupant>& occupant) {
  if (occupant && !(occupant->x >= scene.room_min.x && occupant->x <= scene.room_max.x &&
                    occupant->y >= scene.room_min.y && occupant->y <= scene.room_max.y))
    throw std::invalid_argument("simulate_readings: occupant outside the room");
  std::vector<Spectrum> out(scene.sensors.size());
  const Vec3 torso = occupant ? Vec3{occupant->x, occupant->y, kOccupantTorsoHeight} : Vec3{};

  // Light the occupant scatters, the same for every sensor.
  Spectrum scattered{};
  if (occupant)
    for (const LightNode& l : scene.lights) {
      if (!segment_clear(l.position, torso, scene.obstacles)) continue;
      const double e = 1.0 / dot(l.position - torso, l.position - torso);
      for (std::size_t c = 0; c < kChannels; ++c) scattered[c] += l.spectrum[c] * e;
    }

  for (std::size_t i = 0; i < scene.sensors.size(); ++i) {
    const SensorNode& s = scene.sensors[i];
    const double cos_half = std::cos(0.5 * s.fov_angle * std::numbers::pi / 180.0);
    Spectrum& r = out[i];
    for (const LightNode& l : scene.lights) {
      const Vec3 d = l.position - s.position;
      const double dist2 = dot(d, d);
      const double cosang = dot(d, s.orientation) / std::sqrt(dist2);
      if (cosang <= 0.0 || cosang < cos_half) continue;
      if (!segment_clear(s.position, l.position, scene.obstacles)) continue;
      double w = cosang / dist2;
      if (occupant && segment_hits_cylinder(s.position, l.position, occupant->x, occupant->y,
                                            kOccupantRadius, kOccupantHeight))
        w *= kOccupantAttenuation;
      for (std::size_t c = 0; c < kChannels; ++c) r[c] += l.spectrum[c] * w;
    }
    if (occupant) {
      const double g = kOccupantDiffuse / (1.0 + dot(torso - s.position, torso - s.position));
      for (std::size_t c = 0; c < kChannels; ++c) r[c] += g * scattered[c];
    }
  }
  return out;
}

namespace {

template <class Response>
Spectrum irradiance(const SceneSpec& scene, Vec3 at, Vec3 normal,
                    const std::vector<double>& light_scale, Response response) {
  if (light_scale.size() != scene.lights.size())
    throw std::invalid_argument("irradiance: one scale per light required");
  Spectrum out{};
  for (std::size_t li = 0; li < scene.lights.size(); ++li) {
    if (light_scale[li] == 0.0) continue;
    const LightNode& l = scene.lights[li];
    const Vec3 d = l.position - at;
    const double dist2 = dot(d, d);
    const double cosang = std::clamp(dot(d, normal) / std::sqrt(dist2), -1.0, 1.0);
    if (cosang <= 0.0) continue;
    if (!segment_clear(at, l.position, scene.obstacles)) continue;
    const double w = light_scale[li] * response(cosang) / dist2;
    for (std::size_t c = 0; c < kChannels; ++c) out[c] += l.spectrum[c] * w;
  }
  return out;
}

}  // namespace

Spectrum sensor_irradiance(const SceneSpec& scene, Vec3 at, Vec3 normal, double half_angle_rad,
                           const std::vector<double>& light_scale) {
  const double cos_half = std::cos(half_angle_rad);
  return irradiance(scene, at, normal, light_scale,
                    [cos_half](double c) { return c >= cos_half ? c : 0.0; });
}

Spectrum cell_irradiance(const SceneSpec& scene, Vec3 at, Vec3 normal, const SolarCellSpec& cell,
                         const std::vector<double>& light_scale) {
  return irradiance(scene, at, normal, light_scale, [&cell](double c) {
    const double theta = std::acos(c) * 180.0 / std::numbers::pi;
    return incidence_factor(std::min(theta, 90.0), cell);
  });
}

// --- localization ------------------------------------------------------------

bool walkable(const SceneSpec& scene, double x, double y, double margin) {
  if (x < scene.room_min.x + margin || x > scene.room_max.x - margin ||
      y < scene.room_min.y + margin || y > scene.room_max.y - margin)
    return false;
  for (const BoxObstacle& b : scene.obstacles)
    if (x >= b.min.x - kOccupantRadius && x <= b.max.x + kOccupantRadius &&
        y >= b.min.y - kOccupantRadius && y <= b.max.y + kOccupantRadius)
      return false;
  return true;
}

std::vector<LocalizationSample> generate_localization_dataset(const SceneSpec& scene,
                                                              const LocationCatalog& catalog,
                                                              std::size_t n, std::size_t env,
                                                              const SeededRng& rng,
                                                              const GenerationConfig& cfg) {
  if (catalog.entries.empty()) throw std::invalid_argument("generate_localization_dataset: empty catalog");
  if (n == 0) throw std::invalid_argument("generate_localization_dataset: n must be at least 1");
  const auto empty = simulate_readings(scene, std::nullopt);
  std::vector<LocalizationSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SeededRng r = rng.derive(i);
    LocalizationSample s;
    s.id = scene.name + "/e" + std::to_string(env) + "/" + std::to_string(i);
    s.env = env;
    int tries = 0;
    do {
      if (++tries > 10000) throw std::invalid_argument("generate_localization_dataset: no walkable area");
      s.x = r.uniform(scene.room_min.x, scene.room_max.x);
      s.y = r.uniform(scene.room_min.y, scene.room_max.y);
    } while (!walkable(scene, s.x, s.y, cfg.wall_margin));
    s.class_id = catalog.nearest(s.x, s.y);
    const auto lit = simulate_readings(scene, Occupant{s.x, s.y});
    s.deltas.reserve(lit.size() * kChannels);
    for (std::size_t k = 0; k < lit.size(); ++k)
      for (std::size_t c = 0; c < kChannels; ++c)
        s.deltas.push_back(lit[k][c] * (1.0 + cfg.noise * r.normal()) - empty[k][c]);
    out.push_back(std::move(s));
  }
  return out;
}

// --- forecasting -------------------------------------------------------------

void PvSeries::validate() const {
  if (output_kw.size() != size() || clear_sky_kw.size() != size())
    throw std::invalid_argument("pv series: column length mismatch");
  for (std::size_t i = 0; i < size(); ++i) {
    if (!(output_kw[i] >= 0.0 && output_kw[i] <= clear_sky_kw[i]))
      throw std::invalid_argument("pv series: output outside [0, clear sky] at step " + std::to_string(i));
    if (clear_sky_kw[i] == 0.0 && output_kw[i] != 0.0)
      throw std::invalid_argument("pv series: output at night");
  }
}

PvSeries generate_pv_series(std::size_t days, const PvParams& p, SeededRng& rng) {
  if (days < 1) throw std::invalid_argument("generate_pv_series: days must be at least 1");
  if (p.step_minutes <= 0 || 1440 % p.step_minutes != 0)
    throw std::invalid_argument("generate_pv_series: step must divide a day");
  PvSeries s;
  s.step_minutes = p.step_minutes;
  const int per_day = 1440 / p.step_minutes;
  double cloud = std::clamp(p.cloud_mean, 0.0, 1.0);
  for (std::size_t d = 0; d < days; ++d)
    for (int k = 0; k < per_day; ++k) {
      const double hour = k * p.step_minutes / 60.0;
      const double phase = (hour - p.sunrise_hour) / p.daylength_hours;
      const double clear =
          phase > 0.0 && phase < 1.0 ? p.peak_kw * std::max(0.0, std::sin(std::numbers::pi * phase)) : 0.0;
      s.timestamps.push_back(static_cast<std::int64_t>(d) * 1440 + k * p.step_minutes);
      s.clear_sky_kw.push_back(clear);
      s.output_kw.push_back(clear * cloud);
      s.cloud_index.push_back(cloud);
      cloud = std::clamp(cloud + p.cloud_reversion * (p.cloud_mean - cloud) + p.cloud_volatility * rng.normal(),
                         0.0, 1.0);
    }
  return s;
}

std::vector<ForecastSample> forecast_windows(const PvSeries& series, std::size_t history,
                                             std::size_t horizon, std::size_t stride) {
  if (history < 1 || horizon < 1 || stride < 1)
    throw std::invalid_argument("forecast_windows: history, horizon and stride must be positive");
  std::vector<ForecastSample> out;
  if (series.size() < history + horizon) return out;
  for (std::size_t t = history - 1; t + horizon < series.size(); t += stride) {
    const std::size_t first = t + 1 - history, last = t + horizon;
    bool daytime = true;
    for (std::size_t k = first; k <= last && daytime; ++k) daytime = series.clear_sky_kw[k] > 0.0;
    if (!daytime) continue;
    ForecastSample s;
    s.id = "pv/t" + std::to_string(t);
    s.t = t;
    s.first_timestamp = series.timestamps[first];
    s.last_timestamp = series.timestamps[last];
    s.history_kw.assign(series.output_kw.begin() + static_cast<std::ptrdiff_t>(first),
                        series.output_kw.begin() + static_cast<std::ptrdiff_t>(t + 1));
    s.clear_sky_kw.assign(series.clear_sky_kw.begin() + static_cast<std::ptrdiff_t>(first),
                          series.clear_sky_kw.begin() + static_cast<std::ptrdiff_t>(last + 1));
    s.target_kw.assign(series.output_kw.begin() + static_cast<std::ptrdiff_t>(t + 1),
                       series.output_kw.begin() + static_cast<std::ptrdiff_t>(last + 1));
    out.push_back(std::move(s));
  }
  return out;
}

Split<ForecastSample> split_by_time(const std::vector<ForecastSample>& samples,
                                    double train_fraction) {
  if (samples.empty()) throw std::invalid_argument("split_by_time: no samples");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("split_by_time: fraction must lie in (0, 1)");
  std::int64_t lo = samples[0].first_timestamp, hi = samples[0].last_timestamp;
  for (const auto& s : samples) {
    lo = std::min(lo, s.first_timestamp);
    hi = std::max(hi, s.last_timestamp);
  }
  const double cut = static_cast<double>(lo) + train_fraction * static_cast<double>(hi - lo);
  Split<ForecastSample> out;
  for (const auto& s : samples) {
    if (static_cast<double>(s.last_timestamp) < cut) out.train.push_back(s);
    else if (static_cast<double>(s.first_timestamp) >= cut) out.test.push_back(s);
  }
  if (out.train.empty() || out.test.empty())
    throw std::invalid_argument("split_by_time: one side of the split is empty");
  for (auto& s : out.test) s.env = 1;
  check_disjoint(out.train, out.test);
  return out;
}

// --- estimation --------------------------------------------------------------

EstimationSample estimation_sample(const SceneSpec& scene, double x, double y,
                                   const std::vector<double>& light_scale) {
  EstimationSample s;
  s.x = x;
  s.y = y;
  const Vec3 at{x, y, kRigHeight}, up{0, 0, 1};
  const Spectrum reading =
      sensor_irradiance(scene, at, up, 0.5 * kRigFovDegrees * std::numbers::pi / 180.0, light_scale);
  s.reading.assign(reading.begin(), reading.end());
  for (const PlacedCell& cell : scene.cells) {
    const Spectrum irr = cell_irradiance(scene, at, cell.normal, cell.spec, light_scale);
    s.current.push_back(photocurrent(cell.spec, standard_reading({irr.begin(), irr.end()})));
  }
  return s;
}

std::vector<EstimationSample> generate_estimation_dataset(const SceneSpec& scene, std::size_t n,
                                                          std::size_t env, const SeededRng& rng,
                                                          const GenerationConfig& cfg) {
  if (n == 0) throw std::invalid_argument("generate_estimation_dataset: n must be at least 1");
  if (scene.lights.empty() || scene.cells.empty())
    throw std::invalid_argument("generate_estimation_dataset: scene needs lights and cells");
  const double margin = 0.5;
  std::vector<EstimationSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SeededRng r = rng.derive(i);
    std::vector<double> scales(scene.lights.size(), 0.0);
    bool any = false;
    for (double& v : scales)
      if (r.bernoulli(0.7)) {
        v = r.uniform(0.3, 1.0);
        any = true;
      }
    if (!any) scales[r.below(scales.size())] = r.uniform(0.3, 1.0);
    const double x = r.uniform(scene.room_min.x + margin, scene.room_max.x - margin);
    const double y = r.uniform(scene.room_min.y + margin, scene.room_max.y - margin);
    EstimationSample s = estimation_sample(scene, x, y, scales);
    s.id = scene.name + "/e" + std::to_string(env) + "/" + std::to_string(i);
    s.env = env;
    for (double& v : s.reading) v = std::max(0.0, v * (1.0 + cfg.noise * r.normal()));
    for (double& v : s.current) v = std::max(0.0, v * (1.0 + cfg.noise * r.normal()));
    out.push_back(std::move(s));
  }
  return out;
}

// --- splits ------------------------------------------------------------------

SplitMode split_mode_from_name(const std::string& name) {
  if (name == "seen") return SplitMode::seen;
  if (name == "unseen") return SplitMode::unseen;
  throw std::invalid_argument("unknown split mode '" + name + "'");
}

const char* split_mode_name(SplitMode mode) { return mode == SplitMode::seen ? "seen" : "unseen"; }

// --- serialization -----------------------------------------------------------

namespace {

json header_line(const std::string& task, const std::string& scene) {
  return {{"kind", "header"}, {"task", task}, {"scene", scene}};
}

json read_header(std::istream& in, const std::string& task) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("dataset: missing header line");
  json h = json::parse(line);
  if (h.value("kind", "") != "header" || h.value("task", "") != task)
    throw std::invalid_argument("dataset: expected a " + task + " header");
  return h;
}

}  // namespace

void write_localization_jsonl(std::ostream& out, const SceneSpec& scene,
                              const LocationCatalog& catalog,
                              const std::vector<LocalizationSample>& samples) {
  json h = header_line("localization", scene.name);
  h["catalog"] = json::array();
  for (const auto& e : catalog.entries) h["catalog"].push_back({e.id, e.x, e.y});
  out << h.dump() << '\n';
  for (const auto& s : samples)
    out << json{{"kind", "sample"}, {"id", s.id}, {"env", s.env}, {"x", s.x}, {"y", s.y},
                {"class_id", s.class_id}, {"deltas", s.deltas}}
               .dump()
        << '\n';
}

LocalizationFile read_localization_jsonl(std::istream& in) {
  const json h = read_header(in, "localization");
  LocalizationFile f;
  f.scene = h.value("scene", "");
  for (const auto& e : h.at("catalog"))
    f.catalog.entries.push_back({e[0].get<std::size_t>(), e[1].get<double>(), e[2].get<double>()});
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    LocalizationSample s;
    s.id = j.at("id").get<std::string>();
    s.env = j.at("env").get<std::size_t>();
    s.x = j.at("x").get<double>();
    s.y = j.at("y").get<double>();
    s.class_id = j.at("class_id").get<std::size_t>();
    s.deltas = j.at("deltas").get<std::vector<double>>();
    f.samples.push_back(std::move(s));
  }
  return f;
}

void write_estimation_jsonl(std::ostream& out, const SceneSpec& scene,
                            const std::vector<EstimationSample>& samples) {
  json h = header_line("estimation", scene.name);
  h["cells"] = json::array();
  for (const auto& c : scene.cells) h["cells"].push_back(c.id);
  out << h.dump() << '\n';
  for (const auto& s : samples)
    out << json{{"kind", "sample"}, {"id", s.id},           {"env", s.env},        {"x", s.x},
                {"y", s.y},         {"reading", s.reading}, {"current", s.current}}
               .dump()
        << '\n';
}

EstimationFile read_estimation_jsonl(std::istream& in) {
  const json h = read_header(in, "estimation");
  EstimationFile f;
  f.scene = h.value("scene", "");
  f.cells = h.at("cells").get<std::vector<std::string>>();
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    EstimationSample s;
    s.id = j.at("id").get<std::string>();
    s.env = j.at("env").get<std::size_t>();
    s.x = j.at("x").get<double>();
    s.y = j.at("y").get<double>();
    s.reading = j.at("reading").get<std::vector<double>>();
    s.current = j.at("current").get<std::vector<double>>();
    f.samples.push_back(std::move(s));
  }
  return f;
}

void write_pv_csv(std::ostream& out, const PvSeries& series) {
  out << "timestamp,output_kw,clear_sky_kw\n";
  for (std::size_t i = 0; i < series.size(); ++i)
    out << series.timestamps[i] << ',' << format_number(series.output_kw[i]) << ','
        << format_number(series.clear_sky_kw[i]) << '\n';
}

PvSeries read_pv_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "timestamp,output_kw,clear_sky_kw")
    throw std::invalid_argument("pv csv: unexpected header");
  PvSeries s;
  auto parse = [](std::string_view field, auto& value) {
    const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size())
      throw std::invalid_argument("pv csv: malformed number '" + std::string(field) + "'");
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t a = line.find(','), b = line.find(',', a + 1);
    if (a == std::string::npos || b == std::string::npos)
      throw std::invalid_argument("pv csv: expected three columns");
    std::int64_t ts = 0;
    double out = 0.0, clear = 0.0;
    const std::string_view view(line);
    parse(view.substr(0, a), ts);
    parse(view.substr(a + 1, b - a - 1), out);
    parse(view.substr(b + 1), clear);
    s.timestamps.push_back(ts);
    s.output_kw.push_back(out);
    s.clear_sky_kw.push_back(clear);
    s.cloud_index.push_back(clear > 0.0 ? out / clear : 0.0);
  }
  if (s.size() >= 2) s.step_minutes = static_cast<int>(s.timestamps[1] - s.timestamps[0]);
  s.validate();
  return s;
}

}  // namespace lightllm
