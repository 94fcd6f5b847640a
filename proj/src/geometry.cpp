#include "lightllm/geometry.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace lightllm {

Vec3 normalized(Vec3 a) {
  const double n = norm(a);
  if (!(n > 0.0)) throw std::invalid_argument("normalized: zero vector");
  return (1.0 / n) * a;
}

bool ConeRegion::contains(Vec3 p) const {
  const Vec3 d = p - apex;
  const double len = norm(d);
  if (len > range) return false;
  if (len == 0.0) return true;
  return dot(d, axis) >= len * std::cos(half_angle);
}

namespace {

constexpr int kAzimuths = 8;
constexpr int kElevations = 4;
constexpr int kRadii = 8;

// Any unit vector orthogonal to `axis`, chosen from the least aligned
// coordinate axis so the basis is stable.
void orthonormal_basis(Vec3 axis, Vec3& u, Vec3& v) {
  const double ax = std::abs(axis.x), ay = std::abs(axis.y), az = std::abs(axis.z);
  Vec3 helper = ax <= ay && ax <= az ? Vec3{1, 0, 0} : (ay <= az ? Vec3{0, 1, 0} : Vec3{0, 0, 1});
  u = normalized(cross(axis, helper));
  v = cross(axis, u);
}

bool samples_inside(const ConeRegion& from, const ConeRegion& other) {
  if (other.contains(from.apex)) return true;
  Vec3 u, v;
  orthonormal_basis(from.axis, u, v);
  for (int e = 0; e < kElevations; ++e) {
    const double theta = from.half_angle * e / (kElevations - 1);
    const double ct = std::cos(theta), st = std::sin(theta);
    for (int a = 0; a < kAzimuths; ++a) {
      const double phi = 2.0 * std::numbers::pi * a / kAzimuths;
      const Vec3 dir = ct * from.axis + (st * std::cos(phi)) * u + (st * std::sin(phi)) * v;
      for (int k = 0; k < kRadii; ++k) {
        const double r = from.range * (k + 1) / kRadii;
        if (other.contains(from.apex + r * dir)) return true;
      }
      if (e == 0) break;  // every azimuth gives the same on-axis ray
    }
  }
  return false;
}

}  // namespace

bool fov_overlap(const ConeRegion& a, const ConeRegion& b) {
  if (distance(a.apex, b.apex) > a.range + b.range) return false;
  return samples_inside(a, b) || samples_inside(b, a);
}

bool segment_hits_box(Vec3 p, Vec3 q, const BoxObstacle& box) {
  const std::array<double, 3> origin{p.x, p.y, p.z};
  const std::array<double, 3> delta{q.x - p.x, q.y - p.y, q.z - p.z};
  const std::array<double, 3> lo{box.min.x, box.min.y, box.min.z};
  const std::array<double, 3> hi{box.max.x, box.max.y, box.max.z};
  double t_enter = -std::numeric_limits<double>::infinity();
  double t_exit = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    if (delta[i] == 0.0) {
      if (origin[i] < lo[i] || origin[i] > hi[i]) return false;
      continue;
    }
    double t0 = (lo[i] - origin[i]) / delta[i];
    double t1 = (hi[i] - origin[i]) / delta[i];
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
    if (t_enter > t_exit) return false;
  }
  // Open segment: parameters strictly between 0 and 1.
  return t_enter < 1.0 && t_exit > 0.0;
}

bool segment_clear(Vec3 p, Vec3 q, std::span<const BoxObstacle> obstacles) {
  for (const BoxObstacle& box : obstacles)
    if (segment_hits_box(p, q, box)) return false;
  return true;
}

bool segment_hits_cylinder(Vec3 p, Vec3 q, double cx, double cy, double radius, double height) {
  // Restrict to the slab 0 <= z <= height first.
  double t_lo = 0.0, t_hi = 1.0;
  const double dz = q.z - p.z;
  if (dz == 0.0) {
    if (p.z < 0.0 || p.z > height) return false;
  } else {
    double t0 = (0.0 - p.z) / dz, t1 = (height - p.z) / dz;
    if (t0 > t1) std::swap(t0, t1);
    t_lo = std::max(t_lo, t0);
    t_hi = std::min(t_hi, t1);
    if (t_lo > t_hi) return false;
  }
  // Then the disc |xy(t) - c| <= radius, a quadratic in t.
  const double ox = p.x - cx, oy = p.y - cy;
  const double dx = q.x - p.x, dy = q.y - p.y;
  const double a = dx * dx + dy * dy;
  const double b = 2.0 * (ox * dx + oy * dy);
  const double c = ox * ox + oy * oy - radius * radius;
  if (a == 0.0) return c <= 0.0 && t_lo < 1.0 && t_hi > 0.0;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return false;
  const double s = std::sqrt(disc);
  const double r0 = (-b - s) / (2.0 * a), r1 = (-b + s) / (2.0 * a);
  const double enter = std::max(t_lo, r0), exit = std::min(t_hi, r1);
  return enter <= exit && enter < 1.0 && exit > 0.0;
}

}  // namespace lightllm
