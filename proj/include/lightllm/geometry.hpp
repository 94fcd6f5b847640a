#pragma once

#include <cmath>
#include <span>

namespace lightllm {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
inline bool operator==(Vec3 a, Vec3 b) { return a.x == b.x && a.y == b.y && a.z == b.z; }
inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }
inline double distance(Vec3 a, Vec3 b) { return norm(a - b); }
inline double horizontal_distance(Vec3 a, Vec3 b) { return std::hypot(a.x - b.x, a.y - b.y); }
Vec3 normalized(Vec3 a);

struct BoxObstacle {
  Vec3 min, max;
};

// Truncated cone: apex, unit axis, half-angle (radians), range.
struct ConeRegion {
  Vec3 apex;
  Vec3 axis;
  double half_angle = 0.0;
  double range = 0.0;

  bool contains(Vec3 p) const;
};

// True iff a sample point of either cone lies inside the other. Samples are
// the apex plus 8 azimuths x 4 elevations x 8 radii per cone; a bounding
// sphere test rejects far-apart cones first.
bool fov_overlap(const ConeRegion& a, const ConeRegion& b);

// Slab test for the open segment (p, q) against one box.
bool segment_hits_box(Vec3 p, Vec3 q, const BoxObstacle& box);
bool segment_clear(Vec3 p, Vec3 q, std::span<const BoxObstacle> obstacles);

// Does the open segment (p, q) pass through the vertical cylinder standing on
// z = 0 with the given base center (x, y), radius and height?
bool segment_hits_cylinder(Vec3 p, Vec3 q, double cx, double cy, double radius, double height);

}  // namespace lightllm
