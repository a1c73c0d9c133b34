#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <vector>

namespace relmm {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }

// Axis-aligned rectangle, x0 < x1 and y0 < y1.
struct Rect {
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    bool contains_open(Vec2 p) const { return p.x > x0 && p.x < x1 && p.y > y0 && p.y < y1; }
    bool contains_closed(Vec2 p) const { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }
    bool valid() const { return x1 > x0 && y1 > y0; }
};

// Robot configuration. heading is normalized to (-pi, pi].
struct Pose {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;
};

double normalize_angle(double a);  // -> (-pi, pi]

inline Vec2 rotate(Vec2 v, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

// robot frame (x forward, y left) <-> world frame
inline Vec2 robot_to_world(const Pose& p, Vec2 q) { return Vec2{p.x, p.y} + rotate(q, p.heading); }
inline Vec2 world_to_robot(const Pose& p, Vec2 w) { return rotate(w - Vec2{p.x, p.y}, -p.heading); }

// Largest distance in [0, d] the point can travel from `start` along `dir`
// (unit vector) before entering an obstacle or leaving `bounds`. The result
// places the mover exactly on the first contact boundary.
double clip_travel(Vec2 start, Vec2 dir, double d, const Rect& bounds, const std::vector<Rect>& obstacles);

// Oriented rectangle given by center, half-extents and rotation angle.
struct Obb {
    Vec2 center;
    double half_x = 0.0;
    double half_y = 0.0;
    double angle = 0.0;

    std::array<Vec2, 4> corners() const;
};

bool obb_intersects_rect(const Obb& b, const Rect& r);
bool obb_inside_rect(const Obb& b, const Rect& r);

// Fixed arm-reachable rectangle in the robot frame, discretized 15x15.
// Cell index i runs along x (forward), j along y (left).
namespace grasp_region {
inline constexpr double kX0 = 0.30;
inline constexpr double kX1 = 0.47;
inline constexpr double kY0 = -0.08;
inline constexpr double kY1 = 0.08;
inline constexpr int kGrid = 15;
inline constexpr int kCells = kGrid * kGrid;

inline constexpr double cell_dx() { return (kX1 - kX0) / kGrid; }
inline constexpr double cell_dy() { return (kY1 - kY0) / kGrid; }
inline double cell_diagonal() { return std::hypot(cell_dx(), cell_dy()); }

inline Rect rect() { return Rect{kX0, kY0, kX1, kY1}; }
inline bool contains(Vec2 p) { return rect().contains_closed(p); }

inline int flat_index(int i, int j) { return i * kGrid + j; }
inline std::pair<int, int> unflatten(int cell) { return {cell / kGrid, cell % kGrid}; }

inline Vec2 cell_center(int i, int j) {
    return {kX0 + (i + 0.5) * cell_dx(), kY0 + (j + 0.5) * cell_dy()};
}
inline Vec2 cell_center(int cell) {
    auto [i, j] = unflatten(cell);
    return cell_center(i, j);
}

// Half-open cells [lo, hi) except the last cell, which is closed, so every
// point of the region maps to exactly one cell. Returns nullopt outside.
std::optional<int> cell_of_point(Vec2 p);

// World-frame footprint of the region for the given robot pose.
Obb world_obb(const Pose& pose);
}  // namespace grasp_region

}  // namespace relmm
