#include "relmm/geometry.hpp"

#include <algorithm>
#include <limits>

namespace relmm {

double normalize_angle(double a) {
    const double two_pi = 6.283185307179586476925286766559;
    a = std::fmod(a, two_pi);
    if (a <= -3.14159265358979323846) a += two_pi;
    if (a > 3.14159265358979323846) a -= two_pi;
    return a;
}

namespace {

// Entry parameter of the open slab (lo, hi) along one axis, as an interval
// [t_in, t_out]. Returns false when the ray never passes through the slab.
bool slab_interval(double p, double v, double lo, double hi, double& t_in, double& t_out) {
    if (v == 0.0) {
        if (p > lo && p < hi) {
            t_in = -std::numeric_limits<double>::infinity();
            t_out = std::numeric_limits<double>::infinity();
            return true;
        }
        return false;
    }
    double t0 = (lo - p) / v;
    double t1 = (hi - p) / v;
    if (t0 > t1) std::swap(t0, t1);
    t_in = t0;
    t_out = t1;
    return true;
}

}  // namespace

double clip_travel(Vec2 start, Vec2 dir, double d, const Rect& bounds, const std::vector<Rect>& obstacles) {
    if (d <= 0.0) return 0.0;
    double t_max = d;

    // Room walls: the mover must stay inside the closed bounds.
    if (dir.x > 0.0) t_max = std::min(t_max, (bounds.x1 - start.x) / dir.x);
    if (dir.x < 0.0) t_max = std::min(t_max, (bounds.x0 - start.x) / dir.x);
    if (dir.y > 0.0) t_max = std::min(t_max, (bounds.y1 - start.y) / dir.y);
    if (dir.y < 0.0) t_max = std::min(t_max, (bounds.y0 - start.y) / dir.y);
    t_max = std::max(t_max, 0.0);

    // Obstacle interiors are forbidden; the boundary itself is allowed, so
    // the first entry parameter is the stopping point.
    for (const Rect& r : obstacles) {
        double tx0, tx1, ty0, ty1;
        if (!slab_interval(start.x, dir.x, r.x0, r.x1, tx0, tx1)) continue;
        if (!slab_interval(start.y, dir.y, r.y0, r.y1, ty0, ty1)) continue;
        const double t_in = std::max(tx0, ty0);
        const double t_out = std::min(tx1, ty1);
        if (t_in >= t_out) continue;       // misses the rectangle interior
        if (t_out <= 0.0) continue;        // rectangle is behind
        if (t_in >= t_max) continue;       // contact beyond current limit
        t_max = std::max(t_in, 0.0);
    }
    return t_max;
}

std::array<Vec2, 4> Obb::corners() const {
    const std::array<Vec2, 4> local = {Vec2{half_x, half_y}, Vec2{half_x, -half_y}, Vec2{-half_x, -half_y},
                                       Vec2{-half_x, half_y}};
    std::array<Vec2, 4> out;
    for (size_t i = 0; i < 4; ++i) out[i] = center + rotate(local[i], angle);
    return out;
}

namespace {

// Projection interval of a point set onto an axis.
template <size_t N>
std::pair<double, double> project(const std::array<Vec2, N>& pts, Vec2 axis) {
    double lo = dot(pts[0], axis), hi = lo;
    for (size_t i = 1; i < N; ++i) {
        const double v = dot(pts[i], axis);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return {lo, hi};
}

}  // namespace

bool obb_intersects_rect(const Obb& b, const Rect& r) {
    const auto bc = b.corners();
    const std::array<Vec2, 4> rc = {Vec2{r.x0, r.y0}, Vec2{r.x1, r.y0}, Vec2{r.x1, r.y1}, Vec2{r.x0, r.y1}};
    const std::array<Vec2, 4> axes = {Vec2{1, 0}, Vec2{0, 1}, rotate({1, 0}, b.angle), rotate({0, 1}, b.angle)};
    for (const Vec2& axis : axes) {
        const auto [alo, ahi] = project(bc, axis);
        const auto [blo, bhi] = project(rc, axis);
        if (ahi < blo || bhi < alo) return false;
    }
    return true;
}

bool obb_inside_rect(const Obb& b, const Rect& r) {
    for (const Vec2& c : b.corners())
        if (!r.contains_closed(c)) return false;
    return true;
}

namespace grasp_region {

std::optional<int> cell_of_point(Vec2 p) {
    if (!contains(p)) return std::nullopt;
    auto bucket = [](double v, double lo, double step) {
        int i = static_cast<int>(std::floor((v - lo) / step));
        return std::clamp(i, 0, kGrid - 1);
    };
    const int i = bucket(p.x, kX0, cell_dx());
    const int j = bucket(p.y, kY0, cell_dy());
    return flat_index(i, j);
}

Obb world_obb(const Pose& pose) {
    const Vec2 local_center{(kX0 + kX1) / 2.0, (kY0 + kY1) / 2.0};
    Obb b;
    b.center = robot_to_world(pose, local_center);
    b.half_x = (kX1 - kX0) / 2.0;
    b.half_y = (kY1 - kY0) / 2.0;
    b.angle = pose.heading;
    return b;
}

}  // namespace grasp_region

}  // namespace relmm
