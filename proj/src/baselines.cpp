#include "relmm/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "relmm/errors.hpp"

namespace relmm {

CalibrationSet CalibrationSet::paper_pairs() {
    CalibrationSet cal;
    cal.image_points = {{70., 84.}, {45., 83.}, {65., 83.}, {67., 55.}, {45., 56.},
                        {56., 56.}, {68., 70.}, {45., 70.}, {56., 70.}};
    cal.robot_points = {{0.3, -0.08}, {0.3, 0.08},  {0.3, 0.0},  {0.47, -0.08}, {0.47, 0.08},
                        {0.47, 0.0},  {0.38, -0.08}, {0.38, 0.08}, {0.38, 0.0}};
    return cal;
}

CalibrationSet CalibrationSet::from_renderer(const ObsSpec& spec) {
    CalibrationSet cal;
    const double r0 = spec.crop_row0, c0 = spec.crop_col0, n = spec.crop;
    for (double fr : {0.0, (n - 1.0) / 2.0, n - 1.0})
        for (double fc : {0.0, (n - 1.0) / 2.0, n - 1.0}) {
            const Vec2 px{r0 + fr, c0 + fc};
            cal.image_points.push_back(px);
            cal.robot_points.push_back(pixel_to_robot_exact(spec, px));
        }
    return cal;
}

std::array<double, 6> poly2_features(Vec2 uv) {
    return {1.0, uv.x, uv.y, uv.x * uv.x, uv.x * uv.y, uv.y * uv.y};
}

Vec2 PixelToWorld::apply(Vec2 pixel) const {
    const auto f = poly2_features(pixel);
    Vec2 out{0.0, 0.0};
    for (int i = 0; i < 6; ++i) {
        out.x += f[i] * coef(i, 0);
        out.y += f[i] * coef(i, 1);
    }
    return out;
}

PixelToWorld fit_pixel_to_world(const CalibrationSet& cal) {
    const int n = static_cast<int>(cal.image_points.size());
    if (n < 6 || cal.robot_points.size() != cal.image_points.size())
        throw ConfigError("calibration needs at least 6 paired points");
    Eigen::MatrixXd A(n, 6), B(n, 2);
    for (int i = 0; i < n; ++i) {
        const auto f = poly2_features(cal.image_points[i]);
        for (int j = 0; j < 6; ++j) A(i, j) = f[j];
        B(i, 0) = cal.robot_points[i].x;
        B(i, 1) = cal.robot_points[i].y;
    }
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    if (qr.rank() < 6) throw ConfigError("calibration feature matrix is rank deficient");
    PixelToWorld out;
    out.coef = qr.solve(B);
    return out;
}

std::vector<Vec2> detect_centroids(const Tensor& obs, double threshold) {
    const int h = obs.dim(1), w = obs.dim(2);
    const float* plane = obs.data.data();  // channel 0: objects
    std::vector<uint8_t> mask(static_cast<size_t>(h) * w, 0);
    for (long i = 0; i < static_cast<long>(mask.size()); ++i) mask[i] = plane[i] > threshold ? 1 : 0;

    std::vector<Vec2> centroids;
    std::vector<uint8_t> seen(mask.size(), 0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const size_t start = static_cast<size_t>(r) * w + c;
            if (!mask[start] || seen[start]) continue;
            double sum_r = 0.0, sum_c = 0.0;
            long count = 0;
            std::deque<std::pair<int, int>> queue{{r, c}};
            seen[start] = 1;
            while (!queue.empty()) {
                const auto [cr, cc] = queue.front();
                queue.pop_front();
                sum_r += cr;
                sum_c += cc;
                ++count;
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int nr = cr + dr, nc = cc + dc;
                        if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
                        const size_t k = static_cast<size_t>(nr) * w + nc;
                        if (mask[k] && !seen[k]) {
                            seen[k] = 1;
                            queue.emplace_back(nr, nc);
                        }
                    }
            }
            centroids.push_back({sum_r / count, sum_c / count});
        }
    return centroids;
}

// Pixel coordinates follow the centroid convention: integer p is the center
// of pixel p, so edge-space position is p + 0.5.
Vec2 pixel_to_robot_exact(const ObsSpec& spec, Vec2 pixel_rc) {
    auto along = [](const std::vector<double>& edges, double pos) {
        const int n = static_cast<int>(edges.size()) - 1;
        const double clamped = std::clamp(pos + 0.5, 0.0, static_cast<double>(n));
        const int i = std::min(static_cast<int>(std::floor(clamped)), n - 1);
        const double frac = clamped - i;
        return edges[i] + frac * (edges[i + 1] - edges[i]);
    };
    return {along(spec.x_edges, pixel_rc.x), along(spec.y_edges, pixel_rc.y)};
}

ScriptedPolicy::ScriptedPolicy(const ObsSpec& spec, Projection mode) : spec_(spec), mode_(mode) {
    if (!spec_.finalized()) spec_.finalize();
    if (mode_ == Projection::calibrated) fit_ = fit_pixel_to_world(CalibrationSet::from_renderer(spec_));
}

Vec2 ScriptedPolicy::project(Vec2 pixel_rc) const {
    return mode_ == Projection::exact ? pixel_to_robot_exact(spec_, pixel_rc) : fit_.apply(pixel_rc);
}

std::array<double, 2> ScriptedPolicy::nav_action_for(Vec2 target) {
    const double radius = std::clamp(std::hypot(target.x, target.y), 0.0, kMaxStepDistance);
    const double theta = std::clamp(std::atan2(target.y, target.x), -kTurnScale, kTurnScale);
    return {radius / kMaxStepDistance * 2.0 - 1.0, theta / kTurnScale};
}

std::array<double, 2> ScriptedPolicy::nav(const Tensor& obs, RngStream& rng) const {
    const auto centroids = detect_centroids(obs);
    if (centroids.empty()) return rand_nav_action(rng);
    Vec2 closest{0.0, 0.0};
    double best = std::numeric_limits<double>::infinity();
    for (const Vec2& c : centroids) {
        const Vec2 p = project(c);
        const double d2 = p.x * p.x + p.y * p.y;
        if (d2 < best) {
            best = d2;
            closest = p;
        }
    }
    return nav_action_for(closest);
}

std::optional<int> ScriptedPolicy::grasp(const Tensor& obs) const {
    const auto centroids = detect_centroids(obs);
    std::optional<Vec2> closest;
    double best = std::numeric_limits<double>::infinity();
    for (const Vec2& c : centroids) {
        const Vec2 p = project(c);
        if (!grasp_region::contains(p)) continue;
        const double d2 = p.x * p.x + p.y * p.y;
        if (d2 < best) {
            best = d2;
            closest = p;
        }
    }
    if (!closest) return std::nullopt;
    return grasp_region::cell_of_point(*closest);
}

}  // namespace relmm
