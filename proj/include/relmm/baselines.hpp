#pragma once

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "relmm/geometry.hpp"
#include "relmm/rng.hpp"
#include "relmm/tensor.hpp"
#include "relmm/world.hpp"

namespace relmm {

// Paired image / robot-frame correspondences for the pixel-to-world fit.
struct CalibrationSet {
    std::vector<Vec2> image_points;  // (u, v)
    std::vector<Vec2> robot_points;  // (x, y) meters

    // The nine hand-measured pairs used by the original scripted controller.
    static CalibrationSet paper_pairs();
    // Nine sampled renderer correspondences covering the grasp-region window.
    static CalibrationSet from_renderer(const ObsSpec& spec);
};

// Degree-2 polynomial feature map [1, u, v, u^2, u*v, v^2].
std::array<double, 6> poly2_features(Vec2 uv);

struct PixelToWorld {
    Eigen::Matrix<double, 6, 2> coef = Eigen::Matrix<double, 6, 2>::Zero();
    Vec2 apply(Vec2 pixel) const;
};

// Least-squares fit of robot coordinates on polynomial pixel features,
// no intercept beyond the constant feature. Throws ConfigError if the
// feature matrix is rank deficient or fewer than 6 pairs are given.
PixelToWorld fit_pixel_to_world(const CalibrationSet& cal);

// Connected components of the thresholded object channel; returns one
// (row, col) centroid per blob in pixel units.
std::vector<Vec2> detect_centroids(const Tensor& obs, double threshold = 0.5);

// Exact renderer inverse: continuous pixel coordinate -> robot-frame point
// (piecewise-linear across the foveated grid). Used as the oracle projection.
Vec2 pixel_to_robot_exact(const ObsSpec& spec, Vec2 pixel_rc);

// The hand-coded comparison controller: detects object centroids, projects
// them to the ground plane and drives at / grasps the closest one.
class ScriptedPolicy {
public:
    enum class Projection { calibrated, exact };

    ScriptedPolicy(const ObsSpec& spec, Projection mode = Projection::calibrated);

    // forward/turn toward the closest projected centroid, or uniform random
    // motion when nothing is detected
    std::array<double, 2> nav(const Tensor& obs, RngStream& rng) const;
    // grasp cell of the closest projected centroid inside the grasp region
    std::optional<int> grasp(const Tensor& obs) const;

    // forward/turn toward a robot-frame target, clipped to the action range
    static std::array<double, 2> nav_action_for(Vec2 target);

    Vec2 project(Vec2 pixel_rc) const;

private:
    ObsSpec spec_;
    Projection mode_;
    PixelToWorld fit_;
};

inline std::array<double, 2> rand_nav_action(RngStream& rng) {
    return {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
}
inline int rand_grasp_cell(RngStream& rng) {
    return static_cast<int>(rng.uniform_index(grasp_region::kCells));
}

}  // namespace relmm
