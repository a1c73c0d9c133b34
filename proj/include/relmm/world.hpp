#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "relmm/geometry.hpp"
#include "relmm/rng.hpp"
#include "relmm/tensor.hpp"

namespace relmm {

// Base kinematics. One action step turns by a1 * pi/12 and then translates
// (a0 + 1) * 0.05 m along the new heading, so forward in [-1,1] maps to
// [0, 0.1] m (the inverse of the scripted controller's encoding).
inline constexpr double kTurnScale = 3.14159265358979323846 / 12.0;
inline constexpr double kForwardHalfRange = 0.05;
inline constexpr double kMaxStepDistance = 2.0 * kForwardHalfRange;

struct RoomSpec {
    double width = 3.0;
    double height = 3.0;
    std::vector<Rect> obstacles;
    int object_count = 20;
    double object_radius = 0.025;

    Rect bounds() const { return Rect{0.0, 0.0, width, height}; }
    void validate() const;  // throws ConfigError
};

enum class ObjectStatus : uint8_t { free_ = 0, held = 1, collected = 2 };

struct ObjectState {
    Vec2 position;
    ObjectStatus status = ObjectStatus::free_;
};

// Full simulator state. A value type: copying it snapshots the entire
// simulation including its random stream.
struct WorldState {
    Pose pose;
    std::vector<ObjectState> objects;
    long step_count = 0;
    RngStream rng;

    std::optional<size_t> held_index() const;
    int count(ObjectStatus s) const;
    int free_count() const { return count(ObjectStatus::free_); }
    int collected_count() const { return count(ObjectStatus::collected); }
    bool holding() const { return held_index().has_value(); }
};

// Ego-centric observation raster. A forward wedge (fov/range) is rasterized
// onto a robot-frame grid whose middle `crop` rows/columns tile the grasp
// region exactly, so the grasp observation is literally a sub-grid of the
// navigation observation. Channels: 0 objects, 1 obstacles+walls, 2 floor.
struct ObsSpec {
    int size = 32;   // H = W
    int crop = 16;   // rows/cols of the grasp-region window
    double fov_deg = 90.0;
    double range = 1.5;
    int supersample = 4;           // subsamples per pixel side
    double min_apparent_diag = 1.0;  // apparent object radius floor, in pixel diagonals

    static constexpr int kChannels = 3;
    static constexpr int kObjects = 0;
    static constexpr int kObstacles = 1;
    static constexpr int kFloor = 2;

    void validate() const;

    // Derived grid geometry (valid after finalize()).
    std::vector<double> x_edges, y_edges;
    int crop_row0 = 0, crop_col0 = 0;
    void finalize();
    bool finalized() const { return !x_edges.empty(); }
};

struct WorldParams {
    RoomSpec room;
    ObsSpec obs;
    double grasp_tolerance = -1.0;  // <0 -> one grasp-cell diagonal
    int walk_before_drop = 8;       // K1
    int walk_after_drop = 8;        // K2
    int scatter_max_attempts = 10000;
    int guard_turn_budget = 24;
    int guard_backup_rounds = 4;

    double tolerance() const {
        return grasp_tolerance > 0.0 ? grasp_tolerance : grasp_region::cell_diagonal();
    }
    void validate() const;
};

// rho(o0): objects uniform on free floor, robot pose uniform over free space.
WorldState scatter_objects(const RoomSpec& room, RngStream rng, int max_attempts = 10000);

// Turn-then-translate differential-drive step, clipped at walls/obstacles.
void step_base(WorldState& s, const RoomSpec& room, std::array<double, 2> a);

// Safety reflex: random-sign turns (plus a backward step per round) until the
// world-frame grasp rectangle no longer touches an obstacle or wall.
void obstacle_guard(WorldState& s, const WorldParams& p);
bool grasp_space_blocked(const WorldState& s, const RoomSpec& room);

// Single-step top-down grasp at a grid cell / free point (robot frame).
// Returns r_g in {0,1}. Throws std::logic_error if an object is held.
int attempt_grasp(WorldState& s, int cell, double tolerance);
int attempt_grasp_point(WorldState& s, Vec2 point_rf, double tolerance);

// Basket model: the held object becomes collected.
void deposit_held(WorldState& s);

// Reset-free rearrangement: random walk holding the object, release at a
// random point of the grasp region, random walk away.
void pseudo_reset(WorldState& s, const WorldParams& p);

// Release the held object at a random collision-free point of the grasp
// region (shared by pseudo_reset and the curricula's practice drops).
void drop_held_in_grasp_region(WorldState& s, const RoomSpec& room);

Tensor render_nav_obs(const WorldState& s, const ObsSpec& obs, const RoomSpec& room);
Tensor render_grasp_obs(const WorldState& s, const ObsSpec& obs, const RoomSpec& room);
// The grasp-region window of an already rendered navigation observation.
Tensor crop_grasp_window(const Tensor& nav_obs, const ObsSpec& obs);

}  // namespace relmm
