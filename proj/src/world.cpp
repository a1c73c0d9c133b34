#include "relmm/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "relmm/errors.hpp"

namespace relmm {

void RoomSpec::validate() const {
    if (!(width > 0.0) || !(height > 0.0)) throw ConfigError("room dimensions must be positive");
    if (object_count <= 0) throw ConfigError("object_count must be positive");
    if (!(object_radius > 0.0)) throw ConfigError("object_radius must be positive");
    if (2.0 * object_radius >= std::min(width, height))
        throw ConfigError("object_radius too large for the room");
    for (const Rect& r : obstacles) {
        if (!r.valid()) throw ConfigError("obstacle rectangle has non-positive extent");
        if (!(r.x0 > 0.0 && r.y0 > 0.0 && r.x1 < width && r.y1 < height))
            throw ConfigError("obstacles must lie strictly inside the room");
    }
}

std::optional<size_t> WorldState::held_index() const {
    for (size_t i = 0; i < objects.size(); ++i)
        if (objects[i].status == ObjectStatus::held) return i;
    return std::nullopt;
}

int WorldState::count(ObjectStatus st) const {
    int n = 0;
    for (const ObjectState& o : objects)
        if (o.status == st) ++n;
    return n;
}

void ObsSpec::validate() const {
    if (size < 4) throw ConfigError("obs size must be at least 4");
    if (crop < 2 || crop > size - 2) throw ConfigError("obs crop must satisfy 2 <= crop <= size-2");
    if (!(fov_deg > 0.0 && fov_deg <= 180.0)) throw ConfigError("obs fov_deg must be in (0, 180]");
    if (!(range > grasp_region::kX1)) throw ConfigError("obs range must exceed the grasp region");
    if (!(range / 2.0 > grasp_region::kY1)) throw ConfigError("obs range too narrow for the grasp region");
    if (supersample < 1 || supersample > 16) throw ConfigError("obs supersample must be in [1,16]");
    if (min_apparent_diag < 0.0) throw ConfigError("obs min_apparent_diag must be >= 0");
}

void ObsSpec::finalize() {
    validate();
    auto fill = [](std::vector<double>& edges, int n_before, int n_mid, int n_after, double lo, double mid_lo,
                   double mid_hi, double hi) {
        edges.clear();
        for (int i = 0; i < n_before; ++i) edges.push_back(lo + (mid_lo - lo) * i / n_before);
        for (int i = 0; i < n_mid; ++i) edges.push_back(mid_lo + (mid_hi - mid_lo) * i / n_mid);
        for (int i = 0; i <= n_after; ++i) edges.push_back(mid_hi + (hi - mid_hi) * i / n_after);
    };
    const int n_near = (size - crop) / 2;
    const int n_far = size - crop - n_near;
    fill(x_edges, n_near, crop, n_far, 0.0, grasp_region::kX0, grasp_region::kX1, range);
    crop_row0 = n_near;
    const int n_left = (size - crop) / 2;
    const int n_right = size - crop - n_left;
    fill(y_edges, n_left, crop, n_right, -range / 2.0, grasp_region::kY0, grasp_region::kY1, range / 2.0);
    crop_col0 = n_left;
}

void WorldParams::validate() const {
    room.validate();
    obs.validate();
    if (walk_before_drop < 0 || walk_after_drop < 0) throw ConfigError("pseudo-reset walk lengths must be >= 0");
    if (scatter_max_attempts < 1) throw ConfigError("scatter_max_attempts must be positive");
    if (guard_turn_budget < 1 || guard_backup_rounds < 1) throw ConfigError("guard budgets must be positive");
}

namespace {

bool disc_clear_of_obstacles(const RoomSpec& room, Vec2 p, double radius) {
    for (const Rect& r : room.obstacles) {
        const Rect grown{r.x0 - radius, r.y0 - radius, r.x1 + radius, r.y1 + radius};
        if (grown.contains_closed(p)) return false;
    }
    return true;
}

bool point_in_any_obstacle(const RoomSpec& room, Vec2 p) {
    for (const Rect& r : room.obstacles)
        if (r.contains_open(p)) return true;
    return false;
}

// Moves the robot (and a held object with it) along dir by at most dist.
// The contact arithmetic can land an ulp past a boundary; snap back so the
// pose invariants (inside bounds, never inside an obstacle) hold exactly.
void translate_robot(WorldState& s, const RoomSpec& room, Vec2 dir, double dist) {
    const double t = clip_travel({s.pose.x, s.pose.y}, dir, dist, room.bounds(), room.obstacles);
    Vec2 end{s.pose.x + t * dir.x, s.pose.y + t * dir.y};
    end.x = std::clamp(end.x, 0.0, room.width);
    end.y = std::clamp(end.y, 0.0, room.height);
    for (const Rect& r : room.obstacles) {
        if (!r.contains_open(end)) continue;
        const double d[4] = {end.x - r.x0, r.x1 - end.x, end.y - r.y0, r.y1 - end.y};
        int face = 0;
        for (int i = 1; i < 4; ++i)
            if (d[i] < d[face]) face = i;
        if (face == 0) end.x = r.x0;
        if (face == 1) end.x = r.x1;
        if (face == 2) end.y = r.y0;
        if (face == 3) end.y = r.y1;
    }
    s.pose.x = end.x;
    s.pose.y = end.y;
    if (auto h = s.held_index()) s.objects[*h].position = {s.pose.x, s.pose.y};
}

}  // namespace

WorldState scatter_objects(const RoomSpec& room, RngStream rng, int max_attempts) {
    room.validate();
    WorldState s;
    s.rng = std::move(rng);
    s.objects.reserve(room.object_count);
    const double r = room.object_radius;
    for (int k = 0; k < room.object_count; ++k) {
        bool placed = false;
        for (int attempt = 0; attempt < max_attempts; ++attempt) {
            const Vec2 p{s.rng.uniform(r, room.width - r), s.rng.uniform(r, room.height - r)};
            if (!disc_clear_of_obstacles(room, p, r)) continue;
            bool overlapping = false;
            for (const ObjectState& o : s.objects)
                if (norm(p - o.position) < 1.5 * r) {  // overlap deeper than half a radius
                    overlapping = true;
                    break;
                }
            if (overlapping) continue;
            s.objects.push_back({p, ObjectStatus::free_});
            placed = true;
            break;
        }
        if (!placed) throw ConfigError("scatter_objects: no room left for object " + std::to_string(k));
    }
    bool robot_placed = false;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        const Vec2 p{s.rng.uniform(0.0, room.width), s.rng.uniform(0.0, room.height)};
        if (point_in_any_obstacle(room, p)) continue;
        s.pose.x = p.x;
        s.pose.y = p.y;
        robot_placed = true;
        break;
    }
    if (!robot_placed) throw ConfigError("scatter_objects: no free space for the robot");
    s.pose.heading = normalize_angle(s.rng.uniform(0.0, 2.0 * 3.14159265358979323846));
    s.step_count = 0;
    return s;
}

void step_base(WorldState& s, const RoomSpec& room, std::array<double, 2> a) {
    if (!std::isfinite(a[0]) || !std::isfinite(a[1]))
        throw std::invalid_argument("step_base: non-finite action");
    const double fwd = std::clamp(a[0], -1.0, 1.0);
    const double turn = std::clamp(a[1], -1.0, 1.0);
    s.pose.heading = normalize_angle(s.pose.heading + turn * kTurnScale);
    const double dist = (fwd + 1.0) * kForwardHalfRange;
    translate_robot(s, room, {std::cos(s.pose.heading), std::sin(s.pose.heading)}, dist);
    ++s.step_count;
}

bool grasp_space_blocked(const WorldState& s, const RoomSpec& room) {
    const Obb region = grasp_region::world_obb(s.pose);
    if (!obb_inside_rect(region, room.bounds())) return true;
    for (const Rect& r : room.obstacles)
        if (obb_intersects_rect(region, r)) return true;
    return false;
}

void obstacle_guard(WorldState& s, const WorldParams& p) {
    if (!grasp_space_blocked(s, p.room)) return;
    for (int round = 0; round < p.guard_backup_rounds; ++round) {
        for (int t = 0; t < p.guard_turn_budget; ++t) {
            const double sign = s.rng.coin(0.5) ? 1.0 : -1.0;
            s.pose.heading = normalize_angle(s.pose.heading + sign * kTurnScale);
            if (auto h = s.held_index()) s.objects[*h].position = {s.pose.x, s.pose.y};
            if (!grasp_space_blocked(s, p.room)) return;
        }
        // Turning alone did not clear the grasp space; back away one step.
        translate_robot(s, p.room, {-std::cos(s.pose.heading), -std::sin(s.pose.heading)}, kMaxStepDistance);
        if (!grasp_space_blocked(s, p.room)) return;
    }
}

int attempt_grasp_point(WorldState& s, Vec2 point_rf, double tolerance) {
    if (s.holding()) throw std::logic_error("attempt_grasp: an object is already held");
    double best = std::numeric_limits<double>::infinity();
    int best_idx = -1;
    for (size_t i = 0; i < s.objects.size(); ++i) {
        if (s.objects[i].status != ObjectStatus::free_) continue;
        const Vec2 q = world_to_robot(s.pose, s.objects[i].position);
        const double d = norm(q - point_rf);
        if (d <= tolerance && d < best) {
            best = d;
            best_idx = static_cast<int>(i);
        }
    }
    ++s.step_count;
    if (best_idx < 0) return 0;
    s.objects[best_idx].status = ObjectStatus::held;
    s.objects[best_idx].position = {s.pose.x, s.pose.y};
    return 1;
}

int attempt_grasp(WorldState& s, int cell, double tolerance) {
    if (cell < 0 || cell >= grasp_region::kCells)
        throw std::invalid_argument("attempt_grasp: cell index out of range");
    return attempt_grasp_point(s, grasp_region::cell_center(cell), tolerance);
}

void deposit_held(WorldState& s) {
    const auto h = s.held_index();
    if (!h) throw std::logic_error("deposit_held: nothing held");
    s.objects[*h].status = ObjectStatus::collected;
}

void drop_held_in_grasp_region(WorldState& s, const RoomSpec& room) {
    const auto h = s.held_index();
    if (!h) throw std::logic_error("drop_held_in_grasp_region: nothing held");
    const double r = room.object_radius;
    Vec2 w{s.pose.x, s.pose.y};  // fallback: release where the robot stands
    for (int attempt = 0; attempt < 100; ++attempt) {
        const Vec2 q{s.rng.uniform(grasp_region::kX0, grasp_region::kX1),
                     s.rng.uniform(grasp_region::kY0, grasp_region::kY1)};
        const Vec2 cand = robot_to_world(s.pose, q);
        const Rect inner{r, r, room.width - r, room.height - r};
        if (!inner.contains_closed(cand)) continue;
        if (!disc_clear_of_obstacles(room, cand, r)) continue;
        w = cand;
        break;
    }
    s.objects[*h].position = w;
    s.objects[*h].status = ObjectStatus::free_;
}

void pseudo_reset(WorldState& s, const WorldParams& p) {
    if (!s.holding()) throw std::logic_error("pseudo_reset: nothing held");
    for (int k = 0; k < p.walk_before_drop; ++k) {
        const std::array<double, 2> a{s.rng.uniform(-1.0, 1.0), s.rng.uniform(-1.0, 1.0)};
        step_base(s, p.room, a);
    }
    drop_held_in_grasp_region(s, p.room);
    for (int k = 0; k < p.walk_after_drop; ++k) {
        const std::array<double, 2> a{s.rng.uniform(-1.0, 1.0), s.rng.uniform(-1.0, 1.0)};
        step_base(s, p.room, a);
    }
}

namespace {

struct RenderContext {
    const ObsSpec& obs;
    const RoomSpec& room;
    const WorldState& state;
    std::vector<Vec2> objects_rf;  // free objects, robot frame
    double cos_fov2;
    double tan_fov2;

    RenderContext(const ObsSpec& o, const RoomSpec& rm, const WorldState& st) : obs(o), room(rm), state(st) {
        for (const ObjectState& ob : st.objects)
            if (ob.status == ObjectStatus::free_) objects_rf.push_back(world_to_robot(st.pose, ob.position));
        const double half = o.fov_deg * 3.14159265358979323846 / 360.0;
        cos_fov2 = std::cos(half);
        tan_fov2 = std::tan(half);
    }

    bool in_wedge(Vec2 p) const {
        const double r2 = p.x * p.x + p.y * p.y;
        if (r2 > obs.range * obs.range) return false;
        if (p.x < 0.0) return false;
        return std::abs(p.y) <= p.x * tan_fov2 + 1e-12;
    }

    void pixel(int row, int col, float& v_obj, float& v_obst, float& v_floor) const {
        const double x0 = obs.x_edges[row], x1 = obs.x_edges[row + 1];
        const double y0 = obs.y_edges[col], y1 = obs.y_edges[col + 1];
        const double diag = std::hypot(x1 - x0, y1 - y0);
        const double r_eff = std::max(room.object_radius, obs.min_apparent_diag * diag);
        const double r_eff2 = r_eff * r_eff;
        const int ss = obs.supersample;
        int n_obj = 0, n_obst = 0, n_floor = 0;
        for (int i = 0; i < ss; ++i) {
            const double px = x0 + (x1 - x0) * (i + 0.5) / ss;
            for (int j = 0; j < ss; ++j) {
                const double py = y0 + (y1 - y0) * (j + 0.5) / ss;
                const Vec2 p{px, py};
                if (!in_wedge(p)) continue;
                const Vec2 w = robot_to_world(state.pose, p);
                const bool obst = !room.bounds().contains_closed(w) || point_in_any_obstacle(room, w);
                if (obst)
                    ++n_obst;
                else
                    ++n_floor;
                for (const Vec2& q : objects_rf) {
                    const double dx = p.x - q.x, dy = p.y - q.y;
                    if (dx * dx + dy * dy <= r_eff2) {
                        ++n_obj;
                        break;
                    }
                }
            }
        }
        const float denom = static_cast<float>(ss * ss);
        v_obj = n_obj / denom;
        v_obst = n_obst / denom;
        v_floor = n_floor / denom;
    }
};

Tensor render_window(const WorldState& s, const ObsSpec& obs, const RoomSpec& room, int row0, int col0, int h,
                     int w) {
    if (!obs.finalized()) throw std::logic_error("ObsSpec not finalized");
    RenderContext ctx(obs, room, s);
    Tensor out = Tensor::zeros({ObsSpec::kChannels, h, w});
    float* obj = out.data.data();
    float* obst = obj + static_cast<size_t>(h) * w;
    float* floor = obst + static_cast<size_t>(h) * w;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const size_t k = static_cast<size_t>(r) * w + c;
            ctx.pixel(row0 + r, col0 + c, obj[k], obst[k], floor[k]);
        }
    return out;
}

}  // namespace

Tensor render_nav_obs(const WorldState& s, const ObsSpec& obs, const RoomSpec& room) {
    return render_window(s, obs, room, 0, 0, obs.size, obs.size);
}

Tensor render_grasp_obs(const WorldState& s, const ObsSpec& obs, const RoomSpec& room) {
    return render_window(s, obs, room, obs.crop_row0, obs.crop_col0, obs.crop, obs.crop);
}

Tensor crop_grasp_window(const Tensor& nav_obs, const ObsSpec& obs) {
    const int n = obs.size, c = obs.crop;
    Tensor out = Tensor::zeros({ObsSpec::kChannels, c, c});
    for (int ch = 0; ch < ObsSpec::kChannels; ++ch)
        for (int r = 0; r < c; ++r)
            for (int k = 0; k < c; ++k)
                out.data[(static_cast<size_t>(ch) * c + r) * c + k] =
                    nav_obs.data[(static_cast<size_t>(ch) * n + (obs.crop_row0 + r)) * n + (obs.crop_col0 + k)];
    return out;
}

}  // namespace relmm
