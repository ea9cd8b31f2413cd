// SPDX-License-Identifier: Apache-2.0

#include "envsem/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace envsem {

namespace {

constexpr std::array<VehicleClass, 3> kClasses{{
    {VehicleKind::Car, "car", 3.71, 1.79, 1.55},
    {VehicleKind::Van, "van", 5.20, 2.61, 2.47},
    {VehicleKind::Bus, "bus", 11.08, 3.25, 3.33},
}};

struct Interval {
    double lo;
    double hi;
};

Interval project_onto(const std::array<Vec2, 4>& poly, Vec2 axis) {
    Interval r{1e300, -1e300};
    for (const auto& p : poly) {
        const double d = p.x * axis.x + p.y * axis.y;
        r.lo = std::min(r.lo, d);
        r.hi = std::max(r.hi, d);
    }
    return r;
}

Vec3 antenna_position(const Vehicle& v) { return {v.center.x, v.center.y, v.height()}; }

void update_target(Frame& frame, const SceneConfig& config, Rng& target_stream) {
    if (frame.target_user_id) {
        const Vehicle* current = frame.find(*frame.target_user_id);
        if (current != nullptr && visible_to_all_cameras(*current, config)) {
            frame.user_antenna_pos = antenna_position(*current);
            return;
        }
    }
    std::vector<const Vehicle*> candidates;
    for (const auto& v : frame.vehicles)
        if (visible_to_all_cameras(v, config)) candidates.push_back(&v);
    if (candidates.empty()) {
        frame.target_user_id.reset();
        frame.user_antenna_pos = {};
        return;
    }
    const Vehicle* chosen = candidates[target_stream.below(candidates.size())];
    frame.target_user_id = chosen->id;
    frame.user_antenna_pos = antenna_position(*chosen);
}

} // namespace

std::span<const VehicleClass> vehicle_classes() { return kClasses; }

const VehicleClass& vehicle_class(VehicleKind kind) {
    return kClasses.at(static_cast<std::size_t>(kind));
}

VehicleKind vehicle_kind_from_name(std::string_view name) {
    for (const auto& c : kClasses)
        if (c.name == name) return c.kind;
    throw ConfigError("unknown vehicle class '" + std::string(name) + "'");
}

std::vector<CameraPose> SceneConfig::default_cameras() {
    constexpr double deg = std::numbers::pi / 180.0;
    return {
        CameraPose{{0.0, -11.5, 5.0}, 90.0 * deg, -20.0 * deg, 100.0 * deg},
        CameraPose{{0.0, 11.5, 5.0}, -90.0 * deg, -20.0 * deg, 100.0 * deg},
    };
}

double SceneConfig::lane_heading(int lane) const {
    return lane_center(lane) > 0.0 ? std::numbers::pi : 0.0;
}

void SceneConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(std::string("invalid scene config: ") + what);
    };
    require(street_length_m > 0.0, "street_length_m must be positive");
    require(lane_count >= 1, "lane_count must be >= 1");
    require(lane_width_m > 0.0, "lane_width_m must be positive");
    require(sidewalk_width_m >= 0.0, "sidewalk_width_m must be >= 0");
    require(building_setback_m >= 0.0, "building_setback_m must be >= 0");
    require(building_height_m >= 0.0, "building_height_m must be >= 0");
    require(slot_duration_s > 0.0, "slot_duration_s must be positive");
    require(frame_count >= 1, "frame_count must be >= 1");
    require(spawn_rate >= 0.0, "spawn_rate must be >= 0");
    require(speed_range_mps.first >= 0.0 &&
                speed_range_mps.first <= speed_range_mps.second,
            "speed_range_mps must satisfy 0 <= min <= max");
    require(!camera_poses.empty(), "at least one camera is required");
    require(camera_aspect > 0.0, "camera_aspect must be positive");
    require(warmup_slots >= 0, "warmup_slots must be >= 0");
    for (const auto& c : camera_poses)
        require(c.hfov > 0.0 && c.hfov < std::numbers::pi,
                "camera hfov must lie in (0, pi)");
    require(std::abs(bs_position.y) < facade_offset() || building_height_m == 0.0,
            "BS must stand between the facades");
    require(spawn_rate > 0.0 || !initial_vehicles.empty(),
            "empty spawn: no vehicle can ever become the target user");
    for (const auto& iv : initial_vehicles) {
        require(iv.lane >= 0 && iv.lane < lane_count, "initial vehicle lane out of range");
        require(iv.speed >= speed_range_mps.first && iv.speed <= speed_range_mps.second,
                "initial vehicle speed outside speed_range_mps");
    }
}

std::array<Vec2, 4> Vehicle::footprint() const {
    const auto& c = cls();
    const double ch = std::cos(heading), sh = std::sin(heading);
    const Vec2 fwd{ch * 0.5 * c.length, sh * 0.5 * c.length};
    const Vec2 side{-sh * 0.5 * c.width, ch * 0.5 * c.width};
    return {center - fwd - side, center + fwd - side, center + fwd + side,
            center - fwd + side};
}

const Vehicle* Frame::find(std::uint32_t id) const {
    for (const auto& v : vehicles)
        if (v.id == id) return &v;
    return nullptr;
}

SceneStreams::SceneStreams(std::uint64_t seed)
    : spawn(Rng(seed).child("spawn")),
      kind(Rng(seed).child("class")),
      speed(Rng(seed).child("speed")),
      target(Rng(seed).child("target")) {}

bool footprints_overlap(const Vehicle& a, const Vehicle& b) {
    const auto pa = a.footprint();
    const auto pb = b.footprint();
    for (const auto* poly : {&pa, &pb}) {
        for (int i = 0; i < 4; ++i) {
            const Vec2 e = (*poly)[(i + 1) % 4] - (*poly)[i];
            const Vec2 axis{-e.y, e.x};
            const Interval ia = project_onto(pa, axis);
            const Interval ib = project_onto(pb, axis);
            if (ia.hi <= ib.lo || ib.hi <= ia.lo) return false;
        }
    }
    return true;
}

bool footprint_in_street(const Vehicle& v, const SceneConfig& config) {
    const double hx = 0.5 * config.street_length_m;
    const double hy = config.road_half_width();
    double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
    for (const auto& p : v.footprint()) {
        lo_x = std::min(lo_x, p.x);
        hi_x = std::max(hi_x, p.x);
        lo_y = std::min(lo_y, p.y);
        hi_y = std::max(hi_y, p.y);
    }
    return hi_x > -hx && lo_x < hx && hi_y > -hy && lo_y < hy;
}

std::optional<std::pair<double, double>> intersect_vehicle(const Vehicle& v, Vec3 origin,
                                                           Vec3 dir) {
    const auto& c = v.cls();
    const double ch = std::cos(v.heading), sh = std::sin(v.heading);
    const double ox = origin.x - v.center.x, oy = origin.y - v.center.y;
    const std::array<double, 3> o{ch * ox + sh * oy, -sh * ox + ch * oy, origin.z};
    const std::array<double, 3> d{ch * dir.x + sh * dir.y, -sh * dir.x + ch * dir.y, dir.z};
    const std::array<double, 3> lo{-0.5 * c.length, -0.5 * c.width, 0.0};
    const std::array<double, 3> hi{0.5 * c.length, 0.5 * c.width, c.height};
    double t0 = -1e300, t1 = 1e300;
    for (int a = 0; a < 3; ++a) {
        if (d[a] == 0.0) {
            if (o[a] < lo[a] || o[a] > hi[a]) return std::nullopt;
            continue;
        }
        double ta = (lo[a] - o[a]) / d[a];
        double tb = (hi[a] - o[a]) / d[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) return std::nullopt;
    }
    return std::make_pair(t0, t1);
}

CameraFrame::CameraFrame(const CameraPose& pose, double aspect_h_over_w)
    : origin(pose.position) {
    const double cp = std::cos(pose.pitch), sp = std::sin(pose.pitch);
    const double cy = std::cos(pose.yaw), sy = std::sin(pose.yaw);
    forward = {cp * cy, cp * sy, sp};
    right = {sy, -cy, 0.0};
    up = cross(right, forward);
    tan_half_h = std::tan(0.5 * pose.hfov);
    tan_half_v = tan_half_h * aspect_h_over_w;
}

std::optional<Vec2> CameraFrame::project(Vec3 p) const {
    const Vec3 d = p - origin;
    const double depth = dot(d, forward);
    if (depth <= 1e-9) return std::nullopt;
    return Vec2{dot(d, right) / (depth * tan_half_h), dot(d, up) / (depth * tan_half_v)};
}

Vec3 CameraFrame::ray(double sx, double sy) const {
    return forward + (sx * tan_half_h) * right + (sy * tan_half_v) * up;
}

bool in_camera_view(const Vehicle& v, const CameraPose& cam, double aspect_h_over_w) {
    const CameraFrame frame(cam, aspect_h_over_w);
    const auto s = frame.project(antenna_position(v));
    return s && std::abs(s->x) <= 1.0 && std::abs(s->y) <= 1.0;
}

bool visible_to_all_cameras(const Vehicle& v, const SceneConfig& config) {
    return std::all_of(config.camera_poses.begin(), config.camera_poses.end(),
                       [&](const CameraPose& c) { return in_camera_view(v, c, config.camera_aspect); });
}

Frame advance_frame(const Frame& frame, const SceneConfig& config, SceneStreams& streams,
                    std::uint32_t& next_id) {
    Frame next;
    next.t_index = frame.t_index + 1;
    next.target_user_id = frame.target_user_id;
    next.vehicles.reserve(frame.vehicles.size() + 2);

    const double dt = config.slot_duration_s;
    for (const auto& v : frame.vehicles) {
        Vehicle moved = v;
        // Lane-bound motion: only the along-street coordinate changes.
        moved.center.x = v.center.x + v.speed * dt * std::cos(v.heading);
        if (footprint_in_street(moved, config)) next.vehicles.push_back(moved);
    }

    const unsigned spawns = streams.spawn.poisson(config.spawn_rate);
    for (unsigned s = 0; s < spawns; ++s) {
        Vehicle v;
        v.lane = static_cast<int>(streams.kind.below(static_cast<std::uint64_t>(config.lane_count)));
        v.kind = static_cast<VehicleKind>(streams.kind.below(kClasses.size()));
        v.heading = config.lane_heading(v.lane);
        double speed = streams.speed.uniform(config.speed_range_mps.first,
                                             config.speed_range_mps.second);
        const double dir = std::cos(v.heading);
        const double entry = -dir * 0.5 * config.street_length_m;
        v.center = {entry + dir * 0.5 * v.cls().length, config.lane_center(v.lane)};
        // Never faster than the vehicle ahead in the lane, so lanes stay collision free.
        const Vehicle* leader = nullptr;
        for (const auto& o : next.vehicles) {
            if (o.lane != v.lane) continue;
            if (leader == nullptr || dir * o.center.x < dir * leader->center.x) leader = &o;
        }
        if (leader != nullptr) speed = std::min(speed, leader->speed);
        v.speed = speed;
        const bool blocked = std::any_of(next.vehicles.begin(), next.vehicles.end(),
                                         [&](const Vehicle& o) { return footprints_overlap(v, o); });
        if (blocked) continue;
        v.id = next_id++;
        next.vehicles.push_back(v);
    }

    update_target(next, config, streams.target);
    return next;
}

std::vector<Frame> generate_scenario(const SceneConfig& config) {
    config.validate();
    SceneStreams streams(config.seed);
    std::uint32_t next_id = 0;

    Frame frame;
    frame.t_index = -config.warmup_slots;
    for (const auto& iv : config.initial_vehicles) {
        Vehicle v;
        v.id = next_id++;
        v.kind = iv.kind;
        v.lane = iv.lane;
        v.heading = config.lane_heading(iv.lane);
        v.center = {iv.x, config.lane_center(iv.lane)};
        v.speed = iv.speed;
        if (!footprint_in_street(v, config))
            throw ConfigError("initial vehicle lies outside the street");
        for (const auto& o : frame.vehicles)
            if (footprints_overlap(v, o)) throw ConfigError("initial vehicles overlap");
        frame.vehicles.push_back(v);
    }
    update_target(frame, config, streams.target);

    for (int w = 0; w < config.warmup_slots; ++w) frame = advance_frame(frame, config, streams, next_id);

    std::vector<Frame> frames;
    frames.reserve(static_cast<std::size_t>(config.frame_count));
    frames.push_back(frame);
    while (static_cast<int>(frames.size()) < config.frame_count)
        frames.push_back(advance_frame(frames.back(), config, streams, next_id));
    return frames;
}

} // namespace envsem
