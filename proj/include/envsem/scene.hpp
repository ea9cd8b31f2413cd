// SPDX-License-Identifier: Apache-2.0
//
// Synthetic street-canyon traffic: static geometry, vehicle kinematics per
// slot, and target-user selection.
//
// Coordinates: x runs along the street, y across it, z up. The road occupies
// |y| <= lane_count * lane_width / 2, followed on each side by a sidewalk, a
// ground strip of width building_setback_m, and a continuous building facade.

#pragma once

#include "envsem/common.hpp"
#include "envsem/rng.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace envsem {

enum class VehicleKind : std::uint8_t { Car = 0, Van = 1, Bus = 2 };

struct VehicleClass {
    VehicleKind kind;
    std::string_view name;
    double length;
    double width;
    double height;
};

std::span<const VehicleClass> vehicle_classes();
const VehicleClass& vehicle_class(VehicleKind kind);
VehicleKind vehicle_kind_from_name(std::string_view name);

struct CameraPose {
    Vec3 position;
    double yaw = 0.0;   ///< radians, counter-clockwise from +x
    double pitch = 0.0; ///< radians, positive looks up
    double hfov = 0.0;  ///< horizontal field of view, radians

    friend bool operator==(const CameraPose&, const CameraPose&) = default;
};

/// Vehicle placed on the street before the first slot.
struct InitialVehicle {
    VehicleKind kind = VehicleKind::Car;
    int lane = 0;
    double x = 0.0;
    double speed = 10.0;

    friend bool operator==(const InitialVehicle&, const InitialVehicle&) = default;
};

struct SceneConfig {
    double street_length_m = 120.0;
    int lane_count = 4;
    double lane_width_m = 3.5;
    double sidewalk_width_m = 3.0;
    double building_setback_m = 2.0;
    double building_height_m = 25.0;
    Vec3 bs_position{0.0, -9.5, 4.0};
    std::vector<CameraPose> camera_poses = default_cameras();
    /// Image height / width shared by every camera (square pixels).
    double camera_aspect = 0.5;
    double slot_duration_s = 0.05;
    int frame_count = 2000;
    double spawn_rate = 0.1;
    std::pair<double, double> speed_range_mps{8.0, 14.0};
    std::uint64_t seed = 1;
    /// Slots simulated before frame 0 so the street starts populated.
    int warmup_slots = 300;
    std::vector<InitialVehicle> initial_vehicles;

    /// Two cameras at 5 m on opposite sides of the street, facing across it.
    static std::vector<CameraPose> default_cameras();

    /// Throws ConfigError on any violated invariant.
    void validate() const;

    double road_half_width() const { return 0.5 * lane_count * lane_width_m; }
    double sidewalk_outer() const { return road_half_width() + sidewalk_width_m; }
    double facade_offset() const { return sidewalk_outer() + building_setback_m; }
    double lane_center(int lane) const {
        return -road_half_width() + (lane + 0.5) * lane_width_m;
    }
    /// Lanes with a negative centre line travel towards +x, the rest towards -x.
    double lane_heading(int lane) const;

    friend bool operator==(const SceneConfig&, const SceneConfig&) = default;
};

struct Vehicle {
    std::uint32_t id = 0;
    VehicleKind kind = VehicleKind::Car;
    Vec2 center;
    double heading = 0.0;
    double speed = 0.0;
    int lane = 0;

    const VehicleClass& cls() const { return vehicle_class(kind); }
    double height() const { return cls().height; }
    /// Footprint corners in counter-clockwise order.
    std::array<Vec2, 4> footprint() const;

    friend bool operator==(const Vehicle&, const Vehicle&) = default;
};

struct Frame {
    int t_index = 0;
    std::vector<Vehicle> vehicles;
    /// Absent only when no vehicle is visible to every camera.
    std::optional<std::uint32_t> target_user_id;
    Vec3 user_antenna_pos;

    const Vehicle* find(std::uint32_t id) const;
    const Vehicle* target() const {
        return target_user_id ? find(*target_user_id) : nullptr;
    }

    friend bool operator==(const Frame&, const Frame&) = default;
};

/// Named child streams; adding a stream never perturbs the others.
struct SceneStreams {
    Rng spawn;
    Rng kind;
    Rng speed;
    Rng target;

    explicit SceneStreams(std::uint64_t seed);
};

/// Advances one slot: constant-velocity motion along lane axes, despawn of
/// vehicles whose footprint has left the street, seeded Poisson spawning at
/// the entry edges (overlapping spawns are rejected), then target update.
/// `next_id` is the id handed to the next spawned vehicle.
Frame advance_frame(const Frame& frame, const SceneConfig& config, SceneStreams& streams,
                    std::uint32_t& next_id);

std::vector<Frame> generate_scenario(const SceneConfig& config);

/// Pinhole camera basis derived from a pose.
struct CameraFrame {
    Vec3 origin;
    Vec3 forward;
    Vec3 right;
    Vec3 up;
    double tan_half_h = 1.0; ///< tan(hfov / 2)
    double tan_half_v = 1.0; ///< tan_half_h * aspect

    CameraFrame(const CameraPose& pose, double aspect_h_over_w);

    /// Normalised image coordinates in [-1, 1]^2 (x right, y up) of a point in
    /// front of the camera; nullopt when the point is behind the image plane.
    std::optional<Vec2> project(Vec3 p) const;
    /// Ray direction through normalised image coordinates.
    Vec3 ray(double sx, double sy) const;
};

/// True when the vehicle roof antenna projects inside the camera image.
bool in_camera_view(const Vehicle& v, const CameraPose& cam, double aspect_h_over_w);
bool visible_to_all_cameras(const Vehicle& v, const SceneConfig& config);

/// Parameter interval [t_in, t_out] where the line origin + t * dir lies
/// inside the vehicle's closed box; nullopt when the line misses it.
std::optional<std::pair<double, double>> intersect_vehicle(const Vehicle& v, Vec3 origin,
                                                           Vec3 dir);

bool footprint_in_street(const Vehicle& v, const SceneConfig& config);
bool footprints_overlap(const Vehicle& a, const Vehicle& b);

} // namespace envsem
