// SPDX-License-Identifier: Apache-2.0

#include "envsem/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace envsem {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_phase(double phi) {
    double r = std::fmod(phi, kTwoPi);
    if (r < 0.0) r += kTwoPi;
    if (r >= kTwoPi) r = 0.0;
    return r;
}

// Segment parameters shorter than this are treated as a touch, not a crossing.
constexpr double kTouchTolerance = 1e-9;

PathComponent make_path(PathKind kind, Vec3 bs, Vec3 first_hop, double length, int bounces,
                        const RayTraceConfig& config) {
    PathComponent p;
    p.kind = kind;
    p.is_los = kind == PathKind::Los;
    p.delay = length / kSpeedOfLight;
    p.amplitude = config.wavelength() / (4.0 * std::numbers::pi * length) *
                  std::pow(std::abs(config.reflection), bounces);
    p.phase = wrap_phase(-kTwoPi * config.carrier_hz * p.delay + bounces * std::arg(config.reflection));
    std::tie(p.azimuth, p.elevation) = direction_angles(first_hop - bs);
    return p;
}

} // namespace

void RayTraceConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(std::string("invalid ray-trace config: ") + what);
    };
    require(carrier_hz > 0.0, "carrier_hz must be positive");
    require(subcarriers >= 1, "subcarriers must be >= 1");
    require(subcarrier_spacing_hz >= 0.0, "subcarrier_spacing_hz must be >= 0");
    require(antennas >= 1, "antennas must be >= 1");
    require(antenna_spacing_m >= 0.0, "antenna_spacing_m must be >= 0");
    require(max_paths >= 1, "max_paths must be >= 1");
    require(std::abs(reflection) <= 1.0, "|reflection| must be <= 1");
    require(noise_power_w > 0.0, "noise_power_w must be positive");
    require(tx_power_w > 0.0, "tx_power_w must be positive");
}

Eigen::VectorXcd steering_vector(double azimuth, double elevation, double frequency_hz,
                                 const RayTraceConfig& config) {
    const double varpi = kTwoPi * config.spacing() * frequency_hz / kSpeedOfLight;
    const double u = std::sin(elevation) * std::cos(azimuth);
    Eigen::VectorXcd a(config.antennas);
    for (int n = 0; n < config.antennas; ++n) a[n] = std::polar(1.0, varpi * n * u);
    return a;
}

std::pair<double, double> direction_angles(Vec3 d) {
    double az = std::atan2(d.y, d.x);
    if (az <= -std::numbers::pi) az = std::numbers::pi;
    const double el = std::atan2(std::hypot(d.x, d.y), std::abs(d.z));
    return {az, el};
}

Vec3 bs_array_position(const SceneConfig& scene, const RayTraceConfig& config) {
    Vec3 p = scene.bs_position;
    if (config.bs_antenna_height) p.z = *config.bs_antenna_height;
    return p;
}

bool segment_blocked(Vec3 a, Vec3 b, std::span<const Vehicle> vehicles,
                     std::optional<std::uint32_t> ignore_id) {
    const Vec3 d = b - a;
    for (const auto& v : vehicles) {
        if (ignore_id && v.id == *ignore_id) continue;
        const auto hit = intersect_vehicle(v, a, d);
        if (!hit) continue;
        const double lo = std::max(hit->first, 0.0);
        const double hi = std::min(hit->second, 1.0);
        if (hi - lo > kTouchTolerance) return true;
    }
    return false;
}

std::vector<PathComponent> trace_paths_to(Vec3 user, std::span<const Vehicle> vehicles,
                                          const SceneConfig& scene, const RayTraceConfig& config) {
    const Vec3 bs = bs_array_position(scene, config);
    std::vector<PathComponent> paths;

    auto blocked = [&](Vec3 a, Vec3 b) { return segment_blocked(a, b, vehicles, std::nullopt); };

    if (!blocked(bs, user)) paths.push_back(make_path(PathKind::Los, bs, user, norm(user - bs), 0, config));

    if (scene.building_height_m > 0.0) {
        const double near_side = bs.y > 0.0 ? 1.0 : -1.0;
        for (double side : {near_side, -near_side}) {
            const double plane = side * scene.facade_offset();
            const Vec3 image{bs.x, 2.0 * plane - bs.y, bs.z};
            const double denom = user.y - image.y;
            if (denom == 0.0) continue;
            const double t = (plane - image.y) / denom;
            if (!(t > 0.0 && t < 1.0)) continue;
            const Vec3 hit = image + t * (user - image);
            if (std::abs(hit.x) > 0.5 * scene.street_length_m || hit.z < 0.0 ||
                hit.z > scene.building_height_m)
                continue;
            if (blocked(bs, hit) || blocked(hit, user)) continue;
            const PathKind kind = side == near_side ? PathKind::FacadeNear : PathKind::FacadeFar;
            paths.push_back(make_path(kind, bs, hit, norm(user - image), 1, config));
        }
    }

    if (bs.z > 0.0 && user.z > 0.0) {
        const Vec3 image{bs.x, bs.y, -bs.z};
        const double t = bs.z / (bs.z + user.z);
        const Vec3 hit = image + t * (user - image);
        if (!blocked(bs, hit) && !blocked(hit, user))
            paths.push_back(make_path(PathKind::Ground, bs, hit, norm(user - image), 1, config));
    }

    std::erase_if(paths, [](const PathComponent& p) { return !(p.amplitude > 0.0); });
    std::stable_sort(paths.begin(), paths.end(), [](const PathComponent& a, const PathComponent& b) {
        return a.amplitude > b.amplitude;
    });
    if (paths.size() > static_cast<std::size_t>(config.max_paths))
        paths.resize(static_cast<std::size_t>(config.max_paths));
    return paths;
}

std::vector<PathComponent> trace_paths(const Frame& frame, const SceneConfig& scene,
                                       const RayTraceConfig& config) {
    const Vehicle* target = frame.target();
    if (target == nullptr) throw ConfigError("trace_paths: frame has no target user");
    const Vec3 user{target->center.x, target->center.y, target->height()};
    return trace_paths_to(user, frame.vehicles, scene, config);
}

ChannelMatrix assemble_channel(std::span<const PathComponent> paths, const RayTraceConfig& config) {
    ChannelMatrix h = ChannelMatrix::Zero(config.subcarriers, config.antennas);
    const double spacing = config.spacing();
    for (const auto& p : paths) {
        const double u = std::sin(p.elevation) * std::cos(p.azimuth);
        for (int k = 0; k < config.subcarriers; ++k) {
            const double f = config.subcarrier_hz(k);
            const cdouble gain = p.amplitude * std::polar(1.0, -kTwoPi * f * p.delay + p.phase);
            const double varpi = kTwoPi * spacing * f / kSpeedOfLight;
            for (int n = 0; n < config.antennas; ++n)
                h(k, n) += gain * std::polar(1.0, varpi * n * u);
        }
    }
    return h;
}

cdouble received_signal(const Eigen::VectorXcd& h, const Eigen::VectorXcd& w, cdouble s,
                        cdouble noise) {
    if (h.size() != w.size())
        throw ConfigError("received_signal: channel and beam lengths differ");
    // Plain transpose: no conjugation of h.
    return (h.transpose() * w)(0) * s + noise;
}

std::optional<bool> blockage_label(std::span<const Frame> frames, int t0, int horizon,
                                   const SceneConfig& scene, const RayTraceConfig& config) {
    if (t0 < 0 || horizon < 0 || static_cast<std::size_t>(t0 + horizon) >= frames.size())
        throw std::out_of_range("blockage_label: window exceeds the frame range");
    const auto& start = frames[static_cast<std::size_t>(t0)];
    if (!start.target_user_id) throw ConfigError("blockage_label: frame has no target user");
    const std::uint32_t id = *start.target_user_id;
    const Vehicle* v = nullptr;
    for (int t = t0; t <= t0 + horizon; ++t) {
        v = frames[static_cast<std::size_t>(t)].find(id);
        if (v == nullptr) return std::nullopt;
    }
    const auto& end = frames[static_cast<std::size_t>(t0 + horizon)];
    const Vec3 user{v->center.x, v->center.y, v->height()};
    const auto paths = trace_paths_to(user, end.vehicles, scene, config);
    return std::none_of(paths.begin(), paths.end(), [](const PathComponent& p) { return p.is_los; });
}

} // namespace envsem
