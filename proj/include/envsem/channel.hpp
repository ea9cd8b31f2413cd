// SPDX-License-Identifier: Apache-2.0
//
// Image-method ray tracing in the street canyon and multipath OFDM channel
// assembly for a uniform linear array laid along the street (x) axis.

#pragma once

#include "envsem/common.hpp"
#include "envsem/scene.hpp"

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace envsem {

using cdouble = std::complex<double>;

struct RayTraceConfig {
    double carrier_hz = 28e9;
    int subcarriers = 128;
    double subcarrier_spacing_hz = 1e6;
    int antennas = 64;
    /// Element spacing in metres; zero selects half a wavelength at the carrier.
    double antenna_spacing_m = 0.0;
    int max_paths = 20;
    cdouble reflection = std::polar(0.6, std::numbers::pi);
    double noise_power_w = 1.0;
    double tx_power_w = 10.0;
    /// Overrides the z coordinate of the scene's BS position when set.
    std::optional<double> bs_antenna_height;

    double wavelength() const { return kSpeedOfLight / carrier_hz; }
    double spacing() const { return antenna_spacing_m > 0.0 ? antenna_spacing_m : 0.5 * wavelength(); }
    double snr() const { return tx_power_w / noise_power_w; }
    /// Subcarrier k sits at f_c + (k - floor(K/2)) * spacing.
    double subcarrier_hz(int k) const {
        return carrier_hz + static_cast<double>(k - subcarriers / 2) * subcarrier_spacing_hz;
    }
    void validate() const;

    friend bool operator==(const RayTraceConfig&, const RayTraceConfig&) = default;
};

enum class PathKind : std::uint8_t { Los = 0, Ground = 1, FacadeNear = 2, FacadeFar = 3 };

struct PathComponent {
    double amplitude = 0.0; ///< linear, dimensionless
    double phase = 0.0;     ///< radians in [0, 2pi)
    double delay = 0.0;     ///< seconds
    double azimuth = 0.0;   ///< radians in (-pi, pi], from the array axis
    double elevation = 0.0; ///< radians in [-pi/2, pi/2]
    bool is_los = false;
    PathKind kind = PathKind::Los;

    friend bool operator==(const PathComponent&, const PathComponent&) = default;
};

/// K x N_t complex channel; row k is h[k].
using ChannelMatrix = Eigen::MatrixXcd;

/// Array response exp(j * 2pi d f / c * n * sin(el) * cos(az)), n = 0..N_t-1.
Eigen::VectorXcd steering_vector(double azimuth, double elevation, double frequency_hz,
                                 const RayTraceConfig& config);

/// Angles of a departure direction in the array convention: azimuth in the
/// ground plane from +x, elevation = asin(horizontal range / length), so that
/// sin(el) * cos(az) is the direction cosine along the array.
std::pair<double, double> direction_angles(Vec3 direction);

Vec3 bs_array_position(const SceneConfig& scene, const RayTraceConfig& config);

/// True when the segment a-b runs through the interior of any vehicle box
/// other than `ignore_id`. Grazing contact, such as ending on a roof, does not
/// count.
bool segment_blocked(Vec3 a, Vec3 b, std::span<const Vehicle> vehicles,
                     std::optional<std::uint32_t> ignore_id);

/// Candidate paths: line of sight, a specular bounce off each facade, and a
/// ground bounce. Blocked and zero-amplitude paths are dropped; the rest are
/// sorted by amplitude and truncated to max_paths.
std::vector<PathComponent> trace_paths(const Frame& frame, const SceneConfig& scene,
                                       const RayTraceConfig& config);

/// Traces from the BS to an arbitrary antenna position. Every box, including
/// the user's own vehicle, can obstruct a path; a leg that only touches the
/// roof where the antenna sits is not obstructed.
std::vector<PathComponent> trace_paths_to(Vec3 user, std::span<const Vehicle> vehicles,
                                          const SceneConfig& scene, const RayTraceConfig& config);

ChannelMatrix assemble_channel(std::span<const PathComponent> paths, const RayTraceConfig& config);

/// r = h^T w s + noise.
cdouble received_signal(const Eigen::VectorXcd& h, const Eigen::VectorXcd& w, cdouble s,
                        cdouble noise);

/// Whether the target of frames[t0] has no line-of-sight path at t0 + horizon.
/// nullopt when that vehicle despawns inside the window (sample excluded).
std::optional<bool> blockage_label(std::span<const Frame> frames, int t0, int horizon,
                                   const SceneConfig& scene, const RayTraceConfig& config);

} // namespace envsem
