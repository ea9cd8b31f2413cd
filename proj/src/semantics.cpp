// SPDX-License-Identifier: Apache-2.0

#include "envsem/semantics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace envsem {

namespace {

constexpr std::array<std::string_view, kConceptCount> kNames{
    "building", "fence",  "pedestrian", "pole",      "roadline",     "sidewalk", "vegetation",
    "vehicle",  "wall",   "trafficsign", "sky",      "ground",       "bridge",   "railtrack",
    "trafficlight", "static", "dynamic", "water",    "terrain",      "unlabeled",
};

constexpr double kMarkingHalfWidth = 0.075;
constexpr double kDashPeriod = 6.0;
constexpr double kDashLength = 3.0;

struct ScreenRect {
    double lo_x, hi_x, lo_y, hi_y;
    bool always = false; // some corner behind the camera; test every pixel
};

std::uint8_t ground_label(double x, double y, const SceneConfig& config) {
    const double ay = std::abs(y);
    const double road = config.road_half_width();
    if (ay <= road) {
        for (int b = 1; b < config.lane_count; ++b) {
            const double yb = -road + b * config.lane_width_m;
            if (std::abs(y - yb) > kMarkingHalfWidth) continue;
            const bool divider = config.lane_heading(b - 1) != config.lane_heading(b);
            if (divider) return kRoadline;
            double phase = std::fmod(x + 0.5 * config.street_length_m, kDashPeriod);
            if (phase < 0.0) phase += kDashPeriod;
            return phase < kDashLength ? kRoadline : kGround;
        }
        return kGround;
    }
    if (ay <= config.sidewalk_outer()) return kSidewalk;
    return kGround;
}

ScreenRect screen_bounds(const Vehicle& v, const CameraFrame& cam) {
    ScreenRect r{1e300, -1e300, 1e300, -1e300};
    const auto fp = v.footprint();
    for (const auto& p : fp) {
        for (double z : {0.0, v.height()}) {
            const auto s = cam.project({p.x, p.y, z});
            if (!s) {
                r.always = true;
                return r;
            }
            r.lo_x = std::min(r.lo_x, s->x);
            r.hi_x = std::max(r.hi_x, s->x);
            r.lo_y = std::min(r.lo_y, s->y);
            r.hi_y = std::max(r.hi_y, s->y);
        }
    }
    return r;
}

} // namespace

const std::array<std::string_view, kConceptCount>& concept_names() { return kNames; }

std::string_view concept_name(int concept_index) {
    if (concept_index < 0 || concept_index >= kConceptCount)
        throw ConfigError("concept index out of range: " + std::to_string(concept_index));
    return kNames[static_cast<std::size_t>(concept_index)];
}

int concept_from_name(std::string_view name) {
    for (int i = 0; i < kConceptCount; ++i)
        if (kNames[static_cast<std::size_t>(i)] == name) return i;
    throw ConfigError("unknown semantic concept '" + std::string(name) + "'");
}

SemanticMap render_semantic_map(const Frame& frame, const CameraPose& camera,
                                const SceneConfig& config, Resolution resolution,
                                int camera_id) {
    if (resolution.height < 16 || resolution.width < 16)
        throw ConfigError("render resolution must be at least 16x16");
    if (!(camera.hfov > 0.0) || !(camera.hfov < std::numbers::pi))
        throw ConfigError("degenerate camera: field of view must lie in (0, pi)");

    const double aspect = static_cast<double>(resolution.height) / resolution.width;
    const CameraFrame cam(camera, aspect);
    const Vec3 o = cam.origin;
    const double half_len = 0.5 * config.street_length_m;
    const double facade_y = config.facade_offset();
    const bool has_facades = config.building_height_m > 0.0;

    // Screen-space culling rectangles for the vehicle boxes.
    std::vector<ScreenRect> rects;
    rects.reserve(frame.vehicles.size());
    for (const auto& v : frame.vehicles) rects.push_back(screen_bounds(v, cam));

    SemanticMap map;
    map.camera_id = camera_id;
    map.height = resolution.height;
    map.width = resolution.width;
    map.labels.assign(static_cast<std::size_t>(resolution.height) * resolution.width, kSky);

    for (int i = 0; i < resolution.height; ++i) {
        const double sy = 1.0 - 2.0 * (i + 0.5) / resolution.height;
        for (int j = 0; j < resolution.width; ++j) {
            const double sx = 2.0 * (j + 0.5) / resolution.width - 1.0;
            const Vec3 d = cam.ray(sx, sy);
            double best = 1e300;
            std::uint8_t label = kSky;

            if (d.z < 0.0) {
                const double t = -o.z / d.z;
                if (t > 0.0) {
                    best = t;
                    label = ground_label(o.x + t * d.x, o.y + t * d.y, config);
                }
            }
            if (has_facades && d.y != 0.0) {
                for (double side : {-1.0, 1.0}) {
                    const double t = (side * facade_y - o.y) / d.y;
                    if (t <= 0.0 || t >= best) continue;
                    const double x = o.x + t * d.x;
                    const double z = o.z + t * d.z;
                    if (std::abs(x) <= half_len && z >= 0.0 && z <= config.building_height_m) {
                        best = t;
                        label = kBuilding;
                    }
                }
            }
            for (std::size_t k = 0; k < frame.vehicles.size(); ++k) {
                const auto& r = rects[k];
                if (!r.always && (sx < r.lo_x || sx > r.hi_x || sy < r.lo_y || sy > r.hi_y))
                    continue;
                const auto hit = intersect_vehicle(frame.vehicles[k], o, d);
                if (!hit || hit->second <= 0.0) continue;
                const double t = std::max(hit->first, 0.0);
                if (t < best) {
                    best = t;
                    label = kVehicle;
                }
            }
            map.labels[static_cast<std::size_t>(i) * resolution.width + j] = label;
        }
    }
    return map;
}

ConceptMask extract_mask(const SemanticMap& map, int concept_index) {
    if (concept_index < 0 || concept_index >= kConceptCount)
        throw ConfigError("concept index out of range: " + std::to_string(concept_index));
    ConceptMask m;
    m.concept_index = concept_index;
    m.height = map.height;
    m.width = map.width;
    m.mask.resize(map.labels.size());
    std::transform(map.labels.begin(), map.labels.end(), m.mask.begin(),
                   [c = static_cast<std::uint8_t>(concept_index)](std::uint8_t l) {
                       return static_cast<std::uint8_t>(l == c);
                   });
    return m;
}

SemanticMap corrupt_map(const SemanticMap& map, double p, Rng& rng) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("corruption probability must lie in [0, 1]");
    SemanticMap out = map;
    if (p == 0.0) return out;
    for (auto& l : out.labels)
        if (rng.uniform() < p) l = static_cast<std::uint8_t>(rng.below(kConceptCount));
    return out;
}

double pixel_accuracy(std::span<const SemanticMap> pred, std::span<const SemanticMap> truth) {
    if (pred.size() != truth.size()) throw ConfigError("pixel_accuracy: map counts differ");
    if (pred.empty()) throw ConfigError("pixel_accuracy: no maps");
    std::size_t hits = 0, total = 0;
    for (std::size_t n = 0; n < pred.size(); ++n) {
        const auto& a = pred[n];
        const auto& b = truth[n];
        if (a.height != b.height || a.width != b.width || a.labels.size() != b.labels.size())
            throw ConfigError("pixel_accuracy: map shapes differ");
        for (std::size_t k = 0; k < a.labels.size(); ++k) hits += a.labels[k] == b.labels[k];
        total += a.labels.size();
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

std::array<std::size_t, kConceptCount> label_histogram(const SemanticMap& map) {
    std::array<std::size_t, kConceptCount> h{};
    for (auto l : map.labels) {
        if (l >= kConceptCount) throw ConfigError("label outside the concept catalog");
        ++h[l];
    }
    return h;
}

} // namespace envsem
