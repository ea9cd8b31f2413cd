// SPDX-License-Identifier: Apache-2.0

#include "envsem/semantics.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

using namespace envsem;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Independent pinhole projection: yaw about z, then pitch, x right / y up.
std::pair<double, double> project(const CameraPose& p, double aspect, Vec3 q) {
    const Vec3 d = q - p.position;
    const Vec3 f{std::cos(p.pitch) * std::cos(p.yaw), std::cos(p.pitch) * std::sin(p.yaw), std::sin(p.pitch)};
    const Vec3 r{std::sin(p.yaw), -std::cos(p.yaw), 0.0};
    const Vec3 u{-std::sin(p.pitch) * std::cos(p.yaw), -std::sin(p.pitch) * std::sin(p.yaw), std::cos(p.pitch)};
    const double th = std::tan(p.hfov / 2);
    const double depth = dot(d, f);
    return {dot(d, r) / (depth * th), dot(d, u) / (depth * th * aspect)};
}

SemanticMap random_map(int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    SemanticMap m{0, h, w, {}};
    for (int i = 0; i < h * w; ++i) m.labels.push_back(static_cast<std::uint8_t>(rng.below(kConceptCount)));
    return m;
}

} // namespace

TEST_SUITE("semantics") {

TEST_CASE("catalog order") {
    const char* expected[] = {"building", "fence", "pedestrian", "pole", "roadline", "sidewalk", "vegetation",
                              "vehicle", "wall", "trafficsign", "sky", "ground", "bridge", "railtrack",
                              "trafficlight", "static", "dynamic", "water", "terrain", "unlabeled"};
    for (int i = 0; i < kConceptCount; ++i) {
        CHECK(concept_name(i) == expected[i]);
        CHECK(concept_from_name(expected[i]) == i);
    }
    CHECK_THROWS_AS(concept_from_name("road"), ConfigError);
    CHECK_THROWS_AS(concept_name(20), ConfigError);
}

TEST_CASE("empty scene: sky above the horizon, ground classes below") {
    SceneConfig c;
    c.building_height_m = 0.0;
    const CameraPose cam{{0, 0, 5}, 0.0, 0.0, 90 * kDeg};
    const Resolution res{32, 64};
    const auto m = render_semantic_map(Frame{}, cam, c, res);
    const std::set<int> below{kGround, kRoadline, kSidewalk, kBuilding};
    for (int i = 0; i < res.height; ++i)
        for (int j = 0; j < res.width; ++j) {
            const double sy = 1.0 - 2.0 * (i + 0.5) / res.height;
            if (sy > 0)
                CHECK(m.at(i, j) == kSky);
            else
                CHECK(below.count(m.at(i, j)) == 1);
        }
}

TEST_CASE("facades fill the view across the street") {
    SceneConfig c;
    const auto m = render_semantic_map(Frame{}, c.camera_poses[0], c, {40, 80});
    const auto h = label_histogram(m);
    CHECK(h[kSky] == 0);
    CHECK(h[kBuilding] > 0);
    CHECK(h[kVehicle] == 0);
    CHECK(h[kSidewalk] > 0);
}

TEST_CASE("centred car lies inside its projected bounding box") {
    SceneConfig c;
    Frame f;
    Vehicle v;
    v.center = {0.0, c.lane_center(1)};
    f.vehicles.push_back(v);
    const Resolution res{80, 160};
    const auto& pose = c.camera_poses[0];
    const auto m = render_semantic_map(f, pose, c, res);
    const auto mask = extract_mask(m, kVehicle);
    double lo_x = 1e9, hi_x = -1e9, lo_y = 1e9, hi_y = -1e9;
    for (const auto& p : v.footprint())
        for (double z : {0.0, v.height()}) {
            const auto [sx, sy] = project(pose, 0.5, {p.x, p.y, z});
            lo_x = std::min(lo_x, sx);
            hi_x = std::max(hi_x, sx);
            lo_y = std::min(lo_y, sy);
            hi_y = std::max(hi_y, sy);
        }
    int count = 0;
    for (int i = 0; i < res.height; ++i)
        for (int j = 0; j < res.width; ++j) {
            if (!mask.mask[static_cast<std::size_t>(i) * res.width + j]) continue;
            ++count;
            const double sx = 2.0 * (j + 0.5) / res.width - 1.0;
            const double sy = 1.0 - 2.0 * (i + 0.5) / res.height;
            CHECK(sx >= lo_x - 1e-9);
            CHECK(sx <= hi_x + 1e-9);
            CHECK(sy >= lo_y - 1e-9);
            CHECK(sy <= hi_y + 1e-9);
        }
    CHECK(count > 0);
}

TEST_CASE("car behind the camera is invisible") {
    SceneConfig c;
    Frame f;
    Vehicle v;
    v.center = {0.0, -20.0};
    f.vehicles.push_back(v);
    const auto m = render_semantic_map(f, c.camera_poses[0], c, {40, 80});
    CHECK(label_histogram(m)[kVehicle] == 0);
}

TEST_CASE("masks partition the map") {
    SceneConfig c;
    c.frame_count = 50;
    const auto frames = generate_scenario(c);
    const auto m = render_semantic_map(frames.back(), c.camera_poses[1], c, {40, 80}, 1);
    CHECK(m.camera_id == 1);
    std::vector<int> sum(m.labels.size(), 0);
    for (int k = 0; k < kConceptCount; ++k) {
        const auto mask = extract_mask(m, k);
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += mask.mask[i];
    }
    CHECK(std::all_of(sum.begin(), sum.end(), [](int s) { return s == 1; }));
}

TEST_CASE("all-sky map has an empty vehicle mask") {
    SemanticMap m{0, 4, 4, std::vector<std::uint8_t>(16, kSky)};
    const auto mask = extract_mask(m, kVehicle);
    CHECK(std::count(mask.mask.begin(), mask.mask.end(), 1) == 0);
}

TEST_CASE("mask cell counts equal the label histogram") {
    const auto m = random_map(30, 50, 4);
    const auto h = label_histogram(m);
    std::array<std::size_t, kConceptCount> direct{};
    for (auto l : m.labels) ++direct[l];
    for (int k = 0; k < kConceptCount; ++k) {
        const auto mask = extract_mask(m, k);
        CHECK(static_cast<std::size_t>(std::count(mask.mask.begin(), mask.mask.end(), 1)) == direct[k]);
        CHECK(h[k] == direct[k]);
    }
}

TEST_CASE("corruption model") {
    const auto m = random_map(200, 200, 8);
    Rng rng(1);
    CHECK(corrupt_map(m, 0.0, rng) == m);

    const auto full = corrupt_map(SemanticMap{0, 200, 200, std::vector<std::uint8_t>(40000, kSky)}, 1.0, rng);
    const auto h = label_histogram(full);
    const double n = 40000, p = 1.0 / 20;
    for (auto c : h) CHECK(std::abs(c - n * p) <= 3 * std::sqrt(n * p * (1 - p)));

    const auto noisy = corrupt_map(m, 0.1, rng);
    const double acc = pixel_accuracy(std::span(&noisy, 1), std::span(&m, 1));
    const double expected = 1 - 0.1 * 19.0 / 20.0;
    CHECK(std::abs(acc - expected) <= 3 * std::sqrt(expected * (1 - expected) / n));
    CHECK_THROWS_AS(corrupt_map(m, 1.5, rng), ConfigError);
}

TEST_CASE("pixel accuracy") {
    SemanticMap a{0, 2, 2, {1, 2, 3, 4}};
    SemanticMap b = a;
    CHECK(pixel_accuracy(std::span(&a, 1), std::span(&b, 1)) == 1.0);
    b.labels = {2, 3, 4, 5};
    CHECK(pixel_accuracy(std::span(&a, 1), std::span(&b, 1)) == 0.0);
    b.labels = {1, 2, 3, 5};
    CHECK(pixel_accuracy(std::span(&a, 1), std::span(&b, 1)) == 0.75);
    SemanticMap c{0, 1, 4, {1, 2, 3, 4}};
    CHECK_THROWS_AS(pixel_accuracy(std::span(&a, 1), std::span(&c, 1)), ConfigError);
}

TEST_CASE("render argument checks") {
    SceneConfig c;
    CHECK_THROWS_AS(render_semantic_map(Frame{}, c.camera_poses[0], c, {8, 8}), ConfigError);
    auto pose = c.camera_poses[0];
    pose.hfov = 0.0;
    CHECK_THROWS_AS(render_semantic_map(Frame{}, pose, c, {16, 16}), ConfigError);
}

}
