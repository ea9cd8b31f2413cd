// SPDX-License-Identifier: Apache-2.0
//
// Ground-truth semantic maps rendered from the synthetic scene, per-concept
// zero-masks, a label-corruption model, and pixel accuracy.

#pragma once

#include "envsem/rng.hpp"
#include "envsem/scene.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace envsem {

inline constexpr int kConceptCount = 20;

/// Stable concept indices used by every map, mask and feature id.
enum Concept : std::uint8_t {
    kBuilding = 0,
    kFence,
    kPedestrian,
    kPole,
    kRoadline,
    kSidewalk,
    kVegetation,
    kVehicle,
    kWall,
    kTrafficsign,
    kSky,
    kGround,
    kBridge,
    kRailtrack,
    kTrafficlight,
    kStatic,
    kDynamic,
    kWater,
    kTerrain,
    kUnlabeled,
};

const std::array<std::string_view, kConceptCount>& concept_names();
std::string_view concept_name(int concept_index);
/// Throws ConfigError for an unknown name.
int concept_from_name(std::string_view name);

struct Resolution {
    int height = 160;
    int width = 320;

    friend bool operator==(const Resolution&, const Resolution&) = default;
};

struct SemanticMap {
    int camera_id = 0;
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> labels; ///< row-major, height * width

    std::uint8_t at(int row, int col) const {
        return labels[static_cast<std::size_t>(row) * width + col];
    }
    friend bool operator==(const SemanticMap&, const SemanticMap&) = default;
};

struct ConceptMask {
    int concept_index = 0;
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> mask; ///< 0/1, row-major
};

/// Casts one ray per pixel centre and labels it with the nearest surface:
/// vehicle boxes, building facades, the ground plane (road surface and the
/// setback strip are `ground`, lane markings `roadline`, kerb strips
/// `sidewalk`), or `sky` when nothing is hit.
SemanticMap render_semantic_map(const Frame& frame, const CameraPose& camera,
                                const SceneConfig& config, Resolution resolution,
                                int camera_id = 0);

ConceptMask extract_mask(const SemanticMap& map, int concept_index);

/// Each pixel is, with probability p, replaced by a label drawn uniformly
/// from all concepts (possibly its own).
SemanticMap corrupt_map(const SemanticMap& map, double p, Rng& rng);

/// Fraction of matching pixels over all maps.
double pixel_accuracy(std::span<const SemanticMap> pred, std::span<const SemanticMap> truth);

/// Per-concept pixel counts.
std::array<std::size_t, kConceptCount> label_histogram(const SemanticMap& map);

} // namespace envsem
