// SPDX-License-Identifier: Apache-2.0
//
// In-memory labelled dataset and its on-disk container: a directory holding
// manifest.json plus one little-endian, row-major blob per array.
//
//   labels.u8      N x cameras x H x W   concept index per pixel
//   locations.f32  N x 3                 roof antenna position (m)
//   beams.u16      N                     optimal DFT beam index
//   blockage.u8    N x horizons          1 = no LOS at t + horizon
//   channels.f32   N x K x N_t x 2       optional; (re, im) interleaved
//   ids.u32        N x 2                 (frame index, target vehicle id)

#pragma once

#include "envsem/channel.hpp"
#include "envsem/semantics.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace envsem {

inline constexpr int kDatasetSchemaVersion = 1;

struct SampleRecord {
    std::vector<SemanticMap> maps; ///< one per camera
    Vec3 location;
    int beam_label = 0;
    std::vector<std::uint8_t> blockage; ///< one flag per dataset horizon
    std::uint32_t frame_id = 0;
    std::uint32_t user_id = 0;
};

struct Dataset {
    SceneConfig scene;
    RayTraceConfig ray;
    Resolution resolution;
    int cameras = 0;
    int codebook_size = 0;
    std::vector<int> horizons;
    double corruption = 0.0;

    std::vector<std::uint8_t> labels;
    std::vector<float> locations;
    std::vector<std::uint16_t> beam_labels;
    std::vector<std::uint8_t> blockage;
    std::vector<float> channels;
    std::vector<std::uint32_t> ids;

    std::size_t size() const { return beam_labels.size(); }
    std::size_t map_pixels() const {
        return static_cast<std::size_t>(resolution.height) * resolution.width;
    }
    const std::uint8_t* map(std::size_t sample, int camera) const {
        return labels.data() + (sample * static_cast<std::size_t>(cameras) + camera) * map_pixels();
    }
    bool has_channels() const { return !channels.empty(); }
    /// Index of `horizon` in `horizons`; throws ConfigError when absent.
    int horizon_index(int horizon) const;
    int blockage_at(std::size_t sample, int horizon) const;
    ChannelMatrix channel(std::size_t sample) const;
    SampleRecord sample(std::size_t i) const;
    void append(const SampleRecord& s, const ChannelMatrix* h);
    /// Throws ConfigError when array lengths disagree with the declared shapes.
    void validate() const;

    bool operator==(const Dataset&) const = default;
};

/// Throws IoError when the directory cannot be written.
void write_dataset(const Dataset& data, const std::filesystem::path& dir);
/// Throws IoError on missing files, length or hash mismatches.
Dataset read_dataset(const std::filesystem::path& dir);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_file(const std::filesystem::path& path);

} // namespace envsem
