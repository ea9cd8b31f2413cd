// SPDX-License-Identifier: Apache-2.0
//
// Synthetic datasets shared by the predictor and pipeline suites.

#pragma once

#include "envsem/dataset.hpp"

namespace envsem::testing {

// Beam label = row band (0..3) holding the vehicle blob in camera 0; the
// other pixels are random road classes. Blockage = band >= 2.
inline Dataset planted(std::uint64_t seed, std::size_t n, bool shuffle_labels = false) {
    Rng r(seed);
    Dataset d;
    d.resolution = {16, 32};
    d.cameras = 2;
    d.codebook_size = 4;
    d.horizons = {1};
    const std::uint8_t background[] = {kGround, kSidewalk, kRoadline, kBuilding};
    for (std::size_t i = 0; i < n; ++i) {
        const int band = static_cast<int>(r.below(4));
        SampleRecord s;
        for (int c = 0; c < 2; ++c) {
            SemanticMap m{c, 16, 32, std::vector<std::uint8_t>(16 * 32)};
            for (auto& l : m.labels) l = background[r.below(4)];
            if (c == 0) {
                const int col = static_cast<int>(r.below(24));
                for (int y = band * 4; y < band * 4 + 4; ++y)
                    for (int x = col; x < col + 8; ++x) m.labels[static_cast<std::size_t>(y * 32 + x)] = kVehicle;
            }
            s.maps.push_back(m);
        }
        s.location = {r.uniform(-50, 50), r.uniform(-7, 7), 1.55};
        s.beam_label = shuffle_labels ? static_cast<int>(r.below(4)) : band;
        s.blockage = {static_cast<std::uint8_t>(s.beam_label >= 2)};
        s.frame_id = static_cast<std::uint32_t>(i);
        s.user_id = static_cast<std::uint32_t>(i);
        d.append(s, nullptr);
    }
    return d;
}

} // namespace envsem::testing
