// SPDX-License-Identifier: Apache-2.0
//
// DFT beam codebooks, achievable rate, exhaustive beam search and the Top-G
// metrics.

#pragma once

#include "envsem/channel.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace envsem {

struct Codebook {
    /// M_bm x N_t; row m is codeword w_m.
    Eigen::MatrixXcd vectors;

    int size() const { return static_cast<int>(vectors.rows()); }
    int antennas() const { return static_cast<int>(vectors.cols()); }
    Eigen::VectorXcd codeword(int m) const { return vectors.row(m).transpose(); }
};

/// Row m, entry n = exp(-j 2pi m n / M_bm) / sqrt(N_t).
Codebook dft_codebook(int antennas, int size);

/// (1/K) sum_k log2(1 + snr |h[k]^T w|^2).
double rate(const ChannelMatrix& channel, const Eigen::VectorXcd& w, double snr);
double rate(const ChannelMatrix& channel, const Eigen::VectorXcd& w, double tx_power,
            double noise_power);

struct BeamEvaluation {
    std::vector<double> rates;
    int optimal_index = 0;

    /// The G best indices by rate, descending; equal rates keep index order.
    std::vector<int> topg(int g) const;
};

BeamEvaluation optimal_beam(const ChannelMatrix& channel, const Codebook& codebook, double snr);

/// Indices of the G largest scores, descending, ties to the smaller index.
std::vector<int> topg_indices(std::span<const double> scores, int g);
std::vector<int> topg_indices(std::span<const float> scores, int g);

double topg_accuracy(std::span<const int> labels, std::span<const std::vector<int>> topg_sets,
                     int g);

struct TrrResult {
    double value = 0.0;
    std::size_t invalid = 0; ///< samples with zero optimal rate, excluded
    std::size_t counted = 0;
};

/// Mean over samples of the best rate inside the Top-G set divided by the
/// optimal rate.
TrrResult trr(std::span<const ChannelMatrix> channels, const Codebook& codebook,
              std::span<const std::vector<int>> topg_sets, int g, double snr);

/// Same metric from precomputed per-beam rate vectors.
TrrResult trr_from_rates(std::span<const std::vector<double>> rates,
                         std::span<const std::vector<int>> topg_sets, int g);

} // namespace envsem
