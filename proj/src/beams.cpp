// SPDX-License-Identifier: Apache-2.0

#include "envsem/beams.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace envsem {

namespace {

template <class T>
std::vector<int> topg_impl(std::span<const T> scores, int g) {
    const int m = static_cast<int>(scores.size());
    if (g < 1 || g > m) throw ConfigError("top-G size must lie in [1, " + std::to_string(m) + "]");
    std::vector<int> idx(static_cast<std::size_t>(m));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
    });
    idx.resize(static_cast<std::size_t>(g));
    return idx;
}

void check_sets(std::span<const std::vector<int>> sets, int g) {
    for (const auto& s : sets)
        if (static_cast<int>(s.size()) != g) throw ConfigError("top-G set does not hold G indices");
}

} // namespace

Codebook dft_codebook(int antennas, int size) {
    if (antennas < 1 || size < 1) throw ConfigError("codebook needs N_t >= 1 and M_bm >= 1");
    Codebook cb;
    cb.vectors.resize(size, antennas);
    const double scale = 1.0 / std::sqrt(static_cast<double>(antennas));
    for (int m = 0; m < size; ++m)
        for (int n = 0; n < antennas; ++n) {
            // Reduce m*n first so the angle stays small for large books.
            const auto r = static_cast<double>((static_cast<long long>(m) * n) % size);
            cb.vectors(m, n) = std::polar(scale, -2.0 * std::numbers::pi * r / size);
        }
    return cb;
}

double rate(const ChannelMatrix& channel, const Eigen::VectorXcd& w, double snr) {
    if (channel.cols() != w.size()) throw ConfigError("rate: beam length differs from N_t");
    if (channel.rows() == 0) throw ConfigError("rate: channel has no subcarriers");
    const Eigen::VectorXcd g = channel * w;
    double sum = 0.0;
    for (Eigen::Index k = 0; k < g.size(); ++k) sum += std::log1p(snr * std::norm(g[k]));
    return sum / std::numbers::ln2 / static_cast<double>(g.size());
}

double rate(const ChannelMatrix& channel, const Eigen::VectorXcd& w, double tx_power,
            double noise_power) {
    if (!(noise_power > 0.0)) throw ConfigError("rate: noise power must be positive");
    return rate(channel, w, tx_power / noise_power);
}

std::vector<int> BeamEvaluation::topg(int g) const {
    return topg_indices(std::span<const double>(rates), g);
}

BeamEvaluation optimal_beam(const ChannelMatrix& channel, const Codebook& codebook, double snr) {
    if (codebook.size() < 1) throw ConfigError("optimal_beam: empty codebook");
    BeamEvaluation ev;
    ev.rates.resize(static_cast<std::size_t>(codebook.size()));
    for (int m = 0; m < codebook.size(); ++m) {
        ev.rates[static_cast<std::size_t>(m)] = rate(channel, codebook.codeword(m), snr);
        if (ev.rates[static_cast<std::size_t>(m)] > ev.rates[static_cast<std::size_t>(ev.optimal_index)])
            ev.optimal_index = m;
    }
    return ev;
}

std::vector<int> topg_indices(std::span<const double> scores, int g) { return topg_impl(scores, g); }
std::vector<int> topg_indices(std::span<const float> scores, int g) { return topg_impl(scores, g); }

double topg_accuracy(std::span<const int> labels, std::span<const std::vector<int>> topg_sets,
                     int g) {
    if (labels.size() != topg_sets.size()) throw ConfigError("topg_accuracy: size mismatch");
    if (labels.empty()) throw ConfigError("topg_accuracy: no samples");
    check_sets(topg_sets, g);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto& s = topg_sets[i];
        hits += std::find(s.begin(), s.end(), labels[i]) != s.end();
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

TrrResult trr_from_rates(std::span<const std::vector<double>> rates,
                         std::span<const std::vector<int>> topg_sets, int g) {
    if (rates.size() != topg_sets.size()) throw ConfigError("trr: size mismatch");
    check_sets(topg_sets, g);
    TrrResult r;
    double sum = 0.0;
    for (std::size_t i = 0; i < rates.size(); ++i) {
        const auto& rv = rates[i];
        const double best = *std::max_element(rv.begin(), rv.end());
        if (!(best > 0.0)) {
            ++r.invalid;
            continue;
        }
        double got = 0.0;
        for (int m : topg_sets[i]) {
            if (m < 0 || static_cast<std::size_t>(m) >= rv.size())
                throw ConfigError("trr: beam index outside the codebook");
            got = std::max(got, rv[static_cast<std::size_t>(m)]);
        }
        sum += got / best;
        ++r.counted;
    }
    if (r.counted == 0) throw ConfigError("trr: no sample with a positive optimal rate");
    r.value = sum / static_cast<double>(r.counted);
    return r;
}

TrrResult trr(std::span<const ChannelMatrix> channels, const Codebook& codebook,
              std::span<const std::vector<int>> topg_sets, int g, double snr) {
    std::vector<std::vector<double>> rates;
    rates.reserve(channels.size());
    for (const auto& h : channels) rates.push_back(optimal_beam(h, codebook, snr).rates);
    return trr_from_rates(rates, topg_sets, g);
}

} // namespace envsem
