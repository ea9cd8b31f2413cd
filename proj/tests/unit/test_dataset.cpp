// SPDX-License-Identifier: Apache-2.0

#include "envsem/dataset.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace envsem;
namespace fs = std::filesystem;

namespace {

Dataset random_dataset(std::uint64_t seed, std::size_t n, bool channels) {
    Rng r(seed);
    Dataset d;
    d.ray.antennas = 4;
    d.ray.subcarriers = 3;
    d.resolution = {16, 32};
    d.cameras = 2;
    d.codebook_size = 4;
    d.horizons = {1, 5};
    for (std::size_t i = 0; i < n; ++i) {
        SampleRecord s;
        for (int c = 0; c < 2; ++c) {
            SemanticMap m{c, 16, 32, std::vector<std::uint8_t>(16 * 32)};
            for (auto& l : m.labels) l = static_cast<std::uint8_t>(r.below(kConceptCount));
            s.maps.push_back(m);
        }
        s.location = {r.uniform(-60, 60), r.uniform(-7, 7), 1.55};
        s.beam_label = static_cast<int>(r.below(4));
        s.blockage = {static_cast<std::uint8_t>(r.below(2)), static_cast<std::uint8_t>(r.below(2))};
        s.frame_id = static_cast<std::uint32_t>(i);
        s.user_id = static_cast<std::uint32_t>(r.below(50));
        ChannelMatrix h(3, 4);
        for (int k = 0; k < 3; ++k)
            for (int a = 0; a < 4; ++a) h(k, a) = {r.normal(), r.normal()};
        d.append(s, channels ? &h : nullptr);
    }
    return d;
}

fs::path scratch(const char* name) {
    const fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    return p;
}

} // namespace

TEST_SUITE("dataset") {

TEST_CASE("sample accessors") {
    const Dataset d = random_dataset(1, 5, true);
    CHECK(d.size() == 5);
    d.validate();
    const SampleRecord s = d.sample(3);
    CHECK(s.maps.size() == 2);
    CHECK(std::equal(s.maps[1].labels.begin(), s.maps[1].labels.end(), d.map(3, 1)));
    CHECK(s.beam_label == d.beam_labels[3]);
    CHECK(d.blockage_at(3, 5) == s.blockage[1]);
    CHECK(d.horizon_index(5) == 1);
    CHECK_THROWS_AS(d.horizon_index(2), ConfigError);
    CHECK_THROWS_AS(d.sample(5), ConfigError);
    CHECK(d.channel(2).rows() == 3);
    CHECK(d.channel(2).cols() == 4);
    CHECK_THROWS_AS(random_dataset(1, 2, false).channel(0), ConfigError);
}

TEST_CASE("append checks shapes") {
    Dataset d = random_dataset(2, 1, false);
    SampleRecord s = d.sample(0);
    s.maps.pop_back();
    CHECK_THROWS_AS(d.append(s, nullptr), ConfigError);
    s = d.sample(0);
    s.blockage.push_back(0);
    CHECK_THROWS_AS(d.append(s, nullptr), ConfigError);
}

TEST_CASE("round trip is bitwise") {
    for (bool channels : {true, false}) {
        const Dataset d = random_dataset(3, 7, channels);
        const auto dir = scratch("envsem_dataset_rt");
        write_dataset(d, dir);
        const Dataset back = read_dataset(dir);
        CHECK(back == d);
        const auto hash = sha256_file(dir / "manifest.json");
        write_dataset(back, dir);
        CHECK(sha256_file(dir / "manifest.json") == hash);
        fs::remove_all(dir);
    }
}

TEST_CASE("integrity failures are I/O errors") {
    const Dataset d = random_dataset(4, 3, false);
    const auto dir = scratch("envsem_dataset_bad");
    CHECK_THROWS_AS(read_dataset(dir), IoError);
    write_dataset(d, dir);
    {
        std::fstream f(dir / "beams.u16", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.put(static_cast<char>(0x7f));
    }
    CHECK_THROWS_AS(read_dataset(dir), IoError);
    write_dataset(d, dir);
    {
        std::ofstream f(dir / "ids.u32", std::ios::binary | std::ios::app);
        f.put(0);
    }
    CHECK_THROWS_AS(read_dataset(dir), IoError);
    write_dataset(d, dir);
    fs::remove(dir / "labels.u8");
    CHECK_THROWS_AS(read_dataset(dir), IoError);
    fs::remove_all(dir);
}

TEST_CASE("sha256") {
    CHECK(sha256_hex({}) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    const std::string abc = "abc";
    CHECK(sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(abc.data()), 3)) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

}
