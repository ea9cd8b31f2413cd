// SPDX-License-Identifier: Apache-2.0

#include "envsem/dataset.hpp"
#include "envsem/config.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace envsem {

namespace fs = std::filesystem;

namespace {

template <class T>
std::vector<std::uint8_t> to_le_bytes(const std::vector<T>& v) {
    std::vector<std::uint8_t> out(v.size() * sizeof(T));
    if (!out.empty()) std::memcpy(out.data(), v.data(), out.size());
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1)
        for (std::size_t i = 0; i < out.size(); i += sizeof(T)) std::reverse(&out[i], &out[i] + sizeof(T));
    return out;
}

template <class T>
std::vector<T> from_le_bytes(std::vector<std::uint8_t> bytes) {
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1)
        for (std::size_t i = 0; i < bytes.size(); i += sizeof(T))
            std::reverse(&bytes[i], &bytes[i] + sizeof(T));
    std::vector<T> out(bytes.size() / sizeof(T));
    if (!out.empty()) std::memcpy(out.data(), bytes.data(), out.size() * sizeof(T));
    return out;
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, std::span<const std::uint8_t> bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + p.string());
}

struct BlobSpec {
    const char* file;
    const char* dtype;
    std::vector<std::size_t> shape;
};

std::size_t product(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

std::vector<BlobSpec> blob_specs(const Dataset& d, bool channels) {
    const std::size_t n = d.size();
    std::vector<BlobSpec> specs = {
        {"labels.u8", "u8", {n, static_cast<std::size_t>(d.cameras), static_cast<std::size_t>(d.resolution.height),
                             static_cast<std::size_t>(d.resolution.width)}},
        {"locations.f32", "f32", {n, 3}},
        {"beams.u16", "u16", {n}},
        {"blockage.u8", "u8", {n, d.horizons.size()}},
        {"ids.u32", "u32", {n, 2}},
    };
    if (channels)
        specs.push_back({"channels.f32", "f32", {n, static_cast<std::size_t>(d.ray.subcarriers),
                                                 static_cast<std::size_t>(d.ray.antennas), 2}});
    return specs;
}

std::size_t dtype_size(std::string_view t) {
    if (t == "u8") return 1;
    if (t == "u16") return 2;
    return 4;
}

} // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw IoError("sha256 computation failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string s;
    for (unsigned i = 0; i < len; ++i) {
        s += hex[md[i] >> 4];
        s += hex[md[i] & 15];
    }
    return s;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_bytes(path)); }

int Dataset::horizon_index(int horizon) const {
    const auto it = std::find(horizons.begin(), horizons.end(), horizon);
    if (it == horizons.end())
        throw ConfigError("horizon " + std::to_string(horizon) + " is not labelled in this dataset");
    return static_cast<int>(it - horizons.begin());
}

int Dataset::blockage_at(std::size_t sample, int horizon) const {
    return blockage[sample * horizons.size() + static_cast<std::size_t>(horizon_index(horizon))];
}

ChannelMatrix Dataset::channel(std::size_t sample) const {
    if (!has_channels()) throw ConfigError("dataset was generated without channels");
    const int k = ray.subcarriers, n = ray.antennas;
    ChannelMatrix h(k, n);
    const float* p = channels.data() + sample * static_cast<std::size_t>(k) * n * 2;
    for (int a = 0; a < k; ++a)
        for (int b = 0; b < n; ++b, p += 2) h(a, b) = {p[0], p[1]};
    return h;
}

SampleRecord Dataset::sample(std::size_t i) const {
    if (i >= size()) throw ConfigError("sample index out of range");
    SampleRecord s;
    for (int c = 0; c < cameras; ++c) {
        SemanticMap m;
        m.camera_id = c;
        m.height = resolution.height;
        m.width = resolution.width;
        const auto* p = map(i, c);
        m.labels.assign(p, p + map_pixels());
        s.maps.push_back(std::move(m));
    }
    s.location = {locations[3 * i], locations[3 * i + 1], locations[3 * i + 2]};
    s.beam_label = beam_labels[i];
    s.blockage.assign(blockage.begin() + static_cast<std::ptrdiff_t>(i * horizons.size()),
                      blockage.begin() + static_cast<std::ptrdiff_t>((i + 1) * horizons.size()));
    s.frame_id = ids[2 * i];
    s.user_id = ids[2 * i + 1];
    return s;
}

void Dataset::append(const SampleRecord& s, const ChannelMatrix* h) {
    if (static_cast<int>(s.maps.size()) != cameras) throw ConfigError("sample camera count mismatch");
    if (s.blockage.size() != horizons.size()) throw ConfigError("sample horizon count mismatch");
    for (const auto& m : s.maps) {
        if (m.height != resolution.height || m.width != resolution.width)
            throw ConfigError("sample map resolution mismatch");
        labels.insert(labels.end(), m.labels.begin(), m.labels.end());
    }
    locations.push_back(static_cast<float>(s.location.x));
    locations.push_back(static_cast<float>(s.location.y));
    locations.push_back(static_cast<float>(s.location.z));
    beam_labels.push_back(static_cast<std::uint16_t>(s.beam_label));
    blockage.insert(blockage.end(), s.blockage.begin(), s.blockage.end());
    ids.push_back(s.frame_id);
    ids.push_back(s.user_id);
    if (h != nullptr) {
        if (h->rows() != ray.subcarriers || h->cols() != ray.antennas)
            throw ConfigError("sample channel shape mismatch");
        for (Eigen::Index a = 0; a < h->rows(); ++a)
            for (Eigen::Index b = 0; b < h->cols(); ++b) {
                channels.push_back(static_cast<float>((*h)(a, b).real()));
                channels.push_back(static_cast<float>((*h)(a, b).imag()));
            }
    }
}

void Dataset::validate() const {
    const std::size_t n = size();
    auto require = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(std::string("inconsistent dataset: ") + what);
    };
    require(cameras >= 1, "camera count");
    require(labels.size() == n * cameras * map_pixels(), "labels length");
    require(locations.size() == 3 * n, "locations length");
    require(blockage.size() == n * horizons.size(), "blockage length");
    require(ids.size() == 2 * n, "ids length");
    require(channels.empty() ||
                channels.size() == n * static_cast<std::size_t>(ray.subcarriers) * ray.antennas * 2,
            "channels length");
    for (auto b : beam_labels) require(b < codebook_size, "beam label outside the codebook");
    for (auto l : labels) require(l < kConceptCount, "label outside the concept catalog");
}

void write_dataset(const Dataset& d, const fs::path& dir) {
    d.validate();
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create dataset directory " + dir.string());

    const std::vector<std::vector<std::uint8_t>> blobs = {
        d.labels, to_le_bytes(d.locations), to_le_bytes(d.beam_labels), d.blockage, to_le_bytes(d.ids),
        to_le_bytes(d.channels)};
    const auto specs = blob_specs(d, d.has_channels());

    Json catalog = Json::array();
    for (auto n : concept_names()) catalog.push_back(std::string(n));
    Json manifest = {
        {"schema_version", kDatasetSchemaVersion},
        {"scene", to_json(d.scene)},
        {"ray", to_json(d.ray)},
        {"catalog", catalog},
        {"resolution", to_json(d.resolution)},
        {"cameras", d.cameras},
        {"codebook_size", d.codebook_size},
        {"horizons", d.horizons},
        {"corruption", d.corruption},
        {"samples", d.size()},
        {"byte_order", "little"},
    };
    Json blob_json = Json::object();
    for (std::size_t i = 0; i < specs.size(); ++i) {
        write_bytes(dir / specs[i].file, blobs[i]);
        blob_json[specs[i].file] = {{"dtype", specs[i].dtype}, {"shape", specs[i].shape},
                                    {"sha256", sha256_hex(blobs[i])}};
    }
    manifest["blobs"] = blob_json;
    const std::string text = manifest.dump(2) + "\n";
    write_bytes(dir / "manifest.json",
                std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Dataset read_dataset(const fs::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) throw IoError("missing dataset manifest " + manifest_path.string());
    Json m;
    try {
        const auto bytes = read_bytes(manifest_path);
        m = Json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("unreadable dataset manifest: ") + e.what());
    }
    Dataset d;
    try {
        if (m.at("schema_version").get<int>() != kDatasetSchemaVersion)
            throw IoError("unsupported dataset schema version");
        Json catalog = Json::array();
        for (auto n : concept_names()) catalog.push_back(std::string(n));
        if (m.at("catalog") != catalog) throw IoError("dataset concept catalog differs from this build");
        d.scene = scene_config_from_json(m.at("scene"));
        d.ray = ray_config_from_json(m.at("ray"));
        d.resolution = resolution_from_json(m.at("resolution"));
        d.cameras = m.at("cameras").get<int>();
        d.codebook_size = m.at("codebook_size").get<int>();
        d.horizons = m.at("horizons").get<std::vector<int>>();
        d.corruption = m.at("corruption").get<double>();
        const auto n = m.at("samples").get<std::size_t>();
        const auto& blobs = m.at("blobs");
        d.beam_labels.resize(n); // size() drives the shapes below
        const auto specs = blob_specs(d, blobs.contains("channels.f32"));
        std::vector<std::vector<std::uint8_t>> raw;
        for (const auto& s : specs) {
            if (!blobs.contains(s.file)) throw IoError(std::string("manifest lacks blob ") + s.file);
            const auto& b = blobs.at(s.file);
            if (b.at("shape").get<std::vector<std::size_t>>() != s.shape || b.at("dtype") != s.dtype)
                throw IoError(std::string("blob shape disagrees with manifest: ") + s.file);
            auto bytes = read_bytes(dir / s.file);
            if (bytes.size() != product(s.shape) * dtype_size(s.dtype))
                throw IoError(std::string("blob length disagrees with manifest: ") + s.file);
            if (sha256_hex(bytes) != b.at("sha256").get<std::string>())
                throw IoError(std::string("hash mismatch for ") + s.file);
            raw.push_back(std::move(bytes));
        }
        d.labels = std::move(raw[0]);
        d.locations = from_le_bytes<float>(std::move(raw[1]));
        d.beam_labels = from_le_bytes<std::uint16_t>(std::move(raw[2]));
        d.blockage = std::move(raw[3]);
        d.ids = from_le_bytes<std::uint32_t>(std::move(raw[4]));
        if (raw.size() > 5) d.channels = from_le_bytes<float>(std::move(raw[5]));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed dataset manifest: ") + e.what());
    } catch (const ConfigError& e) {
        throw IoError(std::string("invalid dataset manifest: ") + e.what());
    }
    try {
        d.validate();
    } catch (const ConfigError& e) {
        throw IoError(e.what());
    }
    return d;
}

} // namespace envsem
