// SPDX-License-Identifier: Apache-2.0

#include "envsem/features.hpp"

#include <algorithm>

namespace envsem {

std::string feature_name(int id) {
    if (id == kLocationFeature) return "location";
    if (id < 1 || id >= kFeatureCount) throw ConfigError("feature id out of range: " + std::to_string(id));
    return std::string(concept_name(id - 1));
}

int feature_from_name(std::string_view name) {
    if (name == "location") return kLocationFeature;
    return concept_feature(concept_from_name(name));
}

FeatureSet::FeatureSet(std::initializer_list<int> ids) : FeatureSet(std::vector<int>(ids)) {}

FeatureSet::FeatureSet(const std::vector<int>& ids) {
    for (int id : ids) *this = with(id);
}

FeatureSet FeatureSet::universal(int count) {
    if (count < 0 || count > 63) throw ConfigError("feature universe must hold 0..63 ids");
    return from_bits(count == 0 ? 0 : (~std::uint64_t{0} >> (64 - count)));
}

FeatureSet FeatureSet::from_names(const std::vector<std::string>& names) {
    FeatureSet s;
    for (const auto& n : names) s = s.with(feature_from_name(n));
    return s;
}

FeatureSet FeatureSet::with(int id) const {
    if (id < 0 || id > 63) throw ConfigError("feature id out of range: " + std::to_string(id));
    return from_bits(bits_ | (std::uint64_t{1} << id));
}

FeatureSet FeatureSet::without(int id) const {
    if (id < 0 || id > 63) return *this;
    return from_bits(bits_ & ~(std::uint64_t{1} << id));
}

std::vector<int> FeatureSet::ids() const {
    std::vector<int> out;
    for (std::uint64_t b = bits_; b != 0; b &= b - 1) out.push_back(std::countr_zero(b));
    return out;
}

std::vector<int> FeatureSet::concepts() const {
    std::vector<int> out;
    for (int id : ids())
        if (id != kLocationFeature) out.push_back(id - 1);
    return out;
}

std::vector<std::string> FeatureSet::names() const {
    std::vector<std::string> out;
    for (int id : ids()) out.push_back(id < kFeatureCount ? feature_name(id) : "f" + std::to_string(id));
    return out;
}

std::string FeatureSet::to_string() const {
    std::string s = "{";
    for (const auto& n : names()) s += (s.size() > 1 ? "," : "") + n;
    return s + "}";
}

bool lexicographic_less(FeatureSet a, FeatureSet b) {
    const auto x = a.ids();
    const auto y = b.ids();
    return std::lexicographical_compare(x.begin(), x.end(), y.begin(), y.end());
}

} // namespace envsem
