// SPDX-License-Identifier: Apache-2.0
//
// Feature identities: id 0 is the user location, id 1 + c is semantic
// concept c. A FeatureSet is a canonical (sorted, duplicate-free) set.

#pragma once

#include "envsem/semantics.hpp"

#include <bit>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace envsem {

inline constexpr int kLocationFeature = 0;
inline constexpr int kFeatureCount = 1 + kConceptCount;

inline constexpr int concept_feature(int concept_index) { return 1 + concept_index; }

/// "location" or the concept name.
std::string feature_name(int id);
/// Throws ConfigError for an unknown name.
int feature_from_name(std::string_view name);

class FeatureSet {
  public:
    FeatureSet() = default;
    FeatureSet(std::initializer_list<int> ids);
    explicit FeatureSet(const std::vector<int>& ids);
    static FeatureSet from_bits(std::uint64_t bits) { return FeatureSet(bits, 0); }
    /// Ids 0..count-1.
    static FeatureSet universal(int count = kFeatureCount);
    static FeatureSet from_names(const std::vector<std::string>& names);

    bool contains(int id) const { return id >= 0 && id < 64 && ((bits_ >> id) & 1u); }
    FeatureSet with(int id) const;
    FeatureSet without(int id) const;
    int size() const { return std::popcount(bits_); }
    bool empty() const { return bits_ == 0; }
    std::uint64_t bits() const { return bits_; }
    /// Ascending ids.
    std::vector<int> ids() const;
    /// Concept indices of the non-location members, ascending.
    std::vector<int> concepts() const;
    std::vector<std::string> names() const;
    bool subset_of(FeatureSet other) const { return (bits_ & ~other.bits_) == 0; }

    FeatureSet operator|(FeatureSet o) const { return from_bits(bits_ | o.bits_); }
    FeatureSet operator&(FeatureSet o) const { return from_bits(bits_ & o.bits_); }
    FeatureSet operator-(FeatureSet o) const { return from_bits(bits_ & ~o.bits_); }
    friend bool operator==(FeatureSet a, FeatureSet b) { return a.bits_ == b.bits_; }

    /// "{location,vehicle}".
    std::string to_string() const;

  private:
    FeatureSet(std::uint64_t bits, int) : bits_(bits) {}
    std::uint64_t bits_ = 0;
};

/// Lexicographic order of the ascending id lists.
bool lexicographic_less(FeatureSet a, FeatureSet b);

struct FeatureSetHash {
    std::size_t operator()(FeatureSet s) const { return std::hash<std::uint64_t>{}(s.bits()); }
};

} // namespace envsem
