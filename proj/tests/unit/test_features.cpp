// SPDX-License-Identifier: Apache-2.0

#include "envsem/features.hpp"

#include <doctest.h>

using namespace envsem;

TEST_SUITE("features") {

TEST_CASE("names and ids") {
    CHECK(kFeatureCount == 21);
    CHECK(feature_name(kLocationFeature) == "location");
    CHECK(feature_name(concept_feature(kVehicle)) == "vehicle");
    CHECK(feature_from_name("sky") == concept_feature(kSky));
    CHECK_THROWS_AS(feature_from_name("car"), ConfigError);
    for (int id = 0; id < kFeatureCount; ++id) CHECK(feature_from_name(feature_name(id)) == id);
}

TEST_CASE("canonical sets") {
    const FeatureSet a{8, 0, 6};
    const FeatureSet b{6, 8, 0, 6};
    CHECK(a == b);
    CHECK(a.ids() == std::vector<int>{0, 6, 8});
    CHECK(a.size() == 3);
    CHECK(a.concepts() == std::vector<int>{5, 7});
    CHECK(a.to_string() == "{location,sidewalk,vehicle}");
    CHECK(FeatureSet::from_names({"vehicle", "location", "sidewalk"}) == a);
    CHECK(a.without(6).with(6) == a);
    CHECK(a.contains(8));
    CHECK_FALSE(a.contains(1));
    CHECK_FALSE(a.contains(-1));
    CHECK(FeatureSet{}.empty());
    CHECK(FeatureSet::universal().size() == 21);
    CHECK(a.subset_of(FeatureSet::universal()));
    CHECK((FeatureSet::universal() - a).size() == 18);
    CHECK(FeatureSet::from_bits(a.bits()) == a);
    CHECK_THROWS_AS(FeatureSet{64}, ConfigError);
}

TEST_CASE("lexicographic order") {
    CHECK(lexicographic_less(FeatureSet{0, 1}, FeatureSet{0, 2}));
    CHECK(lexicographic_less(FeatureSet{0}, FeatureSet{0, 1}));
    CHECK_FALSE(lexicographic_less(FeatureSet{0, 2}, FeatureSet{0, 1, 5}));
    CHECK_FALSE(lexicographic_less(FeatureSet{3}, FeatureSet{3}));
}

}
