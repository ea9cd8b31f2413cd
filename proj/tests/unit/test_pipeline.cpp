// SPDX-License-Identifier: Apache-2.0

#include "envsem/pipeline.hpp"
#include "synthetic.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace envsem;
using envsem::testing::planted;
namespace fs = std::filesystem;

namespace {

PipelineConfig tiny() {
    PipelineConfig c;
    c.scene.frame_count = 60;
    c.scene.spawn_rate = 0.3;
    c.resolution = {16, 32};
    c.ray.antennas = 4;
    c.ray.subcarriers = 4;
    c.horizons = {1, 3};
    c.train.epochs = 2;
    c.train.batch_size = 16;
    c.train.input_height = 8;
    c.train.input_width = 16;
    c.g_list = {1, 2, 4};
    return c;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("envsem_pipeline_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

} // namespace

TEST_SUITE("pipeline") {

TEST_CASE("generation") {
    const auto c = tiny();
    const Dataset d = generate_dataset(c);
    REQUIRE(d.size() > 0);
    CHECK(d.size() <= 60);
    CHECK(d.cameras == 2);
    CHECK(d.codebook_size == 4);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(d.ids[2 * i] <= 60 - 1 - 3);

    const auto a = scratch("gen_a"), b = scratch("gen_b");
    cmd_generate(c, a);
    cmd_generate(c, b);
    CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));

    // Stored labels equal a fresh exhaustive search on the reloaded channels.
    const Dataset back = read_dataset(a);
    const auto cb = dft_codebook(4, 4);
    for (std::size_t i = 0; i < back.size(); ++i)
        CHECK(optimal_beam(back.channel(i), cb, back.ray.snr()).optimal_index == back.beam_labels[i]);

    auto strided = c;
    strided.sample_stride = 4;
    const Dataset s = generate_dataset(strided);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(s.ids[2 * i] % 4 == 0);
    CHECK(s.size() < d.size());

    auto empty = c;
    empty.scene.spawn_rate = 0.0;
    empty.scene.warmup_slots = 0;
    CHECK_THROWS_AS(generate_dataset(empty), ConfigError);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("trajectory split") {
    const Dataset d = planted(1, 200);
    const Split s = split_dataset(d, 0.7, 0.15, 5);
    std::set<std::size_t> all;
    for (const auto* part : {&s.train, &s.val, &s.test})
        for (auto i : *part) CHECK(all.insert(i).second);
    CHECK(all.size() == 200);
    CHECK(s.train.size() == 140);
    CHECK(s.val.size() == 30);
    CHECK(split_dataset(d, 0.7, 0.15, 5).test == s.test);
    CHECK(split_dataset(d, 0.7, 0.15, 6).test != s.test);

    // Grouped users never straddle splits.
    Dataset g = d;
    for (std::size_t i = 0; i < g.size(); ++i) g.ids[2 * i + 1] = static_cast<std::uint32_t>(i / 10);
    const Split gs = split_dataset(g, 0.6, 0.2, 1);
    auto users = [&](const std::vector<std::size_t>& v) {
        std::set<std::uint32_t> u;
        for (auto i : v) u.insert(g.ids[2 * i + 1]);
        return u;
    };
    const auto tr = users(gs.train), va = users(gs.val), te = users(gs.test);
    for (auto u : te) {
        CHECK(tr.count(u) == 0);
        CHECK(va.count(u) == 0);
    }
    for (auto u : va) CHECK(tr.count(u) == 0);
    CHECK_FALSE(te.empty());
    CHECK_THROWS_AS(split_dataset(d, 0.9, 0.2, 1), ConfigError);
}

TEST_CASE("effective features") {
    const Dataset d = planted(2, 20);
    std::vector<std::size_t> all(d.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const FeatureSet want{kLocationFeature, concept_feature(kVehicle), concept_feature(kSky)};
    CHECK(effective_features(d, want, all) == FeatureSet{kLocationFeature, concept_feature(kVehicle)});
}

TEST_CASE("training evaluator caches by effective set") {
    const Dataset d = planted(3, 120);
    const Split s = split_dataset(d, 0.7, 0.15, 1);
    TrainConfig t;
    t.epochs = 1;
    t.batch_size = 16;
    t.input_height = 8;
    t.input_width = 16;
    TrainingEvaluator e(d, s, {Task::Beam, 1}, t, 0.01);
    const double a = e(FeatureSet{kLocationFeature, concept_feature(kVehicle)});
    const double b = e(FeatureSet{kLocationFeature, concept_feature(kVehicle), concept_feature(kWater)});
    CHECK(e.trainings() == 1);
    CHECK(b == doctest::Approx(a - 0.01));
    CHECK_THROWS_AS(e(FeatureSet{concept_feature(kVehicle)}), ConfigError);
}

TEST_CASE("selection finds the planted mask and rejects noise") {
    PipelineConfig c;
    c.train.batch_size = 32;
    c.train.input_height = 8;
    c.train.input_width = 16;
    c.select.epochs = 10;
    c.select.feature_cost = 0.03;
    {
        const auto dir = scratch("sel_planted");
        write_dataset(planted(4, 500), dir / "data");
        SelectOptions o;
        const auto r = cmd_select(dir / "data", c, o, dir / "run");
        CHECK(r.selected.contains(kLocationFeature));
        CHECK(r.selected.contains(concept_feature(kVehicle)));
        for (int bad : {kSky, kWater, kBridge}) CHECK_FALSE(r.selected.contains(concept_feature(bad)));
        const Json j = load_json(dir / "run" / "select_beam.json");
        CHECK(j["selected"] == Json(r.selected.names()));
        CHECK(fs::exists(dir / "run" / "select_beam.trace.jsonl"));
        fs::remove_all(dir);
    }
    {
        const auto dir = scratch("sel_null");
        write_dataset(planted(5, 500, true), dir / "data");
        SelectOptions o;
        const auto r = cmd_select(dir / "data", c, o, dir / "run");
        CHECK(r.selected == FeatureSet{kLocationFeature});
        fs::remove_all(dir);
    }
}

TEST_CASE("train, eval and report") {
    const auto dir = scratch("flow");
    const auto data = dir / "data", run = dir / "run";
    auto c = tiny();
    c.scene.frame_count = 200;
    cmd_generate(c, data);

    const auto missing = [&] {
        try {
            fs::create_directories(run);
            cmd_report(run);
        } catch (const IoError& e) {
            return std::string(e.what());
        }
        return std::string();
    }();
    CHECK(missing.find("eval_beam.json") != std::string::npos);
    CHECK(missing.find("eval_blockage_h") != std::string::npos);

    TrainOptions to;
    CHECK_THROWS_AS(cmd_train(data, c, to, run), ConfigError);
    to.features = FeatureSet{kLocationFeature, concept_feature(kVehicle)};
    cmd_train(data, c, to, run);
    CHECK(fs::exists(run / "model_beam.esnn"));
    const Json beam = cmd_eval(data, c, EvalOptions{{Task::Beam, 1}, {}}, run);
    const auto& acc = beam["topg_accuracy"];
    CHECK(acc["1"].get<double>() <= acc["2"].get<double>());
    CHECK(acc["2"].get<double>() <= acc["4"].get<double>());
    CHECK(acc["4"].get<double>() == 1.0);
    CHECK(beam["trr"]["4"].get<double>() == 1.0);
    CHECK(beam["trr"]["1"].get<double>() <= beam["trr"]["2"].get<double>());

    for (int h : {1, 3}) {
        TrainOptions tb{{Task::Blockage, h}, std::nullopt, std::nullopt, FeatureSet{kLocationFeature}};
        cmd_train(data, c, tb, run);
        const Json b = cmd_eval(data, c, EvalOptions{{Task::Blockage, h}, {}}, run);
        CHECK(b["accuracy"].get<double>() >= 0.0);
        CHECK(b["accuracy"].get<double>() <= 1.0);
    }
    CHECK_THROWS_AS(cmd_eval(data, c, EvalOptions{{Task::Blockage, 2}, {}}, run), IoError);

    cmd_report(run);
    const std::string first = slurp(run / "report.json"), csv = slurp(run / "metrics.csv");
    cmd_report(run);
    CHECK(slurp(run / "report.json") == first);
    CHECK(slurp(run / "metrics.csv") == csv);
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    CHECK(line == "metric,value,n,seed");
    int rows = 0;
    while (std::getline(lines, line)) ++rows;
    CHECK(rows == 3 * 2 + 2);
    fs::remove_all(dir);
}

}
