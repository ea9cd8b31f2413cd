// SPDX-License-Identifier: Apache-2.0

#include "envsem/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace envsem {

namespace fs = std::filesystem;

namespace {

std::vector<std::size_t> concat(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    std::vector<std::size_t> out = a;
    out.insert(out.end(), b.begin(), b.end());
    std::sort(out.begin(), out.end());
    return out;
}

std::string shortest(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

Split split_for(const Dataset& data, const TrainConfig& t) {
    return split_dataset(data, t.train_fraction, t.val_fraction, mix_seed(t.seed, "split"));
}

FeatureSet features_from_json(const Json& j) {
    return FeatureSet::from_names(j.get<std::vector<std::string>>());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

} // namespace

// ---- configuration ------------------------------------------------------------

void PipelineConfig::validate() const {
    scene.validate();
    ray.validate();
    train.validate();
    if (resolution.height < 16 || resolution.width < 16)
        throw ConfigError("render resolution must be at least 16x16");
    if (sample_stride < 1) throw ConfigError("sample_stride must be >= 1");
    if (codebook() < 1) throw ConfigError("codebook size must be >= 1");
    if (codebook() > 65535) throw ConfigError("codebook size must fit 16-bit labels");
    for (int h : horizons)
        if (h < 0) throw ConfigError("horizons must be non-negative");
    if (std::set<int>(horizons.begin(), horizons.end()).size() != horizons.size())
        throw ConfigError("horizons must be distinct");
    if (!(corruption >= 0.0 && corruption <= 1.0)) throw ConfigError("corruption must lie in [0, 1]");
    if (select.epochs < 0) throw ConfigError("select.epochs must be >= 0");
    if (select.feature_cost < 0.0) throw ConfigError("select.feature_cost must be >= 0");
    if (select.v_max && *select.v_max < 1) throw ConfigError("select.vmax must be >= 1");
    for (int g : g_list)
        if (g < 1 || g > codebook()) throw ConfigError("every G must lie in [1, codebook size]");
}

Json to_json(const PipelineConfig& c) {
    return {{"scene", to_json(c.scene)},
            {"ray", to_json(c.ray)},
            {"resolution", to_json(c.resolution)},
            {"codebook_size", c.codebook_size},
            {"horizons", c.horizons},
            {"store_channels", c.store_channels},
            {"sample_stride", c.sample_stride},
            {"corruption", c.corruption},
            {"train", to_json(c.train)},
            {"select",
             {{"epochs", c.select.epochs},
              {"feature_cost", c.select.feature_cost},
              {"vmax", c.select.v_max ? Json(*c.select.v_max) : Json(nullptr)}}},
            {"g_list", c.g_list}};
}

PipelineConfig pipeline_config_from_json(const Json& j) {
    require_known_keys(j, {"scene", "ray", "resolution", "codebook_size", "horizons", "store_channels",
                           "sample_stride", "corruption", "train", "select", "g_list"},
                       "pipeline config");
    PipelineConfig c;
    try {
        if (j.contains("scene")) c.scene = scene_config_from_json(j["scene"]);
        if (j.contains("ray")) c.ray = ray_config_from_json(j["ray"]);
        if (j.contains("resolution")) c.resolution = resolution_from_json(j["resolution"]);
        if (j.contains("codebook_size")) c.codebook_size = j["codebook_size"].get<int>();
        if (j.contains("horizons")) c.horizons = j["horizons"].get<std::vector<int>>();
        if (j.contains("store_channels")) c.store_channels = j["store_channels"].get<bool>();
        if (j.contains("sample_stride")) c.sample_stride = j["sample_stride"].get<int>();
        if (j.contains("corruption")) c.corruption = j["corruption"].get<double>();
        if (j.contains("train")) c.train = train_config_from_json(j["train"]);
        if (j.contains("select")) {
            const auto& s = j["select"];
            require_known_keys(s, {"epochs", "feature_cost", "vmax"}, "select config");
            if (s.contains("epochs")) c.select.epochs = s["epochs"].get<int>();
            if (s.contains("feature_cost")) c.select.feature_cost = s["feature_cost"].get<double>();
            if (s.contains("vmax") && !s["vmax"].is_null()) c.select.v_max = s["vmax"].get<int>();
        }
        if (j.contains("g_list")) c.g_list = j["g_list"].get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed pipeline config: ") + e.what());
    }
    c.validate();
    return c;
}

Json load_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
    }
}

void save_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

PipelineConfig load_pipeline_config(const fs::path& path) { return pipeline_config_from_json(load_json(path)); }

// ---- generation ----------------------------------------------------------------

Dataset generate_dataset(const PipelineConfig& config) {
    config.validate();
    const auto frames = generate_scenario(config.scene);
    const Codebook codebook = dft_codebook(config.ray.antennas, config.codebook());

    Dataset d;
    d.scene = config.scene;
    d.ray = config.ray;
    d.resolution = config.resolution;
    d.cameras = static_cast<int>(config.scene.camera_poses.size());
    d.codebook_size = config.codebook();
    d.horizons = config.horizons;
    d.corruption = config.corruption;

    const int longest = config.horizons.empty() ? 0 : *std::max_element(config.horizons.begin(), config.horizons.end());
    Rng corrupt = Rng(config.scene.seed).child("corrupt");
    const int last = static_cast<int>(frames.size()) - 1 - longest;
    for (int t = 0; t <= last; t += config.sample_stride) {
        const Frame& f = frames[static_cast<std::size_t>(t)];
        if (!f.target_user_id) continue;
        const std::uint32_t id = *f.target_user_id;
        bool stays = true;
        for (int k = 1; k <= longest && stays; ++k) stays = frames[static_cast<std::size_t>(t + k)].find(id) != nullptr;
        if (!stays) continue;

        SampleRecord s;
        for (int c = 0; c < d.cameras; ++c) {
            auto m = render_semantic_map(f, config.scene.camera_poses[static_cast<std::size_t>(c)], config.scene,
                                         config.resolution, c);
            if (config.corruption > 0.0) m = corrupt_map(m, config.corruption, corrupt);
            s.maps.push_back(std::move(m));
        }
        s.location = f.user_antenna_pos;
        const auto paths = trace_paths(f, config.scene, config.ray);
        const ChannelMatrix h = assemble_channel(paths, config.ray);
        s.beam_label = optimal_beam(h, codebook, config.ray.snr()).optimal_index;
        for (int hz : config.horizons) s.blockage.push_back(*blockage_label(frames, t, hz, config.scene, config.ray) ? 1 : 0);
        s.frame_id = static_cast<std::uint32_t>(f.t_index);
        s.user_id = id;
        d.append(s, config.store_channels ? &h : nullptr);
    }
    if (d.size() == 0) throw ConfigError("the scenario produced zero usable samples");
    return d;
}

Split split_dataset(const Dataset& data, double train_fraction, double val_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && val_fraction > 0.0 && train_fraction + val_fraction < 1.0))
        throw ConfigError("split fractions must be positive and leave room for a test split");
    std::vector<std::uint32_t> order;
    std::map<std::uint32_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const std::uint32_t user = data.ids[2 * i + 1];
        auto& g = groups[user];
        if (g.empty()) order.push_back(user);
        g.push_back(i);
    }
    if (order.size() < 3) throw ConfigError("need at least three trajectories to split the dataset");
    Rng rng(seed);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    const double n = static_cast<double>(data.size());
    Split s;
    std::size_t gi = 0;
    auto fill = [&](std::vector<std::size_t>& dst, double target, std::size_t keep_back) {
        while (gi + keep_back < order.size() && (dst.empty() || static_cast<double>(dst.size()) < target)) {
            const auto& g = groups[order[gi++]];
            dst.insert(dst.end(), g.begin(), g.end());
        }
    };
    fill(s.train, train_fraction * n, 2);
    fill(s.val, val_fraction * n, 1);
    while (gi < order.size()) {
        const auto& g = groups[order[gi++]];
        s.test.insert(s.test.end(), g.begin(), g.end());
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

FeatureSet effective_features(const Dataset& data, FeatureSet features, std::span<const std::size_t> samples) {
    std::array<bool, kConceptCount> present{};
    for (auto i : samples)
        for (int c = 0; c < data.cameras; ++c) {
            const auto* p = data.map(i, c);
            for (std::size_t k = 0; k < data.map_pixels(); ++k) present[p[k]] = true;
        }
    FeatureSet out;
    for (int id : features.ids())
        if (id == kLocationFeature || (id < kFeatureCount && present[static_cast<std::size_t>(id - 1)]))
            out = out.with(id);
    return out;
}

// ---- evaluator -----------------------------------------------------------------

TrainingEvaluator::TrainingEvaluator(const Dataset& data, Split split, TaskSpec task, TrainConfig config,
                                     double feature_cost)
    : data_(data), split_(std::move(split)), task_(task), config_(std::move(config)), feature_cost_(feature_cost) {
    seen_ = concat(split_.train, split_.val);
}

double TrainingEvaluator::operator()(FeatureSet s) {
    if (!s.contains(kLocationFeature)) throw ConfigError("candidate feature set lacks location: " + s.to_string());
    const FeatureSet eff = effective_features(data_, s, seen_);
    auto it = accuracy_.find(eff);
    if (it == accuracy_.end()) {
        TrainConfig c = config_;
        c.seed = mix_seed(config_.seed, eff.bits());
        const auto r = train(data_, split_, eff, task_, c);
        ++trainings_;
        it = accuracy_.emplace(eff, r.val_accuracy).first;
    }
    return it->second - feature_cost_ * s.size();
}

// ---- commands ------------------------------------------------------------------

std::string select_file(Task task) { return "select_" + std::string(task_name(task)) + ".json"; }

std::string model_stem(TaskSpec task) {
    if (task.task == Task::Beam) return "model_beam";
    return "model_blockage_h" + std::to_string(task.horizon);
}

std::string eval_file(TaskSpec task) {
    if (task.task == Task::Beam) return "eval_beam.json";
    return "eval_blockage_h" + std::to_string(task.horizon) + ".json";
}

void cmd_generate(const PipelineConfig& config, const fs::path& dataset_dir) {
    write_dataset(generate_dataset(config), dataset_dir);
}

FsResult cmd_select(const fs::path& dataset_dir, const PipelineConfig& config, const SelectOptions& options,
                    const fs::path& run_dir) {
    const Dataset data = read_dataset(dataset_dir);
    TrainConfig t = config.train;
    if (options.seed) t.seed = *options.seed;
    t.epochs = options.epochs ? *options.epochs : (config.select.epochs > 0 ? config.select.epochs : t.epochs);
    t.validate();
    const double cost = options.feature_cost ? *options.feature_cost : config.select.feature_cost;
    if (cost < 0.0) throw ConfigError("feature cost must be >= 0");
    const auto v_max = options.v_max ? options.v_max : config.select.v_max;
    const FeatureSet pinned = FeatureSet::from_names(options.pinned);
    if (options.task.task == Task::Blockage) (void)data.horizon_index(options.task.horizon);

    ensure_dir(run_dir);
    TrainingEvaluator trainer(data, split_for(data, t), options.task, t, cost);
    CachedEvaluator eval([&](FeatureSet s) { return trainer(s); });
    const FsResult r = sffs(FeatureSet::universal(), eval, pinned, v_max);

    Json best = Json::array();
    for (const auto& [set, v] : r.best_by_size) best.push_back({{"features", set.names()}, {"score", v}});
    Json out = {{"task", std::string(task_name(options.task.task))}};
    if (options.task.task == Task::Blockage) out["horizon"] = options.task.horizon;
    out["seed"] = t.seed;
    out["epochs"] = t.epochs;
    out["feature_cost"] = cost;
    out["pinned"] = pinned.names();
    out["vmax"] = v_max ? Json(*v_max) : Json(nullptr);
    out["selected"] = r.selected.names();
    out["score"] = r.accuracy;
    out["iterations"] = r.iterations;
    out["evaluator_calls"] = r.evaluator_calls;
    out["trainings"] = trainer.trainings();
    out["best_by_size"] = best;
    save_json(run_dir / select_file(options.task.task), out);
    std::ostringstream trace;
    write_trace(trace, r.trace);
    write_text(run_dir / (select_file(options.task.task).substr(0, select_file(options.task.task).size() - 5) +
                          ".trace.jsonl"),
               trace.str());
    return r;
}

TrainResult cmd_train(const fs::path& dataset_dir, const PipelineConfig& config, const TrainOptions& options,
                      const fs::path& run_dir) {
    const Dataset data = read_dataset(dataset_dir);
    TrainConfig t = config.train;
    if (options.seed) t.seed = *options.seed;
    if (options.epochs) t.epochs = *options.epochs;
    t.validate();
    FeatureSet features;
    if (options.features) {
        features = *options.features;
    } else {
        const auto sel = run_dir / select_file(options.task.task);
        if (!fs::exists(sel))
            throw ConfigError("no feature set: pass --features or run select first (" + sel.string() + " missing)");
        features = features_from_json(load_json(sel).at("selected"));
    }
    ensure_dir(run_dir);
    TrainResult r = train(data, split_for(data, t), features, options.task, t);
    const std::string stem = model_stem(options.task);
    save_checkpoint(r.model, run_dir / (stem + ".esnn"));
    Json side = {{"task", std::string(task_name(options.task.task))}};
    if (options.task.task == Task::Blockage) side["horizon"] = options.task.horizon;
    side["features"] = features.names();
    side["arch"] = to_json(r.model.arch());
    side["train"] = to_json(t);
    side["val_accuracy"] = r.val_accuracy;
    side["best_epoch"] = r.best_epoch;
    side["train_loss"] = r.train_loss;
    save_json(run_dir / (stem + ".json"), side);
    return r;
}

Json cmd_eval(const fs::path& dataset_dir, const PipelineConfig& config, const EvalOptions& options,
              const fs::path& run_dir) {
    const Dataset data = read_dataset(dataset_dir);
    const std::string stem = model_stem(options.task);
    const auto side_path = run_dir / (stem + ".json");
    if (!fs::exists(side_path)) throw IoError("missing model metadata " + side_path.string());
    const Json side = load_json(side_path);
    const ArchConfig arch = arch_from_json(side.at("arch"));
    const TrainConfig t = train_config_from_json(side.at("train"));
    const FeatureSet features = features_from_json(side.at("features"));
    Predictor model = load_checkpoint(run_dir / (stem + ".esnn"), arch);
    const Split split = split_for(data, t);
    if (split.test.empty()) throw ConfigError("empty test split");

    Json out = {{"task", std::string(task_name(options.task.task))}};
    if (options.task.task == Task::Blockage) out["horizon"] = options.task.horizon;
    out["features"] = features.names();
    out["seed"] = t.seed;
    out["dataset_manifest_sha256"] = sha256_file(dataset_dir / "manifest.json");
    out["n_test"] = split.test.size();
    const auto scores = predict(model, data, split.test, features);

    if (options.task.task == Task::Beam) {
        const auto g_list = options.g_list.empty() ? config.g_list : options.g_list;
        const Codebook cb = dft_codebook(data.ray.antennas, data.codebook_size);
        std::vector<int> labels;
        std::vector<std::vector<double>> rates;
        const bool with_rates = data.has_channels();
        for (auto i : split.test) {
            labels.push_back(data.beam_labels[i]);
            if (with_rates) rates.push_back(optimal_beam(data.channel(i), cb, data.ray.snr()).rates);
        }
        Json acc = Json::object(), trr_j = Json::object();
        std::size_t invalid = 0;
        for (int g : g_list) {
            if (g < 1 || g > data.codebook_size) throw ConfigError("G outside [1, codebook size]");
            std::vector<std::vector<int>> sets;
            for (const auto& s : scores) sets.push_back(topg_indices(std::span<const float>(s), g));
            acc[std::to_string(g)] = topg_accuracy(labels, sets, g);
            if (with_rates) {
                const auto r = trr_from_rates(rates, sets, g);
                trr_j[std::to_string(g)] = r.value;
                invalid = r.invalid;
            }
        }
        out["codebook_size"] = data.codebook_size;
        out["g_list"] = g_list;
        out["topg_accuracy"] = acc;
        out["trr"] = with_rates ? trr_j : Json(nullptr);
        out["trr_invalid"] = invalid;
    } else {
        std::size_t hits = 0, blocked_train = 0, blocked_test = 0;
        for (std::size_t k = 0; k < split.test.size(); ++k) {
            const int y = task_label(data, split.test[k], options.task);
            blocked_test += y;
            hits += (scores[k][0] >= 0.5f ? 1 : 0) == y;
        }
        for (auto i : split.train) blocked_train += task_label(data, i, options.task);
        const int majority = 2 * blocked_train > split.train.size() ? 1 : 0;
        const double n = static_cast<double>(split.test.size());
        out["accuracy"] = static_cast<double>(hits) / n;
        out["majority_class"] = majority;
        out["majority_baseline"] = (majority ? blocked_test : split.test.size() - blocked_test) / n;
        out["blocked_fraction"] = static_cast<double>(blocked_test) / n;
    }
    out["val_accuracy"] = side.at("val_accuracy");
    out["train"] = side.at("train");
    ensure_dir(run_dir);
    save_json(run_dir / eval_file(options.task), out);
    return out;
}

Json cmd_report(const fs::path& run_dir) {
    std::vector<std::string> missing;
    if (!fs::is_directory(run_dir)) throw IoError("run directory does not exist: " + run_dir.string());
    if (!fs::exists(run_dir / "eval_beam.json")) missing.push_back("eval_beam.json");
    std::vector<std::pair<int, fs::path>> blockage;
    for (const auto& e : fs::directory_iterator(run_dir)) {
        const std::string name = e.path().filename().string();
        if (name.rfind("eval_blockage_h", 0) == 0 && name.size() > 20 && name.ends_with(".json")) {
            const std::string num = name.substr(15, name.size() - 20);
            int h = 0;
            const auto r = std::from_chars(num.data(), num.data() + num.size(), h);
            if (r.ec == std::errc() && r.ptr == num.data() + num.size()) blockage.emplace_back(h, e.path());
        }
    }
    if (blockage.empty()) missing.push_back("eval_blockage_h<H>.json (no horizon evaluated)");
    if (!missing.empty()) {
        std::string msg = "missing run artifacts in " + run_dir.string() + ":";
        for (const auto& m : missing) msg += "\n  " + m;
        throw IoError(msg);
    }
    std::sort(blockage.begin(), blockage.end());

    const Json beam = load_json(run_dir / "eval_beam.json");
    Json report = Json::object();
    report["seed"] = beam.at("seed");
    report["dataset_manifest_sha256"] = beam.at("dataset_manifest_sha256");
    Json selected = Json::object();
    for (Task t : {Task::Beam, Task::Blockage}) {
        const auto p = run_dir / select_file(t);
        selected[std::string(task_name(t))] = fs::exists(p) ? load_json(p).at("selected") : Json(nullptr);
    }
    report["selected"] = selected;

    std::ostringstream csv;
    csv << "metric,value,n,seed\n";
    const std::string seed = beam.at("seed").dump();
    const std::string n_beam = beam.at("n_test").dump();
    Json beam_metrics = {{"features", beam.at("features")},
                         {"n_test", beam.at("n_test")},
                         {"topg_accuracy", beam.at("topg_accuracy")},
                         {"trr", beam.at("trr")},
                         {"trr_invalid", beam.at("trr_invalid")}};
    for (const auto& g : beam.at("g_list")) {
        const std::string key = g.dump();
        csv << "beam_top" << key << "_accuracy," << shortest(beam["topg_accuracy"][key].get<double>()) << ','
            << n_beam << ',' << seed << '\n';
        const auto& trr = beam.at("trr");
        csv << "beam_top" << key << "_trr," << (trr.is_null() ? std::string("") : shortest(trr[key].get<double>()))
            << ',' << n_beam << ',' << seed << '\n';
    }
    Json block = Json::array();
    for (const auto& [h, path] : blockage) {
        const Json b = load_json(path);
        block.push_back({{"horizon", h},
                         {"features", b.at("features")},
                         {"n_test", b.at("n_test")},
                         {"accuracy", b.at("accuracy")},
                         {"majority_baseline", b.at("majority_baseline")},
                         {"blocked_fraction", b.at("blocked_fraction")}});
        csv << "blockage_h" << h << "_accuracy," << shortest(b.at("accuracy").get<double>()) << ','
            << b.at("n_test").dump() << ',' << b.at("seed").dump() << '\n';
    }
    report["metrics"] = {{"beam", beam_metrics}, {"blockage", block}};
    report["config"] = {{"train", beam.at("train")}};
    save_json(run_dir / "report.json", report);
    write_text(run_dir / "metrics.csv", csv.str());
    return report;
}

} // namespace envsem
