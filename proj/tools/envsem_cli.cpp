// SPDX-License-Identifier: Apache-2.0

#include "envsem/pipeline.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace envsem;

namespace {

struct Args {
    std::string config, dataset, task = "beam", out, features;
    int horizon = 1;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs, v_max;
    std::optional<double> feature_cost;
    std::vector<int> g_list;
    std::vector<std::string> pinned{"location"};
};

PipelineConfig config_of(const Args& a) {
    return a.config.empty() ? PipelineConfig{} : load_pipeline_config(a.config);
}

TaskSpec task_of(const Args& a) { return TaskSpec{task_from_name(a.task), a.horizon}; }

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto end = std::min(s.find(',', start), s.size());
        if (end > start) out.push_back(s.substr(start, end - start));
        start = end + 1;
    }
    return out;
}

void record_timing(const fs::path& dir, const std::string& key, double seconds) {
    const auto path = dir / "timing.json";
    Json j = Json::object();
    if (fs::exists(path)) {
        try {
            j = load_json(path);
        } catch (const std::exception&) {
            j = Json::object();
        }
    }
    j[key] = seconds;
    save_json(path, j);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Environment-semantics beam and blockage prediction pipeline"};
    app.require_subcommand(1);
    Args a;

    auto common = [&](CLI::App* c, bool dataset) {
        c->add_option("--config", a.config, "Pipeline config (JSON)")->check(CLI::ExistingFile);
        if (dataset) c->add_option("--dataset", a.dataset, "Dataset directory")->required();
        c->add_option("--out", a.out, "Output directory")->required();
    };
    auto task_opts = [&](CLI::App* c) {
        c->add_option("--task", a.task, "beam or blockage")->check(CLI::IsMember({"beam", "blockage"}));
        c->add_option("--horizon", a.horizon, "Blockage horizon in slots");
    };

    auto* gen = app.add_subcommand("generate", "Simulate, render and label a dataset");
    common(gen, false);
    gen->add_option("--seed", a.seed, "Scene seed override");

    auto* sel = app.add_subcommand("select", "Run SFFS with a training-based evaluator");
    common(sel, true);
    task_opts(sel);
    sel->add_option("--seed", a.seed, "Training seed");
    sel->add_option("--epochs", a.epochs, "Epochs per candidate");
    sel->add_option("--pin-feature", a.pinned, "Feature kept in every candidate");
    sel->add_option("--vmax", a.v_max, "Maximum feature count");
    sel->add_option("--feature-cost", a.feature_cost, "Score penalty per feature");

    auto* trn = app.add_subcommand("train", "Train and checkpoint the final model");
    common(trn, true);
    task_opts(trn);
    trn->add_option("--seed", a.seed, "Training seed");
    trn->add_option("--epochs", a.epochs, "Epochs");
    trn->add_option("--features", a.features, "Comma-separated feature names (default: selection)");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
    common(ev, true);
    task_opts(ev);
    ev->add_option("--g-list", a.g_list, "Comma-separated G values")->delimiter(',');

    auto* rep = app.add_subcommand("report", "Collect evaluations into report.json and metrics.csv");
    rep->add_option("--out", a.out, "Run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    const auto start = std::chrono::steady_clock::now();
    try {
        std::string stage;
        if (gen->parsed()) {
            PipelineConfig c = config_of(a);
            if (a.seed) c.scene.seed = *a.seed;
            cmd_generate(c, a.out);
            stage = "generate";
        } else if (sel->parsed()) {
            SelectOptions o{task_of(a), a.seed, a.epochs, a.pinned, a.v_max, a.feature_cost};
            const auto r = cmd_select(a.dataset, config_of(a), o, a.out);
            std::cout << "selected " << r.selected.to_string() << " score " << r.accuracy << "\n";
            stage = "select_" + a.task;
        } else if (trn->parsed()) {
            TrainOptions o{task_of(a), a.seed, a.epochs, std::nullopt};
            if (!a.features.empty()) o.features = FeatureSet::from_names(split_csv(a.features));
            const auto r = cmd_train(a.dataset, config_of(a), o, a.out);
            std::cout << "val_accuracy " << r.val_accuracy << " best_epoch " << r.best_epoch << "\n";
            stage = model_stem(o.task);
        } else if (ev->parsed()) {
            EvalOptions o{task_of(a), a.g_list};
            const auto j = cmd_eval(a.dataset, config_of(a), o, a.out);
            std::cout << j.dump(2) << "\n";
            stage = "eval_" + model_stem(o.task).substr(6);
        } else if (rep->parsed()) {
            cmd_report(a.out);
            stage = "report";
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        record_timing(a.out, stage, secs);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
