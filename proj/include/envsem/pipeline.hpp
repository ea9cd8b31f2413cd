// SPDX-License-Identifier: Apache-2.0
//
// End-to-end orchestration: dataset generation and labelling, feature
// selection, training, evaluation and report emission. Every command reads
// and writes plain files so that each can run as a separate process.

#pragma once

#include "envsem/beams.hpp"
#include "envsem/config.hpp"
#include "envsem/dataset.hpp"
#include "envsem/featsel.hpp"
#include "envsem/predictor.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace envsem {

struct SelectConfig {
    int epochs = 0;            ///< 0: use the training epoch count
    double feature_cost = 0.002; ///< subtracted per selected feature
    std::optional<int> v_max;
};

struct PipelineConfig {
    SceneConfig scene;
    RayTraceConfig ray;
    Resolution resolution{160, 320};
    int codebook_size = 0; ///< 0: same as the antenna count
    std::vector<int> horizons{1, 6, 11, 16, 21, 26, 31, 36};
    bool store_channels = true;
    int sample_stride = 1; ///< keep every n-th frame as a sample
    double corruption = 0.0;
    TrainConfig train;
    SelectConfig select;
    std::vector<int> g_list{1, 2, 3, 5};

    int codebook() const { return codebook_size > 0 ? codebook_size : ray.antennas; }
    void validate() const;
};

Json to_json(const PipelineConfig& c);
PipelineConfig pipeline_config_from_json(const Json& j);
/// Throws IoError when unreadable, ConfigError when invalid.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
Json load_json(const std::filesystem::path& path);
void save_json(const std::filesystem::path& path, const Json& j);

/// Simulates the scenario, renders the maps, traces channels and labels
/// beams and blockage. Frames without a target, and frames whose target
/// leaves the street within the longest horizon, yield no sample.
Dataset generate_dataset(const PipelineConfig& config);

/// Groups samples into trajectories (one per target vehicle), shuffles the
/// groups with `seed` and fills train, validation and test in turn.
Split split_dataset(const Dataset& data, double train_fraction, double val_fraction, std::uint64_t seed);

/// Features whose masks are not identically zero over `samples`, plus
/// location when present.
FeatureSet effective_features(const Dataset& data, FeatureSet features,
                              std::span<const std::size_t> samples);

/// Trains a fresh model per distinct effective feature set and scores it by
/// validation accuracy minus feature_cost * |X|.
class TrainingEvaluator {
  public:
    TrainingEvaluator(const Dataset& data, Split split, TaskSpec task, TrainConfig config,
                      double feature_cost);
    double operator()(FeatureSet s);
    std::size_t trainings() const { return trainings_; }

  private:
    const Dataset& data_;
    Split split_;
    TaskSpec task_;
    TrainConfig config_;
    double feature_cost_;
    std::vector<std::size_t> seen_;
    std::unordered_map<FeatureSet, double, FeatureSetHash> accuracy_;
    std::size_t trainings_ = 0;
};

struct SelectOptions {
    TaskSpec task;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs;
    std::vector<std::string> pinned{"location"};
    std::optional<int> v_max;
    std::optional<double> feature_cost;
};

struct TrainOptions {
    TaskSpec task;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs;
    std::optional<FeatureSet> features; ///< default: the run's selection file
};

struct EvalOptions {
    TaskSpec task;
    std::vector<int> g_list; ///< empty: the config's list
};

std::string select_file(Task task);
std::string model_stem(TaskSpec task);
std::string eval_file(TaskSpec task);

/// Each command takes an optional pipeline config; without one the defaults
/// apply (training settings only matter for select and train).
void cmd_generate(const PipelineConfig& config, const std::filesystem::path& dataset_dir);
FsResult cmd_select(const std::filesystem::path& dataset_dir, const PipelineConfig& config,
                    const SelectOptions& options, const std::filesystem::path& run_dir);
TrainResult cmd_train(const std::filesystem::path& dataset_dir, const PipelineConfig& config,
                      const TrainOptions& options, const std::filesystem::path& run_dir);
Json cmd_eval(const std::filesystem::path& dataset_dir, const PipelineConfig& config,
              const EvalOptions& options, const std::filesystem::path& run_dir);
/// Writes report.json and metrics.csv; throws IoError listing every missing
/// artifact.
Json cmd_report(const std::filesystem::path& run_dir);

} // namespace envsem
