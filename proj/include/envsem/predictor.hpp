// SPDX-License-Identifier: Apache-2.0
//
// Beam and blockage predictors: an auxiliary location encoder fused with a
// convolutional encoder of the stacked concept masks, followed by a decision
// head. Training uses Adam with mini-batches; evaluation is deterministic.

#pragma once

#include "envsem/config.hpp"
#include "envsem/dataset.hpp"
#include "envsem/features.hpp"
#include "envsem/nn.hpp"

#include <array>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace envsem {

enum class Task { Beam, Blockage };

std::string_view task_name(Task t);
Task task_from_name(std::string_view name);

struct ConvStage {
    int channels = 8;
    int stride = 1;
    bool operator==(const ConvStage&) const = default;
};

/// Two 3x3 conv-BN stages with a residual connection (1x1 conv + BN on the
/// skip when the shape changes).
struct ResidualStage {
    int channels = 8;
    int stride1 = 1;
    int stride2 = 1;
    bool operator==(const ResidualStage&) const = default;
};

struct EncoderSpec {
    std::vector<ConvStage> stem;
    bool pool = true; ///< 3x3 average pool, stride 2, after the stem
    std::vector<ResidualStage> blocks;
    bool operator==(const EncoderSpec&) const = default;
};

struct ArchConfig {
    Task task = Task::Beam;
    int in_channels = 0; ///< 0 disables the mask encoder
    int height = 80;
    int width = 160;
    std::array<int, 2> aux_widths{256, 16};
    EncoderSpec encoder;
    int head_hidden = 256;
    double dropout = 0.1;
    int outputs = 64;

    /// (channels, height, width) of the mask encoder output.
    std::array<int, 3> encoder_output() const;
    int fused_width() const;
    void validate() const;
    bool operator==(const ArchConfig&) const = default;
};

/// "desk" (default) or "full" layer presets for a task.
ArchConfig make_arch(Task task, int in_channels, int outputs, int height, int width,
                     std::string_view preset = "desk");

Json to_json(const ArchConfig& a);
ArchConfig arch_from_json(const Json& j);

template <class T>
class PredictorNet {
  public:
    PredictorNet(const ArchConfig& arch, std::uint64_t seed);

    /// location: (n, 3); masks: (n, in_channels, height, width), ignored when
    /// the encoder is disabled. Returns (n, outputs) pre-activation scores.
    nn::Tensor<T> forward(const nn::Tensor<T>& location, const nn::Tensor<T>& masks,
                          const nn::Context& ctx);
    void backward(const nn::Tensor<T>& dout);

    /// Every tensor including running statistics, in a fixed order.
    std::vector<nn::Param<T>*> params();
    std::vector<std::uint8_t> relu_pattern() const;
    const ArchConfig& arch() const { return arch_; }

    template <class U>
    void copy_from(PredictorNet<U>& other) {
        auto dst = params();
        auto src = other.params();
        if (dst.size() != src.size()) throw ConfigError("copy_from: architectures differ");
        for (std::size_t i = 0; i < dst.size(); ++i) {
            if (dst[i]->shape != src[i]->shape) throw ConfigError("copy_from: shape mismatch");
            for (std::size_t k = 0; k < dst[i]->size(); ++k)
                dst[i]->value[k] = static_cast<T>(src[i]->value[k]);
        }
    }

  private:
    ArchConfig arch_;
    nn::Sequential<T> aux_, encoder_, head_;
    int aux_out_ = 0, enc_out_ = 0;
};

using Predictor = PredictorNet<float>;

/// Location plus the selected concept masks stacked as channels: canonical
/// feature order, then camera order. Masks are block-averaged down to
/// height x width (an integer factor of the map resolution).
struct ModelInput {
    std::array<float, 3> location{};
    nn::Tensor<float> masks; ///< (1, channels, height, width)
};

ModelInput build_input(const SampleRecord& sample, FeatureSet features, int height, int width);

/// Batched variant reading straight from the dataset.
void build_batch(const Dataset& data, std::span<const std::size_t> indices, FeatureSet features,
                 int height, int width, nn::Tensor<float>& location, nn::Tensor<float>& masks);

/// Channel count for a feature set and camera count.
int input_channels(FeatureSet features, int cameras);

/// Evaluation-mode logits.
std::vector<float> forward_beam(Predictor& model, const ModelInput& input);
/// Evaluation-mode sigmoid probability of blockage.
double forward_blockage(Predictor& model, const ModelInput& input);

double beam_loss(std::span<const double> logits, int label);
double blockage_loss(double prob, int label);
double sigmoid(double z);

/// Index of the largest score, ties to the smallest index.
int argmax(std::span<const float> scores);

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 128;
    int epochs = 30;
    std::uint64_t seed = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double train_fraction = 0.7;
    double val_fraction = 0.15;
    double test_fraction = 0.15;
    std::string preset = "desk";
    int input_height = 20;
    int input_width = 40;

    void validate() const;
};

Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j);

struct Split {
    std::vector<std::size_t> train, val, test;
};

struct TaskSpec {
    Task task = Task::Beam;
    int horizon = 1; ///< blockage only
};

/// Per-sample label of a task (beam index or 0/1).
int task_label(const Dataset& data, std::size_t sample, TaskSpec task);

struct TrainResult {
    Predictor model;
    double val_accuracy = 0.0;
    int best_epoch = 0;
    std::vector<double> train_loss; ///< mean loss per epoch
};

/// Fresh initialisation, Adam on the train split, and the parameters of the
/// epoch with the best validation accuracy (earliest on ties).
TrainResult train(const Dataset& data, const Split& split, FeatureSet features, TaskSpec task,
                  const TrainConfig& config);

/// Evaluation-mode scores: logits (beam) or one probability (blockage).
std::vector<std::vector<float>> predict(Predictor& model, const Dataset& data,
                                        std::span<const std::size_t> indices, FeatureSet features);

/// Top-1 accuracy (beam) or 0.5-threshold accuracy (blockage).
double accuracy(Predictor& model, const Dataset& data, std::span<const std::size_t> indices,
                FeatureSet features, TaskSpec task);

struct GradCheckResult {
    double max_rel_error = 0.0;
    int checked = 0;
    int skipped = 0; ///< perturbations that changed a ReLU pattern
};

/// Central differences (step 1e-5) against the analytic gradients already
/// stored in params[*].grad. `loss` runs a forward pass and returns the loss;
/// `pattern` returns the ReLU pattern of the latest forward. Samples `count`
/// trainable scalars; a sample whose perturbation flips any ReLU is skipped.
/// Relative error is |a - n| / max(|a|, |n|, 1e-6).
GradCheckResult finite_difference_check(std::vector<nn::Param<double>*> params,
                                        const std::function<double()>& loss,
                                        const std::function<std::vector<std::uint8_t>()>& pattern,
                                        int count, Rng& rng, double step = 1e-5);

/// Gradient check of the task loss of `model` (shadowed in double) on one
/// batch. `batch_stats` selects batch-statistics BatchNorm; dropout is off.
GradCheckResult gradient_check(Predictor& model, const nn::Tensor<float>& location,
                               const nn::Tensor<float>& masks, std::span<const int> labels,
                               int count, std::uint64_t seed, bool batch_stats = false);

/// Binary checkpoint: "ESNN", u32 version, then named tensors until EOF.
void save_checkpoint(Predictor& model, const std::filesystem::path& path);
/// Loads into a freshly built network of `arch`; every tensor must match.
Predictor load_checkpoint(const std::filesystem::path& path, const ArchConfig& arch);

} // namespace envsem
