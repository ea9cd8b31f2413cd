// SPDX-License-Identifier: Apache-2.0

#include "envsem/predictor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>

namespace envsem {

namespace {

constexpr char kCheckpointMagic[4] = {'E', 'S', 'N', 'N'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void add_conv_bn_relu(nn::Sequential<T>& seq, const std::string& name, int in, int out, int stride,
                      Rng& rng, bool relu = true) {
    seq.template add<nn::Conv2d<T>>(name + ".conv", in, out, 3, stride, 1, rng);
    seq.template add<nn::BatchNorm<T>>(name + ".bn", out);
    if (relu) seq.template add<nn::ReLU<T>>();
}

struct Geometry {
    int factor;
};

Geometry check_geometry(int map_h, int map_w, int height, int width) {
    if (height < 1 || width < 1 || map_h % height != 0 || map_w % width != 0 ||
        map_h / height != map_w / width)
        throw ConfigError("model input " + std::to_string(height) + "x" + std::to_string(width) +
                          " is not an integer downsampling of the " + std::to_string(map_h) + "x" +
                          std::to_string(map_w) + " maps");
    return {map_h / height};
}

/// Accumulates one label grid into the channel planes selected by `slot`.
void accumulate_masks(const std::uint8_t* labels, int map_h, int map_w, int factor,
                      const std::array<int, kConceptCount>& slot, int camera, int cameras,
                      float* out, int width, int height) {
    const float inv = 1.0f / static_cast<float>(factor * factor);
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    for (int r = 0; r < map_h; ++r) {
        const std::uint8_t* row = labels + static_cast<std::size_t>(r) * map_w;
        const std::size_t orow = static_cast<std::size_t>(r / factor) * width;
        for (int c = 0; c < map_w; ++c) {
            const int s = slot[row[c]];
            if (s < 0) continue;
            out[static_cast<std::size_t>(s * cameras + camera) * plane + orow + c / factor] += inv;
        }
    }
}

std::array<int, kConceptCount> concept_slots(FeatureSet features) {
    std::array<int, kConceptCount> slot;
    slot.fill(-1);
    int k = 0;
    for (int c : features.concepts()) slot[static_cast<std::size_t>(c)] = k++;
    return slot;
}

template <class T>
double task_loss(const nn::Tensor<T>& out, std::span<const int> labels, Task task, nn::Tensor<T>* grad) {
    const int n = out.n, m = out.c;
    if (static_cast<int>(labels.size()) != n) throw ConfigError("label count differs from batch size");
    if (grad) *grad = nn::Tensor<T>(n, m);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const T* z = out.sample(i);
        const int y = labels[static_cast<std::size_t>(i)];
        if (task == Task::Beam) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int k = 0; k < m; ++k) mx = std::max(mx, static_cast<double>(z[k]));
            double s = 0.0;
            for (int k = 0; k < m; ++k) s += std::exp(z[k] - mx);
            const double lse = mx + std::log(s);
            total += lse - z[y];
            if (grad) {
                T* g = grad->sample(i);
                for (int k = 0; k < m; ++k)
                    g[k] = static_cast<T>((std::exp(z[k] - lse) - (k == y ? 1.0 : 0.0)) / n);
            }
        } else {
            const double v = z[0];
            total += std::max(v, 0.0) - y * v + std::log1p(std::exp(-std::abs(v)));
            if (grad) grad->sample(i)[0] = static_cast<T>((sigmoid(v) - y) / n);
        }
    }
    return total / n;
}

std::vector<std::vector<float>> snapshot(Predictor& model) {
    std::vector<std::vector<float>> s;
    for (auto* p : model.params()) s.push_back(p->value);
    return s;
}

void restore(Predictor& model, const std::vector<std::vector<float>>& s) {
    auto ps = model.params();
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = s[i];
}

template <class T>
void put_le(std::ofstream& out, T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    out.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
bool get_le(std::ifstream& in, T& v) {
    unsigned char b[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(b), sizeof(T))) return false;
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
    return true;
}

} // namespace

std::string_view task_name(Task t) { return t == Task::Beam ? "beam" : "blockage"; }

Task task_from_name(std::string_view name) {
    if (name == "beam") return Task::Beam;
    if (name == "blockage") return Task::Blockage;
    throw ConfigError("unknown task '" + std::string(name) + "' (expected beam or blockage)");
}

// ---- architecture --------------------------------------------------------------

std::array<int, 3> ArchConfig::encoder_output() const {
    if (in_channels == 0) return {0, 0, 0};
    int c = in_channels, h = height, w = width;
    for (const auto& s : encoder.stem) {
        h = nn::conv_output_size(h, 3, s.stride, 1);
        w = nn::conv_output_size(w, 3, s.stride, 1);
        c = s.channels;
    }
    if (encoder.pool) {
        h = nn::conv_output_size(h, 3, 2, 1);
        w = nn::conv_output_size(w, 3, 2, 1);
    }
    for (const auto& b : encoder.blocks) {
        h = nn::conv_output_size(nn::conv_output_size(h, 3, b.stride1, 1), 3, b.stride2, 1);
        w = nn::conv_output_size(nn::conv_output_size(w, 3, b.stride1, 1), 3, b.stride2, 1);
        c = b.channels;
    }
    return {c, h, w};
}

int ArchConfig::fused_width() const {
    const auto e = encoder_output();
    return aux_widths[1] + e[0] * e[1] * e[2];
}

void ArchConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(std::string("invalid architecture: ") + what);
    };
    require(in_channels >= 0, "negative input channels");
    require(height >= 1 && width >= 1, "input size");
    require(aux_widths[0] >= 1 && aux_widths[1] >= 1, "auxiliary widths");
    require(head_hidden >= 1, "head width");
    require(dropout >= 0.0 && dropout < 1.0, "dropout rate must lie in [0, 1)");
    require(outputs >= 1, "output count");
    require(task == Task::Beam || outputs == 1, "blockage head has one output");
    for (const auto& s : encoder.stem) require(s.channels >= 1 && s.stride >= 1, "stem stage");
    for (const auto& b : encoder.blocks)
        require(b.channels >= 1 && b.stride1 >= 1 && b.stride2 >= 1, "residual stage");
    if (in_channels > 0) require(!encoder.stem.empty() || !encoder.blocks.empty(), "empty encoder");
    (void)encoder_output();
}

ArchConfig make_arch(Task task, int in_channels, int outputs, int height, int width,
                     std::string_view preset) {
    ArchConfig a;
    a.task = task;
    a.in_channels = in_channels;
    a.height = height;
    a.width = width;
    a.outputs = task == Task::Beam ? outputs : 1;
    if (preset == "desk") {
        a.encoder = {{{8, 2}}, true, {{8, 2, 1}}};
        a.head_hidden = 64;
    } else if (preset == "full") {
        if (task == Task::Beam) {
            a.encoder = {{{32, 4}, {16, 2}}, true, {{8, 4, 1}, {8, 1, 1}}};
            a.head_hidden = 512;
        } else {
            a.encoder = {{{16, 2}}, true, {{8, 4, 1}}};
            a.head_hidden = 64;
        }
    } else {
        throw ConfigError("unknown architecture preset '" + std::string(preset) + "'");
    }
    a.validate();
    return a;
}

Json to_json(const ArchConfig& a) {
    Json stem = Json::array(), blocks = Json::array();
    for (const auto& s : a.encoder.stem) stem.push_back({{"channels", s.channels}, {"stride", s.stride}});
    for (const auto& b : a.encoder.blocks)
        blocks.push_back({{"channels", b.channels}, {"stride1", b.stride1}, {"stride2", b.stride2}});
    return {{"task", std::string(task_name(a.task))},
            {"in_channels", a.in_channels},
            {"height", a.height},
            {"width", a.width},
            {"aux_widths", Json::array({a.aux_widths[0], a.aux_widths[1]})},
            {"encoder", {{"stem", stem}, {"pool", a.encoder.pool}, {"blocks", blocks}}},
            {"head_hidden", a.head_hidden},
            {"dropout", a.dropout},
            {"outputs", a.outputs}};
}

ArchConfig arch_from_json(const Json& j) {
    ArchConfig a;
    try {
        require_known_keys(j, {"task", "in_channels", "height", "width", "aux_widths", "encoder",
                               "head_hidden", "dropout", "outputs"},
                           "architecture");
        a.task = task_from_name(j.at("task").get<std::string>());
        a.in_channels = j.at("in_channels").get<int>();
        a.height = j.at("height").get<int>();
        a.width = j.at("width").get<int>();
        const auto aw = j.at("aux_widths").get<std::vector<int>>();
        if (aw.size() != 2) throw ConfigError("aux_widths must hold two widths");
        a.aux_widths = {aw[0], aw[1]};
        const auto& e = j.at("encoder");
        for (const auto& s : e.at("stem")) a.encoder.stem.push_back({s.at("channels"), s.at("stride")});
        a.encoder.pool = e.at("pool").get<bool>();
        for (const auto& b : e.at("blocks"))
            a.encoder.blocks.push_back({b.at("channels"), b.at("stride1"), b.at("stride2")});
        a.head_hidden = j.at("head_hidden").get<int>();
        a.dropout = j.at("dropout").get<double>();
        a.outputs = j.at("outputs").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed architecture: ") + e.what());
    }
    a.validate();
    return a;
}

// ---- network -------------------------------------------------------------------

template <class T>
PredictorNet<T>::PredictorNet(const ArchConfig& arch, std::uint64_t seed) : arch_(arch) {
    arch_.validate();
    const Rng root(seed);
    Rng aux_rng = root.child("aux");
    Rng enc_rng = root.child("encoder");
    Rng head_rng = root.child("head");

    aux_.template add<nn::BatchNorm<T>>("aux.bn_in", 3);
    int width = 3;
    for (int k = 0; k < 2; ++k) {
        const std::string name = "aux.fc" + std::to_string(k);
        aux_.template add<nn::Linear<T>>(name, width, arch_.aux_widths[static_cast<std::size_t>(k)], aux_rng);
        aux_.template add<nn::BatchNorm<T>>(name + ".bn", arch_.aux_widths[static_cast<std::size_t>(k)]);
        aux_.template add<nn::ReLU<T>>();
        width = arch_.aux_widths[static_cast<std::size_t>(k)];
    }
    aux_out_ = width;

    if (arch_.in_channels > 0) {
        int c = arch_.in_channels;
        for (std::size_t i = 0; i < arch_.encoder.stem.size(); ++i) {
            const auto& s = arch_.encoder.stem[i];
            add_conv_bn_relu(encoder_, "enc.stem" + std::to_string(i), c, s.channels, s.stride, enc_rng);
            c = s.channels;
        }
        if (arch_.encoder.pool) encoder_.template add<nn::AvgPool<T>>(3, 2, 1);
        for (std::size_t i = 0; i < arch_.encoder.blocks.size(); ++i) {
            const auto& b = arch_.encoder.blocks[i];
            const std::string name = "enc.block" + std::to_string(i);
            auto& block = encoder_.template add<nn::Residual<T>>();
            add_conv_bn_relu(block.main(), name + ".a", c, b.channels, b.stride1, enc_rng);
            add_conv_bn_relu(block.main(), name + ".b", b.channels, b.channels, b.stride2, enc_rng, false);
            if (c != b.channels || b.stride1 * b.stride2 != 1) {
                block.skip().template add<nn::Conv2d<T>>(name + ".skip.conv", c, b.channels, 1,
                                                         b.stride1 * b.stride2, 0, enc_rng);
                block.skip().template add<nn::BatchNorm<T>>(name + ".skip.bn", b.channels);
            }
            c = b.channels;
        }
        const auto e = arch_.encoder_output();
        enc_out_ = e[0] * e[1] * e[2];
    }

    head_.template add<nn::Linear<T>>("head.fc0", aux_out_ + enc_out_, arch_.head_hidden, head_rng);
    head_.template add<nn::BatchNorm<T>>("head.fc0.bn", arch_.head_hidden);
    head_.template add<nn::ReLU<T>>();
    head_.template add<nn::Dropout<T>>(arch_.dropout);
    head_.template add<nn::Linear<T>>("head.fc1", arch_.head_hidden, arch_.outputs, head_rng);
}

template <class T>
nn::Tensor<T> PredictorNet<T>::forward(const nn::Tensor<T>& location, const nn::Tensor<T>& masks,
                                       const nn::Context& ctx) {
    if (location.features() != 3) throw ConfigError("location input must be (n, 3)");
    const int n = location.n;
    const nn::Tensor<T> a = aux_.forward(location, ctx);
    nn::Tensor<T> fused(n, aux_out_ + enc_out_);
    nn::Tensor<T> e;
    if (enc_out_ > 0) {
        if (masks.n != n || masks.c != arch_.in_channels || masks.h != arch_.height || masks.w != arch_.width)
            throw ConfigError("mask input shape does not match the architecture");
        e = encoder_.forward(masks, ctx);
    }
    for (int i = 0; i < n; ++i) {
        std::copy_n(a.sample(i), aux_out_, fused.sample(i));
        if (enc_out_ > 0) std::copy_n(e.sample(i), enc_out_, fused.sample(i) + aux_out_);
    }
    return head_.forward(fused, ctx);
}

template <class T>
void PredictorNet<T>::backward(const nn::Tensor<T>& dout) {
    const nn::Tensor<T> d = head_.backward(dout);
    const int n = d.n;
    nn::Tensor<T> da(n, aux_out_);
    nn::Tensor<T> de;
    if (enc_out_ > 0) {
        const auto e = arch_.encoder_output();
        de = nn::Tensor<T>(n, e[0], e[1], e[2]);
    }
    for (int i = 0; i < n; ++i) {
        std::copy_n(d.sample(i), aux_out_, da.sample(i));
        if (enc_out_ > 0) std::copy_n(d.sample(i) + aux_out_, enc_out_, de.sample(i));
    }
    aux_.backward(da);
    if (enc_out_ > 0) encoder_.backward(de);
}

template <class T>
std::vector<nn::Param<T>*> PredictorNet<T>::params() {
    std::vector<nn::Param<T>*> out;
    aux_.collect(out);
    encoder_.collect(out);
    head_.collect(out);
    return out;
}

template <class T>
std::vector<std::uint8_t> PredictorNet<T>::relu_pattern() const {
    std::vector<std::uint8_t> out;
    aux_.relu_pattern(out);
    encoder_.relu_pattern(out);
    head_.relu_pattern(out);
    return out;
}

template class PredictorNet<float>;
template class PredictorNet<double>;

// ---- inputs --------------------------------------------------------------------

int input_channels(FeatureSet features, int cameras) {
    return static_cast<int>(features.concepts().size()) * cameras;
}

ModelInput build_input(const SampleRecord& sample, FeatureSet features, int height, int width) {
    if (!features.contains(kLocationFeature))
        throw ConfigError("feature set must contain location");
    if (!features.subset_of(FeatureSet::universal()))
        throw ConfigError("feature set holds ids outside the catalog");
    if (sample.maps.empty()) throw ConfigError("sample has no semantic maps");
    const int cameras = static_cast<int>(sample.maps.size());
    const auto& m0 = sample.maps.front();
    const auto g = check_geometry(m0.height, m0.width, height, width);
    ModelInput in;
    in.location = {static_cast<float>(sample.location.x), static_cast<float>(sample.location.y),
                   static_cast<float>(sample.location.z)};
    in.masks = nn::Tensor<float>(1, input_channels(features, cameras), height, width);
    const auto slot = concept_slots(features);
    for (int c = 0; c < cameras; ++c) {
        const auto& m = sample.maps[static_cast<std::size_t>(c)];
        if (m.height != m0.height || m.width != m0.width) throw ConfigError("camera maps differ in size");
        accumulate_masks(m.labels.data(), m.height, m.width, g.factor, slot, c, cameras,
                         in.masks.data.data(), width, height);
    }
    return in;
}

void build_batch(const Dataset& data, std::span<const std::size_t> indices, FeatureSet features,
                 int height, int width, nn::Tensor<float>& location, nn::Tensor<float>& masks) {
    if (!features.contains(kLocationFeature))
        throw ConfigError("feature set must contain location");
    const auto g = check_geometry(data.resolution.height, data.resolution.width, height, width);
    const int n = static_cast<int>(indices.size());
    const int channels = input_channels(features, data.cameras);
    location = nn::Tensor<float>(n, 3);
    masks = nn::Tensor<float>(n, channels, height, width);
    const auto slot = concept_slots(features);
    for (int i = 0; i < n; ++i) {
        const std::size_t s = indices[static_cast<std::size_t>(i)];
        if (s >= data.size()) throw ConfigError("sample index out of range");
        std::copy_n(data.locations.data() + 3 * s, 3, location.sample(i));
        if (channels == 0) continue;
        for (int c = 0; c < data.cameras; ++c)
            accumulate_masks(data.map(s, c), data.resolution.height, data.resolution.width, g.factor,
                             slot, c, data.cameras, masks.sample(i), width, height);
    }
}

// ---- outputs and losses -----------------------------------------------------------

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

int argmax(std::span<const float> scores) {
    if (scores.empty()) throw ConfigError("argmax of an empty score vector");
    int best = 0;
    for (int i = 1; i < static_cast<int>(scores.size()); ++i)
        if (scores[static_cast<std::size_t>(i)] > scores[static_cast<std::size_t>(best)]) best = i;
    return best;
}

std::vector<float> forward_beam(Predictor& model, const ModelInput& input) {
    if (model.arch().task != Task::Beam) throw ConfigError("forward_beam needs a beam model");
    nn::Tensor<float> loc(1, 3);
    std::copy(input.location.begin(), input.location.end(), loc.data.begin());
    const auto out = model.forward(loc, input.masks, nn::Context::eval());
    return out.data;
}

double forward_blockage(Predictor& model, const ModelInput& input) {
    if (model.arch().task != Task::Blockage) throw ConfigError("forward_blockage needs a blockage model");
    nn::Tensor<float> loc(1, 3);
    std::copy(input.location.begin(), input.location.end(), loc.data.begin());
    const auto out = model.forward(loc, input.masks, nn::Context::eval());
    return sigmoid(out.data[0]);
}

double beam_loss(std::span<const double> logits, int label) {
    if (label < 0 || label >= static_cast<int>(logits.size())) throw ConfigError("beam label out of range");
    const double mx = *std::max_element(logits.begin(), logits.end());
    double s = 0.0;
    for (double z : logits) s += std::exp(z - mx);
    return mx + std::log(s) - logits[static_cast<std::size_t>(label)];
}

double blockage_loss(double prob, int label) {
    if (label != 0 && label != 1) throw ConfigError("blockage label must be 0 or 1");
    const double p = std::clamp(prob, 1e-7, 1.0 - 1e-7);
    return -(label * std::log(p) + (1 - label) * std::log(1.0 - p));
}

// ---- training ----------------------------------------------------------------------

void TrainConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(std::string("invalid training config: ") + what);
    };
    require(learning_rate > 0.0, "learning_rate must be positive");
    require(batch_size >= 2, "batch_size must be >= 2");
    require(epochs >= 1, "epochs must be >= 1");
    require(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0, "Adam betas must lie in (0, 1)");
    require(epsilon > 0.0, "epsilon must be positive");
    require(train_fraction > 0.0 && val_fraction > 0.0 && test_fraction > 0.0, "split fractions must be positive");
    require(std::abs(train_fraction + val_fraction + test_fraction - 1.0) < 1e-9, "split fractions must sum to 1");
    require(input_height >= 1 && input_width >= 1, "input size");
}

Json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
            {"epochs", c.epochs},               {"seed", c.seed},
            {"beta1", c.beta1},                 {"beta2", c.beta2},
            {"epsilon", c.epsilon},             {"train_fraction", c.train_fraction},
            {"val_fraction", c.val_fraction},   {"test_fraction", c.test_fraction},
            {"preset", c.preset},               {"input_height", c.input_height},
            {"input_width", c.input_width}};
}

TrainConfig train_config_from_json(const Json& j) {
    require_known_keys(j, {"learning_rate", "batch_size", "epochs", "seed", "beta1", "beta2", "epsilon",
                           "train_fraction", "val_fraction", "test_fraction", "preset", "input_height",
                           "input_width"},
                       "training config");
    TrainConfig c;
    try {
        auto rd = [&](const char* k, auto& v) {
            if (j.contains(k)) v = j.at(k).get<std::remove_reference_t<decltype(v)>>();
        };
        rd("learning_rate", c.learning_rate);
        rd("batch_size", c.batch_size);
        rd("epochs", c.epochs);
        rd("seed", c.seed);
        rd("beta1", c.beta1);
        rd("beta2", c.beta2);
        rd("epsilon", c.epsilon);
        rd("train_fraction", c.train_fraction);
        rd("val_fraction", c.val_fraction);
        rd("test_fraction", c.test_fraction);
        rd("preset", c.preset);
        rd("input_height", c.input_height);
        rd("input_width", c.input_width);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed training config: ") + e.what());
    }
    c.validate();
    return c;
}

int task_label(const Dataset& data, std::size_t sample, TaskSpec task) {
    return task.task == Task::Beam ? data.beam_labels[sample] : data.blockage_at(sample, task.horizon);
}

std::vector<std::vector<float>> predict(Predictor& model, const Dataset& data,
                                        std::span<const std::size_t> indices, FeatureSet features) {
    std::vector<std::vector<float>> out;
    out.reserve(indices.size());
    nn::Tensor<float> loc, masks;
    const auto& a = model.arch();
    constexpr std::size_t kChunk = 128;
    for (std::size_t b = 0; b < indices.size(); b += kChunk) {
        const auto chunk = indices.subspan(b, std::min(kChunk, indices.size() - b));
        build_batch(data, chunk, features, a.height, a.width, loc, masks);
        const auto y = model.forward(loc, masks, nn::Context::eval());
        for (int i = 0; i < y.n; ++i) {
            std::vector<float> row(y.sample(i), y.sample(i) + y.c);
            if (a.task == Task::Blockage) row[0] = static_cast<float>(sigmoid(row[0]));
            out.push_back(std::move(row));
        }
    }
    return out;
}

double accuracy(Predictor& model, const Dataset& data, std::span<const std::size_t> indices,
                FeatureSet features, TaskSpec task) {
    if (indices.empty()) throw ConfigError("accuracy over an empty split");
    const auto scores = predict(model, data, indices, features);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int y = task_label(data, indices[i], task);
        const int pred = task.task == Task::Beam ? argmax(scores[i]) : (scores[i][0] >= 0.5f ? 1 : 0);
        hits += pred == y;
    }
    return static_cast<double>(hits) / static_cast<double>(indices.size());
}

TrainResult train(const Dataset& data, const Split& split, FeatureSet features, TaskSpec task,
                  const TrainConfig& config) {
    config.validate();
    if (!features.contains(kLocationFeature)) throw ConfigError("feature set must contain location");
    if (split.train.size() < 2 || split.val.empty()) throw ConfigError("empty training or validation split");
    if (task.task == Task::Blockage) (void)data.horizon_index(task.horizon);

    const ArchConfig arch = make_arch(task.task, input_channels(features, data.cameras), data.codebook_size,
                                      config.input_height, config.input_width, config.preset);
    const Rng root(config.seed);
    TrainResult result{Predictor(arch, root.child("init").seed()), -1.0, 0, {}};
    Predictor& model = result.model;
    nn::Adam<float> opt(model.params(), config.learning_rate, config.beta1, config.beta2, config.epsilon);
    Rng shuffle = root.child("shuffle");
    Rng dropout = root.child("dropout");

    std::vector<std::size_t> order = split.train;
    std::vector<int> labels;
    nn::Tensor<float> loc, masks, grad;
    std::vector<std::vector<float>> best;
    const auto bs = static_cast<std::size_t>(config.batch_size);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
        double loss_sum = 0.0;
        std::size_t loss_n = 0;
        for (std::size_t b = 0; b < order.size(); b += bs) {
            const std::size_t len = std::min(bs, order.size() - b);
            if (len < 2) continue; // batch statistics need two samples
            const std::span<const std::size_t> idx(order.data() + b, len);
            build_batch(data, idx, features, arch.height, arch.width, loc, masks);
            labels.clear();
            for (auto s : idx) labels.push_back(task_label(data, s, task));
            const auto out = model.forward(loc, masks, nn::Context::train(dropout));
            loss_sum += task_loss(out, labels, task.task, &grad) * static_cast<double>(len);
            loss_n += len;
            opt.zero_grad();
            model.backward(grad);
            opt.step();
        }
        result.train_loss.push_back(loss_sum / static_cast<double>(loss_n));
        const double acc = accuracy(model, data, split.val, features, task);
        if (acc > result.val_accuracy) {
            result.val_accuracy = acc;
            result.best_epoch = epoch;
            best = snapshot(model);
        }
    }
    restore(model, best);
    return result;
}

// ---- gradient checking ---------------------------------------------------------------

GradCheckResult finite_difference_check(std::vector<nn::Param<double>*> params,
                                        const std::function<double()>& loss,
                                        const std::function<std::vector<std::uint8_t>()>& pattern,
                                        int count, Rng& rng, double step) {
    std::vector<nn::Param<double>*> trainable;
    for (auto* p : params)
        if (p->trainable && p->size() > 0) trainable.push_back(p);
    if (trainable.empty()) throw ConfigError("gradient check: no trainable parameters");
    GradCheckResult r;
    const int max_attempts = 50 * count;
    for (int attempt = 0; r.checked < count && attempt < max_attempts; ++attempt) {
        auto* p = trainable[rng.below(trainable.size())];
        const std::size_t k = rng.below(p->size());
        const double analytic = p->grad[k];
        const double orig = p->value[k];
        (void)loss();
        const auto base = pattern();
        const double up = orig + step, down = orig - step;
        p->value[k] = up;
        const double lp = loss();
        const bool same_p = pattern() == base;
        p->value[k] = down;
        const double lm = loss();
        const bool same_m = pattern() == base;
        p->value[k] = orig;
        if (!same_p || !same_m) {
            ++r.skipped;
            continue;
        }
        const double numeric = (lp - lm) / (up - down);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
        r.max_rel_error = std::max(r.max_rel_error, std::abs(analytic - numeric) / denom);
        ++r.checked;
    }
    return r;
}

GradCheckResult gradient_check(Predictor& model, const nn::Tensor<float>& location,
                               const nn::Tensor<float>& masks, std::span<const int> labels,
                               int count, std::uint64_t seed, bool batch_stats) {
    PredictorNet<double> shadow(model.arch(), 0);
    shadow.copy_from(model);
    auto widen = [](const nn::Tensor<float>& t) {
        nn::Tensor<double> d(t.n, t.c, t.h, t.w);
        std::copy(t.data.begin(), t.data.end(), d.data.begin());
        return d;
    };
    const auto loc = widen(location);
    const auto msk = widen(masks);
    nn::Context ctx;
    ctx.batch_stats = batch_stats;
    const Task task = model.arch().task;

    auto params = shadow.params();
    std::vector<std::vector<double>> saved;
    for (auto* p : params) saved.push_back(p->value);

    nn::Tensor<double> grad;
    const auto out = shadow.forward(loc, msk, ctx);
    (void)task_loss(out, labels, task, &grad);
    for (auto* p : params) std::fill(p->grad.begin(), p->grad.end(), 0.0);
    shadow.backward(grad);

    // Restore running statistics before every forward.
    auto loss = [&]() -> double {
        for (std::size_t i = 0; i < params.size(); ++i)
            if (!params[i]->trainable) params[i]->value = saved[i];
        return task_loss<double>(shadow.forward(loc, msk, ctx), labels, task, nullptr);
    };
    Rng rng(seed);
    return finite_difference_check(params, loss, [&] { return shadow.relu_pattern(); }, count, rng);
}

// ---- checkpoints -------------------------------------------------------------------

void save_checkpoint(Predictor& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kCheckpointMagic, 4);
    put_le<std::uint32_t>(out, kCheckpointVersion);
    for (auto* p : model.params()) {
        if (p->name.size() > 0xFFFF || p->shape.size() > 0xFF) throw IoError("tensor name or rank too large");
        put_le<std::uint16_t>(out, static_cast<std::uint16_t>(p->name.size()));
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        put_le<std::uint8_t>(out, static_cast<std::uint8_t>(p->shape.size()));
        for (int d : p->shape) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        for (float v : p->value) put_le<float>(out, v);
    }
    if (!out) throw IoError("checkpoint write failed for " + path.string());
}

Predictor load_checkpoint(const std::filesystem::path& path, const ArchConfig& arch) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    char magic[4];
    std::uint32_t version = 0;
    if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw IoError("not an ESNN checkpoint: " + path.string());
    if (!get_le(in, version) || version != kCheckpointVersion)
        throw IoError("unsupported checkpoint version in " + path.string());

    Predictor model(arch, 0);
    std::map<std::string, nn::Param<float>*> by_name;
    for (auto* p : model.params()) by_name[p->name] = p;
    std::map<std::string, bool> seen;
    std::uint16_t name_len = 0;
    while (get_le(in, name_len)) {
        std::string name(name_len, '\0');
        std::uint8_t rank = 0;
        if (!in.read(name.data(), name_len) || !get_le(in, rank)) throw IoError("truncated checkpoint");
        std::vector<int> shape(rank);
        for (auto& d : shape) {
            std::uint32_t v = 0;
            if (!get_le(in, v)) throw IoError("truncated checkpoint");
            d = static_cast<int>(v);
        }
        const auto it = by_name.find(name);
        if (it == by_name.end()) throw IoError("checkpoint tensor '" + name + "' not in the architecture");
        if (it->second->shape != shape) throw IoError("checkpoint tensor '" + name + "' has the wrong shape");
        for (auto& v : it->second->value)
            if (!get_le(in, v)) throw IoError("truncated checkpoint");
        seen[name] = true;
    }
    if (seen.size() != by_name.size()) throw IoError("checkpoint lacks tensors of the architecture");
    return model;
}

} // namespace envsem
