// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion.

#include "envsem/pipeline.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>

using namespace envsem;
namespace fs = std::filesystem;
using std::numbers::pi;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

class Timer {
  public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int digits = 4) {
    std::ostringstream s;
    s << std::setprecision(digits) << v;
    return s.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

ChannelMatrix random_channel(Rng& r, int k, int n) {
    ChannelMatrix h(k, n);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < n; ++j) h(i, j) = {r.normal(), r.normal()};
    return h;
}

// Rate of every codeword from scalar loops.
std::vector<double> oracle_rates(const ChannelMatrix& h, const Codebook& cb, double snr) {
    std::vector<double> out;
    for (int m = 0; m < cb.size(); ++m) {
        double sum = 0;
        for (int k = 0; k < h.rows(); ++k) {
            double re = 0, im = 0;
            for (int n = 0; n < h.cols(); ++n) {
                const cdouble a = h(k, n), w = cb.vectors(m, n);
                re += a.real() * w.real() - a.imag() * w.imag();
                im += a.real() * w.imag() + a.imag() * w.real();
            }
            sum += std::log2(1.0 + snr * (re * re + im * im));
        }
        out.push_back(sum / static_cast<double>(h.rows()));
    }
    return out;
}

Outcome c1_beam_oracle() {
    Timer timer;
    Rng r(101);
    const auto cb = dft_codebook(8, 8);
    int mismatched = 0;
    double worst = 0;
    for (int i = 0; i < 500; ++i) {
        const auto h = random_channel(r, 4, 8);
        const double snr = r.uniform(0.1, 100);
        const auto ev = optimal_beam(h, cb, snr);
        const auto ref = oracle_rates(h, cb, snr);
        int best = 0;
        for (int m = 1; m < 8; ++m)
            if (ref[static_cast<std::size_t>(m)] > ref[static_cast<std::size_t>(best)]) best = m;
        if (best != ev.optimal_index) ++mismatched;
        for (int m = 0; m < 8; ++m) {
            const double a = ev.rates[static_cast<std::size_t>(m)], b = ref[static_cast<std::size_t>(m)];
            worst = std::max(worst, std::abs(a - b) / std::max(std::abs(b), 1e-300));
        }
    }
    const double t = timer.seconds();
    return {mismatched == 0 && worst <= 1e-12 && t < 5.0,
            "argmax mismatches " + std::to_string(mismatched) + "/500, max rate rel err " + fmt(worst) +
                ", " + fmt(t, 3) + " s"};
}

Outcome c2_alignment() {
    Timer timer;
    RayTraceConfig c;
    c.antennas = 16;
    c.subcarriers = 1;
    const auto cb = dft_codebook(16, 16);
    Rng r(102);
    int wrong = 0;
    double worst = 0;
    for (int m = 0; m < 16; ++m) {
        double u = 2.0 * m / 16.0;
        if (u >= 1.0) u -= 2.0;
        PathComponent p;
        p.amplitude = r.uniform(1e-4, 1.0);
        p.phase = r.uniform(0, 2 * pi);
        p.delay = r.uniform(1e-8, 1e-7);
        p.elevation = pi / 2;
        p.azimuth = std::acos(u);
        const auto h = assemble_channel(std::span(&p, 1), c);
        if (optimal_beam(h, cb, c.snr()).optimal_index != m) ++wrong;
        const double gain = std::abs((h.row(0).transpose().cwiseProduct(cb.codeword(m))).sum());
        worst = std::max(worst, std::abs(gain - 4.0 * p.amplitude) / (4.0 * p.amplitude));
    }
    const double t = timer.seconds();
    return {wrong == 0 && worst <= 1e-9 && t < 1.0,
            "wrong beams " + std::to_string(wrong) + "/16, max |h^T w| rel err " + fmt(worst) + ", " +
                fmt(t, 3) + " s"};
}

PipelineConfig load(const fs::path& dir, const char* name) { return load_pipeline_config(dir / name); }

Outcome c3_metric_laws(const fs::path& configs) {
    std::string detail;
    bool ok = true;
    for (std::uint64_t seed : {1, 2, 3}) {
        PipelineConfig c = load(configs, "smoke.json");
        c.scene.frame_count = 2000;
        c.scene.seed = seed;
        c.train.seed = seed;
        const Dataset d = generate_dataset(c);
        const Split split = split_dataset(d, c.train.train_fraction, c.train.val_fraction, mix_seed(seed, "split"));
        const FeatureSet f{kLocationFeature, concept_feature(kVehicle)};
        auto r = train(d, split, f, {Task::Beam, 1}, c.train);
        const auto scores = predict(r.model, d, split.test, f);
        const auto cb = dft_codebook(d.ray.antennas, d.codebook_size);
        std::vector<int> labels;
        std::vector<std::vector<double>> rates;
        for (auto i : split.test) {
            labels.push_back(d.beam_labels[i]);
            rates.push_back(optimal_beam(d.channel(i), cb, d.ray.snr()).rates);
        }
        double prev_a = -1, prev_t = -1, last_a = 0, last_t = 0;
        for (int g = 1; g <= d.codebook_size; ++g) {
            std::vector<std::vector<int>> sets;
            for (const auto& s : scores) sets.push_back(topg_indices(std::span<const float>(s), g));
            last_a = topg_accuracy(labels, sets, g);
            last_t = trr_from_rates(rates, sets, g).value;
            if (last_a < prev_a || last_t < prev_t) ok = false;
            prev_a = last_a;
            prev_t = last_t;
        }
        if (last_a != 1.0 || last_t != 1.0) ok = false;
        detail += "seed " + std::to_string(seed) + ": n=" + std::to_string(labels.size()) + " A_M=" + fmt(last_a) +
                  " TRR_M=" + fmt(last_t) + "; ";
    }
    return {ok, detail + (ok ? "monotone in G" : "law violated")};
}

Outcome c4_assembly() {
    Rng r(104);
    RayTraceConfig c;
    c.antennas = 16;
    c.subcarriers = 16;
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<PathComponent> ps;
        const int np = 1 + static_cast<int>(r.below(20));
        for (int i = 0; i < np; ++i) {
            PathComponent p;
            p.amplitude = r.uniform(1e-7, 1e-3);
            p.phase = r.uniform(0, 2 * pi);
            p.delay = r.uniform(1e-8, 4e-7);
            p.azimuth = r.uniform(-pi, pi);
            p.elevation = r.uniform(-pi / 2, pi / 2);
            ps.push_back(p);
        }
        const auto h = assemble_channel(ps, c);
        double scale = 0;
        for (const auto& p : ps) scale += p.amplitude;
        for (int k = 0; k < c.subcarriers; ++k) {
            const double f = c.carrier_hz + (k - c.subcarriers / 2) * c.subcarrier_spacing_hz;
            for (int n = 0; n < c.antennas; ++n) {
                cdouble sum = 0;
                for (const auto& p : ps) {
                    const cdouble gain = p.amplitude * std::exp(cdouble(0, -2.0 * pi * f * p.delay + p.phase));
                    const double u = std::sin(p.elevation) * std::cos(p.azimuth);
                    sum += gain * std::exp(cdouble(0, 2.0 * pi * c.spacing() * f / kSpeedOfLight * n * u));
                }
                worst = std::max(worst, std::abs(h(k, n) - sum) / scale);
            }
        }
    }
    PathComponent a;
    a.amplitude = 1.0;
    a.azimuth = 0.4;
    a.elevation = 1.1;
    PathComponent b = a;
    b.phase = pi;
    const std::vector<PathComponent> pair{a, b};
    const double cancel = assemble_channel(pair, c).norm();
    return {worst <= 1e-12 && cancel < 1e-12,
            "max rel err " + fmt(worst) + " over 100 path sets, destructive pair norm " + fmt(cancel)};
}

Outcome c5_gradients(const fs::path& configs) {
    Timer timer;
    PipelineConfig c = load(configs, "planted.json");
    c.scene.frame_count = 400;
    const Dataset d = generate_dataset(c);
    const FeatureSet f{kLocationFeature, concept_feature(kVehicle), concept_feature(kSidewalk)};
    const int h = c.train.input_height, w = c.train.input_width;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < std::min<std::size_t>(8, d.size()); ++i) idx.push_back(i * (d.size() / 8));
    nn::Tensor<float> loc, masks;
    build_batch(d, idx, f, h, w, loc, masks);
    std::vector<int> beams, blocks;
    for (auto i : idx) {
        beams.push_back(d.beam_labels[i]);
        blocks.push_back(d.blockage_at(i, 1));
    }
    const int ch = input_channels(f, d.cameras);
    double worst = 0, batch_worst = 0;
    int min_checked = 1 << 30;
    std::string detail;
    for (bool batch : {false, true}) {
        Predictor beam(make_arch(Task::Beam, ch, d.codebook_size, h, w), 5);
        const auto rb = gradient_check(beam, loc, masks, beams, 150, 51, batch);
        Predictor block(make_arch(Task::Blockage, ch, d.codebook_size, h, w), 6);
        const auto rk = gradient_check(block, loc, masks, blocks, 150, 52, batch);
        if (batch) {
            batch_worst = std::max({batch_worst, rb.max_rel_error, rk.max_rel_error});
        } else {
            worst = std::max({worst, rb.max_rel_error, rk.max_rel_error});
            min_checked = std::min({min_checked, rb.checked, rk.checked});
        }
        detail += std::string(batch ? "batch-stat (reported)" : "eval-mode") + " beam " + fmt(rb.max_rel_error) +
                  " blockage " + fmt(rk.max_rel_error) + "; ";
    }
    const double t = timer.seconds();
    return {worst < 1e-4 && min_checked >= 100 && t < 60.0,
            detail + "min checked " + std::to_string(min_checked) + ", " + fmt(t, 3) + " s"};
}

Outcome c6_sffs() {
    Timer timer;
    const auto u = FeatureSet::universal(6);
    int local = 0, dominant = 0, matches = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng r(mix_seed(106, seed));
        std::vector<double> table(64);
        for (auto& v : table) v = r.uniform();
        const EvalFn f = [&table](FeatureSet s) { return table[s.bits()]; };
        CachedEvaluator e(f, true);
        const auto res = sffs(u, e, {});
        if (locally_optimal(res.selected, u, f, {})) ++local;
        CachedEvaluator g(f);
        if (f(res.selected) >= f(greedy_forward(u, g, {}))) ++dominant;
        if (res.selected == brute_force_best(u, f)) ++matches;
    }
    const double t = timer.seconds();
    return {local == 20 && dominant == 20 && t < 10.0,
            "locally optimal " + std::to_string(local) + "/20, >= greedy " + std::to_string(dominant) +
                "/20, brute-force match " + std::to_string(matches) + "/20 (reported), " + fmt(t, 3) + " s"};
}

SelectOptions select_options(TaskSpec task) {
    SelectOptions o;
    o.task = task;
    return o;
}

struct PlantedRun {
    fs::path data, run;
    double generate_s = 0;
};

PlantedRun planted_dataset(const fs::path& configs, const fs::path& work) {
    PlantedRun p{work / "planted" / "data", work / "planted" / "run"};
    fs::remove_all(work / "planted");
    Timer t;
    cmd_generate(load(configs, "planted.json"), p.data);
    p.generate_s = t.seconds();
    return p;
}

Outcome c7_planted(const fs::path& configs, const PlantedRun& p) {
    Timer timer;
    const PipelineConfig c = load(configs, "planted.json");
    const FeatureSet f{kLocationFeature, concept_feature(kVehicle)};
    cmd_train(p.data, c, {{Task::Beam, 1}, std::nullopt, std::nullopt, f}, p.run);
    const Json beam = cmd_eval(p.data, c, {{Task::Beam, 1}, {1, 5}}, p.run);
    cmd_train(p.data, c, {{Task::Blockage, 1}, std::nullopt, std::nullopt, f}, p.run);
    const Json block = cmd_eval(p.data, c, {{Task::Blockage, 1}, {}}, p.run);
    const double top1 = beam["topg_accuracy"]["1"].get<double>();
    const double top5 = beam["topg_accuracy"]["5"].get<double>();
    const double acc = block["accuracy"].get<double>();
    const double base = block["majority_baseline"].get<double>();
    const double t = timer.seconds() + p.generate_s;
    const auto samples = read_dataset(p.data).size();
    return {top1 >= 3.0 / 16.0 && top5 > top1 && acc >= base + 0.05 && t < 900.0,
            std::to_string(samples) + " samples; Top-1 " + fmt(top1) + " (need >= 0.1875), Top-5 " + fmt(top5) +
                "; blockage h1 " + fmt(acc) + " vs majority " + fmt(base) + "; " + fmt(t, 4) + " s"};
}

Outcome c8_horizon_trend(const fs::path& configs, const fs::path& work) {
    double h1 = 0, h36 = 0;
    std::string detail;
    const FeatureSet f{kLocationFeature, concept_feature(kVehicle)};
    for (std::uint64_t seed : {1, 2, 3}) {
        PipelineConfig c = load(configs, "default.json");
        c.scene.seed = seed;
        c.train.seed = seed;
        const auto dir = work / ("default_seed" + std::to_string(seed));
        fs::remove_all(dir);
        cmd_generate(c, dir / "data");
        double acc[2];
        int k = 0;
        for (int h : {1, 36}) {
            cmd_train(dir / "data", c, {{Task::Blockage, h}, std::nullopt, std::nullopt, f}, dir / "run");
            acc[k++] = cmd_eval(dir / "data", c, {{Task::Blockage, h}, {}}, dir / "run")["accuracy"].get<double>();
        }
        h1 += acc[0] / 3;
        h36 += acc[1] / 3;
        detail += "seed " + std::to_string(seed) + ": h1 " + fmt(acc[0]) + " h36 " + fmt(acc[1]) + "; ";
    }
    return {h1 >= h36, detail + "mean h1 " + fmt(h1) + " vs h36 " + fmt(h36)};
}

Outcome c9_selection(const fs::path& configs, const PlantedRun& p) {
    Timer timer;
    const PipelineConfig c = load(configs, "planted.json");
    const auto r = cmd_select(p.data, c, select_options({Task::Beam, 1}), p.run);
    const bool has = r.selected.contains(kLocationFeature) && r.selected.contains(concept_feature(kVehicle));
    bool clean = true;
    for (int bad : {kSky, kWater, kBridge}) clean = clean && !r.selected.contains(concept_feature(bad));
    return {has && clean, "selected " + r.selected.to_string() + " score " + fmt(r.accuracy) + " after " +
                              std::to_string(r.evaluator_calls) + " evaluations, " + fmt(timer.seconds(), 3) + " s"};
}

void full_pipeline(const PipelineConfig& c, const fs::path& dir) {
    cmd_generate(c, dir / "data");
    cmd_select(dir / "data", c, select_options({Task::Beam, 1}), dir / "run");
    for (int h : c.horizons) {
        cmd_select(dir / "data", c, select_options({Task::Blockage, h}), dir / "run");
        cmd_train(dir / "data", c, {{Task::Blockage, h}, std::nullopt, std::nullopt, std::nullopt}, dir / "run");
        cmd_eval(dir / "data", c, {{Task::Blockage, h}, {}}, dir / "run");
    }
    cmd_train(dir / "data", c, {{Task::Beam, 1}, std::nullopt, std::nullopt, std::nullopt}, dir / "run");
    cmd_eval(dir / "data", c, {{Task::Beam, 1}, {}}, dir / "run");
    cmd_report(dir / "run");
}

Outcome c10_determinism(const fs::path& configs, const fs::path& work, const PlantedRun& p) {
    const PipelineConfig c = load(configs, "smoke.json");
    const auto a = work / "repeat_a", b = work / "repeat_b";
    fs::remove_all(a);
    fs::remove_all(b);
    full_pipeline(c, a);
    full_pipeline(c, b);
    const bool same_report = slurp(a / "run" / "report.json") == slurp(b / "run" / "report.json");

    const Dataset d = read_dataset(p.data);
    const auto copy = work / "planted_copy";
    fs::remove_all(copy);
    write_dataset(d, copy);
    bool bitwise = read_dataset(copy) == d;
    for (const auto& e : fs::directory_iterator(p.data))
        bitwise = bitwise && slurp(e.path()) == slurp(copy / e.path().filename());

    SemanticMap m{0, 200, 400, std::vector<std::uint8_t>(200 * 400)};
    Rng r(110);
    for (auto& l : m.labels) l = static_cast<std::uint8_t>(r.below(kConceptCount));
    Rng noise(111);
    const auto noisy = corrupt_map(m, 0.1, noise);
    const double acc = pixel_accuracy(std::span(&noisy, 1), std::span(&m, 1));
    const double expect = 1.0 - 0.1 * 19.0 / 20.0;
    const double sigma = std::sqrt(expect * (1 - expect) / static_cast<double>(m.labels.size()));
    const bool corrupt_ok = std::abs(acc - expect) <= 3 * sigma;
    return {same_report && bitwise && corrupt_ok,
            std::string("report.json ") + (same_report ? "identical" : "differs") + ", container round trip " +
                (bitwise ? "bitwise" : "differs") + ", corrupt_map accuracy " + fmt(acc, 6) + " vs " +
                fmt(expect) + " +- " + fmt(3 * sigma, 3)};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::string work = "acceptance_work", configs = "configs";
    std::vector<int> only;
    app.add_option("--work", work, "Scratch directory");
    app.add_option("--configs", configs, "Directory holding default.json, planted.json and smoke.json");
    app.add_option("--only", only, "Run only these criteria");
    CLI11_PARSE(app, argc, argv);
    fs::create_directories(work);

    auto want = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
    int failed = 0;
    auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
        if (!want(id)) return;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::cout << (o.pass ? "PASS" : "FAIL") << " C" << id << " " << name << ": " << o.detail << std::endl;
    };

    report(1, "beam-oracle equivalence", c1_beam_oracle);
    report(2, "analytic alignment", c2_alignment);
    report(3, "metric laws", [&] { return c3_metric_laws(configs); });
    report(4, "channel-assembly oracle", c4_assembly);
    report(5, "gradient checks", [&] { return c5_gradients(configs); });
    report(6, "SFFS oracle", c6_sffs);
    std::optional<PlantedRun> planted;
    auto planted_run = [&]() -> const PlantedRun& {
        if (!planted) planted = planted_dataset(configs, work);
        return *planted;
    };
    report(7, "planted end-to-end", [&] { return c7_planted(configs, planted_run()); });
    report(8, "horizon trend", [&] { return c8_horizon_trend(configs, work); });
    report(9, "feature-selection sanity", [&] { return c9_selection(configs, planted_run()); });
    report(10, "determinism and round trip", [&] { return c10_determinism(configs, work, planted_run()); });
    return failed == 0 ? 0 : 1;
}
