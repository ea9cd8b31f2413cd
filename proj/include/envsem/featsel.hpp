// SPDX-License-Identifier: Apache-2.0
//
// Sequential floating forward selection over feature sets, driven by any
// deterministic evaluator, plus exhaustive and greedy baselines.

#pragma once

#include "envsem/config.hpp"
#include "envsem/features.hpp"

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace envsem {

using EvalFn = std::function<double(FeatureSet)>;

/// Memoising wrapper. With `verify` set, cache hits are recomputed and a
/// differing value raises std::logic_error (non-deterministic evaluator).
class CachedEvaluator {
  public:
    explicit CachedEvaluator(EvalFn fn, bool verify = false) : fn_(std::move(fn)), verify_(verify) {}

    double operator()(FeatureSet s);
    /// Calls that reached the wrapped function (cache misses).
    std::size_t calls() const { return calls_; }
    std::size_t lookups() const { return lookups_; }
    bool cached(FeatureSet s) const { return cache_.count(s) != 0; }

  private:
    EvalFn fn_;
    bool verify_;
    std::unordered_map<FeatureSet, double, FeatureSetHash> cache_;
    std::size_t calls_ = 0, lookups_ = 0;
};

struct TraceEntry {
    int iteration = 0;
    std::string step; ///< "inclusion" or "exclusion"
    FeatureSet candidate;
    double accuracy = 0.0;
    bool chosen = false;
};

struct FsState {
    FeatureSet current;
    std::unordered_set<FeatureSet, FeatureSetHash> history;
    int iteration = 0;
    FeatureSet pinned;
    std::optional<int> v_max;
    std::vector<TraceEntry> trace;
};

enum class StepOutcome { Applied, Terminal };

/// Adds the feature whose inclusion scores best (ties to the smallest id) and
/// records the previous set in the history. Terminal when nothing is left
/// to add.
StepOutcome inclusion_step(FsState& state, FeatureSet universal, CachedEvaluator& eval);

/// Removes the non-pinned feature whose removal scores best, only when that
/// strictly beats the current set. Requires |current| >= 2 and one removable
/// feature; returns false when nothing was removed.
bool exclusion_step(FsState& state, CachedEvaluator& eval);

struct FsResult {
    FeatureSet selected;
    double accuracy = 0.0;
    int iterations = 0;
    std::size_t evaluator_calls = 0;
    std::vector<TraceEntry> trace;
    /// Best set of each size among every set the search evaluated.
    std::vector<std::pair<FeatureSet, double>> best_by_size;
};

/// Starts from the pinned set, alternates inclusion and repeated exclusion,
/// and stops when the set about to be extended was already visited or, with
/// v_max, has reached v_max features.
FsResult sffs(FeatureSet universal, CachedEvaluator& eval, FeatureSet pinned,
              std::optional<int> v_max = std::nullopt);

/// Exact maximiser over all pinned-containing subsets of at most v_max
/// features; ties to the lexicographically smallest set. |universal| <= 20.
FeatureSet brute_force_best(FeatureSet universal, const EvalFn& eval, FeatureSet pinned = {},
                            std::optional<int> v_max = std::nullopt);

/// Plain forward selection from the pinned set: add the best feature while
/// that strictly improves the score.
FeatureSet greedy_forward(FeatureSet universal, CachedEvaluator& eval, FeatureSet pinned = {},
                          std::optional<int> v_max = std::nullopt);

/// True when no single allowed addition or removal strictly improves `s`.
bool locally_optimal(FeatureSet s, FeatureSet universal, const EvalFn& eval, FeatureSet pinned,
                     std::optional<int> v_max = std::nullopt);

Json to_json(const TraceEntry& e);
void write_trace(std::ostream& out, const std::vector<TraceEntry>& trace);

} // namespace envsem
