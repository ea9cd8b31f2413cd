// SPDX-License-Identifier: Apache-2.0

#include "envsem/featsel.hpp"

#include <map>
#include <stdexcept>

namespace envsem {

double CachedEvaluator::operator()(FeatureSet s) {
    ++lookups_;
    const auto it = cache_.find(s);
    if (it != cache_.end()) {
        if (verify_) {
            const double again = fn_(s);
            if (again != it->second)
                throw std::logic_error("non-deterministic evaluator: " + s.to_string() + " scored " +
                                       std::to_string(it->second) + " then " + std::to_string(again));
        }
        return it->second;
    }
    ++calls_;
    const double v = fn_(s);
    cache_.emplace(s, v);
    return v;
}

StepOutcome inclusion_step(FsState& state, FeatureSet universal, CachedEvaluator& eval) {
    const FeatureSet remaining = universal - state.current;
    if (remaining.empty()) return StepOutcome::Terminal;
    int best_id = -1;
    double best = 0.0;
    for (int id : remaining.ids()) {
        const FeatureSet cand = state.current.with(id);
        const double v = eval(cand);
        state.trace.push_back({state.iteration, "inclusion", cand, v, false});
        if (best_id < 0 || v > best) {
            best_id = id;
            best = v;
        }
    }
    state.history.insert(state.current);
    state.current = state.current.with(best_id);
    for (auto it = state.trace.rbegin(); it != state.trace.rend(); ++it)
        if (it->candidate == state.current) {
            it->chosen = true;
            break;
        }
    ++state.iteration;
    return StepOutcome::Applied;
}

bool exclusion_step(FsState& state, CachedEvaluator& eval) {
    const FeatureSet removable = state.current - state.pinned;
    if (state.current.size() < 2 || removable.empty()) return false;
    const double here = eval(state.current);
    int best_id = -1;
    double best = 0.0;
    const std::size_t first = state.trace.size();
    for (int id : removable.ids()) {
        const FeatureSet cand = state.current.without(id);
        const double v = eval(cand);
        state.trace.push_back({state.iteration, "exclusion", cand, v, false});
        if (best_id < 0 || v > best) {
            best_id = id;
            best = v;
        }
    }
    if (!(best > here)) return false;
    state.current = state.current.without(best_id);
    for (std::size_t i = first; i < state.trace.size(); ++i)
        if (state.trace[i].candidate == state.current) state.trace[i].chosen = true;
    ++state.iteration;
    return true;
}

FsResult sffs(FeatureSet universal, CachedEvaluator& eval, FeatureSet pinned, std::optional<int> v_max) {
    if (!pinned.subset_of(universal)) throw ConfigError("pinned features must belong to the universe");
    if (v_max && *v_max < pinned.size()) throw ConfigError("v_max is smaller than the pinned set");
    const std::size_t calls_before = eval.calls();
    FsState state;
    state.current = pinned;
    state.pinned = pinned;
    state.v_max = v_max;
    // Each pass adds a set to the history, and the number of sets is finite.
    while (true) {
        if (state.history.count(state.current)) break;
        if (v_max && state.current.size() >= *v_max) break;
        if (inclusion_step(state, universal, eval) == StepOutcome::Terminal) break;
        while (exclusion_step(state, eval)) {
        }
    }
    FsResult r;
    r.selected = state.current;
    r.accuracy = eval(state.current);
    r.iterations = state.iteration;
    r.evaluator_calls = eval.calls() - calls_before;
    std::map<int, std::pair<FeatureSet, double>> best;
    for (const auto& e : state.trace) {
        const int n = e.candidate.size();
        const auto it = best.find(n);
        if (it == best.end() || e.accuracy > it->second.second ||
            (e.accuracy == it->second.second && lexicographic_less(e.candidate, it->second.first)))
            best[n] = {e.candidate, e.accuracy};
    }
    for (const auto& [n, v] : best) r.best_by_size.push_back(v);
    r.trace = std::move(state.trace);
    return r;
}

FeatureSet brute_force_best(FeatureSet universal, const EvalFn& eval, FeatureSet pinned,
                            std::optional<int> v_max) {
    if (universal.size() > 20) throw ConfigError("brute force limited to 20 features");
    if (!pinned.subset_of(universal)) throw ConfigError("pinned features must belong to the universe");
    const auto ids = universal.ids();
    const std::uint64_t subsets = std::uint64_t{1} << ids.size();
    std::optional<FeatureSet> best;
    double best_v = 0.0;
    for (std::uint64_t mask = 0; mask < subsets; ++mask) {
        FeatureSet s;
        for (std::size_t i = 0; i < ids.size(); ++i)
            if ((mask >> i) & 1u) s = s.with(ids[i]);
        if (!pinned.subset_of(s)) continue;
        if (v_max && s.size() > *v_max) continue;
        const double v = eval(s);
        if (!best || v > best_v || (v == best_v && lexicographic_less(s, *best))) {
            best = s;
            best_v = v;
        }
    }
    if (!best) throw ConfigError("no subset satisfies the pinned set and v_max");
    return *best;
}

FeatureSet greedy_forward(FeatureSet universal, CachedEvaluator& eval, FeatureSet pinned,
                          std::optional<int> v_max) {
    FeatureSet cur = pinned;
    double here = eval(cur);
    while (!(v_max && cur.size() >= *v_max)) {
        const FeatureSet remaining = universal - cur;
        if (remaining.empty()) break;
        int best_id = -1;
        double best = 0.0;
        for (int id : remaining.ids()) {
            const double v = eval(cur.with(id));
            if (best_id < 0 || v > best) {
                best_id = id;
                best = v;
            }
        }
        if (!(best > here)) break;
        cur = cur.with(best_id);
        here = best;
    }
    return cur;
}

bool locally_optimal(FeatureSet s, FeatureSet universal, const EvalFn& eval, FeatureSet pinned,
                     std::optional<int> v_max) {
    const double here = eval(s);
    if (!(v_max && s.size() >= *v_max))
        for (int id : (universal - s).ids())
            if (eval(s.with(id)) > here) return false;
    for (int id : (s - pinned).ids())
        if (eval(s.without(id)) > here) return false;
    return true;
}

Json to_json(const TraceEntry& e) {
    return {{"iteration", e.iteration},
            {"step", e.step},
            {"candidate", e.candidate.names()},
            {"accuracy", e.accuracy},
            {"chosen", e.chosen}};
}

void write_trace(std::ostream& out, const std::vector<TraceEntry>& trace) {
    for (const auto& e : trace) out << to_json(e).dump() << '\n';
}

} // namespace envsem
