#pragma once

// Average-reward reinforcement learning for partially observable problems
// (Jaakkola, Singh and Jordan). Per observation o and pair (o, a) the learner
// keeps a value, an eligibility trace beta and a visit count K:
//
//   visited:      K += 1
//                 beta  = (1 - 1/K) * gamma_t * beta + 1/K
//                 value = (1 - 1/K) * value + beta * (r_t - Rbar)
//   not visited:  beta  = gamma_t * beta
//                 value = value + beta * (r_t - Rbar)
//
// and after each step moves the stochastic policy a fraction epsilon toward
// the greedy policy argmax_a Q(o, a). Storage is sparse; only entries with a
// non-negligible trace are touched per step.

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ecodrive/detail/random.hpp"
#include "ecodrive/traffic.hpp"

namespace ecodrive {

using ActionRow = std::array<double, kNumActions>;

inline constexpr ActionRow uniform_row()
{
    ActionRow r{};
    r.fill(1.0 / kNumActions);
    return r;
}

inline ActionRow one_hot(Action a)
{
    ActionRow r{};
    r[static_cast<std::size_t>(index_of(a))] = 1.0;
    return r;
}

/// Lane encoded in an observation index (feature position kLane).
inline int lane_of(std::uint32_t observation_index)
{
    std::uint32_t place = 1;
    for (int i = 0; i < kLane; ++i) place *= 3;
    return static_cast<int>((observation_index / place) % 3);
}

struct LearnerConfig {
    double epsilon = 0.01;        // policy mixing rate
    double trace_cutoff = 1e-8;   // traces below this leave the active set
    int fallback_n = 40;          // states visited fewer times fall back to the level-0 rule
    bool baseline_includes_current = false;  // use the running mean after adding r_t
    // gamma_t = t / (t + 1) with t the 1-based step count of the run, unless constant_gamma is set.
    std::optional<double> constant_gamma;

    double gamma(std::uint64_t t) const
    {
        if (constant_gamma) return *constant_gamma;
        const double td = static_cast<double>(t);
        return td / (td + 1.0);
    }

    void validate() const
    {
        if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("learner.epsilon must be in (0, 1)");
        if (!(trace_cutoff > 0.0)) throw std::invalid_argument("learner.trace_cutoff must be positive");
        if (fallback_n < 0) throw std::invalid_argument("learner.fallback_n must be non-negative");
        if (constant_gamma && !(*constant_gamma >= 0.0 && *constant_gamma <= 1.0)) {
            throw std::invalid_argument("learner.constant_gamma must be in [0, 1]");
        }
    }
};

struct AverageReward {
    double mean = 0.0;
    std::uint64_t t = 0;

    void update(double r)
    {
        mean += (r - mean) / static_cast<double>(t + 1);
        ++t;
    }
};

inline AverageReward update_average_reward(AverageReward avg, double r)
{
    avg.update(r);
    return avg;
}

/// Sparse probability rows; absent rows are uniform.
class PolicyTable {
public:
    explicit PolicyTable(ObservationKind kind = ObservationKind::AV) : kind_(kind) {}

    ObservationKind kind() const { return kind_; }

    const ActionRow& row(std::uint32_t o) const
    {
        static constexpr ActionRow uniform = uniform_row();
        const auto it = rows_.find(o);
        return it == rows_.end() ? uniform : it->second;
    }

    ActionRow& mutable_row(std::uint32_t o)
    {
        check_index(o);
        return rows_.try_emplace(o, uniform_row()).first->second;
    }

    void set_row(std::uint32_t o, const ActionRow& r) { mutable_row(o) = r; }

    bool has_row(std::uint32_t o) const { return rows_.contains(o); }
    std::size_t size() const { return rows_.size(); }

    std::vector<std::uint32_t> sorted_states() const
    {
        std::vector<std::uint32_t> keys;
        keys.reserve(rows_.size());
        for (const auto& kv : rows_) keys.push_back(kv.first);
        std::sort(keys.begin(), keys.end());
        return keys;
    }

private:
    void check_index(std::uint32_t o) const
    {
        if (o >= num_states(kind_)) throw std::out_of_range("policy row index out of range");
    }

    ObservationKind kind_;
    std::unordered_map<std::uint32_t, ActionRow> rows_;
};

struct TableEntry {
    double value = 0.0;
    double trace = 0.0;
    std::uint64_t visits = 0;
    bool active = false;
};

/// V, Q, traces and visit counters. Pair keys are o * kNumActions + a.
class ValueTables {
public:
    ValueTables() = default;
    // The active lists point into the maps, so copies would alias.
    ValueTables(const ValueTables&) = delete;
    ValueTables& operator=(const ValueTables&) = delete;
    ValueTables(ValueTables&&) noexcept = default;
    ValueTables& operator=(ValueTables&&) noexcept = default;

    static std::uint64_t pair_key(std::uint32_t o, Action a)
    {
        return static_cast<std::uint64_t>(o) * kNumActions + static_cast<std::uint64_t>(index_of(a));
    }

    void update(std::uint32_t o, Action a, double reward, double baseline, double gamma, double cutoff)
    {
        const double delta = reward - baseline;
        update_one(states_, active_states_, o, delta, gamma, cutoff);
        update_one(pairs_, active_pairs_, pair_key(o, a), delta, gamma, cutoff);
    }

    /// Zeroes every trace; counters and values persist.
    void reset_traces()
    {
        clear_active(active_states_);
        clear_active(active_pairs_);
    }

    const TableEntry* state(std::uint32_t o) const { return find(states_, o); }
    const TableEntry* pair(std::uint32_t o, Action a) const { return find(pairs_, pair_key(o, a)); }

    double value(std::uint32_t o) const
    {
        const auto* e = state(o);
        return e ? e->value : 0.0;
    }
    double q(std::uint32_t o, Action a) const
    {
        const auto* e = pair(o, a);
        return e ? e->value : 0.0;
    }
    std::uint64_t visits(std::uint32_t o) const
    {
        const auto* e = state(o);
        return e ? e->visits : 0;
    }

    std::size_t active_state_count() const { return active_states_.size(); }
    std::size_t active_pair_count() const { return active_pairs_.size(); }

    const std::unordered_map<std::uint32_t, TableEntry>& states() const { return states_; }
    const std::unordered_map<std::uint64_t, TableEntry>& pairs() const { return pairs_; }

    /// Restores an entry with zero trace (checkpoint loading).
    void restore_state(std::uint32_t o, double value, std::uint64_t visits) { states_[o] = {value, 0.0, visits, false}; }
    void restore_pair(std::uint64_t key, double value, std::uint64_t visits) { pairs_[key] = {value, 0.0, visits, false}; }

private:
    template <class Key>
    using Active = std::vector<std::pair<Key, TableEntry*>>;

    template <class Key>
    static void update_one(std::unordered_map<Key, TableEntry>& table, Active<Key>& active, Key key, double delta,
                           double gamma, double cutoff)
    {
        TableEntry& hit = table[key];  // node-based map: pointers stay valid
        for (auto& [k, e] : active) {
            if (e == &hit) continue;
            e->trace *= gamma;
            e->value += e->trace * delta;
        }
        ++hit.visits;
        const double inv = 1.0 / static_cast<double>(hit.visits);
        hit.trace = (1.0 - inv) * gamma * hit.trace + inv;
        hit.value = (1.0 - inv) * hit.value + hit.trace * delta;
        if (!hit.active) {
            hit.active = true;
            active.emplace_back(key, &hit);
        }
        const auto dead = std::remove_if(active.begin(), active.end(), [cutoff](const auto& kv) {
            if (kv.second->trace >= cutoff) return false;
            kv.second->trace = 0.0;
            kv.second->active = false;
            return true;
        });
        active.erase(dead, active.end());
    }

    template <class Key>
    static void clear_active(Active<Key>& active)
    {
        for (auto& [k, e] : active) {
            e->trace = 0.0;
            e->active = false;
        }
        active.clear();
    }

    template <class Key>
    static const TableEntry* find(const std::unordered_map<Key, TableEntry>& table, Key key)
    {
        const auto it = table.find(key);
        return it == table.end() ? nullptr : &it->second;
    }

    std::unordered_map<std::uint32_t, TableEntry> states_;
    std::unordered_map<std::uint64_t, TableEntry> pairs_;
    Active<std::uint32_t> active_states_;
    Active<std::uint64_t> active_pairs_;
};

/// Free-function form of ValueTables::update.
inline void update_values(ValueTables& tables, std::uint32_t o, Action a, double reward, double baseline,
                          double gamma, double cutoff)
{
    tables.update(o, a, reward, baseline, gamma, cutoff);
}

/// Maximizer of sum_a pi(o,a) (Q(o,a) - V(o)) over the simplex: the vertex at
/// argmax_a Q(o,a) among actions feasible in o's lane, lowest index on ties.
/// Empty when no Q entry exists at o.
inline std::optional<Action> greedy_policy(const ValueTables& tables, std::uint32_t o)
{
    const auto mask = feasible_actions(lane_of(o));
    bool any = false;
    int best = -1;
    double best_q = 0.0;
    for (int a = 0; a < kNumActions; ++a) {
        const auto* e = tables.pair(o, action_from_index(a));
        any = any || e != nullptr;
        if (!mask[static_cast<std::size_t>(a)]) continue;
        const double q = e ? e->value : 0.0;
        if (best < 0 || q > best_q) {
            best = a;
            best_q = q;
        }
    }
    if (!any) return std::nullopt;
    return action_from_index(best);
}

/// pi <- (1 - epsilon) pi + epsilon * greedy, for each listed observation.
inline void improve_policy(PolicyTable& policy, const ValueTables& tables, const std::vector<std::uint32_t>& states,
                           double epsilon)
{
    for (std::uint32_t o : states) {
        const auto greedy = greedy_policy(tables, o);
        if (!greedy) continue;
        auto& row = policy.mutable_row(o);
        for (auto& p : row) p *= 1.0 - epsilon;
        row[static_cast<std::size_t>(index_of(*greedy))] += epsilon;
    }
}

/// Samples from `row` restricted to the feasible actions; uniform over them
/// if the row puts no mass there.
inline Action sample_action(const ActionRow& row, const ActionMask& mask, Rng& rng)
{
    double total = 0.0;
    int n_feasible = 0;
    int last = -1;
    for (int a = 0; a < kNumActions; ++a) {
        if (!mask[static_cast<std::size_t>(a)]) continue;
        total += row[static_cast<std::size_t>(a)];
        ++n_feasible;
        last = a;
    }
    if (n_feasible == 0) throw std::invalid_argument("sample_action: no feasible action");
    const double u = uniform01(rng);
    if (!(total > 0.0)) {
        int pick = static_cast<int>(u * n_feasible);
        for (int a = 0; a < kNumActions; ++a) {
            if (mask[static_cast<std::size_t>(a)] && pick-- == 0) return action_from_index(a);
        }
        return action_from_index(last);
    }
    const double target = u * total;
    double acc = 0.0;
    for (int a = 0; a < kNumActions; ++a) {
        if (!mask[static_cast<std::size_t>(a)]) continue;
        acc += row[static_cast<std::size_t>(a)];
        if (target < acc) return action_from_index(a);
    }
    return action_from_index(last);
}

inline Action sample_action(const PolicyTable& policy, std::uint32_t o, const ActionMask& mask, Rng& rng)
{
    return sample_action(policy.row(o), mask, rng);
}

/// Frozen policy for deployment: learned rows where the observation was
/// visited at least n times, the level-0 rule everywhere else.
class DeployablePolicy {
public:
    DeployablePolicy(PolicyTable learned, std::unordered_map<std::uint32_t, std::uint64_t> visits, int fallback_n)
        : learned_(std::move(learned)), visits_(std::move(visits)), fallback_n_(fallback_n)
    {
    }

    /// Pure level-0 behaviour of the given kind.
    static DeployablePolicy level0(ObservationKind kind) { return DeployablePolicy(PolicyTable(kind), {}, 1); }

    ObservationKind kind() const { return learned_.kind(); }
    int fallback_n() const { return fallback_n_; }
    const PolicyTable& learned() const { return learned_; }

    std::uint64_t visits(std::uint32_t o) const
    {
        const auto it = visits_.find(o);
        return it == visits_.end() ? 0 : it->second;
    }

    bool uses_learned(std::uint32_t o) const { return visits(o) >= static_cast<std::uint64_t>(fallback_n_); }

    ActionRow row(std::uint32_t o) const
    {
        if (uses_learned(o)) return learned_.row(o);
        return one_hot(level0_policy(decode_observation(o, kind())));
    }

    Action choose(std::uint32_t o, Rng& rng) const
    {
        if (!uses_learned(o)) return level0_policy(decode_observation(o, kind()));
        return sample_action(learned_.row(o), feasible_actions(lane_of(o)), rng);
    }

    /// Visited-state count (explicit rows).
    std::size_t visited_states() const { return learned_.size(); }

    const std::unordered_map<std::uint32_t, std::uint64_t>& visit_counts() const { return visits_; }

private:
    PolicyTable learned_;
    std::unordered_map<std::uint32_t, std::uint64_t> visits_;
    int fallback_n_;
};

inline DeployablePolicy apply_level0_fallback(const PolicyTable& policy, const ValueTables& tables, int n)
{
    std::unordered_map<std::uint32_t, std::uint64_t> visits;
    for (const auto& [o, e] : tables.states()) {
        if (e.visits > 0) visits.emplace(o, e.visits);
    }
    return DeployablePolicy(policy, std::move(visits), n);
}

/// Learner state for one training run: policy, value tables and the running
/// average reward.
class JaakkolaLearner {
public:
    JaakkolaLearner(ObservationKind kind, LearnerConfig cfg) : cfg_(cfg), policy_(kind) { cfg_.validate(); }

    /// Traces are per trajectory; counters and the average reward carry over.
    void begin_episode()
    {
        tables_.reset_traces();
        touched_.clear();
        touched_flag_.clear();
    }

    Action act(std::uint32_t o, Rng& rng) const { return sample_action(policy_, o, feasible_actions(lane_of(o)), rng); }

    /// Value update for (o, a, r) followed by policy improvement on the
    /// observations visited this episode.
    void learn(std::uint32_t o, Action a, double r)
    {
        const std::uint64_t t = avg_.t + 1;
        const double baseline = cfg_.baseline_includes_current ? avg_.mean + (r - avg_.mean) / static_cast<double>(t)
                                                                : avg_.mean;
        tables_.update(o, a, r, baseline, cfg_.gamma(t), cfg_.trace_cutoff);
        avg_.update(r);
        if (touched_flag_.insert(o).second) touched_.push_back(o);
        improve_policy(policy_, tables_, touched_, cfg_.epsilon);
    }

    DeployablePolicy deployable() const { return apply_level0_fallback(policy_, tables_, cfg_.fallback_n); }

    const LearnerConfig& config() const { return cfg_; }
    const PolicyTable& policy() const { return policy_; }
    PolicyTable& policy() { return policy_; }
    const ValueTables& tables() const { return tables_; }
    ValueTables& tables() { return tables_; }
    const AverageReward& average() const { return avg_; }
    AverageReward& average() { return avg_; }

private:
    LearnerConfig cfg_;
    PolicyTable policy_;
    ValueTables tables_;
    AverageReward avg_;
    std::vector<std::uint32_t> touched_;
    std::unordered_set<std::uint32_t> touched_flag_;
};

}  // namespace ecodrive
