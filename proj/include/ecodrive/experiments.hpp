#pragma once

// Training and evaluation drivers.
//
// Training: each episode spawns a ring with a random number of surrounding
// vehicles drawn from the level mixture, runs up to `episode_steps` 1 s steps
// and feeds every reward to the learner; an ego collision ends the episode
// after its penalty has been learned. After the last episode the level-0
// fallback is applied to undervisited states.
//
// Evaluation: frozen policies, one independent seed per (density, episode),
// so results do not depend on how episodes are spread over workers.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "ecodrive/config.hpp"
#include "ecodrive/detail/csv.hpp"
#include "ecodrive/detail/random.hpp"
#include "ecodrive/learner.hpp"
#include "ecodrive/policy_io.hpp"
#include "ecodrive/powertrain.hpp"
#include "ecodrive/reward.hpp"
#include "ecodrive/traffic.hpp"

namespace ecodrive {

enum class TargetKind { Level1, Level2, AV, Benchmark };

constexpr std::string_view to_string(TargetKind k)
{
    switch (k) {
    case TargetKind::Level1: return "level1";
    case TargetKind::Level2: return "level2";
    case TargetKind::AV: return "av";
    case TargetKind::Benchmark: return "benchmark";
    }
    return "?";
}

inline TargetKind target_kind_from_string(std::string_view s)
{
    for (auto k : {TargetKind::Level1, TargetKind::Level2, TargetKind::AV, TargetKind::Benchmark}) {
        if (to_string(k) == s) return k;
    }
    throw DataError("unknown training kind '" + std::string{s} + "'");
}

struct ExperimentConfig {
    Powertrain powertrain = default_powertrain();
    TrafficConfig traffic;
    RewardWeights reward;
    LearnerConfig learner;
    std::uint64_t seed = 1;
};

struct TrainingSpec {
    TargetKind target = TargetKind::AV;
    LevelMixture mixture{0.15, 0.55, 0.30};
    bool include_r2 = true;
    ObservationKind observation = ObservationKind::AV;
    int episodes = 50000;
    int episode_steps = 200;
    int n_c_min = 21;
    int n_c_max = 30;
    double soc_init_min = 15.0;
    double soc_init_max = 90.0;
    int fallback_n = 40;
    int checkpoint_every = 0;  // episodes between checkpoints, 0 = never

    /// Environment, reward and observation set-up of each policy type.
    static TrainingSpec defaults_for(TargetKind target)
    {
        TrainingSpec s;
        s.target = target;
        switch (target) {
        case TargetKind::Level1:
            s.mixture = {1.0, 0.0, 0.0};
            s.include_r2 = false;
            s.observation = ObservationKind::LevelK;
            s.fallback_n = 20;
            break;
        case TargetKind::Level2:
            s.mixture = {0.0, 1.0, 0.0};
            s.include_r2 = false;
            s.observation = ObservationKind::LevelK;
            s.fallback_n = 20;
            break;
        case TargetKind::AV: break;
        case TargetKind::Benchmark: s.include_r2 = false; break;
        }
        return s;
    }

    bool has_powertrain() const { return target == TargetKind::AV || target == TargetKind::Benchmark; }

    PolicyTag ego_tag() const
    {
        switch (target) {
        case TargetKind::Level1: return PolicyTag::Level1;
        case TargetKind::Level2: return PolicyTag::Level2;
        case TargetKind::AV: return PolicyTag::AV;
        case TargetKind::Benchmark: return PolicyTag::Benchmark;
        }
        return PolicyTag::AV;
    }

    void validate() const
    {
        validate_mixture(mixture);
        if (episodes < 0) throw std::invalid_argument("training.episodes must be non-negative");
        if (episode_steps <= 0) throw std::invalid_argument("training.episode_steps must be positive");
        if (n_c_min < 0 || n_c_max < n_c_min) throw std::invalid_argument("training n_c range is empty");
        if (!(soc_init_min <= soc_init_max) || soc_init_min < 0.0 || soc_init_max > 100.0) {
            throw std::invalid_argument("training SOC range must lie within [0, 100]");
        }
        if (fallback_n < 0) throw std::invalid_argument("training.fallback_n must be non-negative");
        if (checkpoint_every < 0) throw std::invalid_argument("training.checkpoint_every must be non-negative");
    }
};

struct EvaluationSpec {
    std::vector<int> densities = [] {
        std::vector<int> d;
        for (int n = 0; n <= 30; ++n) d.push_back(n);
        return d;
    }();
    int episodes = 10000;
    int episode_steps = 200;
    double soc_init_min = 15.0;
    double soc_init_max = 90.0;
    LevelMixture mixture{0.15, 0.55, 0.30};
    bool include_r2 = true;  // reward recorded in the per-episode metrics

    void validate() const
    {
        validate_mixture(mixture);
        if (densities.empty()) throw std::invalid_argument("evaluation needs at least one density");
        for (int n : densities) {
            if (n < 0) throw std::invalid_argument("evaluation densities must be non-negative");
        }
        if (episodes <= 0) throw std::invalid_argument("evaluation.episodes must be positive");
        if (episode_steps <= 0) throw std::invalid_argument("evaluation.episode_steps must be positive");
        if (!(soc_init_min <= soc_init_max)) throw std::invalid_argument("evaluation SOC range is empty");
    }
};

struct PipelineSpec {
    TrainingSpec level1 = TrainingSpec::defaults_for(TargetKind::Level1);
    TrainingSpec level2 = TrainingSpec::defaults_for(TargetKind::Level2);
    TrainingSpec av = TrainingSpec::defaults_for(TargetKind::AV);
    TrainingSpec benchmark = TrainingSpec::defaults_for(TargetKind::Benchmark);
};

/// Trained surrounding-vehicle policies; level 0 is the built-in rule.
struct EnvironmentPolicies {
    std::shared_ptr<const DeployablePolicy> level1;
    std::shared_ptr<const DeployablePolicy> level2;

    void require(const LevelMixture& m) const
    {
        if (m[1] > 0.0 && !level1) throw DataError("environment mixture includes level-1 vehicles but no level-1 policy was given");
        if (m[2] > 0.0 && !level2) throw DataError("environment mixture includes level-2 vehicles but no level-2 policy was given");
        if (level1 && level1->kind() != ObservationKind::LevelK) throw DataError("level-1 policy must be of kind levelk");
        if (level2 && level2->kind() != ObservationKind::LevelK) throw DataError("level-2 policy must be of kind levelk");
    }

    Action choose(const TrafficWorld& world, std::size_t i, Rng& rng, const TrafficConfig& cfg) const
    {
        const auto obs = observe(world, i, ObservationKind::LevelK, cfg);
        switch (world.vehicles[i].tag) {
        case PolicyTag::Level1: return level1->choose(encode_observation(obs), rng);
        case PolicyTag::Level2: return level2->choose(encode_observation(obs), rng);
        default: return level0_policy(obs);
        }
    }
};

// ---------------------------------------------------------------------------
// JSON forms (hashing, manifests, spec files)
// ---------------------------------------------------------------------------

inline Json to_json(const TrafficConfig& t)
{
    return {{"n_lanes", t.n_lanes},
            {"road_length_m", t.road_length},
            {"car_length_m", t.car_length},
            {"car_width_m", t.car_width},
            {"lane_width_m", t.lane_width},
            {"v_min_mps", t.v_min},
            {"v_max_mps", t.v_max},
            {"accel", t.accel},
            {"hard_accel", t.hard_accel},
            {"decel", t.decel},
            {"hard_decel", t.hard_decel},
            {"dt_s", t.dt},
            {"close_upper_m", t.close_upper},
            {"far_lower_m", t.far_lower},
            {"approach_upper_mps", t.approach_upper},
            {"away_lower_mps", t.away_lower},
            {"speed_low_upper_mps", t.speed_low_upper},
            {"speed_high_lower_mps", t.speed_high_lower},
            {"soc_low_upper_pct", t.soc_low_upper},
            {"soc_high_lower_pct", t.soc_high_lower},
            {"spawn_gap_factor", t.spawn_gap_factor},
            {"spawn_speed_margin_mps", t.spawn_speed_margin}};
}

inline Json to_json(const RewardWeights& w)
{
    return {{"w1", w.w1}, {"w2", w.w2}, {"w3", w.w3}, {"w4", w.w4}, {"w5", w.w5},
            {"v_nominal_mps", w.v_nominal}, {"a_nominal_mps2", w.a_nominal}};
}

inline Json to_json(const LearnerConfig& l)
{
    Json j = {{"epsilon", l.epsilon}, {"trace_cutoff", l.trace_cutoff},
              {"baseline_includes_current", l.baseline_includes_current}};
    if (l.constant_gamma) j["constant_gamma"] = *l.constant_gamma;
    return j;
}

inline Json to_json(const ExperimentConfig& c)
{
    return {{"powertrain", to_json(c.powertrain)},
            {"traffic", to_json(c.traffic)},
            {"reward", to_json(c.reward)},
            {"learner", to_json(c.learner)},
            {"seed", c.seed}};
}

inline Json to_json(const TrainingSpec& s)
{
    return {{"kind", std::string{to_string(s.target)}},
            {"mixture", s.mixture},
            {"reward", s.include_r2 ? "r1+r2" : "r1"},
            {"observation", std::string{to_string(s.observation)}},
            {"episodes", s.episodes},
            {"episode_steps", s.episode_steps},
            {"n_c_min", s.n_c_min},
            {"n_c_max", s.n_c_max},
            {"soc_init_min_pct", s.soc_init_min},
            {"soc_init_max_pct", s.soc_init_max},
            {"fallback_n", s.fallback_n},
            {"checkpoint_every", s.checkpoint_every}};
}

inline Json to_json(const EvaluationSpec& s)
{
    return {{"densities", s.densities},         {"episodes", s.episodes},
            {"episode_steps", s.episode_steps}, {"soc_init_min_pct", s.soc_init_min},
            {"soc_init_max_pct", s.soc_init_max}, {"mixture", s.mixture},
            {"include_r2", s.include_r2}};
}

inline std::uint64_t json_hash(const Json& j) { return detail::fnv1a(j.dump()); }

// ---------------------------------------------------------------------------
// Episodes
// ---------------------------------------------------------------------------

struct EpisodeSetup {
    int n_c = 0;
    LevelMixture mixture{1.0, 0.0, 0.0};
    ObservationKind ego_kind = ObservationKind::AV;
    PolicyTag ego_tag = PolicyTag::AV;
    bool powertrain = true;
    bool include_r2 = true;
    int steps = 200;
    double soc_init_min = 15.0;
    double soc_init_max = 90.0;
};

struct EpisodeSummary {
    bool collided = false;
    int steps = 0;
    int lane_changes = 0;
    double speed_sum = 0.0;
    double reward_sum = 0.0;
    PowertrainState powertrain;
};

/// Runs one episode. `ego_choose(observation_index, rng) -> Action` drives the
/// ego; `on_step(observation_index, executed_action, RewardBreakdown)` sees
/// every step's reward before a collision ends the episode.
template <class EgoChoose, class OnStep>
EpisodeSummary run_episode(const ExperimentConfig& cfg, const EnvironmentPolicies& env, const EpisodeSetup& setup,
                           Rng& rng, EgoChoose&& ego_choose, OnStep&& on_step, std::string* trajectory = nullptr)
{
    const auto& tc = cfg.traffic;
    TrafficWorld world = spawn_world(setup.n_c, setup.mixture, rng, tc, setup.ego_tag);
    EpisodeSummary sum;
    sum.powertrain.soc = uniform_real(rng, setup.soc_init_min, setup.soc_init_max);
    auto chooser = [&](const TrafficWorld& w, std::size_t i, Rng& r) { return env.choose(w, i, r, tc); };

    auto obs = observe(world, 0, setup.ego_kind, tc, sum.powertrain.soc);
    double p_batt = 0.0;
    for (int step = 0; step < setup.steps; ++step) {
        const std::uint32_t o = encode_observation(obs);
        const Action chosen = ego_choose(o, rng);
        const double v_prev = world.ego().v;
        const auto outcome = step_world(world, chosen, rng, tc, chooser);
        const Action executed = outcome.actions[0];
        const double v_new = world.ego().v;
        if (trajectory) *trajectory += trajectory_csv_rows(world, outcome.actions);

        if (setup.powertrain) {
            // Mean speed over the step keeps the powertrain distance equal to the traffic displacement.
            const auto ps = powertrain_step(sum.powertrain, 0.5 * (v_prev + v_new), (v_new - v_prev) / tc.dt, tc.dt,
                                            cfg.powertrain.params, cfg.powertrain.maps);
            sum.powertrain = ps.state;
            p_batt = ps.electrical.p_batt;
        }
        obs = observe(world, 0, setup.ego_kind, tc, sum.powertrain.soc);
        const bool collided = outcome.collisions.ego_involved;
        const auto reward = compute_reward(obs, executed, collided, v_new,
                                           {sum.powertrain.x, sum.powertrain.e_batt, p_batt}, cfg.reward,
                                           setup.include_r2 && setup.powertrain, cfg.powertrain.params.unit_gamma,
                                           cfg.powertrain.params.mpge_energy_floor);
        on_step(o, executed, reward);

        ++sum.steps;
        sum.speed_sum += v_new;
        sum.reward_sum += reward.total;
        if (is_lane_change(executed)) ++sum.lane_changes;
        if (collided) {
            sum.collided = true;
            break;
        }
    }
    return sum;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainingOptions {
    std::string checkpoint_path;  // written every spec.checkpoint_every episodes when non-empty
    std::string resume_path;      // checkpoint to continue from
    std::function<void(int episode, double average_reward)> progress;
};

struct TrainingResult {
    std::unique_ptr<JaakkolaLearner> learner;
    DeployablePolicy policy;
    std::vector<double> reward_trace;  // running average reward after each episode
};

inline std::string training_phase_tag(const TrainingSpec& spec) { return "train:" + std::string{to_string(spec.target)}; }

/// Hash of the spec fields a checkpoint must agree on; the episode budget may grow on resume.
inline std::uint64_t resume_hash(const TrainingSpec& spec)
{
    Json j = to_json(spec);
    j.erase("episodes");
    j.erase("checkpoint_every");
    return json_hash(j);
}

inline Json training_checkpoint(const ExperimentConfig& cfg, const TrainingSpec& spec, const JaakkolaLearner& learner,
                                int episodes_done, const std::vector<double>& trace)
{
    return {{"format", "ecodrive_checkpoint"},
            {"version", 1},
            {"config_hash", hex64(json_hash(to_json(cfg)))},
            {"spec_hash", hex64(resume_hash(spec))},
            {"episodes_done", episodes_done},
            {"reward_trace", trace},
            {"learner", learner_to_json(learner)}};
}

inline TrainingResult run_training(const ExperimentConfig& cfg, const TrainingSpec& spec,
                                   const EnvironmentPolicies& env, const TrainingOptions& opts = {})
{
    spec.validate();
    cfg.traffic.validate();
    env.require(spec.mixture);
    if (spec.n_c_max + 1 > cfg.traffic.spawn_capacity()) {
        throw DataError("training n_c_max " + std::to_string(spec.n_c_max) + " exceeds the ring capacity");
    }

    LearnerConfig lc = cfg.learner;
    lc.fallback_n = spec.fallback_n;
    auto learner = std::make_unique<JaakkolaLearner>(spec.observation, lc);
    std::vector<double> trace;
    int start = 0;

    if (!opts.resume_path.empty()) {
        const Json ck = parse_json_file(opts.resume_path);
        try {
            if (ck.at("format") != "ecodrive_checkpoint") throw data_error(opts.resume_path, "format", "not a checkpoint");
            if (ck.at("spec_hash") != hex64(resume_hash(spec)) ||
                ck.at("config_hash") != hex64(json_hash(to_json(cfg)))) {
                throw data_error(opts.resume_path, "spec_hash", "checkpoint was written for a different configuration");
            }
            start = ck.at("episodes_done").get<int>();
            trace = ck.at("reward_trace").get<std::vector<double>>();
        } catch (const Json::exception& e) {
            throw data_error(opts.resume_path, "", e.what());
        }
        learner_from_json(*learner, ck.at("learner"), opts.resume_path);
    }

    EpisodeSetup setup;
    setup.mixture = spec.mixture;
    setup.ego_kind = spec.observation;
    setup.ego_tag = spec.ego_tag();
    setup.powertrain = spec.has_powertrain();
    setup.include_r2 = spec.include_r2;
    setup.steps = spec.episode_steps;
    setup.soc_init_min = spec.soc_init_min;
    setup.soc_init_max = spec.soc_init_max;

    const auto tag = training_phase_tag(spec);
    for (int ep = start; ep < spec.episodes; ++ep) {
        Rng rng(episode_seed(cfg.seed, tag, 0, static_cast<std::uint64_t>(ep)));
        setup.n_c = uniform_int(rng, spec.n_c_min, spec.n_c_max);
        learner->begin_episode();
        run_episode(
            cfg, env, setup, rng, [&](std::uint32_t o, Rng& r) { return learner->act(o, r); },
            [&](std::uint32_t o, Action a, const RewardBreakdown& rw) { learner->learn(o, a, rw.total); });
        trace.push_back(learner->average().mean);
        if (opts.progress) opts.progress(ep + 1, learner->average().mean);
        if (spec.checkpoint_every > 0 && !opts.checkpoint_path.empty() && (ep + 1) % spec.checkpoint_every == 0) {
            learner->begin_episode();
            detail::write_file(opts.checkpoint_path, training_checkpoint(cfg, spec, *learner, ep + 1, trace).dump());
        }
    }
    learner->begin_episode();
    auto deployable = learner->deployable();
    return {std::move(learner), std::move(deployable), std::move(trace)};
}

inline std::string reward_trace_csv(const std::vector<double>& trace)
{
    std::string out = "episode,running_average_reward\n";
    for (std::size_t i = 0; i < trace.size(); ++i) {
        out += std::to_string(i + 1) + ',' + detail::fmt_exact(trace[i]) + '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EpisodeMetrics {
    int n_c = 0;
    int episode = 0;
    bool collided = false;
    int lane_changes = 0;
    int steps = 0;
    std::optional<double> mpge;
    double mean_speed = 0.0;
    double mean_reward = 0.0;
};

struct DensityMetrics {
    int n_c = 0;
    double violation_rate_pct = 0.0;
    double mean_lane_changes = 0.0;
    std::optional<double> mean_mpge;  // over episodes with a defined MPGe
    double mean_speed = 0.0;
    int episodes = 0;
    int mpge_episodes = 0;
};

struct EvaluationResult {
    std::vector<DensityMetrics> densities;
    std::vector<EpisodeMetrics> episodes;  // density-major, episode order
};

/// Exact means of the per-episode values, summed in episode order.
inline DensityMetrics aggregate_density(int n_c, std::span<const EpisodeMetrics> eps)
{
    DensityMetrics d;
    d.n_c = n_c;
    d.episodes = static_cast<int>(eps.size());
    if (eps.empty()) return d;
    double collided = 0.0, lane = 0.0, speed = 0.0, mpge_sum = 0.0;
    for (const auto& e : eps) {
        collided += e.collided ? 1.0 : 0.0;
        lane += e.lane_changes;
        speed += e.mean_speed;
        if (e.mpge) {
            mpge_sum += *e.mpge;
            ++d.mpge_episodes;
        }
    }
    const double n = static_cast<double>(eps.size());
    d.violation_rate_pct = 100.0 * collided / n;
    d.mean_lane_changes = lane / n;
    d.mean_speed = speed / n;
    if (d.mpge_episodes > 0) d.mean_mpge = mpge_sum / d.mpge_episodes;
    return d;
}

inline EpisodeMetrics evaluate_episode(const ExperimentConfig& cfg, const EvaluationSpec& spec,
                                       const DeployablePolicy& ego, const EnvironmentPolicies& env, int n_c,
                                       int episode, std::string* trajectory = nullptr)
{
    Rng rng(episode_seed(cfg.seed, "evaluate", static_cast<std::uint64_t>(n_c), static_cast<std::uint64_t>(episode)));
    EpisodeSetup setup;
    setup.n_c = n_c;
    setup.mixture = spec.mixture;
    setup.ego_kind = ego.kind();
    setup.ego_tag = ego.kind() == ObservationKind::AV ? PolicyTag::AV : PolicyTag::Level1;
    setup.powertrain = true;
    setup.include_r2 = spec.include_r2;
    setup.steps = spec.episode_steps;
    setup.soc_init_min = spec.soc_init_min;
    setup.soc_init_max = spec.soc_init_max;
    const auto s = run_episode(
        cfg, env, setup, rng, [&](std::uint32_t o, Rng& r) { return ego.choose(o, r); },
        [](std::uint32_t, Action, const RewardBreakdown&) {}, trajectory);
    EpisodeMetrics m;
    m.n_c = n_c;
    m.episode = episode;
    m.collided = s.collided;
    m.lane_changes = s.lane_changes;
    m.steps = s.steps;
    m.mpge = mpge(s.powertrain, cfg.powertrain.params);
    m.mean_speed = s.steps > 0 ? s.speed_sum / s.steps : 0.0;
    m.mean_reward = s.steps > 0 ? s.reward_sum / s.steps : 0.0;
    return m;
}

inline EvaluationResult run_evaluation(const ExperimentConfig& cfg, const EvaluationSpec& spec,
                                       const DeployablePolicy& ego, const EnvironmentPolicies& env, int workers = 1)
{
    spec.validate();
    cfg.traffic.validate();
    env.require(spec.mixture);
    for (int n : spec.densities) {
        if (n + 1 > cfg.traffic.spawn_capacity()) {
            throw DataError("evaluation density " + std::to_string(n) + " exceeds the ring capacity");
        }
    }
    const std::size_t per = static_cast<std::size_t>(spec.episodes);
    const std::size_t total = spec.densities.size() * per;
    EvaluationResult result;
    result.episodes.resize(total);

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        while (true) {
            const std::size_t k = next.fetch_add(1);
            if (k >= total) return;
            try {
                result.episodes[k] = evaluate_episode(cfg, spec, ego, env, spec.densities[k / per],
                                                      static_cast<int>(k % per));
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(total);
            }
        }
    };
    const int n_workers = std::max(1, workers);
    if (n_workers == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (int w = 0; w < n_workers; ++w) pool.emplace_back(work);
    }
    if (failure) std::rethrow_exception(failure);

    for (std::size_t d = 0; d < spec.densities.size(); ++d) {
        result.densities.push_back(aggregate_density(
            spec.densities[d], std::span<const EpisodeMetrics>(result.episodes).subspan(d * per, per)));
    }
    return result;
}

inline std::string metrics_csv(const std::vector<DensityMetrics>& ds)
{
    std::string out = "n_c,violation_rate_pct,mean_lane_changes,mean_mpge,mean_speed_mps,episodes\n";
    for (const auto& d : ds) {
        out += std::to_string(d.n_c) + ',' + detail::fmt_exact(d.violation_rate_pct) + ',' +
               detail::fmt_exact(d.mean_lane_changes) + ',' + (d.mean_mpge ? detail::fmt_exact(*d.mean_mpge) : "") +
               ',' + detail::fmt_exact(d.mean_speed) + ',' + std::to_string(d.episodes) + '\n';
    }
    return out;
}

inline std::string episodes_csv(const std::vector<EpisodeMetrics>& es)
{
    std::string out = "n_c,episode,collided,lane_changes,steps,mpge,mean_speed_mps,mean_reward\n";
    for (const auto& e : es) {
        out += std::to_string(e.n_c) + ',' + std::to_string(e.episode) + ',' + (e.collided ? "1" : "0") + ',' +
               std::to_string(e.lane_changes) + ',' + std::to_string(e.steps) + ',' +
               (e.mpge ? detail::fmt_exact(*e.mpge) : "") + ',' + detail::fmt_exact(e.mean_speed) + ',' +
               detail::fmt_exact(e.mean_reward) + '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

struct PipelineArtifact {
    std::string name;
    std::string policy_file;
    std::string trace_file;
    std::vector<std::string> depends_on;
};

struct PipelineResult {
    std::vector<PipelineArtifact> artifacts;
    Json manifest;
};

inline std::string utc_timestamp()
{
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Trains level-1 (against level-0), level-2 (against level-1), then the AV
/// and benchmark policies in the mixed environment. Writes one policy file
/// and one reward trace per phase plus manifest.json into out_dir.
inline PipelineResult bootstrap_pipeline(const ExperimentConfig& cfg, const PipelineSpec& spec,
                                         const std::filesystem::path& out_dir,
                                         const std::function<void(const std::string&, int, double)>& progress = {})
{
    std::filesystem::create_directories(out_dir);
    const auto thash = cfg.traffic.threshold_hash();
    PipelineResult result;
    Json artifacts = Json::array();
    EnvironmentPolicies env;

    auto train = [&](const std::string& name, const TrainingSpec& ts, std::vector<std::string> deps) {
        TrainingOptions opts;
        if (progress) opts.progress = [&](int ep, double avg) { progress(name, ep, avg); };
        auto trained = run_training(cfg, ts, env, opts);
        PipelineArtifact art{name, name + ".policy.csv", name + ".reward_trace.csv", std::move(deps)};
        const auto policy_text = policy_csv(trained.policy, thash);
        detail::write_file((out_dir / art.policy_file).string(), policy_text);
        detail::write_file((out_dir / art.trace_file).string(), reward_trace_csv(trained.reward_trace));
        artifacts.push_back({{"name", name},
                             {"file", art.policy_file},
                             {"reward_trace", art.trace_file},
                             {"kind", std::string{to_string(trained.policy.kind())}},
                             {"depends_on", art.depends_on},
                             {"seed", cfg.seed},
                             {"spec_hash", hex64(json_hash(to_json(ts)))},
                             {"file_hash", hex64(detail::fnv1a(policy_text))},
                             {"visited_states", trained.policy.visited_states()}});
        result.artifacts.push_back(std::move(art));
        return std::make_shared<const DeployablePolicy>(std::move(trained.policy));
    };

    env.level1 = train("level1", spec.level1, {"level0"});
    env.level2 = train("level2", spec.level2, {"level1"});
    train("av", spec.av, {"level0", "level1", "level2"});
    train("benchmark", spec.benchmark, {"level0", "level1", "level2"});

    result.manifest = {{"format", "ecodrive_manifest"},
                       {"version", 1},
                       {"created_utc", utc_timestamp()},
                       {"config_hash", hex64(json_hash(to_json(cfg)))},
                       {"threshold_hash", hex64(thash)},
                       {"seed", cfg.seed},
                       {"edges", Json::array({Json::array({"level0", "level1"}), Json::array({"level1", "level2"}),
                                              Json::array({"level2", "av"}), Json::array({"level2", "benchmark"})})},
                       {"artifacts", artifacts}};
    detail::write_file((out_dir / "manifest.json").string(), result.manifest.dump(2) + "\n");
    return result;
}

// ---------------------------------------------------------------------------
// Spec files
// ---------------------------------------------------------------------------

struct ExperimentFile {
    ExperimentConfig config;
    std::optional<TrainingSpec> training;
    std::optional<EvaluationSpec> evaluation;
    std::optional<PipelineSpec> pipeline;
    std::map<std::string, std::string> policies;  // level1 / level2 -> path
};

namespace detail {

inline LevelMixture mixture_from_json(const JsonCursor& c)
{
    const auto v = c.numbers();
    if (v.size() != 3) throw data_error(c.file, c.path, "expected three level weights");
    LevelMixture m{v[0], v[1], v[2]};
    with_context(c, [&] { validate_mixture(m); return 0; });
    return m;
}

inline void read_training_fields(const JsonCursor& c, TrainingSpec& s)
{
    if (c.has("mixture")) s.mixture = mixture_from_json(c.child("mixture"));
    if (c.has("reward")) {
        const auto r = c.child("reward").string();
        if (r != "r1" && r != "r1+r2") throw data_error(c.file, c.child("reward").path, "expected 'r1' or 'r1+r2'");
        s.include_r2 = r == "r1+r2";
    }
    if (c.has("observation")) {
        const auto oc = c.child("observation");
        s.observation = with_context(oc, [&] {
            try {
                return observation_kind_from_string(oc.string());
            } catch (const std::exception& e) {
                throw std::invalid_argument(e.what());
            }
        });
    }
    c.read("episodes", s.episodes);
    c.read("episode_steps", s.episode_steps);
    c.read("n_c_min", s.n_c_min);
    c.read("n_c_max", s.n_c_max);
    c.read("soc_init_min_pct", s.soc_init_min);
    c.read("soc_init_max_pct", s.soc_init_max);
    c.read("fallback_n", s.fallback_n);
    c.read("checkpoint_every", s.checkpoint_every);
}

inline constexpr std::initializer_list<const char*> kTrainingKeys = {
    "kind", "mixture", "reward", "observation", "episodes", "episode_steps", "n_c_min", "n_c_max",
    "soc_init_min_pct", "soc_init_max_pct", "fallback_n", "checkpoint_every"};

inline TrainingSpec training_from_json(const JsonCursor& c)
{
    c.allow_keys(kTrainingKeys);
    if (!c.has("kind")) throw data_error(c.file, c.path, "missing key 'kind'");
    TrainingSpec s;
    const auto kc = c.child("kind");
    try {
        s = TrainingSpec::defaults_for(target_kind_from_string(kc.string()));
    } catch (const DataError& e) {
        throw data_error(c.file, kc.path, e.what());
    }
    read_training_fields(c, s);
    with_context(c, [&] { s.validate(); return 0; });
    return s;
}

inline EvaluationSpec evaluation_from_json(const JsonCursor& c)
{
    c.allow_keys({"densities", "episodes", "episode_steps", "soc_init_min_pct", "soc_init_max_pct", "mixture",
                  "include_r2"});
    EvaluationSpec s;
    if (c.has("densities")) {
        const auto dc = c.child("densities");
        if (!dc.j.is_array()) throw data_error(c.file, dc.path, "expected an array of integers");
        s.densities.clear();
        for (std::size_t i = 0; i < dc.j.size(); ++i) {
            s.densities.push_back(
                static_cast<int>(JsonCursor{dc.j[i], c.file, dc.path + "[" + std::to_string(i) + "]"}.integer()));
        }
    }
    c.read("episodes", s.episodes);
    c.read("episode_steps", s.episode_steps);
    c.read("soc_init_min_pct", s.soc_init_min);
    c.read("soc_init_max_pct", s.soc_init_max);
    c.read("include_r2", s.include_r2);
    if (c.has("mixture")) s.mixture = mixture_from_json(c.child("mixture"));
    with_context(c, [&] { s.validate(); return 0; });
    return s;
}

/// "common" overrides apply to every phase, then each phase's own block.
inline PipelineSpec pipeline_from_json(const JsonCursor& c)
{
    c.allow_keys({"common", "level1", "level2", "av", "benchmark"});
    PipelineSpec p;
    auto phase = [&](const char* name, TrainingSpec& s) {
        if (c.has("common")) {
            const auto cc = c.child("common");
            cc.allow_keys({"episodes", "episode_steps", "n_c_min", "n_c_max", "soc_init_min_pct", "soc_init_max_pct",
                           "checkpoint_every"});
            read_training_fields(cc, s);
        }
        if (c.has(name)) {
            const auto pc = c.child(name);
            pc.allow_keys({"mixture", "reward", "observation", "episodes", "episode_steps", "n_c_min", "n_c_max",
                           "soc_init_min_pct", "soc_init_max_pct", "fallback_n", "checkpoint_every"});
            read_training_fields(pc, s);
        }
        with_context(c, [&] { s.validate(); return 0; });
    };
    phase("level1", p.level1);
    phase("level2", p.level2);
    phase("av", p.av);
    phase("benchmark", p.benchmark);
    return p;
}

}  // namespace detail

/// Relative paths inside the file (powertrain, policies) resolve against the
/// file's directory.
inline ExperimentFile experiment_from_json(const Json& j, const std::string& file)
{
    const detail::JsonCursor root{j, file, ""};
    root.allow_keys({"powertrain", "traffic", "reward", "learner", "seed", "training", "evaluation", "pipeline",
                     "policies"});
    const auto dir = std::filesystem::path(file).parent_path();
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path path(p);
        return (path.is_absolute() ? path : dir / path).string();
    };
    ExperimentFile out;
    auto& cfg = out.config;
    if (root.has("powertrain")) {
        const auto pc = root.child("powertrain");
        cfg.powertrain = pc.j.is_string() ? load_powertrain(resolve(pc.string())) : powertrain_from_json(pc.j, file);
    }
    if (root.has("traffic")) cfg.traffic = traffic_from_json(root.child("traffic"));
    if (root.has("reward")) cfg.reward = reward_from_json(root.child("reward"));
    if (root.has("learner")) cfg.learner = learner_from_json(root.child("learner"));
    if (root.has("seed")) {
        const auto sc = root.child("seed");
        if (!sc.j.is_number_unsigned()) throw data_error(file, "seed", "expected a non-negative integer");
        cfg.seed = sc.j.get<std::uint64_t>();
    }
    if (root.has("training")) out.training = detail::training_from_json(root.child("training"));
    if (root.has("evaluation")) out.evaluation = detail::evaluation_from_json(root.child("evaluation"));
    if (root.has("pipeline")) out.pipeline = detail::pipeline_from_json(root.child("pipeline"));
    if (root.has("policies")) {
        const auto pc = root.child("policies");
        pc.allow_keys({"level1", "level2"});
        for (const char* k : {"level1", "level2"}) {
            if (pc.has(k)) out.policies[k] = resolve(pc.child(k).string());
        }
    }
    return out;
}

inline ExperimentFile load_experiment(const std::string& path) { return experiment_from_json(parse_json_file(path), path); }

/// Loads the surrounding-vehicle policies the mixture actually uses.
inline EnvironmentPolicies load_environment(const ExperimentFile& f, const LevelMixture& mixture,
                                            std::uint64_t threshold_hash)
{
    EnvironmentPolicies env;
    auto load = [&](const std::string& key) -> std::shared_ptr<const DeployablePolicy> {
        const auto it = f.policies.find(key);
        if (it == f.policies.end()) return nullptr;
        if (!std::filesystem::is_regular_file(it->second)) throw DataError(it->second + ": file not found");
        auto loaded = load_policy(it->second);
        if (loaded.header.threshold_hash != threshold_hash) {
            throw data_error(it->second, "threshold_hash", "policy was trained with different category thresholds");
        }
        return std::make_shared<const DeployablePolicy>(std::move(loaded.policy));
    };
    if (mixture[1] > 0.0) env.level1 = load("level1");
    if (mixture[2] > 0.0) env.level2 = load("level2");
    return env;
}

}  // namespace ecodrive
