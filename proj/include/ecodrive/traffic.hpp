#pragma once

// Three-lane ring-road traffic with a discrete seven-action vehicle model.
//
// Every vehicle picks one action per 1 s step from its own categorical
// observation; all actions are applied simultaneously and collisions are
// assessed on the resulting configuration (including pass-throughs during
// the step). Lane 0 is the right-most lane.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ecodrive/detail/csv.hpp"
#include "ecodrive/detail/random.hpp"
#include "ecodrive/errors.hpp"

namespace ecodrive {

enum class Action : std::uint8_t {
    Maintain = 0,
    Accelerate = 1,
    Decelerate = 2,
    HardAccelerate = 3,
    HardDecelerate = 4,
    MoveLeft = 5,
    MoveRight = 6,
};
inline constexpr int kNumActions = 7;

using ActionMask = std::array<bool, kNumActions>;

constexpr std::string_view to_string(Action a)
{
    constexpr std::array<std::string_view, kNumActions> names{
        "maintain", "accelerate", "decelerate", "hard_accelerate", "hard_decelerate", "move_left", "move_right"};
    return names[static_cast<std::size_t>(a)];
}

constexpr Action action_from_index(int i) { return static_cast<Action>(i); }
constexpr int index_of(Action a) { return static_cast<int>(a); }
constexpr bool is_lane_change(Action a) { return a == Action::MoveLeft || a == Action::MoveRight; }

enum class PolicyTag : std::uint8_t { Level0, Level1, Level2, AV, Benchmark };

constexpr std::string_view to_string(PolicyTag t)
{
    constexpr std::array<std::string_view, 5> names{"level0", "level1", "level2", "av", "benchmark"};
    return names[static_cast<std::size_t>(t)];
}

inline PolicyTag policy_tag_from_string(std::string_view s)
{
    for (int i = 0; i < 5; ++i) {
        if (to_string(static_cast<PolicyTag>(i)) == s) return static_cast<PolicyTag>(i);
    }
    throw DataError("unknown policy tag '" + std::string{s} + "'");
}

enum class ObservationKind : std::uint8_t { LevelK, AV };

constexpr std::string_view to_string(ObservationKind k) { return k == ObservationKind::LevelK ? "levelk" : "av"; }

inline ObservationKind observation_kind_from_string(std::string_view s)
{
    if (s == "levelk") return ObservationKind::LevelK;
    if (s == "av") return ObservationKind::AV;
    throw DataError("unknown observation kind '" + std::string{s} + "'");
}

constexpr int num_features(ObservationKind k) { return k == ObservationKind::LevelK ? 11 : 13; }

constexpr std::uint32_t num_states(ObservationKind k)
{
    std::uint32_t n = 1;
    for (int i = 0; i < num_features(k); ++i) n *= 3;
    return n;
}

/// Canonical feature positions inside an Observation.
enum Feature : int {
    kFrontRange = 0,
    kFrontRate,
    kFrontLeftRange,
    kFrontLeftRate,
    kFrontRightRange,
    kFrontRightRate,
    kRearLeftRange,
    kRearLeftRate,
    kRearRightRange,
    kRearRightRate,
    kLane,
    kSpeed,
    kSoc,
};

// Range codes: far 0, nominal 1, close 2. Rate codes: moving away 0, stable 1, approaching 2.
// Speed and SOC codes: low 0, medium 1, high 2.
inline constexpr std::uint8_t kFar = 0, kNominal = 1, kClose = 2;
inline constexpr std::uint8_t kAway = 0, kStable = 1, kApproaching = 2;

struct Observation {
    ObservationKind kind = ObservationKind::LevelK;
    std::array<std::uint8_t, 13> features{};

    std::uint8_t operator[](int i) const { return features[static_cast<std::size_t>(i)]; }
    int lane() const { return features[kLane]; }
    bool operator==(const Observation&) const = default;
};

struct TrafficConfig {
    int n_lanes = 3;
    double road_length = 400.0;
    double car_length = 5.0;
    double car_width = 2.0;
    double lane_width = 3.6;
    double v_min = 0.0;
    double v_max = 30.0;
    double accel = 2.5;
    double hard_accel = 5.0;
    double decel = 2.5;
    double hard_decel = 5.0;
    double dt = 1.0;
    double close_upper = 12.0;    // range below this is "close"
    double far_lower = 36.0;      // range at or above this is "far"
    double approach_upper = -1.0; // range rate below this is "approaching"
    double away_lower = 1.0;      // range rate at or above this is "moving away"
    double speed_low_upper = 17.22;
    double speed_high_lower = 22.22;
    double soc_low_upper = 70.0;
    double soc_high_lower = 80.0;
    double spawn_gap_factor = 2.0;    // minimum same-lane spawn spacing in car lengths
    double spawn_speed_margin = 2.0;  // initial speeds in [v_min + margin, v_max - margin]

    /// Vehicles (ego included) that fit under the spawn spacing constraint.
    int spawn_capacity() const
    {
        return n_lanes * static_cast<int>(std::floor(road_length / (spawn_gap_factor * car_length)));
    }

    void validate() const
    {
        if (n_lanes != 3) throw std::invalid_argument("traffic.n_lanes must be 3");
        if (!(road_length > 0.0 && car_length > 0.0)) {
            throw std::invalid_argument("traffic.road_length and traffic.car_length must be positive");
        }
        if (!(dt > 0.0)) throw std::invalid_argument("traffic.dt must be positive");
        if (!(v_min < v_max)) throw std::invalid_argument("traffic.v_min must be below traffic.v_max");
        if (!(close_upper < far_lower)) throw std::invalid_argument("traffic.close_upper must be below far_lower");
        if (!(approach_upper < away_lower)) {
            throw std::invalid_argument("traffic.approach_upper must be below away_lower");
        }
        if (!(speed_low_upper < speed_high_lower)) throw std::invalid_argument("traffic speed thresholds unordered");
        if (!(soc_low_upper < soc_high_lower)) throw std::invalid_argument("traffic SOC thresholds unordered");
        if (accel < 0.0 || hard_accel < 0.0 || decel < 0.0 || hard_decel < 0.0) {
            throw std::invalid_argument("traffic acceleration magnitudes must be non-negative");
        }
        if (spawn_gap_factor < 1.0) throw std::invalid_argument("traffic.spawn_gap_factor must be >= 1");
        if (2.0 * spawn_speed_margin > v_max - v_min) {
            throw std::invalid_argument("traffic.spawn_speed_margin leaves an empty speed band");
        }
    }

    /// Stable hash of everything that defines the observation categories.
    std::uint64_t threshold_hash() const
    {
        std::string s;
        for (double v : {close_upper, far_lower, approach_upper, away_lower, speed_low_upper, speed_high_lower,
                         soc_low_upper, soc_high_lower, car_length}) {
            s += detail::fmt_exact(v);
            s += ';';
        }
        return detail::fnv1a(s);
    }
};

struct VehicleState {
    double x = 0.0;     // position on the ring [m], in [0, road_length)
    double v = 0.0;     // [m/s]
    int lane = 0;
    int lane_offset = 0;  // +1 / -1 when the last step moved left / right; the source lane is lane - lane_offset
    double dx = 0.0;      // displacement during the last step [m]
    PolicyTag tag = PolicyTag::Level0;
    bool is_ego = false;

    /// Bitmask of lanes this vehicle occupies; a vehicle in transit occupies both.
    unsigned occupancy() const { return (1u << lane) | (1u << (lane - lane_offset)); }
};

struct TrafficWorld {
    std::vector<VehicleState> vehicles;  // index 0 is the ego vehicle
    int step = 0;

    const VehicleState& ego() const { return vehicles.front(); }
};

struct CollisionReport {
    std::vector<std::pair<int, int>> pairs;  // i < j, sorted
    bool ego_involved = false;
};

/// 0 below lower, 1 in [lower, upper), 2 at or above upper.
constexpr std::uint8_t categorize(double value, double lower, double upper)
{
    if (value < lower) return 0;
    if (value < upper) return 1;
    return 2;
}

inline ActionMask feasible_actions(int lane, int n_lanes = 3)
{
    ActionMask mask;
    mask.fill(true);
    mask[index_of(Action::MoveLeft)] = lane < n_lanes - 1;
    mask[index_of(Action::MoveRight)] = lane > 0;
    return mask;
}

/// Infeasible lane moves degrade to Maintain.
inline Action effective_action(int lane, Action a, int n_lanes = 3)
{
    if (!feasible_actions(lane, n_lanes)[index_of(a)]) return Action::Maintain;
    return a;
}

/// Hand-crafted minimal-rationality rule on the front slot. Never accelerates or changes lanes.
constexpr Action level0_policy(std::uint8_t front_range, std::uint8_t front_rate)
{
    if (front_range == kClose && front_rate == kApproaching) return Action::HardDecelerate;
    if (front_range == kClose || (front_range == kNominal && front_rate == kApproaching)) return Action::Decelerate;
    return Action::Maintain;
}

inline Action level0_policy(const Observation& obs) { return level0_policy(obs[kFrontRange], obs[kFrontRate]); }

inline std::uint32_t encode_observation(const Observation& obs)
{
    std::uint32_t index = 0;
    std::uint32_t place = 1;
    for (int i = 0; i < num_features(obs.kind); ++i) {
        index += obs[i] * place;
        place *= 3;
    }
    return index;
}

inline Observation decode_observation(std::uint32_t index, ObservationKind kind)
{
    if (index >= num_states(kind)) {
        throw std::out_of_range("observation index " + std::to_string(index) + " out of range for kind " +
                                std::string{to_string(kind)});
    }
    Observation obs;
    obs.kind = kind;
    for (int i = 0; i < num_features(kind); ++i) {
        obs.features[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(index % 3);
        index /= 3;
    }
    return obs;
}

namespace detail {

inline double forward_distance(double from, double to, double length)
{
    double d = std::fmod(to - from, length);
    if (d < 0.0) d += length;
    return d;
}

// Signed separation of b relative to a, wrapped into [-L/2, L/2).
inline double signed_separation(double a, double b, double length)
{
    double d = forward_distance(a, b, length);
    if (d >= 0.5 * length) d -= length;
    return d;
}

struct SlotReading {
    std::uint8_t range = kFar;
    std::uint8_t rate = kAway;
};

inline SlotReading read_slot(const TrafficWorld& world, std::size_t subject, int lane, bool front,
                             const TrafficConfig& cfg)
{
    if (lane < 0 || lane >= cfg.n_lanes) return {};
    const auto& s = world.vehicles[subject];
    const VehicleState* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < world.vehicles.size(); ++j) {
        if (j == subject) continue;
        const auto& o = world.vehicles[j];
        if ((o.occupancy() & (1u << lane)) == 0) continue;
        const double d = front ? forward_distance(s.x, o.x, cfg.road_length)
                               : forward_distance(o.x, s.x, cfg.road_length);
        if (!front && d == 0.0) continue;  // alongside counts as front
        // Ties go to the more threatening neighbour so the reading is independent of indexing.
        const bool better = d < best_d || (d == best_d && best != nullptr && (front ? o.v < best->v : o.v > best->v));
        if (better) {
            best = &o;
            best_d = d;
        }
    }
    if (best == nullptr) return {};
    const double range = best_d - cfg.car_length;
    const double rate = front ? best->v - s.v : s.v - best->v;
    return {static_cast<std::uint8_t>(2 - categorize(range, cfg.close_upper, cfg.far_lower)),
            static_cast<std::uint8_t>(2 - categorize(rate, cfg.approach_upper, cfg.away_lower))};
}

}  // namespace detail

/// Categorical observation of vehicle `subject`. The AV kind needs the subject's SOC.
inline Observation observe(const TrafficWorld& world, std::size_t subject, ObservationKind kind,
                           const TrafficConfig& cfg, std::optional<double> soc = std::nullopt)
{
    const auto& s = world.vehicles.at(subject);
    Observation obs;
    obs.kind = kind;
    auto put = [&](int range_feature, detail::SlotReading r) {
        obs.features[static_cast<std::size_t>(range_feature)] = r.range;
        obs.features[static_cast<std::size_t>(range_feature + 1)] = r.rate;
    };
    put(kFrontRange, detail::read_slot(world, subject, s.lane, true, cfg));
    put(kFrontLeftRange, detail::read_slot(world, subject, s.lane + 1, true, cfg));
    put(kFrontRightRange, detail::read_slot(world, subject, s.lane - 1, true, cfg));
    put(kRearLeftRange, detail::read_slot(world, subject, s.lane + 1, false, cfg));
    put(kRearRightRange, detail::read_slot(world, subject, s.lane - 1, false, cfg));
    obs.features[kLane] = static_cast<std::uint8_t>(s.lane);
    if (kind == ObservationKind::AV) {
        if (!soc) throw std::invalid_argument("observe: AV observations need the subject's SOC");
        obs.features[kSpeed] = categorize(s.v, cfg.speed_low_upper, cfg.speed_high_lower);
        obs.features[kSoc] = categorize(*soc, cfg.soc_low_upper, cfg.soc_high_lower);
    }
    return obs;
}

inline double action_acceleration(Action a, const TrafficConfig& cfg)
{
    switch (a) {
    case Action::Accelerate: return cfg.accel;
    case Action::Decelerate: return -cfg.decel;
    case Action::HardAccelerate: return cfg.hard_accel;
    case Action::HardDecelerate: return -cfg.hard_decel;
    default: return 0.0;
    }
}

inline VehicleState apply_action(const VehicleState& vehicle, Action action, const TrafficConfig& cfg)
{
    const Action a = effective_action(vehicle.lane, action, cfg.n_lanes);
    VehicleState next = vehicle;
    next.v = std::clamp(vehicle.v + action_acceleration(a, cfg) * cfg.dt, cfg.v_min, cfg.v_max);
    next.dx = 0.5 * (vehicle.v + next.v) * cfg.dt;
    next.x = std::fmod(vehicle.x + next.dx, cfg.road_length);
    if (next.x < 0.0) next.x += cfg.road_length;
    next.lane_offset = 0;
    if (a == Action::MoveLeft) {
        next.lane = vehicle.lane + 1;
        next.lane_offset = 1;
    } else if (a == Action::MoveRight) {
        next.lane = vehicle.lane - 1;
        next.lane_offset = -1;
    }
    return next;
}

/// Pairs whose lane occupancy overlaps and whose centres come within one car
/// length, either now or while moving linearly through the last step.
inline CollisionReport detect_collisions(const TrafficWorld& world, const TrafficConfig& cfg)
{
    CollisionReport report;
    const auto& vs = world.vehicles;
    for (std::size_t i = 0; i < vs.size(); ++i) {
        for (std::size_t j = i + 1; j < vs.size(); ++j) {
            if ((vs[i].occupancy() & vs[j].occupancy()) == 0) continue;
            const double now = detail::signed_separation(vs[i].x, vs[j].x, cfg.road_length);
            const double before = now - (vs[j].dx - vs[i].dx);
            const bool crossed = (before < 0.0 && now > 0.0) || (before > 0.0 && now < 0.0);
            if (std::abs(now) < cfg.car_length || std::abs(before) < cfg.car_length || crossed) {
                report.pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
                if (vs[i].is_ego || vs[j].is_ego) report.ego_involved = true;
            }
        }
    }
    return report;
}

/// Mixture over the surrounding policy levels 0, 1, 2.
using LevelMixture = std::array<double, 3>;

inline void validate_mixture(const LevelMixture& m)
{
    double sum = 0.0;
    for (double p : m) {
        if (p < 0.0) throw std::invalid_argument("mixture probabilities must be non-negative");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("mixture probabilities must sum to 1");
}

inline PolicyTag draw_level(const LevelMixture& m, Rng& rng)
{
    const double u = uniform01(rng);
    if (u < m[0]) return PolicyTag::Level0;
    if (u < m[0] + m[1]) return PolicyTag::Level1;
    return m[2] > 0.0 ? PolicyTag::Level2 : (m[1] > 0.0 ? PolicyTag::Level1 : PolicyTag::Level0);
}

/// Ego (index 0) plus n_c surrounding vehicles at uniformly random lanes and
/// positions, rejection-sampled to keep same-lane spacing.
inline TrafficWorld spawn_world(int n_c, const LevelMixture& mixture, Rng& rng, const TrafficConfig& cfg,
                                PolicyTag ego_tag = PolicyTag::AV)
{
    validate_mixture(mixture);
    if (n_c < 0) throw std::invalid_argument("spawn_world: n_c must be non-negative");
    if (n_c + 1 > cfg.spawn_capacity()) {
        throw DataError("spawn_world: " + std::to_string(n_c) + " surrounding vehicles do not fit on a " +
                        detail::fmt(cfg.road_length) + " m ring at the configured spacing");
    }
    const double min_gap = cfg.spawn_gap_factor * cfg.car_length;
    TrafficWorld world;
    world.vehicles.reserve(static_cast<std::size_t>(n_c) + 1);
    for (int k = 0; k <= n_c; ++k) {
        VehicleState v;
        v.is_ego = k == 0;
        v.tag = k == 0 ? ego_tag : draw_level(mixture, rng);
        v.v = uniform_real(rng, cfg.v_min + cfg.spawn_speed_margin, cfg.v_max - cfg.spawn_speed_margin);
        bool placed = false;
        for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
            v.lane = uniform_int(rng, 0, cfg.n_lanes - 1);
            v.x = uniform_real(rng, 0.0, cfg.road_length);
            placed = std::none_of(world.vehicles.begin(), world.vehicles.end(), [&](const VehicleState& o) {
                return o.lane == v.lane && std::abs(detail::signed_separation(o.x, v.x, cfg.road_length)) < min_gap;
            });
        }
        if (!placed) {
            throw DataError("spawn_world: could not place " + std::to_string(n_c) +
                            " surrounding vehicles with the configured spacing");
        }
        world.vehicles.push_back(v);
    }
    return world;
}

struct StepOutcome {
    CollisionReport collisions;
    std::vector<Action> actions;  // executed (post-degradation) action per vehicle
};

/// Advances the world one step. `choose(world, index, rng) -> Action` supplies
/// the action of every surrounding vehicle; all choices are made on the
/// pre-step world, then applied together.
template <class Chooser>
StepOutcome step_world(TrafficWorld& world, Action ego_action, Rng& rng, const TrafficConfig& cfg, Chooser&& choose)
{
    StepOutcome out;
    out.actions.resize(world.vehicles.size());
    out.actions[0] = effective_action(world.vehicles[0].lane, ego_action, cfg.n_lanes);
    for (std::size_t i = 1; i < world.vehicles.size(); ++i) {
        out.actions[i] = effective_action(world.vehicles[i].lane, choose(std::as_const(world), i, rng), cfg.n_lanes);
    }
    for (std::size_t i = 0; i < world.vehicles.size(); ++i) {
        world.vehicles[i] = apply_action(world.vehicles[i], out.actions[i], cfg);
    }
    ++world.step;
    out.collisions = detect_collisions(world, cfg);
    return out;
}

inline std::string trajectory_csv_header() { return "t,veh_id,x,lane,v,action,policy_tag\n"; }

inline std::string trajectory_csv_rows(const TrafficWorld& world, const std::vector<Action>& actions)
{
    std::string out;
    for (std::size_t i = 0; i < world.vehicles.size(); ++i) {
        const auto& v = world.vehicles[i];
        out += std::to_string(world.step) + ',' + std::to_string(i) + ',' + detail::fmt(v.x) + ',' +
               std::to_string(v.lane) + ',' + detail::fmt(v.v) + ',' + std::string{to_string(actions[i])} + ',' +
               std::string{to_string(v.tag)} + '\n';
    }
    return out;
}

}  // namespace ecodrive
