#pragma once

#include <stdexcept>

#include "ecodrive/powertrain.hpp"
#include "ecodrive/traffic.hpp"

namespace ecodrive {

struct RewardWeights {
    double w1 = 10000.0;  // collision
    double w2 = 5.0;      // speed
    double w3 = 1.0;      // headway
    double w4 = 1.0;      // control effort
    double w5 = 5.0;      // MPGe rate
    double v_nominal = 19.7;  // [m/s]
    double a_nominal = 2.5;   // [m/s^2]

    void validate() const
    {
        if (!(w1 > 0 && w2 > 0 && w3 > 0 && w4 > 0 && w5 > 0)) {
            throw std::invalid_argument("reward weights must be positive");
        }
        if (!(a_nominal > 0.0)) throw std::invalid_argument("reward.a_nominal must be positive");
    }
};

struct RewardBreakdown {
    double c = 0.0, v = 0.0, h = 0.0, u = 0.0, e = 0.0;
    double r1 = 0.0, r2 = 0.0, total = 0.0;
};

/// Electrical quantities of the ego powertrain at the end of the step.
struct EnergySignals {
    double x = 0.0;       // distance [m]
    double e_batt = 0.0;  // discharged energy [J]
    double p_batt = 0.0;  // battery power [W]
};

constexpr double effort_feature(Action a)
{
    switch (a) {
    case Action::Maintain: return 0.0;
    case Action::Accelerate:
    case Action::Decelerate: return -1.0;
    case Action::MoveLeft:
    case Action::MoveRight: return -3.0;
    case Action::HardAccelerate:
    case Action::HardDecelerate: return -5.0;
    }
    return 0.0;
}

constexpr double headway_feature(std::uint8_t front_range)
{
    return front_range == kFar ? 1.0 : (front_range == kNominal ? 0.0 : -1.0);
}

/// Time derivative of MPGe, zero while the discharged energy is at or below the floor.
inline double mpge_rate(double speed, const EnergySignals& s, double unit_gamma, double energy_floor)
{
    if (!(s.e_batt > energy_floor)) return 0.0;
    return (speed * s.e_batt - s.x * s.p_batt) / (s.e_batt * s.e_batt) * unit_gamma;
}

/// `obs` supplies the front-range category used as headway. With include_r2
/// false the energy term is dropped (level-k and benchmark training).
inline RewardBreakdown compute_reward(const Observation& obs, Action action, bool collision, double speed,
                                      const EnergySignals& energy, const RewardWeights& w, bool include_r2,
                                      double unit_gamma = kMpgeUnitGamma, double energy_floor = 1e3)
{
    RewardBreakdown r;
    r.c = collision ? -1.0 : 0.0;
    r.v = (speed - w.v_nominal) / w.a_nominal;
    r.h = headway_feature(obs[kFrontRange]);
    r.u = effort_feature(action);
    r.r1 = w.w1 * r.c + w.w2 * r.v + w.w3 * r.h + w.w4 * r.u;
    if (include_r2) {
        r.e = mpge_rate(speed, energy, unit_gamma, energy_floor);
        r.r2 = w.w5 * r.e;
    }
    r.total = r.r1 + r.r2;
    return r;
}

}  // namespace ecodrive
