#pragma once

// Backward-facing battery-electric powertrain model.
//
// The vehicle follows the commanded speed exactly. Each step converts the
// speed/acceleration command into wheel torque, splits it between the
// motor/generator (MG) and friction brakes, maps MG torque to electric power
// through an efficiency map, solves the battery equivalent circuit for pack
// current, and integrates SOC, discharged energy and distance with forward Euler.

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include "ecodrive/lookup.hpp"

namespace ecodrive {

/// 33.7 kWh per gallon-equivalent over 1609.344 m per mile, in J/m.
inline constexpr double kMpgeUnitGamma = 33.7 * 3.6e6 / 1609.344;

struct VehicleParams {
    double gear_ratio = 8.0;       // final drive [-]
    double wheel_radius = 0.32;    // effective [m]
    double mass = 1800.0;          // effective, including rotating inertia [kg]
    double roll_a = 120.0;         // road load T_l = a + b v + c v^2, at the wheel [N m]
    double roll_b = 1.0;           // [N m s/m]
    double roll_c = 0.4;           // [N m s^2/m^2]
    double brake_torque_max = 4000.0;  // friction brake limit at the wheel [N m]
    int cells_series = 96;
    int cells_parallel = 30;
    double cell_capacity_ah = 5.0;
    double unit_gamma = kMpgeUnitGamma;
    double soc_min = 0.0;             // [%]
    double mpge_energy_floor = 1e3;   // MPGe undefined at or below this discharged energy [J]
    // Friction brake torque computed as -(T_whlBrk - T_mgReg) with the MG torque
    // left at MG level, instead of scaling it back to the wheel by the gear ratio.
    bool literal_brake_split = false;

    void validate() const
    {
        auto positive = [](double value, const char* name) {
            if (!std::isfinite(value) || value <= 0.0) {
                throw std::invalid_argument(std::string{"vehicle."} + name + " must be positive and finite");
            }
        };
        positive(gear_ratio, "gear_ratio");
        positive(wheel_radius, "wheel_radius");
        positive(mass, "mass");
        positive(brake_torque_max, "brake_torque_max");
        positive(cell_capacity_ah, "cell_capacity_ah");
        positive(unit_gamma, "unit_gamma");
        if (cells_series <= 0 || cells_parallel <= 0) {
            throw std::invalid_argument("vehicle.cells_series and vehicle.cells_parallel must be positive");
        }
        if (roll_a < 0.0 || roll_c < 0.0) {
            throw std::invalid_argument("vehicle.roll_a and vehicle.roll_c must be non-negative");
        }
        if (soc_min < 0.0 || soc_min >= 100.0) {
            throw std::invalid_argument("vehicle.soc_min must be in [0, 100)");
        }
        if (mpge_energy_floor < 0.0) {
            throw std::invalid_argument("vehicle.mpge_energy_floor must be non-negative");
        }
    }
};

struct PowertrainMaps {
    LookupTable1D t_mg_max;      // MG torque limit vs MG speed [rad/s -> N m]
    LookupTable1D t_mg_reg_lim;  // MG regeneration torque limit vs MG speed
    LookupTable2D eta_mg;        // MG efficiency vs (|torque| [N m], speed [rad/s])
    LookupTable2D f_reg;         // regeneration factor vs (vehicle speed [m/s], SOC [%])
    LookupTable1D v_oc;          // cell open-circuit voltage vs SOC [% -> V]
    LookupTable1D r_cell;        // cell resistance vs SOC [% -> ohm]

    void validate() const
    {
        for (double e : eta_mg.flat_values()) {
            if (!(e > 0.0 && e < 1.0)) {
                throw std::invalid_argument("maps.eta_mg values must lie in (0, 1)");
            }
        }
        for (double f : f_reg.flat_values()) {
            if (!(f >= 0.0 && f <= 1.0)) {
                throw std::invalid_argument("maps.f_reg values must lie in [0, 1]");
            }
        }
        for (double t : t_mg_max.values()) {
            if (t < 0.0) throw std::invalid_argument("maps.t_mg_max values must be non-negative");
        }
        for (double t : t_mg_reg_lim.values()) {
            if (t < 0.0) throw std::invalid_argument("maps.t_mg_reg_lim values must be non-negative");
        }
        for (double v : v_oc.values()) {
            if (!(v > 0.0)) throw std::invalid_argument("maps.v_oc values must be positive");
        }
        for (double r : r_cell.values()) {
            if (!(r > 0.0)) throw std::invalid_argument("maps.r_cell values must be positive");
        }
    }
};

struct Powertrain {
    VehicleParams params;
    PowertrainMaps maps;
};

struct PowertrainState {
    double soc = 90.0;     // [%]
    double e_batt = 0.0;   // cumulative discharged energy [J]
    double x = 0.0;        // distance [m]
    bool depleted = false;
};

struct WheelTorque {
    double t_a;    // acceleration torque
    double t_l;    // road load
    double t_whl;  // traction demand at the wheels
};

struct TorqueSplit {
    double t_whl = 0.0;
    double t_mg = 0.0;
    double t_mech_brk = 0.0;  // <= 0
    double omega_mg = 0.0;
    double t_whl_brk = 0.0;   // braking demand at the wheels, >= 0
    double t_mg_reg = 0.0;    // regenerative MG torque magnitude, >= 0
};

struct BatteryCurrent {
    double i = 0.0;       // pack current, positive on discharge [A]
    double p_mg = 0.0;    // power actually drawn (the clamped value when clamped) [W]
    bool clamped = false;
};

struct ElectricalStep {
    double p_mg = 0.0;
    double i_batt = 0.0;
    double p_batt = 0.0;
    double v_oc = 0.0;
    bool clamped = false;
};

struct PowertrainStep {
    PowertrainState state;
    TorqueSplit split;
    ElectricalStep electrical;
};

inline double mg_speed(double v, const VehicleParams& p)
{
    return v * p.gear_ratio / p.wheel_radius;
}

inline WheelTorque wheel_torque(double v, double v_dot, const VehicleParams& p)
{
    const double t_a = v_dot * p.mass * p.wheel_radius;
    const double t_l = p.roll_a + p.roll_b * v + p.roll_c * v * v;
    return {t_a, t_l, t_a + t_l};
}

/// PCU torque split between the MG and the friction brakes.
inline TorqueSplit distribute_torque(double t_whl, double omega_mg, double v, double soc, const VehicleParams& p,
                                     const PowertrainMaps& maps)
{
    const double g = p.gear_ratio;
    const double t_max = maps.t_mg_max(omega_mg);
    const double t_reg_lim = maps.t_mg_reg_lim(omega_mg);
    const double f_reg = maps.f_reg(v, soc);

    double t_mg_pos = 0.0;
    if (t_whl >= 0.0) {
        t_mg_pos = t_whl <= t_max * g ? t_whl / g : t_max;
    }

    double t_whl_brk = 0.0;
    if (-t_whl >= 0.0) {
        t_whl_brk = -t_whl <= p.brake_torque_max ? -t_whl : p.brake_torque_max;
    }

    const double t_mg_reg = t_whl_brk <= t_reg_lim * g ? f_reg * t_whl_brk / g : f_reg * t_reg_lim;

    TorqueSplit s;
    s.t_whl = t_whl;
    s.omega_mg = omega_mg;
    s.t_whl_brk = t_whl_brk;
    s.t_mg_reg = t_mg_reg;
    s.t_mg = t_whl > 0.0 ? t_mg_pos : -t_mg_reg;
    s.t_mech_brk = p.literal_brake_split ? -(t_whl_brk - t_mg_reg) : -(t_whl_brk - t_mg_reg * g);
    return s;
}

/// MG electrical power: mechanical power divided by efficiency when motoring,
/// multiplied by it when generating.
inline double mg_electric_power(double t_mg, double omega_mg, const PowertrainMaps& maps)
{
    const double p_mech = t_mg * omega_mg;
    const double eta = maps.eta_mg(std::abs(t_mg), omega_mg);
    return p_mech >= 0.0 ? p_mech / eta : p_mech * eta;
}

/// Pack current from the equivalent circuit (N_s/N_p) R I^2 - N_s V_oc I + P = 0,
/// smaller root. Demands beyond the maximum deliverable power are clamped to it.
inline BatteryCurrent battery_current(double p_mg, double soc, const VehicleParams& p, const PowertrainMaps& maps)
{
    const double ns = p.cells_series;
    const double np = p.cells_parallel;
    const double a = ns / np * maps.r_cell(soc);
    const double b = ns * maps.v_oc(soc);
    const double disc = b * b - 4.0 * a * p_mg;
    if (disc < 0.0) {
        return {b / (2.0 * a), b * b / (4.0 * a), true};
    }
    // Rationalized form of (b - sqrt(disc)) / 2a; no cancellation for small |p_mg|.
    return {2.0 * p_mg / (b + std::sqrt(disc)), p_mg, false};
}

/// One forward-Euler step of length dt at commanded speed v and acceleration v_dot.
inline PowertrainStep powertrain_step(const PowertrainState& state, double v, double v_dot, double dt,
                                      const VehicleParams& p, const PowertrainMaps& maps)
{
    if (!(dt > 0.0)) {
        throw std::invalid_argument("powertrain_step: dt must be positive");
    }
    PowertrainStep out;
    const double omega = mg_speed(v, p);
    const auto wt = wheel_torque(v, v_dot, p);
    out.split = distribute_torque(wt.t_whl, omega, v, state.soc, p, maps);

    const double p_mg = mg_electric_power(out.split.t_mg, omega, maps);
    const double v_oc = maps.v_oc(state.soc);
    auto bc = battery_current(p_mg, state.soc, p, maps);

    const double capacity_as = p.cell_capacity_ah * p.cells_parallel * 3600.0;
    double soc_next = state.soc - bc.i / capacity_as * 100.0 * dt;
    bool depleted = state.depleted;
    if (soc_next < p.soc_min && bc.i > 0.0) {
        bc = BatteryCurrent{0.0, 0.0, false};
        soc_next = std::max(state.soc, p.soc_min);
        depleted = true;
    }
    soc_next = std::clamp(soc_next, p.soc_min, 100.0);

    out.electrical.p_mg = bc.p_mg;
    out.electrical.i_batt = bc.i;
    out.electrical.v_oc = v_oc;
    out.electrical.p_batt = p.cells_series * bc.i * v_oc;
    out.electrical.clamped = bc.clamped;

    out.state.soc = soc_next;
    out.state.e_batt = state.e_batt + out.electrical.p_batt * dt;
    out.state.x = state.x + v * dt;
    out.state.depleted = depleted;
    return out;
}

/// Miles per gallon equivalent; empty until more than the energy floor has been discharged.
inline std::optional<double> mpge(const PowertrainState& state, const VehicleParams& p)
{
    if (!(state.e_batt > p.mpge_energy_floor)) {
        return std::nullopt;
    }
    return state.x / state.e_batt * p.unit_gamma;
}

/// MG power spent on road load at constant speed v with a fixed efficiency eta0.
inline double resistance_power(double v, double eta0, const VehicleParams& p)
{
    return (p.roll_a + p.roll_b * v + p.roll_c * v * v) * v / (p.wheel_radius * eta0);
}

/// Mid-size BEV defaults. These approximate a generic vehicle; they are not a calibration.
inline Powertrain default_powertrain()
{
    Powertrain pt;
    // Constant torque to the 500 rad/s base speed, constant 125 kW above it.
    std::vector<double> speeds{0.0, 500.0, 600.0, 700.0, 800.0, 900.0, 1000.0, 1100.0, 1200.0};
    std::vector<double> t_max;
    std::vector<double> t_reg;
    for (double w : speeds) {
        const double t = w <= 500.0 ? 250.0 : 125000.0 / w;
        t_max.push_back(t);
        t_reg.push_back(0.8 * t);
    }
    pt.maps.t_mg_max = LookupTable1D(speeds, t_max);
    pt.maps.t_mg_reg_lim = LookupTable1D(speeds, t_reg);

    pt.maps.eta_mg = LookupTable2D({0.0, 20.0, 60.0, 150.0, 250.0}, {0.0, 100.0, 300.0, 600.0, 1200.0},
                                   {{0.80, 0.82, 0.84, 0.84, 0.80},
                                    {0.85, 0.88, 0.90, 0.90, 0.86},
                                    {0.86, 0.90, 0.92, 0.92, 0.88},
                                    {0.85, 0.90, 0.91, 0.91, 0.87},
                                    {0.82, 0.87, 0.88, 0.88, 0.84}});

    // Ramps 0 -> 1 over 0..5 m/s and 1 -> 0 over 85..95 % SOC.
    pt.maps.f_reg = LookupTable2D({0.0, 5.0, 50.0}, {0.0, 85.0, 95.0, 100.0},
                                  {{0.0, 0.0, 0.0, 0.0}, {1.0, 1.0, 0.0, 0.0}, {1.0, 1.0, 0.0, 0.0}});

    pt.maps.v_oc = LookupTable1D({0.0, 10.0, 20.0, 40.0, 60.0, 80.0, 90.0, 100.0},
                                 {3.00, 3.45, 3.55, 3.65, 3.75, 3.92, 4.02, 4.15});
    pt.maps.r_cell = LookupTable1D({0.0, 20.0, 50.0, 80.0, 100.0}, {0.0030, 0.0022, 0.0020, 0.0021, 0.0023});
    return pt;
}

}  // namespace ecodrive
