#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ecodrive/detail/csv.hpp"
#include "ecodrive/errors.hpp"
#include "ecodrive/powertrain.hpp"

namespace ecodrive {

struct CycleSample {
    double t;  // [s]
    double v;  // [m/s]
};

struct TraceRow {
    double t;
    double v;
    TorqueSplit split;
    ElectricalStep electrical;
    PowertrainState state;  // after the step
};

struct DriveCycleResult {
    std::vector<TraceRow> trace;
    PowertrainState final_state;
    std::optional<double> mpge;
};

inline void validate_cycle(const std::vector<CycleSample>& cycle, const std::string& source = "drive cycle")
{
    if (cycle.size() < 2) {
        throw data_error(source, "", "drive cycle needs at least two samples");
    }
    for (std::size_t k = 0; k < cycle.size(); ++k) {
        if (!std::isfinite(cycle[k].v) || cycle[k].v < 0.0) {
            throw data_error(source, "v_mps", "speed must be finite and non-negative (row " + std::to_string(k) + ")");
        }
        if (k > 0 && !(cycle[k].t > cycle[k - 1].t)) {
            throw data_error(source, "t_s", "timestamps must be strictly ascending (row " + std::to_string(k) + ")");
        }
    }
}

/// Linear resampling onto t0, t0+dt, ... up to the last timestamp.
inline std::vector<double> resample_cycle(const std::vector<CycleSample>& cycle, double dt)
{
    std::vector<double> ts;
    std::vector<double> vs;
    for (const auto& s : cycle) {
        ts.push_back(s.t);
        vs.push_back(s.v);
    }
    const LookupTable1D profile(ts, vs);
    const double t0 = cycle.front().t;
    const auto n = static_cast<std::size_t>(std::floor((cycle.back().t - t0) / dt + 1e-9)) + 1;
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        out[k] = profile(t0 + static_cast<double>(k) * dt);
    }
    return out;
}

/// Runs the backward model over the cycle: one step per resampled interval with
/// forward-difference acceleration.
inline DriveCycleResult run_drive_cycle(const std::vector<CycleSample>& cycle, double soc0, const Powertrain& pt,
                                        double dt = 1.0)
{
    validate_cycle(cycle);
    if (!(dt > 0.0)) {
        throw std::invalid_argument("run_drive_cycle: dt must be positive");
    }
    const auto v = resample_cycle(cycle, dt);
    DriveCycleResult result;
    PowertrainState state;
    state.soc = soc0;
    result.trace.reserve(v.size());
    for (std::size_t k = 0; k + 1 < v.size(); ++k) {
        const double v_dot = (v[k + 1] - v[k]) / dt;
        const auto step = powertrain_step(state, v[k], v_dot, dt, pt.params, pt.maps);
        state = step.state;
        result.trace.push_back({cycle.front().t + static_cast<double>(k) * dt, v[k], step.split, step.electrical, state});
    }
    result.final_state = state;
    result.mpge = mpge(state, pt.params);
    return result;
}

inline std::vector<CycleSample> parse_cycle_csv(const std::string& text, const std::string& source)
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) {
        throw data_error(source, "", "empty drive-cycle file");
    }
    const auto header = detail::split(line);
    if (header.size() != 2 || header[0] != "t_s" || header[1] != "v_mps") {
        throw data_error(source, "header", "expected 't_s,v_mps'");
    }
    std::vector<CycleSample> cycle;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto cols = detail::split(line);
        if (cols.size() != 2) {
            throw data_error(source, "row " + std::to_string(cycle.size() + 1), "expected two columns");
        }
        cycle.push_back({detail::parse_double(cols[0], source, "t_s"), detail::parse_double(cols[1], source, "v_mps")});
    }
    validate_cycle(cycle, source);
    return cycle;
}

inline std::vector<CycleSample> load_cycle_csv(const std::string& path)
{
    return parse_cycle_csv(detail::read_file(path), path);
}

inline std::string trace_csv(const DriveCycleResult& r)
{
    std::string out = "t_s,v_mps,t_whl_Nm,t_mg_Nm,t_mech_brk_Nm,p_mg_W,i_A,soc_pct,e_batt_J,x_m\n";
    for (const auto& row : r.trace) {
        out += detail::fmt(row.t) + ',' + detail::fmt(row.v) + ',' + detail::fmt(row.split.t_whl) + ',' +
               detail::fmt(row.split.t_mg) + ',' + detail::fmt(row.split.t_mech_brk) + ',' +
               detail::fmt(row.electrical.p_mg) + ',' + detail::fmt(row.electrical.i_batt) + ',' +
               detail::fmt(row.state.soc) + ',' + detail::fmt(row.state.e_batt) + ',' + detail::fmt(row.state.x) +
               '\n';
    }
    return out;
}

}  // namespace ecodrive
