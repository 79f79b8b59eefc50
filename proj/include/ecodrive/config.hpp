#pragma once

// JSON loading for the parameter, traffic, reward and learner sections.
// Every loader rejects unknown keys so that a typo never silently falls back
// to a default.

#include <filesystem>
#include <initializer_list>
#include <string>

#include <json.hpp>

#include "ecodrive/detail/csv.hpp"
#include "ecodrive/errors.hpp"
#include "ecodrive/learner.hpp"
#include "ecodrive/powertrain.hpp"
#include "ecodrive/reward.hpp"
#include "ecodrive/traffic.hpp"

namespace ecodrive {

using Json = nlohmann::json;

namespace detail {

/// Where a JSON value came from, for diagnostics: file plus dotted key path.
struct JsonCursor {
    const Json& j;
    std::string file;
    std::string path;

    JsonCursor child(const std::string& key) const
    {
        return {j.at(key), file, path.empty() ? key : path + "." + key};
    }

    bool has(const std::string& key) const { return j.is_object() && j.contains(key); }

    void expect_object() const
    {
        if (!j.is_object()) throw data_error(file, path, "expected an object");
    }

    void allow_keys(std::initializer_list<const char*> keys) const
    {
        expect_object();
        for (const auto& [k, v] : j.items()) {
            bool ok = false;
            for (const char* allowed : keys) ok = ok || k == allowed;
            if (!ok) throw data_error(file, path.empty() ? k : path + "." + k, "unknown key");
        }
    }

    double number() const
    {
        if (!j.is_number()) throw data_error(file, path, "expected a number");
        return j.get<double>();
    }

    long long integer() const
    {
        if (!j.is_number_integer()) throw data_error(file, path, "expected an integer");
        return j.get<long long>();
    }

    bool boolean() const
    {
        if (!j.is_boolean()) throw data_error(file, path, "expected true or false");
        return j.get<bool>();
    }

    std::string string() const
    {
        if (!j.is_string()) throw data_error(file, path, "expected a string");
        return j.get<std::string>();
    }

    std::vector<double> numbers() const
    {
        if (!j.is_array()) throw data_error(file, path, "expected an array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < j.size(); ++i) {
            out.push_back(JsonCursor{j[i], file, path + "[" + std::to_string(i) + "]"}.number());
        }
        return out;
    }

    void read(const char* key, double& out) const
    {
        if (has(key)) out = child(key).number();
    }
    void read(const char* key, int& out) const
    {
        if (has(key)) out = static_cast<int>(child(key).integer());
    }
    void read(const char* key, bool& out) const
    {
        if (has(key)) out = child(key).boolean();
    }
};

template <class F>
auto with_context(const JsonCursor& c, F&& f)
{
    try {
        return f();
    } catch (const std::invalid_argument& e) {
        throw data_error(c.file, c.path, e.what());
    }
}

inline LookupTable1D table1d(const JsonCursor& c)
{
    c.allow_keys({"breakpoints", "values"});
    return with_context(c, [&] {
        return LookupTable1D(c.child("breakpoints").numbers(), c.child("values").numbers());
    });
}

inline LookupTable2D table2d(const JsonCursor& c)
{
    c.allow_keys({"rows", "cols", "values"});
    const auto grid_c = c.child("values");
    if (!grid_c.j.is_array()) throw data_error(c.file, grid_c.path, "expected an array of rows");
    std::vector<std::vector<double>> grid;
    for (std::size_t i = 0; i < grid_c.j.size(); ++i) {
        grid.push_back(JsonCursor{grid_c.j[i], c.file, grid_c.path + "[" + std::to_string(i) + "]"}.numbers());
    }
    return with_context(c, [&] { return LookupTable2D(c.child("rows").numbers(), c.child("cols").numbers(), grid); });
}

inline Json to_json(const LookupTable1D& t) { return {{"breakpoints", t.breakpoints()}, {"values", t.values()}}; }

inline Json to_json(const LookupTable2D& t)
{
    Json grid = Json::array();
    for (std::size_t i = 0; i < t.rows().size(); ++i) {
        std::vector<double> row;
        for (std::size_t j = 0; j < t.cols().size(); ++j) row.push_back(t.at(i, j));
        grid.push_back(row);
    }
    return {{"rows", t.rows()}, {"cols", t.cols()}, {"values", grid}};
}

}  // namespace detail

inline Json parse_json_file(const std::string& path)
{
    const auto text = detail::read_file(path);
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw data_error(path, "", std::string{"invalid JSON: "} + e.what());
    }
}

inline Powertrain powertrain_from_json(const Json& j, const std::string& file = {})
{
    const detail::JsonCursor root{j, file, ""};
    root.allow_keys({"vehicle", "maps"});
    Powertrain pt = default_powertrain();
    if (root.has("vehicle")) {
        const auto c = root.child("vehicle");
        c.allow_keys({"gear_ratio", "wheel_radius_m", "mass_kg", "roll_a", "roll_b", "roll_c", "brake_torque_max_Nm",
                      "cells_series", "cells_parallel", "cell_capacity_Ah", "unit_gamma", "soc_min_pct",
                      "mpge_energy_floor_J", "literal_brake_split"});
        auto& p = pt.params;
        c.read("gear_ratio", p.gear_ratio);
        c.read("wheel_radius_m", p.wheel_radius);
        c.read("mass_kg", p.mass);
        c.read("roll_a", p.roll_a);
        c.read("roll_b", p.roll_b);
        c.read("roll_c", p.roll_c);
        c.read("brake_torque_max_Nm", p.brake_torque_max);
        c.read("cells_series", p.cells_series);
        c.read("cells_parallel", p.cells_parallel);
        c.read("cell_capacity_Ah", p.cell_capacity_ah);
        c.read("unit_gamma", p.unit_gamma);
        c.read("soc_min_pct", p.soc_min);
        c.read("mpge_energy_floor_J", p.mpge_energy_floor);
        c.read("literal_brake_split", p.literal_brake_split);
        detail::with_context(c, [&] { p.validate(); return 0; });
    }
    if (root.has("maps")) {
        const auto c = root.child("maps");
        c.allow_keys({"t_mg_max", "t_mg_reg_lim", "eta_mg", "f_reg", "v_oc", "r_cell"});
        auto& m = pt.maps;
        if (c.has("t_mg_max")) m.t_mg_max = detail::table1d(c.child("t_mg_max"));
        if (c.has("t_mg_reg_lim")) m.t_mg_reg_lim = detail::table1d(c.child("t_mg_reg_lim"));
        if (c.has("eta_mg")) m.eta_mg = detail::table2d(c.child("eta_mg"));
        if (c.has("f_reg")) m.f_reg = detail::table2d(c.child("f_reg"));
        if (c.has("v_oc")) m.v_oc = detail::table1d(c.child("v_oc"));
        if (c.has("r_cell")) m.r_cell = detail::table1d(c.child("r_cell"));
        detail::with_context(c, [&] { m.validate(); return 0; });
    }
    return pt;
}

inline Powertrain load_powertrain(const std::string& path) { return powertrain_from_json(parse_json_file(path), path); }

inline Json to_json(const Powertrain& pt)
{
    const auto& p = pt.params;
    Json vehicle = {{"gear_ratio", p.gear_ratio},
                    {"wheel_radius_m", p.wheel_radius},
                    {"mass_kg", p.mass},
                    {"roll_a", p.roll_a},
                    {"roll_b", p.roll_b},
                    {"roll_c", p.roll_c},
                    {"brake_torque_max_Nm", p.brake_torque_max},
                    {"cells_series", p.cells_series},
                    {"cells_parallel", p.cells_parallel},
                    {"cell_capacity_Ah", p.cell_capacity_ah},
                    {"unit_gamma", p.unit_gamma},
                    {"soc_min_pct", p.soc_min},
                    {"mpge_energy_floor_J", p.mpge_energy_floor},
                    {"literal_brake_split", p.literal_brake_split}};
    Json maps = {{"t_mg_max", detail::to_json(pt.maps.t_mg_max)}, {"t_mg_reg_lim", detail::to_json(pt.maps.t_mg_reg_lim)},
                 {"eta_mg", detail::to_json(pt.maps.eta_mg)},     {"f_reg", detail::to_json(pt.maps.f_reg)},
                 {"v_oc", detail::to_json(pt.maps.v_oc)},         {"r_cell", detail::to_json(pt.maps.r_cell)}};
    return {{"vehicle", vehicle}, {"maps", maps}};
}

inline TrafficConfig traffic_from_json(const detail::JsonCursor& c)
{
    c.allow_keys({"n_lanes", "road_length_m", "car_length_m", "car_width_m", "lane_width_m", "v_min_mps", "v_max_mps",
                  "accel", "hard_accel", "decel", "hard_decel", "dt_s", "close_upper_m", "far_lower_m",
                  "approach_upper_mps", "away_lower_mps", "speed_low_upper_mps", "speed_high_lower_mps",
                  "soc_low_upper_pct", "soc_high_lower_pct", "spawn_gap_factor", "spawn_speed_margin_mps"});
    TrafficConfig t;
    c.read("n_lanes", t.n_lanes);
    c.read("road_length_m", t.road_length);
    c.read("car_length_m", t.car_length);
    c.read("car_width_m", t.car_width);
    c.read("lane_width_m", t.lane_width);
    c.read("v_min_mps", t.v_min);
    c.read("v_max_mps", t.v_max);
    c.read("accel", t.accel);
    c.read("hard_accel", t.hard_accel);
    c.read("decel", t.decel);
    c.read("hard_decel", t.hard_decel);
    c.read("dt_s", t.dt);
    c.read("close_upper_m", t.close_upper);
    c.read("far_lower_m", t.far_lower);
    c.read("approach_upper_mps", t.approach_upper);
    c.read("away_lower_mps", t.away_lower);
    c.read("speed_low_upper_mps", t.speed_low_upper);
    c.read("speed_high_lower_mps", t.speed_high_lower);
    c.read("soc_low_upper_pct", t.soc_low_upper);
    c.read("soc_high_lower_pct", t.soc_high_lower);
    c.read("spawn_gap_factor", t.spawn_gap_factor);
    c.read("spawn_speed_margin_mps", t.spawn_speed_margin);
    detail::with_context(c, [&] { t.validate(); return 0; });
    return t;
}

inline RewardWeights reward_from_json(const detail::JsonCursor& c)
{
    c.allow_keys({"w1", "w2", "w3", "w4", "w5", "v_nominal_mps", "a_nominal_mps2"});
    RewardWeights w;
    c.read("w1", w.w1);
    c.read("w2", w.w2);
    c.read("w3", w.w3);
    c.read("w4", w.w4);
    c.read("w5", w.w5);
    c.read("v_nominal_mps", w.v_nominal);
    c.read("a_nominal_mps2", w.a_nominal);
    detail::with_context(c, [&] { w.validate(); return 0; });
    return w;
}

inline LearnerConfig learner_from_json(const detail::JsonCursor& c)
{
    c.allow_keys({"epsilon", "trace_cutoff", "baseline_includes_current", "constant_gamma"});
    LearnerConfig l;
    c.read("epsilon", l.epsilon);
    c.read("trace_cutoff", l.trace_cutoff);
    c.read("baseline_includes_current", l.baseline_includes_current);
    if (c.has("constant_gamma")) l.constant_gamma = c.child("constant_gamma").number();
    detail::with_context(c, [&] { l.validate(); return 0; });
    return l;
}

}  // namespace ecodrive
