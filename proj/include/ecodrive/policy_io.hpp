#pragma once

// Policy file (CSV, version 1):
//
//   ecodrive_policy,1
//   kind,<levelk|av>
//   n_actions,7
//   fallback_n,<n>
//   threshold_hash,<16 hex digits>
//   state_index,p0,p1,p2,p3,p4,p5,p6,k_visits
//   <one row per explicit state, ascending state_index>
//
// Probabilities are written with 17 significant digits so a read-back is
// bit-identical. The level-0 fallback is not baked in: states with
// k_visits < fallback_n use the rule at load time.

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>

#include "ecodrive/config.hpp"
#include "ecodrive/detail/csv.hpp"
#include "ecodrive/learner.hpp"

namespace ecodrive {

inline constexpr int kPolicyFormatVersion = 1;

struct PolicyHeader {
    int version = kPolicyFormatVersion;
    ObservationKind kind = ObservationKind::AV;
    int n_actions = kNumActions;
    int fallback_n = 0;
    std::uint64_t threshold_hash = 0;
};

inline std::string hex64(std::uint64_t v)
{
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
    return buf;
}

inline std::string policy_csv(const DeployablePolicy& policy, std::uint64_t threshold_hash)
{
    std::string out;
    out += "ecodrive_policy," + std::to_string(kPolicyFormatVersion) + "\n";
    out += "kind," + std::string{to_string(policy.kind())} + "\n";
    out += "n_actions," + std::to_string(kNumActions) + "\n";
    out += "fallback_n," + std::to_string(policy.fallback_n()) + "\n";
    out += "threshold_hash," + hex64(threshold_hash) + "\n";
    out += "state_index,p0,p1,p2,p3,p4,p5,p6,k_visits\n";
    for (std::uint32_t o : policy.learned().sorted_states()) {
        out += std::to_string(o);
        for (double p : policy.learned().row(o)) out += ',' + detail::fmt_exact(p);
        out += ',' + std::to_string(policy.visits(o)) + '\n';
    }
    return out;
}

struct LoadedPolicy {
    PolicyHeader header;
    DeployablePolicy policy;
};

inline LoadedPolicy parse_policy_csv(const std::string& text, const std::string& source)
{
    std::istringstream in(text);
    std::string line;
    auto expect_pair = [&](const char* key) {
        if (!std::getline(in, line)) throw data_error(source, key, "missing header line");
        const auto cols = detail::split(line);
        if (cols.size() != 2 || cols[0] != key) throw data_error(source, key, "malformed header line '" + line + "'");
        return cols[1];
    };
    PolicyHeader h;
    try {
        h.version = std::stoi(expect_pair("ecodrive_policy"));
        if (h.version != kPolicyFormatVersion) {
            throw data_error(source, "ecodrive_policy", "unsupported format version " + std::to_string(h.version));
        }
        h.kind = observation_kind_from_string(expect_pair("kind"));
        h.n_actions = std::stoi(expect_pair("n_actions"));
        if (h.n_actions != kNumActions) throw data_error(source, "n_actions", "expected 7");
        h.fallback_n = std::stoi(expect_pair("fallback_n"));
        if (h.fallback_n < 0) throw data_error(source, "fallback_n", "must be non-negative");
        h.threshold_hash = std::stoull(expect_pair("threshold_hash"), nullptr, 16);
    } catch (const DataError&) {
        throw;
    } catch (const std::exception& e) {
        throw data_error(source, "header", e.what());
    }
    if (!std::getline(in, line) || detail::split(line).size() != 9 || detail::split(line)[0] != "state_index") {
        throw data_error(source, "state_index", "missing column header");
    }
    PolicyTable table(h.kind);
    std::unordered_map<std::uint32_t, std::uint64_t> visits;
    std::size_t row_no = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        ++row_no;
        const auto cols = detail::split(line);
        const std::string where = "row " + std::to_string(row_no);
        if (cols.size() != 9) throw data_error(source, where, "expected 9 columns");
        std::uint64_t index = 0;
        std::uint64_t k = 0;
        try {
            index = std::stoull(cols[0]);
            k = std::stoull(cols[8]);
        } catch (const std::exception&) {
            throw data_error(source, where, "state_index and k_visits must be non-negative integers");
        }
        if (index >= num_states(h.kind)) throw data_error(source, where, "state_index out of range for kind");
        ActionRow row{};
        double sum = 0.0;
        for (int a = 0; a < kNumActions; ++a) {
            row[static_cast<std::size_t>(a)] = detail::parse_double(cols[static_cast<std::size_t>(a) + 1], source,
                                                                    where + " p" + std::to_string(a));
            if (row[static_cast<std::size_t>(a)] < 0.0) throw data_error(source, where, "negative probability");
            sum += row[static_cast<std::size_t>(a)];
        }
        if (std::abs(sum - 1.0) > 1e-9) throw data_error(source, where, "probabilities do not sum to 1");
        table.set_row(static_cast<std::uint32_t>(index), row);
        if (k > 0) visits[static_cast<std::uint32_t>(index)] = k;
    }
    return {h, DeployablePolicy(std::move(table), std::move(visits), h.fallback_n)};
}

inline LoadedPolicy load_policy(const std::string& path)
{
    return parse_policy_csv(detail::read_file(path), path);
}

inline void save_policy(const std::string& path, const DeployablePolicy& policy, std::uint64_t threshold_hash)
{
    detail::write_file(path, policy_csv(policy, threshold_hash));
}

// Learner checkpoint: everything needed to continue training at an episode
// boundary (traces are zero there and are not stored).
inline Json learner_to_json(const JaakkolaLearner& learner)
{
    Json rows = Json::array();
    for (std::uint32_t o : learner.policy().sorted_states()) {
        const auto& r = learner.policy().row(o);
        Json rec = Json::array({o});
        for (double p : r) rec.push_back(p);
        rows.push_back(rec);
    }
    std::vector<std::uint32_t> skeys;
    for (const auto& kv : learner.tables().states()) skeys.push_back(kv.first);
    std::sort(skeys.begin(), skeys.end());
    Json states = Json::array();
    for (auto k : skeys) {
        const auto& e = learner.tables().states().at(k);
        states.push_back(Json::array({k, e.value, e.visits}));
    }
    std::vector<std::uint64_t> pkeys;
    for (const auto& kv : learner.tables().pairs()) pkeys.push_back(kv.first);
    std::sort(pkeys.begin(), pkeys.end());
    Json pairs = Json::array();
    for (auto k : pkeys) {
        const auto& e = learner.tables().pairs().at(k);
        pairs.push_back(Json::array({k, e.value, e.visits}));
    }
    return {{"kind", std::string{to_string(learner.policy().kind())}},
            {"average_reward", learner.average().mean},
            {"steps", learner.average().t},
            {"policy", rows},
            {"states", states},
            {"pairs", pairs}};
}

inline void learner_from_json(JaakkolaLearner& learner, const Json& j, const std::string& source)
{
    try {
        if (observation_kind_from_string(j.at("kind").get<std::string>()) != learner.policy().kind()) {
            throw data_error(source, "kind", "checkpoint kind does not match the training spec");
        }
        learner.average().mean = j.at("average_reward").get<double>();
        learner.average().t = j.at("steps").get<std::uint64_t>();
        for (const auto& rec : j.at("policy")) {
            ActionRow r{};
            for (int a = 0; a < kNumActions; ++a) r[static_cast<std::size_t>(a)] = rec.at(static_cast<std::size_t>(a) + 1).get<double>();
            learner.policy().set_row(rec.at(0).get<std::uint32_t>(), r);
        }
        for (const auto& rec : j.at("states")) {
            learner.tables().restore_state(rec.at(0).get<std::uint32_t>(), rec.at(1).get<double>(),
                                           rec.at(2).get<std::uint64_t>());
        }
        for (const auto& rec : j.at("pairs")) {
            learner.tables().restore_pair(rec.at(0).get<std::uint64_t>(), rec.at(1).get<double>(),
                                          rec.at(2).get<std::uint64_t>());
        }
    } catch (const Json::exception& e) {
        throw data_error(source, "learner", e.what());
    }
}

}  // namespace ecodrive
