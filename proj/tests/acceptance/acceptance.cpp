// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "ecodrive/ecodrive.hpp"

using namespace ecodrive;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, const std::function<Outcome()>& body)
{
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string{"exception: "} + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::printf("[%s] %2d %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
    std::fflush(stdout);
}

double elapsed_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string src(const std::string& rel) { return std::string{ECODRIVE_SOURCE_DIR} + "/" + rel; }

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

std::vector<double> ranks(const std::vector<double>& v)
{
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
        i = j + 1;
    }
    return r;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y)
{
    const auto rx = ranks(x);
    const auto ry = ranks(y);
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / rx.size();
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / ry.size();
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxx > 0 && syy > 0 ? sxy / std::sqrt(sxx * syy) : 0.0;
}

double quartile_mean(const std::vector<double>& v, bool last)
{
    const std::size_t q = v.size() / 4;
    const auto begin = last ? v.end() - static_cast<std::ptrdiff_t>(q) : v.begin();
    return std::accumulate(begin, begin + static_cast<std::ptrdiff_t>(q), 0.0) / static_cast<double>(q);
}

std::vector<double> read_trace(const fs::path& p)
{
    std::vector<double> out;
    const auto text = detail::read_file(p.string());
    std::size_t pos = text.find('\n') + 1;
    while (pos < text.size()) {
        const auto end = text.find('\n', pos);
        const auto line = text.substr(pos, end - pos);
        out.push_back(std::stod(line.substr(line.find(',') + 1)));
        pos = end + 1;
    }
    return out;
}

}  // namespace

int main()
{
    const auto scratch = fs::temp_directory_path() / "ecodrive_acceptance";
    fs::remove_all(scratch);
    fs::create_directories(scratch);
    const auto pt = load_powertrain(src("data/bev_default.json"));

    criterion(1, "battery quadratic residual", [&] {
        const auto t0 = std::chrono::steady_clock::now();
        Rng rng(2026);
        double worst = 0.0;
        int clamped = 0;
        for (int k = 0; k < 1000; ++k) {
            const double p_mg = uniform_real(rng, -150000.0, 150000.0);
            const double soc = uniform_real(rng, 0.0, 100.0);
            const auto bc = battery_current(p_mg, soc, pt.params, pt.maps);
            clamped += bc.clamped;
            const double a = static_cast<double>(pt.params.cells_series) / pt.params.cells_parallel * pt.maps.r_cell(soc);
            const double b = pt.params.cells_series * pt.maps.v_oc(soc);
            const double res = std::abs(a * bc.i * bc.i - b * bc.i + p_mg) / std::max(1.0, std::abs(p_mg));
            worst = std::max(worst, res);
        }
        const double secs = elapsed_since(t0);
        return Outcome{worst <= 1e-6 && clamped == 0 && secs < 1.0,
                       fmt("max scaled residual %.3g (limit 1e-6), %.0f clamped draws, %.4f s", worst, clamped, secs)};
    });

    criterion(2, "drive-cycle energy oracle", [&] {
        const auto t0 = std::chrono::steady_clock::now();
        const auto r = run_drive_cycle(load_cycle_csv(src("data/cycles/constant_20mps.csv")), 90.0, pt);
        const double secs = elapsed_since(t0);
        // Steady state at 90 % SOC: 100 s * N_s V_oc I with I the smaller root of
        // (N_s/N_p) R I^2 - N_s V_oc I + P_mg = 0, P_mg = 37.5 N m * 500 rad/s / 0.90875.
        const double oracle = 2065289.9580250508;
        const double rel = std::abs(r.final_state.e_batt / oracle - 1.0);
        return Outcome{rel <= 1e-3 && r.final_state.x == 2000.0 && secs < 1.0,
                       fmt("e_batt %.6f J vs oracle %.6f J (rel %.3g, limit 1e-3), x = %.17g m", r.final_state.e_batt,
                           oracle, rel, r.final_state.x)};
    });

    criterion(3, "MPGe unit identity", [&] {
        const auto m = mpge(PowertrainState{50.0, 1.2132e8, 1609.344, false}, pt.params);
        const double err = m ? std::abs(*m - 1.0) : 1.0;
        return Outcome{m && err <= 1e-9, fmt("MPGe %.17g, |error| %.3g (limit 1e-9)", m.value_or(NAN), err)};
    });

    criterion(4, "value-update micro-oracle", [&] {
        struct Step {
            std::uint32_t o;
            Action a;
            double r, baseline, gamma;
        };
        const Step script[] = {{0, Action::Maintain, 1.0, 0.0, 0.5},
                               {1, Action::Accelerate, -2.0, 1.0, 0.6},
                               {0, Action::Accelerate, 3.0, -0.5, 0.7},
                               {2, Action::Maintain, 0.5, 0.25, 0.8},
                               {0, Action::Maintain, -1.0, 0.5, 0.9}};
        ValueTables t;
        for (const auto& s : script) t.update(s.o, s.a, s.r, s.baseline, s.gamma, 0.0);
        struct Expect {
            const TableEntry* e;
            double v, beta;
            std::uint64_t k;
        };
        const Expect ex[] = {{t.state(0), 0.47346666666666665, 0.6741333333333334, 3},
                             {t.state(1), -1.166, 0.504, 1},
                             {t.state(2), -1.1, 0.9, 1},
                             {t.pair(0, Action::Maintain), -0.5998, 0.6512, 2},
                             {t.pair(0, Action::Accelerate), 2.62, 0.72, 1},
                             {t.pair(1, Action::Accelerate), -1.166, 0.504, 1},
                             {t.pair(2, Action::Maintain), -1.1, 0.9, 1}};
        double worst = 0.0;
        bool counts = true;
        for (const auto& e : ex) {
            if (!e.e) return Outcome{false, "missing table entry"};
            worst = std::max({worst, std::abs(e.e->value - e.v), std::abs(e.e->trace - e.beta)});
            counts = counts && e.e->visits == e.k;
        }
        return Outcome{worst <= 1e-9 && counts,
                       fmt("7 entries, max |error| %.3g (limit 1e-9), visit counts ", worst) +
                           (counts ? "match" : "differ")};
    });

    criterion(5, "simplex and encoding suites", [&] {
        Rng rng(55);
        ValueTables t;
        PolicyTable pi(ObservationKind::AV);
        std::vector<std::uint32_t> states;
        for (int k = 0; k < 64; ++k) states.push_back(static_cast<std::uint32_t>(uniform_int(rng, 0, 1594322)));
        double worst_sum = 0.0;
        double min_p = 1.0;
        for (int k = 0; k < 100000; ++k) {
            const auto o = states[static_cast<std::size_t>(uniform_int(rng, 0, 63))];
            t.update(o, action_from_index(uniform_int(rng, 0, 6)), uniform_real(rng, -100.0, 100.0),
                     uniform_real(rng, -5.0, 5.0), uniform_real(rng, 0.0, 1.0), 1e-8);
            improve_policy(pi, t, {o}, uniform_real(rng, 0.0, 0.5));
            const auto& row = pi.row(o);
            worst_sum = std::max(worst_sum, std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0));
            min_p = std::min(min_p, *std::min_element(row.begin(), row.end()));
        }
        int bad = 0;
        for (auto kind : {ObservationKind::LevelK, ObservationKind::AV}) {
            for (int k = 0; k < 10000; ++k) {
                const auto i = static_cast<std::uint32_t>(uniform_int(rng, 0, static_cast<int>(num_states(kind)) - 1));
                bad += encode_observation(decode_observation(i, kind)) != i;
            }
        }
        bad += encode_observation(decode_observation(0, ObservationKind::LevelK)) != 0;
        bad += encode_observation(decode_observation(0, ObservationKind::AV)) != 0;
        bad += encode_observation(decode_observation(177146, ObservationKind::LevelK)) != 177146;
        bad += encode_observation(decode_observation(1594322, ObservationKind::AV)) != 1594322;
        Observation all2{ObservationKind::LevelK, {}};
        for (int i = 0; i < 11; ++i) all2.features[static_cast<std::size_t>(i)] = 2;
        bad += encode_observation(all2) != 177146;
        all2.kind = ObservationKind::AV;
        for (int i = 0; i < 13; ++i) all2.features[static_cast<std::size_t>(i)] = 2;
        bad += encode_observation(all2) != 1594322;
        return Outcome{worst_sum <= 1e-9 && min_p >= 0.0 && bad == 0,
                       fmt("1e5 improvements: max |row sum - 1| %.3g, min p %.3g; %.0f encoding mismatches", worst_sum,
                           min_p, bad)};
    });

    criterion(6, "level-0 never changes lanes", [&] {
        ExperimentConfig cfg;
        cfg.powertrain = pt;
        EvaluationSpec spec;
        spec.densities = {0, 15, 30};
        spec.episodes = 1000;
        spec.mixture = {1.0, 0.0, 0.0};
        const auto r = run_evaluation(cfg, spec, DeployablePolicy::level0(ObservationKind::AV), {}, 4);
        double lane_changes = 0.0;
        for (const auto& e : r.episodes) lane_changes += e.lane_changes;
        const std::pair<std::pair<int, int>, Action> table[] = {
            {{kFar, kAway}, Action::Maintain},          {{kFar, kStable}, Action::Maintain},
            {{kFar, kApproaching}, Action::Maintain},   {{kNominal, kAway}, Action::Maintain},
            {{kNominal, kStable}, Action::Maintain},    {{kNominal, kApproaching}, Action::Decelerate},
            {{kClose, kAway}, Action::Decelerate},      {{kClose, kStable}, Action::Decelerate},
            {{kClose, kApproaching}, Action::HardDecelerate}};
        int table_bad = 0;
        for (const auto& [k, a] : table) {
            table_bad += level0_policy(static_cast<std::uint8_t>(k.first), static_cast<std::uint8_t>(k.second)) != a;
        }
        return Outcome{lane_changes == 0.0 && table_bad == 0,
                       fmt("%.0f lane changes over 3 x 1000 episodes (n_c 0/15/30); %.0f of 9 rule cases wrong",
                           lane_changes, table_bad)};
    });

    criterion(7, "collision penalty plumbing", [&] {
        const RewardWeights w;
        const TrafficConfig tc;
        const double v_max_feature = (tc.v_max - w.v_nominal) / w.a_nominal;
        const double bound = -10000.0 + (w.w2 * v_max_feature + w.w3);
        double worst = -1e300;
        for (int a = 0; a < kNumActions; ++a) {
            for (std::uint8_t h : {kFar, kNominal, kClose}) {
                for (double v : {tc.v_min, w.v_nominal, tc.v_max}) {
                    Observation o{ObservationKind::AV, {}};
                    o.features[kFrontRange] = h;
                    worst = std::max(worst, compute_reward(o, action_from_index(a), true, v, {}, w, false).total);
                }
            }
        }
        Observation neutral{ObservationKind::AV, {}};
        neutral.features[kFrontRange] = kNominal;
        const double injected = compute_reward(neutral, Action::Maintain, true, w.v_nominal, {}, w, false).total;
        return Outcome{worst <= bound && injected == -10000.0,
                       fmt("max collision-step reward %.6g <= bound %.6g; neutral collision step %.6g", worst, bound,
                           injected)};
    });

    // Desk-scale pipeline shared by criteria 8-10.
    const auto desk = load_experiment(src("configs/desk_scale.json"));
    const auto desk_dir = scratch / "desk";
    const auto t_pipe = std::chrono::steady_clock::now();
    std::string pipeline_error;
    try {
        bootstrap_pipeline(desk.config, *desk.pipeline, desk_dir);
    } catch (const std::exception& e) {
        pipeline_error = e.what();
    }
    const double pipeline_secs = elapsed_since(t_pipe);

    criterion(8, "desk-scale convergence", [&] {
        if (!pipeline_error.empty()) return Outcome{false, "pipeline failed: " + pipeline_error};
        std::string detail;
        bool pass = false;
        for (const char* name : {"level1", "level2", "av", "benchmark"}) {
            const auto trace = read_trace(desk_dir / (std::string{name} + ".reward_trace.csv"));
            const double first = quartile_mean(trace, false);
            const double last = quartile_mean(trace, true);
            if (std::string{name} == "av") pass = trace.size() == 2000 && last > first;
            detail += std::string{name} + fmt(" %.4g -> %.4g; ", first, last);
        }
        return Outcome{pass, "first -> last quartile mean reward: " + detail +
                                 fmt("AV trace decides; pipeline %.1f s", pipeline_secs)};
    });

    EvaluationResult eval1;
    std::string eval_error;
    try {
        const auto env = load_environment(
            [&] {
                auto f = desk;
                f.policies = {{"level1", (desk_dir / "level1.policy.csv").string()},
                              {"level2", (desk_dir / "level2.policy.csv").string()}};
                return f;
            }(),
            desk.evaluation->mixture, desk.config.traffic.threshold_hash());
        const auto av = load_policy((desk_dir / "av.policy.csv").string()).policy;
        eval1 = run_evaluation(desk.config, *desk.evaluation, av, env, 1);
    } catch (const std::exception& e) {
        eval_error = e.what();
    }

    criterion(9, "directional density trends", [&] {
        if (!eval_error.empty()) return Outcome{false, "evaluation failed: " + eval_error};
        std::vector<double> n, speed, mpge_v;
        bool defined = true;
        std::string detail;
        for (const auto& d : eval1.densities) {
            n.push_back(d.n_c);
            speed.push_back(d.mean_speed);
            defined = defined && d.mean_mpge.has_value();
            mpge_v.push_back(d.mean_mpge.value_or(NAN));
            detail += fmt("n_c=%.0f: %.4g m/s, %.5g MPGe; ", d.n_c, d.mean_speed, d.mean_mpge.value_or(NAN));
        }
        bool speed_mono = true, mpge_mono = true;
        for (std::size_t i = 1; i < n.size(); ++i) {
            speed_mono = speed_mono && speed[i] <= speed[i - 1];
            mpge_mono = mpge_mono && mpge_v[i] >= mpge_v[i - 1];
        }
        const double rho_speed = spearman(n, speed);
        const double rho_mpge = spearman(n, mpge_v);
        const bool episodes_ok = std::all_of(eval1.densities.begin(), eval1.densities.end(),
                                             [](const auto& d) { return d.episodes >= 500; });
        return Outcome{defined && episodes_ok && speed_mono && mpge_mono && rho_speed < 0.0 && rho_mpge > 0.0,
                       detail + fmt("Spearman rho speed %.3g, MPGe %.3g", rho_speed, rho_mpge)};
    });

    criterion(10, "determinism", [&] {
        if (!pipeline_error.empty() || !eval_error.empty()) return Outcome{false, "upstream run failed"};
        const auto again = scratch / "desk_again";
        bootstrap_pipeline(desk.config, *desk.pipeline, again);
        int differing = 0;
        for (const char* f : {"level1.policy.csv", "level2.policy.csv", "av.policy.csv", "benchmark.policy.csv",
                              "level1.reward_trace.csv", "level2.reward_trace.csv", "av.reward_trace.csv",
                              "benchmark.reward_trace.csv"}) {
            differing += detail::read_file((desk_dir / f).string()) != detail::read_file((again / f).string());
        }
        auto f = desk;
        f.policies = {{"level1", (again / "level1.policy.csv").string()},
                      {"level2", (again / "level2.policy.csv").string()}};
        const auto env = load_environment(f, desk.evaluation->mixture, desk.config.traffic.threshold_hash());
        const auto av = load_policy((again / "av.policy.csv").string()).policy;
        const auto eval8 = run_evaluation(desk.config, *desk.evaluation, av, env, 8);
        const bool metrics_same = metrics_csv(eval1.densities) == metrics_csv(eval8.densities) &&
                                  episodes_csv(eval1.episodes) == episodes_csv(eval8.episodes);
        return Outcome{differing == 0 && metrics_same,
                       fmt("%.0f of 8 training artifacts differ on rerun; metrics with 1 vs 8 workers ", differing) +
                           (metrics_same ? "identical" : "differ")};
    });

    fs::remove_all(scratch);
    std::printf("%s: %d of 10 criteria failed\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
    return failures == 0 ? 0 : 1;
}
