// ecodrive: batch entry point for training, evaluation, drive cycles and
// policy inspection.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ecodrive/ecodrive.hpp"

namespace fs = std::filesystem;
using namespace ecodrive;

namespace {

int verbosity = 0;

void log(int level, const std::string& msg)
{
    if (verbosity >= level) std::cerr << msg << '\n';
}

std::optional<std::uint64_t> seed_override(const std::optional<std::uint64_t>& flag)
{
    if (flag) return flag;
    if (const char* env = std::getenv("ECODRIVE_SEED")) {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(env, &used);
            if (used == std::string{env}.size()) return v;
        } catch (const std::exception&) {
        }
        throw DataError(std::string{"ECODRIVE_SEED: expected a non-negative integer, got '"} + env + "'");
    }
    return std::nullopt;
}

void require_file(const std::string& path)
{
    if (!fs::is_regular_file(path)) throw DataError(path + ": file not found");
}

std::function<void(int, double)> progress_printer(const std::string& name, int total)
{
    if (verbosity < 1) return {};
    const int every = std::max(1, total / 20);
    return [name, total, every](int ep, double avg) {
        if (ep % every == 0 || ep == total) {
            std::fprintf(stderr, "%s: episode %d/%d average reward %.6g\n", name.c_str(), ep, total, avg);
        }
    };
}

int cmd_train(const std::string& spec_path, const std::string& out, std::optional<std::uint64_t> seed,
              const std::string& resume)
{
    require_file(spec_path);
    auto file = load_experiment(spec_path);
    if (!file.training) throw data_error(spec_path, "training", "missing section");
    if (auto s = seed_override(seed)) file.config.seed = *s;
    const auto thash = file.config.traffic.threshold_hash();
    const auto& spec = *file.training;
    const auto env = load_environment(file, spec.mixture, thash);

    fs::create_directories(out);
    TrainingOptions opts;
    opts.checkpoint_path = (fs::path(out) / "checkpoint.json").string();
    if (!resume.empty()) {
        require_file(resume);
        opts.resume_path = resume;
    }
    opts.progress = progress_printer(std::string{to_string(spec.target)}, spec.episodes);
    auto result = run_training(file.config, spec, env, opts);
    save_policy((fs::path(out) / "policy.csv").string(), result.policy, thash);
    detail::write_file((fs::path(out) / "reward_trace.csv").string(), reward_trace_csv(result.reward_trace));
    log(1, "wrote " + (fs::path(out) / "policy.csv").string() + " (" + std::to_string(result.policy.visited_states()) +
               " visited states)");
    return 0;
}

int cmd_pipeline(const std::string& config_path, const std::string& out, std::optional<std::uint64_t> seed)
{
    require_file(config_path);
    auto file = load_experiment(config_path);
    if (auto s = seed_override(seed)) file.config.seed = *s;
    const PipelineSpec spec = file.pipeline.value_or(PipelineSpec{});
    std::function<void(const std::string&, int, double)> progress;
    if (verbosity >= 1) {
        progress = [&](const std::string& name, int ep, double avg) {
            const int total = name == "level1" ? spec.level1.episodes
                              : name == "level2" ? spec.level2.episodes
                              : name == "av"     ? spec.av.episodes
                                                 : spec.benchmark.episodes;
            progress_printer(name, total)(ep, avg);
        };
    }
    const auto result = bootstrap_pipeline(file.config, spec, out, progress);
    for (const auto& a : result.artifacts) log(1, "wrote " + (fs::path(out) / a.policy_file).string());
    return 0;
}

int cmd_evaluate(const std::string& policy_path, const std::string& spec_path, const std::string& out, int workers,
                 std::optional<std::uint64_t> seed)
{
    require_file(spec_path);
    auto file = load_experiment(spec_path);
    if (auto s = seed_override(seed)) file.config.seed = *s;
    const auto thash = file.config.traffic.threshold_hash();
    std::optional<DeployablePolicy> ego;
    if (policy_path == "builtin:level0") {
        ego = DeployablePolicy::level0(ObservationKind::AV);
    } else {
        require_file(policy_path);
        auto loaded = load_policy(policy_path);
        if (loaded.header.threshold_hash != thash) {
            throw data_error(policy_path, "threshold_hash", "policy was trained with different category thresholds");
        }
        ego = std::move(loaded.policy);
    }
    const EvaluationSpec spec = file.evaluation.value_or(EvaluationSpec{});
    const auto env = load_environment(file, spec.mixture, thash);
    const auto result = run_evaluation(file.config, spec, *ego, env, workers);
    fs::create_directories(out);
    detail::write_file((fs::path(out) / "metrics_by_density.csv").string(), metrics_csv(result.densities));
    detail::write_file((fs::path(out) / "episodes.csv").string(), episodes_csv(result.episodes));
    if (verbosity >= 1) std::cerr << metrics_csv(result.densities);
    return 0;
}

int cmd_drive_cycle(const std::string& cycle_path, const std::string& params_path, double soc0,
                    const std::string& out)
{
    require_file(cycle_path);
    require_file(params_path);
    const auto pt = load_powertrain(params_path);
    const auto cycle = load_cycle_csv(cycle_path);
    const auto result = run_drive_cycle(cycle, soc0, pt);
    if (const auto dir = fs::path(out).parent_path(); !dir.empty()) fs::create_directories(dir);
    detail::write_file(out, trace_csv(result));
    if (result.mpge) {
        std::printf("mpge,%s\n", detail::fmt_exact(*result.mpge).c_str());
    } else {
        std::printf("mpge,undefined\n");
    }
    std::printf("soc_pct,%s\n", detail::fmt_exact(result.final_state.soc).c_str());
    std::printf("e_batt_J,%s\n", detail::fmt_exact(result.final_state.e_batt).c_str());
    std::printf("x_m,%s\n", detail::fmt_exact(result.final_state.x).c_str());
    return 0;
}

int cmd_inspect(const std::string& policy_path, const std::optional<long long>& state)
{
    require_file(policy_path);
    const auto loaded = load_policy(policy_path);
    const auto& h = loaded.header;
    std::printf("format_version,%d\n", h.version);
    std::printf("kind,%s\n", std::string{to_string(h.kind)}.c_str());
    std::printf("n_actions,%d\n", h.n_actions);
    std::printf("fallback_n,%d\n", h.fallback_n);
    std::printf("threshold_hash,%s\n", hex64(h.threshold_hash).c_str());
    std::printf("visited_states,%zu\n", loaded.policy.visited_states());
    if (state) {
        if (*state < 0 || static_cast<std::uint64_t>(*state) >= num_states(h.kind)) {
            throw DataError("--state " + std::to_string(*state) + " is out of range for kind " +
                            std::string{to_string(h.kind)});
        }
        const auto o = static_cast<std::uint32_t>(*state);
        const auto row = loaded.policy.row(o);
        std::printf("state_index,%u\n", o);
        std::printf("source,%s\n", loaded.policy.uses_learned(o) ? "learned" : "level0");
        std::printf("k_visits,%llu\n", static_cast<unsigned long long>(loaded.policy.visits(o)));
        for (int a = 0; a < kNumActions; ++a) {
            std::printf("%s,%s\n", std::string{to_string(action_from_index(a))}.c_str(),
                        detail::fmt_exact(row[static_cast<std::size_t>(a)]).c_str());
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Eco-driving simulation, training and evaluation"};
    app.require_subcommand(1);
    app.add_flag("-v,--verbose", verbosity, "Progress on standard error (repeat for more)");

    std::string spec, out, resume, config, policy, cycle, params;
    std::optional<std::uint64_t> seed;
    std::optional<long long> state;
    int workers = 1;
    double soc0 = 90.0;

    auto* train = app.add_subcommand("train", "Train one policy");
    train->add_option("--spec", spec, "Experiment spec (JSON)")->required();
    train->add_option("--out", out, "Output directory")->required();
    train->add_option("--seed", seed, "Seed (default: ECODRIVE_SEED, then the spec)");
    train->add_option("--resume", resume, "Checkpoint to continue from");

    auto* pipeline = app.add_subcommand("pipeline", "Train level-1, level-2, AV and benchmark policies");
    pipeline->add_option("--config", config, "Experiment spec (JSON)")->required();
    pipeline->add_option("--out", out, "Output directory")->required();
    pipeline->add_option("--seed", seed, "Seed (default: ECODRIVE_SEED, then the spec)");

    auto* evaluate = app.add_subcommand("evaluate", "Evaluate a frozen policy across densities");
    evaluate->add_option("--policy", policy, "Policy file or builtin:level0")->required();
    evaluate->add_option("--spec", spec, "Experiment spec (JSON)")->required();
    evaluate->add_option("--out", out, "Output directory")->required();
    evaluate->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
    evaluate->add_option("--seed", seed, "Seed (default: ECODRIVE_SEED, then the spec)");

    auto* drive = app.add_subcommand("drive-cycle", "Run the powertrain over a speed trace");
    drive->add_option("--cycle", cycle, "Cycle CSV (t_s,v_mps)")->required();
    drive->add_option("--params", params, "Powertrain parameters (JSON)")->required();
    drive->add_option("--soc0", soc0, "Initial SOC [%]")->required()->check(CLI::Range(0.0, 100.0));
    drive->add_option("--out", out, "Trace CSV to write")->required();

    auto* inspect = app.add_subcommand("inspect-policy", "Print a policy file header");
    inspect->add_option("--policy", policy, "Policy file")->required();
    inspect->add_option("--state", state, "Also print this state's action row");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*train) return cmd_train(spec, out, seed, resume);
        if (*pipeline) return cmd_pipeline(config, out, seed);
        if (*evaluate) return cmd_evaluate(policy, spec, out, workers, seed);
        if (*drive) return cmd_drive_cycle(cycle, params, soc0, out);
        if (*inspect) return cmd_inspect(policy, state);
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
