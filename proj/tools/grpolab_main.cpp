#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "grpolab/config.hpp"
#include "grpolab/experiment.hpp"
#include "grpolab/gradcheck.hpp"
#include "grpolab/tasks.hpp"

namespace fs = std::filesystem;
using namespace grpolab;

namespace {

// exit codes: 0 ok, 1 generic failure, 2 config/validation error,
// 3 mid-run abort, 4 replay mismatch
constexpr int kOk = 0, kFail = 1, kConfigError = 2, kAbort = 3, kReplayMismatch = 4;

fs::path output_root(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("GRPOLAB_OUT"); env && *env) return env;
    return "runs";
}

std::string default_label(const ExperimentConfig& cfg) {
    return algo_name(cfg.train.algo) + "_" + task_kind_name(cfg.task.kind) + "_s" +
           std::to_string(cfg.train.master_seed);
}

struct RunFlags {
    std::string config, algo, arm_mode, skip_rule, label, out;
    std::uint64_t seed = 0;
    double alpha = 0.0, lr = 0.0, fraction = 0.0;
    int steps = 0;
};

// Config-file values overlaid with explicit command-line flags.
ExperimentConfig effective_config(const CLI::App* cmd, const RunFlags& f) {
    ExperimentConfig cfg =
        f.config.empty() ? default_experiment_config() : load_experiment_file(f.config).config;
    if (cmd->count("--algo")) cfg.train.algo = algo_from_name(f.algo);
    if (cmd->count("--arm-mode")) cfg.train.arm.mode = arm_mode_from_name(f.arm_mode);
    if (cmd->count("--skip-rule")) cfg.train.arm.skip_rule = skip_rule_from_name(f.skip_rule);
    if (cmd->count("--algo") && cfg.train.algo != Algo::progrpo && !cmd->count("--arm-mode"))
        cfg.train.arm.mode = ArmMode::off;
    if (cfg.train.algo == Algo::progrpo && cfg.train.arm.mode == ArmMode::off &&
        !cmd->count("--arm-mode")) {
        // progrpo without a configured mode means the standard re-weighting
        cfg.train.arm.mode = ArmMode::prompt_minus_answer;
    }
    if (cmd->count("--alpha")) cfg.train.arm.alpha = f.alpha;
    if (cmd->count("--seed")) cfg.train.master_seed = f.seed;
    if (cmd->count("--steps")) cfg.train.total_steps = f.steps;
    if (cmd->count("--lr")) cfg.train.learning_rate = f.lr;
    if (cmd->count("--fraction")) cfg.train.fraction = f.fraction;
    cfg.validate();
    return cfg;
}

void add_run_flags(CLI::App* cmd, RunFlags& f) {
    cmd->add_option("-c,--config", f.config, "experiment config file (INI)");
    cmd->add_option("--algo", f.algo, "grpo | progrpo | reinforce");
    cmd->add_option("--arm-mode", f.arm_mode,
                    "off | prompt_minus_answer | one_minus_answer | one_minus_both | "
                    "group_mean_minus_answer");
    cmd->add_option("--skip-rule", f.skip_rule, "all_incorrect | both_degenerate");
    cmd->add_option("--alpha", f.alpha, "re-weighting coefficient");
    cmd->add_option("--seed", f.seed, "master seed");
    cmd->add_option("--steps", f.steps, "training steps");
    cmd->add_option("--lr", f.lr, "learning rate");
    cmd->add_option("--fraction", f.fraction, "low-probability position share");
    cmd->add_option("--label", f.label, "run directory name");
    cmd->add_option("-o,--out", f.out, "output root (default $GRPOLAB_OUT or ./runs)");
}

int cmd_run(const CLI::App* cmd, const RunFlags& f) {
    ExperimentConfig cfg;
    try {
        cfg = effective_config(cmd, f);
    } catch (const std::exception& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return kConfigError;
    }
    try {
        RunResult res = run_experiment(cfg, output_root(f.out),
                                       f.label.empty() ? default_label(cfg) : f.label);
        std::cout << "run completed: " << res.dir.string() << "\n"
                  << "  steps " << res.completed_steps << "  pass@1 " << res.final_pass1
                  << "  mean reward " << res.final_mean_reward << "\n";
        return kOk;
    } catch (const std::exception& ex) {
        std::cerr << "run aborted: " << ex.what() << "\n";
        return kAbort;
    }
}

int cmd_sweep(const CLI::App* cmd, const RunFlags& f, const std::string& axis,
              const std::string& values_csv, const std::string& seeds_csv) {
    ExperimentConfig cfg;
    SweepSpec spec;
    try {
        std::optional<SweepSpec> from_file;
        if (!f.config.empty()) {
            ExperimentFile file = load_experiment_file(f.config);
            from_file = file.sweep;
        }
        cfg = effective_config(cmd, f);
        if (from_file) spec = *from_file;
        if (!axis.empty()) spec.axis = axis;
        if (!values_csv.empty()) {
            spec.values.clear();
            std::string v = values_csv;
            std::replace(v.begin(), v.end(), ',', ' ');
            std::istringstream is(v);
            for (std::string tok; is >> tok;) spec.values.push_back(tok);
        }
        if (!seeds_csv.empty()) {
            spec.seeds.clear();
            std::string v = seeds_csv;
            std::replace(v.begin(), v.end(), ',', ' ');
            std::istringstream is(v);
            for (std::string tok; is >> tok;) {
                auto dots = tok.find("..");
                if (dots == std::string::npos) {
                    spec.seeds.push_back(std::stoull(tok));
                } else {
                    std::uint64_t a = std::stoull(tok.substr(0, dots));
                    std::uint64_t b = std::stoull(tok.substr(dots + 2));
                    for (std::uint64_t s = a; s <= b; ++s) spec.seeds.push_back(s);
                }
            }
        }
        std::replace(spec.axis.begin(), spec.axis.end(), '-', '_');
        spec.validate();
    } catch (const std::exception& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return kConfigError;
    }
    SweepResult res = run_sweep(cfg, spec, output_root(f.out),
                                f.label.empty() ? "sweep_" + spec.axis : f.label, &std::cout);
    std::cout << "sweep directory: " << res.dir.string() << "\n";
    int failed = 0;
    for (const SweepRow& row : res.rows) failed += row.failed;
    if (failed > 0) {
        std::cerr << failed << " run(s) failed; see summary.json\n";
        return kFail;
    }
    return kOk;
}

int cmd_replay(const std::string& manifest, const RunFlags& f) {
    try {
        ReplayResult res = replay_manifest(manifest, output_root(f.out), f.label);
        std::cout << "replayed " << res.rerun.completed_steps
                  << " steps into " << res.rerun.dir.string() << "\n";
        if (!res.compared) {
            std::cout << "original metrics stream not found (" << res.original_metrics
                      << "); comparison skipped\n";
            return kOk;
        }
        if (res.identical) {
            std::cout << "metrics stream identical to " << res.original_metrics << "\n";
            return kOk;
        }
        std::cerr << "METRICS STREAM DIFFERS from " << res.original_metrics << "\n";
        return kReplayMismatch;
    } catch (const std::exception& ex) {
        std::cerr << "replay failed: " << ex.what() << "\n";
        return kConfigError;
    }
}

int cmd_enumerate(const std::string& config_path, std::size_t limit) {
    try {
        ExperimentFile file = load_experiment_file(config_path);
        TaskSpec task = file.config.task.build();
        std::cout << "task " << task_kind_name(task.kind) << ", vocab " << task.vocab.size()
                  << " tokens, max_response_len " << task.max_response_len << "\n";
        for (const PromptCase& pc : task.prompt_space) {
            SuccessSet s = enumerate_success_set(task, pc.prompt);
            std::cout << "prompt \"" << task.vocab.render(pc.prompt, "") << "\": "
                      << s.cardinality() << " correct response(s)\n";
            std::size_t shown = 0;
            for (const TokenSeq& m : s.members) {
                if (limit > 0 && shown >= limit) {
                    std::cout << "  ... and " << (s.cardinality() - shown) << " more\n";
                    break;
                }
                std::cout << "  " << task.vocab.render(m) << "\n";
                ++shown;
            }
        }
        return kOk;
    } catch (const std::exception& ex) {
        std::cerr << "enumerate failed: " << ex.what() << "\n";
        return kConfigError;
    }
}

int cmd_check_gradients(int instances, std::uint64_t seed, double h, double tolerance) {
    try {
        GradCheckReport rep = run_gradient_check(instances, seed, h, tolerance, &std::cerr);
        std::cout << "checked " << rep.instances << " randomized instances (" << rep.retries
                  << " boundary redraws)\n"
                  << "max abs gradient error " << rep.max_abs_err << " vs tolerance "
                  << rep.tolerance << "\n"
                  << (rep.pass ? "PASS" : "FAIL") << "\n";
        return rep.pass ? kOk : kFail;
    } catch (const std::exception& ex) {
        std::cerr << "gradient check failed: " << ex.what() << "\n";
        return kFail;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale lab for group-relative policy optimization"};
    app.set_version_flag("--version", artifact_version());
    app.require_subcommand(1);

    RunFlags run_flags;
    CLI::App* run = app.add_subcommand("run", "train one policy and stream metrics");
    add_run_flags(run, run_flags);

    RunFlags sweep_flags;
    std::string axis, values_csv, seeds_csv;
    CLI::App* sweep = app.add_subcommand("sweep", "one run per axis value (x seeds)");
    add_run_flags(sweep, sweep_flags);
    sweep->add_option("--axis", axis, "algo | alpha | arm-mode | seed");
    sweep->add_option("--values", values_csv, "comma-separated axis values");
    sweep->add_option("--seeds", seeds_csv, "comma-separated seeds, ranges like 1..10");

    std::string manifest_path;
    RunFlags replay_flags;
    CLI::App* replay = app.add_subcommand("replay", "re-run a manifest and verify the stream");
    replay->add_option("manifest", manifest_path, "manifest.ini of a finished run")
        ->required();
    replay->add_option("--label", replay_flags.label, "directory name for the rerun");
    replay->add_option("-o,--out", replay_flags.out, "output root");

    std::string enum_config;
    std::size_t enum_limit = 0;
    CLI::App* enumerate = app.add_subcommand("enumerate", "print a task's success sets");
    enumerate->add_option("task-config", enum_config, "config file with a [task] section")
        ->required();
    enumerate->add_option("--limit", enum_limit, "print at most this many members per prompt");

    int gc_instances = 100;
    std::uint64_t gc_seed = 12345;
    double gc_h = 1e-5, gc_tol = 1e-6;
    CLI::App* gradcheck =
        app.add_subcommand("check-gradients", "finite-difference gradient verification");
    gradcheck->add_option("--instances", gc_instances, "randomized instances to run");
    gradcheck->add_option("--seed", gc_seed, "suite seed");
    gradcheck->add_option("--step-size", gc_h, "finite-difference step");
    gradcheck->add_option("--tolerance", gc_tol, "max allowed abs error");

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) return cmd_run(run, run_flags);
    if (sweep->parsed()) return cmd_sweep(sweep, sweep_flags, axis, values_csv, seeds_csv);
    if (replay->parsed()) return cmd_replay(manifest_path, replay_flags);
    if (enumerate->parsed()) return cmd_enumerate(enum_config, enum_limit);
    if (gradcheck->parsed()) return cmd_check_gradients(gc_instances, gc_seed, gc_h, gc_tol);
    return kFail;
}
