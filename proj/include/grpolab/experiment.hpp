#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "grpolab/config.hpp"

namespace grpolab {

// Everything a finished (or aborted) run leaves on disk, echoed back to the
// caller. The manifest written alongside the metrics stream contains the full
// effective config, so any run can be replayed exactly.
struct RunResult {
    std::filesystem::path dir;
    std::filesystem::path manifest_path;
    std::filesystem::path metrics_path;
    std::filesystem::path checkpoint_path;
    std::string status;  // completed | aborted
    std::string abort_reason;
    std::uint64_t completed_steps = 0;
    // headline numbers from the final metrics row, for sweep summaries
    double final_mean_reward = 0.0;
    double final_pass1 = 0.0;
    double final_pass_maxk = 0.0;
    double final_entropy_mean = 0.0;
    double final_manifold_entropy = 0.0;  // mean over tracked prompts; NaN if none
};

// Runs the full training loop, streaming one metrics record per step to
// <dir>/metrics.jsonl and writing manifest.ini + policy.txt. The directory is
// created; an existing directory gets a -2, -3, ... suffix instead of being
// reused. Non-finite aborts are recorded (manifest status, abort.txt) and
// rethrown.
RunResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_root,
                         const std::string& label);

// Re-executes the config stored in a manifest. Returns the fresh run plus the
// byte-comparison verdict against the original metrics stream when that file
// still exists next to the manifest.
struct ReplayResult {
    RunResult rerun;
    bool compared = false;
    bool identical = false;
    std::string original_metrics;
};
ReplayResult replay_manifest(const std::filesystem::path& manifest_path,
                             const std::filesystem::path& out_root, const std::string& label);

// One run per (axis value, seed); failures are recorded and the sweep moves
// on. Writes summary.json and a column-aligned summary.txt with per-value
// medians and interquartile ranges over seeds.
struct SweepRow {
    std::string value;
    int runs = 0, failed = 0;
    double pass1_median = 0.0, pass1_iqr = 0.0;
    double passk_median = 0.0, passk_iqr = 0.0;
    double entropy_median = 0.0;
    double manifold_median = 0.0;
    double reward_median = 0.0;
};
struct SweepResult {
    std::filesystem::path dir;
    std::vector<SweepRow> rows;
    std::vector<RunResult> runs;
};
SweepResult run_sweep(const ExperimentConfig& base, const SweepSpec& spec,
                      const std::filesystem::path& out_root, const std::string& label,
                      std::ostream* progress);

// Applies one sweep-axis value to a config (forcing re-weighting off for
// algorithms that do not use it).
ExperimentConfig apply_axis_value(const ExperimentConfig& base, const std::string& axis,
                                  const std::string& value);

std::string artifact_version();

}  // namespace grpolab
