#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "grpolab/tasks.hpp"
#include "grpolab/trainer.hpp"

namespace grpolab {

// Task description as written in a config file; build() materializes it.
struct TaskConfig {
    TaskKind kind = TaskKind::sum_to_target;
    std::vector<int> targets = {2, 3, 4, 5, 6, 7};      // sum_to_target
    std::vector<int> lengths;                           // balanced_brackets
    std::vector<std::pair<int, int>> grids;             // grid_paths
    int max_response_len = 4;

    TaskSpec build() const;
    bool operator==(const TaskConfig&) const = default;
};

struct MetricsConfig {
    std::vector<int> pass_k = {1, 2, 4, 8};
    int eval_samples = 32;
    double eval_temperature = 0.6;
    double eval_top_p = 0.95;
    int manifold_interval = 1;           // steps between manifold refreshes
    std::size_t manifold_max_members = 10000;  // drop prompts with larger success sets
    int self_bleu_max_n = 4;

    void validate() const;
    bool operator==(const MetricsConfig&) const = default;
};

struct ExperimentConfig {
    TaskConfig task;
    TrainConfig train;
    MetricsConfig metrics;
    int window = 3;  // policy context order

    void validate() const;
    bool operator==(const ExperimentConfig&) const = default;
};

// Sweep request: one run per (axis value, seed) pair.
struct SweepSpec {
    std::string axis;                 // algo | alpha | arm_mode | seed
    std::vector<std::string> values;
    std::vector<std::uint64_t> seeds;  // ignored when axis == seed

    void validate() const;
    bool operator==(const SweepSpec&) const = default;
};

// Everything a config file may carry. [sweep] and [run] are optional; [run]
// appears only in manifests written by completed runs.
struct ExperimentFile {
    ExperimentConfig config;
    std::optional<SweepSpec> sweep;
    // raw [run] keys from a manifest (label, timestamps, paths, ...)
    std::vector<std::pair<std::string, std::string>> run_info;
};

// Strict INI-style parser: unknown sections or keys are errors, every
// diagnostic names the section, key, and line. `source` names the file in
// error messages.
ExperimentFile parse_experiment_text(const std::string& text, const std::string& source);
ExperimentFile load_experiment_file(const std::string& path);

// Canonical serialization; parse(serialize(x)) == x field-for-field,
// doubles included.
std::string serialize_experiment(const ExperimentConfig& cfg,
                                 const SweepSpec* sweep = nullptr,
                                 const std::vector<std::pair<std::string, std::string>>* run_info =
                                     nullptr);

ExperimentConfig default_experiment_config();

}  // namespace grpolab
