#pragma once

#include <string>
#include <vector>

namespace grpolab {

// Confidence-difference flavors for advantage re-weighting. `off` leaves the
// group-normalized advantages untouched.
enum class ArmMode {
    off,
    prompt_minus_answer,      // c(prompt) - c(answer_i)
    one_minus_answer,         // 1 - c(answer_i)
    one_minus_both,           // 1 - c(prompt) - c(answer_i)
    group_mean_minus_answer,  // mean_j c(answer_j) - c(answer_i)
};

std::string arm_mode_name(ArmMode m);
ArmMode arm_mode_from_name(const std::string& name);

// When to leave a group's advantages alone entirely.
enum class SkipRule {
    all_incorrect,    // skip only when every reward is 0
    both_degenerate,  // skip when every reward is 0 or every reward is 1
};

std::string skip_rule_name(SkipRule r);
SkipRule skip_rule_from_name(const std::string& name);

struct ArmConfig {
    ArmMode mode = ArmMode::off;
    double alpha = 0.3;
    SkipRule skip_rule = SkipRule::both_degenerate;

    bool operator==(const ArmConfig&) const = default;
};

struct AdvantageVector {
    std::vector<double> base;        // group-normalized (r - mean)/(std + delta)
    std::vector<double> reweighted;  // base + alpha * delta_i, or == base when skipped
    bool skipped = false;            // re-weighting suppressed for this group
    double mu = 0.0;                 // group mean reward
    double sigma = 0.0;              // population standard deviation
};

// (r_i - mu) / (sigma + delta) with population sigma. delta > 0 required so
// zero-variance groups map to exactly zero advantage.
std::vector<double> grpo_advantages(const std::vector<int>& rewards, double delta);

// Unscaled confidence differences delta_i for a mode; alpha is applied by the
// caller. group_mean_minus_answer uses the mean over the group's answers.
std::vector<double> arm_deltas(ArmMode mode, double prompt_conf,
                               const std::vector<double>& answer_conf);

// alpha * delta_i, elementwise.
std::vector<double> arm_offsets(const ArmConfig& cfg, double prompt_conf,
                                const std::vector<double>& answer_conf);

// Full pipeline: base advantages, then the configured re-weighting unless the
// skip rule fires. With mode off the offsets are identically zero and
// reweighted equals base bit-for-bit.
AdvantageVector reweight(const std::vector<int>& rewards, double delta, const ArmConfig& cfg,
                         double prompt_conf, const std::vector<double>& answer_conf);

// Largest alpha that cannot flip the sign of any incorrect member's
// advantage: |A_neg| / max_{i: r_i=0} |delta_i|. +infinity when every
// incorrect delta is zero or the group has no incorrect members.
double sign_preserving_alpha_bound(const std::vector<double>& base_advantages,
                                   const std::vector<double>& deltas,
                                   const std::vector<int>& rewards);

}  // namespace grpolab
