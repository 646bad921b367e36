#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "grpolab/advantage.hpp"
#include "grpolab/confidence.hpp"
#include "grpolab/policy.hpp"
#include "grpolab/tasks.hpp"

namespace grpolab {

enum class Algo { grpo, progrpo, reinforce };

std::string algo_name(Algo a);
Algo algo_from_name(const std::string& name);

struct ClipConfig {
    double eps_low = 0.2;
    double eps_high = 0.28;

    void validate() const;
    bool operator==(const ClipConfig&) const = default;
};

// How per-token surrogate terms are averaged into one scalar:
//   token_global:  divide by the total response-token count of the whole
//                  rollout set handed in;
//   per_sequence:  average per-response means, 1/N sum_i (1/|o_i|) sum_t.
enum class LossNorm { token_global, per_sequence };

std::string loss_norm_name(LossNorm n);
LossNorm loss_norm_from_name(const std::string& name);

struct TrainConfig {
    Algo algo = Algo::grpo;
    int group_size = 8;
    int prompts_per_batch = 16;
    int minibatches_per_batch = 4;   // 16-prompt batch -> 4 groups (32 rollouts) per update
    int updates_per_collection = 2;  // mini-epochs over one collected batch
    double learning_rate = 0.05;
    ArmConfig arm;
    ClipConfig clip;
    LossNorm normalization = LossNorm::token_global;
    SamplingConfig sampling;
    double fraction = 0.2;  // low-probability position share for confidence
    double delta = 1e-6;    // advantage denominator stabilizer
    int total_steps = 500;
    std::uint64_t master_seed = 1;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

// G rollouts for one prompt with their binary rewards.
struct RolloutGroup {
    std::size_t prompt_index = 0;  // position in the task's prompt space
    TokenSeq prompt;
    std::vector<Rollout> rollouts;
    std::vector<int> rewards;
    double mu = 0.0;     // mean reward
    double sigma = 0.0;  // population std of rewards
};

struct BatchStats {
    std::uint64_t step = 0;
    double mean_reward = 0.0;
    double mean_token_entropy = 0.0;  // under the collection-time policy
    double loss = 0.0;                // mean over gradient updates this step
    double grad_norm = 0.0;           // mean L2 norm over updates
    int groups_skipped = 0;  // groups in the degenerate-reward regime (by skip rule)
    int groups_total = 0;
    double adv_mean = 0.0, adv_min = 0.0, adv_max = 0.0;  // over re-weighted advantages
    double prompt_conf_mean = 0.0;
    double answer_conf_mean = 0.0;
};

struct StepResult {
    BatchStats stats;
    std::vector<RolloutGroup> groups;
    std::vector<AdvantageVector> advantages;
    std::vector<ConfidenceReport> confidences;
};

// Gradient (and SGD update) carrier, keyed like the policy table itself.
using ParamGrad = LogitTable;

// One rollout group per requested prompt, G members each, rewards attached.
// Each member draws from its own RNG stream keyed by
// (master_seed, step, batch slot, member), so collection order is irrelevant.
std::vector<RolloutGroup> collect_groups(const PolicyParams& params_old, const TaskSpec& task,
                                         const std::vector<std::size_t>& prompt_indices,
                                         int group_size, const SamplingConfig& sampling,
                                         std::uint64_t master_seed, std::uint64_t step);

// Clipped-ratio surrogate over the given rollouts with frozen advantages.
// Rollouts carry their collection-time log-probs; ratios are current-policy
// log-probs against those. Loss is the negated normalized objective; grad is
// d(loss)/d(logits) accumulated in deterministic (group, member, token)
// order. A token on the clipped branch contributes zero gradient; exact ties
// between branches count as unclipped. Every visited context appears in the
// gradient map, so callers see explicit zeros rather than missing keys.
double surrogate_loss_and_grad(const PolicyParams& params,
                               const std::vector<RolloutGroup>& groups,
                               const std::vector<std::vector<double>>& advantages,
                               const ClipConfig& clip, LossNorm normalization, ParamGrad* grad);

// Plain REINFORCE comparator: loss = -(1/N) sum_i R_i sum_t log pi(token).
double reinforce_loss_and_grad(const PolicyParams& params,
                               const std::vector<RolloutGroup>& groups, ParamGrad* grad);

// Central finite differences of an arbitrary scalar functional over every
// logit entry present in params.table.
ParamGrad finite_difference_grad(const std::function<double(const PolicyParams&)>& f,
                                 const PolicyParams& params, double h);

class Trainer {
  public:
    Trainer(TaskSpec task, TrainConfig cfg, PolicyParams initial);

    // One full collect->reweight->update cycle. Throws with a diagnostic dump
    // of the offending group if a loss or gradient goes non-finite.
    StepResult step();

    const PolicyParams& params() const { return params_; }
    const TaskSpec& task() const { return task_; }
    const TrainConfig& config() const { return cfg_; }
    std::uint64_t completed_steps() const { return step_; }

  private:
    TaskSpec task_;
    TrainConfig cfg_;
    PolicyParams params_;
    std::uint64_t step_ = 0;
};

}  // namespace grpolab
