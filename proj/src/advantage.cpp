#include "grpolab/advantage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace grpolab {

std::string arm_mode_name(ArmMode m) {
    switch (m) {
        case ArmMode::off: return "off";
        case ArmMode::prompt_minus_answer: return "prompt_minus_answer";
        case ArmMode::one_minus_answer: return "one_minus_answer";
        case ArmMode::one_minus_both: return "one_minus_both";
        case ArmMode::group_mean_minus_answer: return "group_mean_minus_answer";
    }
    throw std::logic_error("unknown arm mode");
}

ArmMode arm_mode_from_name(const std::string& name) {
    if (name == "off") return ArmMode::off;
    if (name == "prompt_minus_answer") return ArmMode::prompt_minus_answer;
    if (name == "one_minus_answer") return ArmMode::one_minus_answer;
    if (name == "one_minus_both") return ArmMode::one_minus_both;
    if (name == "group_mean_minus_answer") return ArmMode::group_mean_minus_answer;
    throw std::invalid_argument(
        "unknown arm mode: '" + name +
        "' (expected off, prompt_minus_answer, one_minus_answer, one_minus_both, or "
        "group_mean_minus_answer)");
}

std::string skip_rule_name(SkipRule r) {
    switch (r) {
        case SkipRule::all_incorrect: return "all_incorrect";
        case SkipRule::both_degenerate: return "both_degenerate";
    }
    throw std::logic_error("unknown skip rule");
}

SkipRule skip_rule_from_name(const std::string& name) {
    if (name == "all_incorrect") return SkipRule::all_incorrect;
    if (name == "both_degenerate") return SkipRule::both_degenerate;
    throw std::invalid_argument("unknown skip rule: '" + name +
                                "' (expected all_incorrect or both_degenerate)");
}

std::vector<double> grpo_advantages(const std::vector<int>& rewards, double delta) {
    if (rewards.size() < 2)
        throw std::invalid_argument("group normalization needs at least two rollouts");
    if (!(delta > 0.0)) throw std::invalid_argument("stabilizer delta must be positive");
    const auto n = static_cast<double>(rewards.size());
    double mu = 0.0;
    for (int r : rewards) {
        if (r != 0 && r != 1) throw std::invalid_argument("rewards must be 0 or 1");
        mu += static_cast<double>(r);
    }
    mu /= n;
    double var = 0.0;
    for (int r : rewards) {
        double d = static_cast<double>(r) - mu;
        var += d * d;
    }
    var /= n;  // population variance
    double denom = std::sqrt(var) + delta;
    std::vector<double> adv(rewards.size());
    for (std::size_t i = 0; i < rewards.size(); ++i)
        adv[i] = (static_cast<double>(rewards[i]) - mu) / denom;
    return adv;
}

std::vector<double> arm_deltas(ArmMode mode, double prompt_conf,
                               const std::vector<double>& answer_conf) {
    std::vector<double> d(answer_conf.size(), 0.0);
    switch (mode) {
        case ArmMode::off:
            break;
        case ArmMode::prompt_minus_answer:
            for (std::size_t i = 0; i < d.size(); ++i) d[i] = prompt_conf - answer_conf[i];
            break;
        case ArmMode::one_minus_answer:
            for (std::size_t i = 0; i < d.size(); ++i) d[i] = 1.0 - answer_conf[i];
            break;
        case ArmMode::one_minus_both:
            for (std::size_t i = 0; i < d.size(); ++i)
                d[i] = 1.0 - prompt_conf - answer_conf[i];
            break;
        case ArmMode::group_mean_minus_answer: {
            double mean = 0.0;
            for (double c : answer_conf) mean += c;
            if (!answer_conf.empty()) mean /= static_cast<double>(answer_conf.size());
            for (std::size_t i = 0; i < d.size(); ++i) d[i] = mean - answer_conf[i];
            break;
        }
    }
    return d;
}

std::vector<double> arm_offsets(const ArmConfig& cfg, double prompt_conf,
                                const std::vector<double>& answer_conf) {
    std::vector<double> off = arm_deltas(cfg.mode, prompt_conf, answer_conf);
    for (double& v : off) v *= cfg.alpha;
    return off;
}

AdvantageVector reweight(const std::vector<int>& rewards, double delta, const ArmConfig& cfg,
                         double prompt_conf, const std::vector<double>& answer_conf) {
    if (cfg.mode != ArmMode::off && answer_conf.size() != rewards.size())
        throw std::invalid_argument("answer confidences and rewards disagree in length");

    AdvantageVector out;
    out.base = grpo_advantages(rewards, delta);

    int sum = 0;
    for (int r : rewards) sum += r;
    const auto n = static_cast<double>(rewards.size());
    out.mu = static_cast<double>(sum) / n;
    double var = 0.0;
    for (int r : rewards) {
        double d = static_cast<double>(r) - out.mu;
        var += d * d;
    }
    out.sigma = std::sqrt(var / n);

    bool degenerate_low = (sum == 0);
    bool degenerate_high = (sum == static_cast<int>(rewards.size()));
    out.skipped = cfg.mode != ArmMode::off &&
                  (cfg.skip_rule == SkipRule::all_incorrect
                       ? degenerate_low
                       : (degenerate_low || degenerate_high));

    if (cfg.mode == ArmMode::off || out.skipped) {
        out.reweighted = out.base;
        return out;
    }
    std::vector<double> off = arm_offsets(cfg, prompt_conf, answer_conf);
    out.reweighted.resize(out.base.size());
    for (std::size_t i = 0; i < out.base.size(); ++i) out.reweighted[i] = out.base[i] + off[i];
    return out;
}

double sign_preserving_alpha_bound(const std::vector<double>& base_advantages,
                                   const std::vector<double>& deltas,
                                   const std::vector<int>& rewards) {
    if (base_advantages.size() != deltas.size() || deltas.size() != rewards.size())
        throw std::invalid_argument("advantages, deltas, and rewards disagree in length");
    double a_neg = 0.0;
    double max_abs_delta = 0.0;
    bool any_incorrect = false;
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        if (rewards[i] != 0) continue;
        any_incorrect = true;
        a_neg = base_advantages[i];  // identical across incorrect members
        max_abs_delta = std::max(max_abs_delta, std::fabs(deltas[i]));
    }
    if (!any_incorrect || max_abs_delta == 0.0)
        return std::numeric_limits<double>::infinity();
    return std::fabs(a_neg) / max_abs_delta;
}

}  // namespace grpolab
