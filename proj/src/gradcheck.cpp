#include "grpolab/gradcheck.hpp"

#include <cmath>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "grpolab/trainer.hpp"

namespace grpolab {

namespace {

constexpr std::uint64_t kTag = 0x67636863;  // stream namespace for this suite

Vocab make_test_vocab(int v) {
    Vocab vocab;
    vocab.tokens = {"<bos>", "<eos>"};
    for (int i = 2; i < v; ++i) vocab.tokens.push_back("t" + std::to_string(i));
    return vocab;
}

std::vector<Context> visited_contexts(const PolicyParams& params,
                                      const std::vector<RolloutGroup>& groups) {
    std::set<Context> seen;
    for (const RolloutGroup& g : groups)
        for (const Rollout& r : g.rollouts) {
            TokenSeq history = r.prompt;
            for (Token tok : r.response) {
                seen.insert(window_context(params.vocab, params.window, history));
                history.push_back(tok);
            }
        }
    return {seen.begin(), seen.end()};
}

}  // namespace

GradCheckReport run_gradient_check(int instances, std::uint64_t seed, double h,
                                   double tolerance, std::ostream* log) {
    if (instances < 1) throw std::invalid_argument("need at least one instance");
    GradCheckReport rep;
    rep.instances = instances;
    rep.tolerance = tolerance;

    const ClipConfig clip;  // the default band
    const double lo = 1.0 - clip.eps_low, hi = 1.0 + clip.eps_high;
    const double margin = 10.0 * h;

    for (int inst = 0; inst < instances; ++inst) {
        RngStream rng(mix_key(seed, kTag, static_cast<std::uint64_t>(inst)));

        const int v = 4 + static_cast<int>(rng.uniform_int(9));       // 4..12
        const int window = 1 + static_cast<int>(rng.uniform_int(3));  // 1..3
        const int group_size = 2 + static_cast<int>(rng.uniform_int(7));
        const int n_groups = 1 + static_cast<int>(rng.uniform_int(2));
        SamplingConfig sampling;
        sampling.max_len = 2 + static_cast<int>(rng.uniform_int(5));

        PolicyParams sampler = make_uniform_policy(make_test_vocab(v), window);

        std::vector<RolloutGroup> groups;
        std::vector<std::vector<double>> adv;
        for (int g = 0; g < n_groups; ++g) {
            RolloutGroup group;
            const auto plen = 1 + rng.uniform_int(2);
            for (std::size_t i = 0; i < plen; ++i)
                group.prompt.push_back(2 + static_cast<Token>(rng.uniform_int(v - 2)));
            std::vector<double> row;
            for (int m = 0; m < group_size; ++m) {
                RngStream member_rng(mix_key(seed, kTag + 1, static_cast<std::uint64_t>(inst),
                                             static_cast<std::uint64_t>(g),
                                             static_cast<std::uint64_t>(m)));
                group.rollouts.push_back(
                    sample_rollout(sampler, group.prompt, sampling, member_rng));
                group.rewards.push_back(0);
                row.push_back(-2.0 + 4.0 * rng.uniform());
            }
            groups.push_back(std::move(group));
            adv.push_back(std::move(row));
        }

        PolicyParams params = sampler;
        std::vector<Context> contexts = visited_contexts(params, groups);

        // Random logits at every visited context; redraw if any token ratio
        // lands too close to a clip boundary for the finite-difference step.
        bool clear = false;
        for (int attempt = 0; attempt < 64 && !clear; ++attempt) {
            if (attempt > 0) ++rep.retries;
            for (const Context& ctx : contexts) {
                std::vector<double>& logits = params.logits_at(ctx);
                for (double& l : logits) l = (rng.uniform() - 0.5) * 1.4;
            }
            clear = true;
            for (const RolloutGroup& g : groups)
                for (const Rollout& r : g.rollouts) {
                    std::vector<double> lp = score_sequence(params, r.prompt, r.response);
                    for (std::size_t t = 0; t < lp.size(); ++t) {
                        double ratio = std::exp(lp[t] - r.step_logprobs[t]);
                        if (std::fabs(ratio - lo) < margin || std::fabs(ratio - hi) < margin)
                            clear = false;
                    }
                }
        }
        if (!clear)
            throw std::runtime_error("could not place instance " + std::to_string(inst) +
                                     " clear of the clip boundaries");

        LossNorm norm = inst % 2 == 0 ? LossNorm::token_global : LossNorm::per_sequence;
        ParamGrad analytic;
        surrogate_loss_and_grad(params, groups, adv, clip, norm, &analytic);
        ParamGrad fd = finite_difference_grad(
            [&](const PolicyParams& p) {
                return surrogate_loss_and_grad(p, groups, adv, clip, norm, nullptr);
            },
            params, h);

        double inst_err = 0.0;
        for (const auto& [ctx, row] : fd) {
            auto it = analytic.find(ctx);
            for (std::size_t i = 0; i < row.size(); ++i) {
                double a = it == analytic.end() ? 0.0 : it->second[i];
                inst_err = std::max(inst_err, std::fabs(a - row[i]));
            }
        }
        rep.max_abs_err = std::max(rep.max_abs_err, inst_err);
        if (log && inst_err > tolerance)
            *log << "instance " << inst << ": max abs error " << inst_err << "\n";
    }
    rep.pass = rep.max_abs_err < tolerance;
    return rep;
}

}  // namespace grpolab
