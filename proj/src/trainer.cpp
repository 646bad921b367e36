#include "grpolab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace grpolab {

std::string algo_name(Algo a) {
    switch (a) {
        case Algo::grpo: return "grpo";
        case Algo::progrpo: return "progrpo";
        case Algo::reinforce: return "reinforce";
    }
    throw std::logic_error("unknown algorithm");
}

Algo algo_from_name(const std::string& name) {
    if (name == "grpo") return Algo::grpo;
    if (name == "progrpo") return Algo::progrpo;
    if (name == "reinforce") return Algo::reinforce;
    throw std::invalid_argument("unknown algorithm: '" + name +
                                "' (expected grpo, progrpo, or reinforce)");
}

void ClipConfig::validate() const {
    if (!(eps_low > 0.0 && eps_low < 1.0))
        throw std::invalid_argument("eps_low must lie in (0, 1)");
    if (!(eps_high > 0.0)) throw std::invalid_argument("eps_high must be positive");
}

std::string loss_norm_name(LossNorm n) {
    switch (n) {
        case LossNorm::token_global: return "token_global";
        case LossNorm::per_sequence: return "per_sequence";
    }
    throw std::logic_error("unknown loss normalization");
}

LossNorm loss_norm_from_name(const std::string& name) {
    if (name == "token_global") return LossNorm::token_global;
    if (name == "per_sequence") return LossNorm::per_sequence;
    throw std::invalid_argument("unknown loss normalization: '" + name +
                                "' (expected token_global or per_sequence)");
}

void TrainConfig::validate() const {
    if (group_size < 2) throw std::invalid_argument("group_size must be at least 2");
    if (prompts_per_batch < 1) throw std::invalid_argument("prompts_per_batch must be positive");
    if (minibatches_per_batch < 1 || minibatches_per_batch > prompts_per_batch)
        throw std::invalid_argument("minibatches_per_batch must lie in [1, prompts_per_batch]");
    if (updates_per_collection < 1)
        throw std::invalid_argument("updates_per_collection must be positive");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be >= 0");
    if (!(fraction > 0.0) || fraction > 1.0)
        throw std::invalid_argument("fraction must lie in (0, 1]");
    if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
    if (total_steps < 1) throw std::invalid_argument("total_steps must be positive");
    if (!(arm.alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
    if (algo == Algo::grpo && arm.mode != ArmMode::off)
        throw std::invalid_argument("grpo runs with re-weighting off; use progrpo for arm modes");
    clip.validate();
    sampling.validate();
}

std::vector<RolloutGroup> collect_groups(const PolicyParams& params_old, const TaskSpec& task,
                                         const std::vector<std::size_t>& prompt_indices,
                                         int group_size, const SamplingConfig& sampling,
                                         std::uint64_t master_seed, std::uint64_t step) {
    if (group_size < 2) throw std::invalid_argument("group_size must be at least 2");
    std::vector<RolloutGroup> groups;
    groups.reserve(prompt_indices.size());
    for (std::size_t slot = 0; slot < prompt_indices.size(); ++slot) {
        std::size_t pidx = prompt_indices[slot];
        if (pidx >= task.prompt_space.size())
            throw std::invalid_argument("prompt index outside the task's prompt space");
        RolloutGroup g;
        g.prompt_index = pidx;
        g.prompt = task.prompt_space[pidx].prompt;
        g.rollouts.reserve(group_size);
        g.rewards.reserve(group_size);
        int sum = 0;
        for (int member = 0; member < group_size; ++member) {
            RngStream rng = derive_stream(master_seed, stream_tag::rollout, step,
                                          static_cast<std::uint64_t>(slot),
                                          static_cast<std::uint64_t>(member));
            Rollout r = sample_rollout(params_old, g.prompt, sampling, rng);
            int reward = verify(task, g.prompt, r.response);
            sum += reward;
            g.rollouts.push_back(std::move(r));
            g.rewards.push_back(reward);
        }
        const auto n = static_cast<double>(group_size);
        g.mu = static_cast<double>(sum) / n;
        double var = 0.0;
        for (int r : g.rewards) {
            double d = static_cast<double>(r) - g.mu;
            var += d * d;
        }
        g.sigma = std::sqrt(var / n);
        groups.push_back(std::move(g));
    }
    return groups;
}

namespace {

long total_response_tokens(const std::vector<RolloutGroup>& groups) {
    long total = 0;
    for (const auto& g : groups)
        for (const auto& r : g.rollouts) total += static_cast<long>(r.response.size());
    return total;
}

long total_rollouts(const std::vector<RolloutGroup>& groups) {
    long total = 0;
    for (const auto& g : groups) total += static_cast<long>(g.rollouts.size());
    return total;
}

std::vector<double>& grad_slot(ParamGrad& grad, const Context& ctx, std::size_t vocab_size) {
    auto it = grad.find(ctx);
    if (it == grad.end())
        it = grad.emplace(ctx, std::vector<double>(vocab_size, 0.0)).first;
    return it->second;
}

}  // namespace

double surrogate_loss_and_grad(const PolicyParams& params,
                               const std::vector<RolloutGroup>& groups,
                               const std::vector<std::vector<double>>& advantages,
                               const ClipConfig& clip, LossNorm normalization, ParamGrad* grad) {
    clip.validate();
    if (advantages.size() != groups.size())
        throw std::invalid_argument("advantage rows and groups disagree in length");
    const double lo = 1.0 - clip.eps_low;
    const double hi = 1.0 + clip.eps_high;
    const auto vsize = static_cast<std::size_t>(params.vocab.size());

    const long tok_total = total_response_tokens(groups);
    const long n_rollouts = total_rollouts(groups);
    if (tok_total == 0) throw std::invalid_argument("no response tokens in the rollout set");

    if (grad) grad->clear();
    double objective = 0.0;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const RolloutGroup& g = groups[gi];
        if (advantages[gi].size() != g.rollouts.size())
            throw std::invalid_argument("advantage row does not match group size");
        for (std::size_t mi = 0; mi < g.rollouts.size(); ++mi) {
            const Rollout& r = g.rollouts[mi];
            if (r.step_logprobs.size() != r.response.size())
                throw std::runtime_error("rollout is missing collection-time log-probs");
            const double adv = advantages[gi][mi];
            const double w = normalization == LossNorm::token_global
                                 ? 1.0 / static_cast<double>(tok_total)
                                 : 1.0 / (static_cast<double>(n_rollouts) *
                                          static_cast<double>(r.response.size()));

            std::vector<double> lp_new = score_sequence(params, r.prompt, r.response);
            TokenSeq history = r.prompt;
            for (std::size_t t = 0; t < r.response.size(); ++t) {
                double ratio = std::exp(lp_new[t] - r.step_logprobs[t]);
                double unclipped = ratio * adv;
                double clipped = std::clamp(ratio, lo, hi) * adv;
                if (unclipped <= clipped) {
                    objective += w * unclipped;
                    if (grad) {
                        Context ctx = window_context(params.vocab, params.window, history);
                        std::vector<double> p = next_token_distribution(params, ctx, 1.0);
                        std::vector<double>& slot = grad_slot(*grad, ctx, vsize);
                        // d(-w * ratio * adv)/d(logit_v) = -w*adv*ratio*(1[v=tok] - p_v)
                        const double coeff = -w * adv * ratio;
                        for (std::size_t v = 0; v < vsize; ++v) slot[v] -= coeff * p[v];
                        slot[static_cast<std::size_t>(r.response[t])] += coeff;
                    }
                } else {
                    objective += w * clipped;
                    if (grad) {
                        // clipped branch is constant in the current policy;
                        // keep the context key visible with a zero row
                        Context ctx = window_context(params.vocab, params.window, history);
                        grad_slot(*grad, ctx, vsize);
                    }
                }
                history.push_back(r.response[t]);
            }
        }
    }
    return -objective;
}

double reinforce_loss_and_grad(const PolicyParams& params,
                               const std::vector<RolloutGroup>& groups, ParamGrad* grad) {
    const long n_rollouts = total_rollouts(groups);
    if (n_rollouts == 0) throw std::invalid_argument("no rollouts given");
    const double w = 1.0 / static_cast<double>(n_rollouts);
    const auto vsize = static_cast<std::size_t>(params.vocab.size());

    if (grad) grad->clear();
    double objective = 0.0;
    for (const RolloutGroup& g : groups) {
        for (std::size_t mi = 0; mi < g.rollouts.size(); ++mi) {
            const Rollout& r = g.rollouts[mi];
            const double reward = static_cast<double>(g.rewards[mi]);
            std::vector<double> lp = score_sequence(params, r.prompt, r.response);
            TokenSeq history = r.prompt;
            for (std::size_t t = 0; t < r.response.size(); ++t) {
                objective += w * reward * lp[t];
                if (grad && reward != 0.0) {
                    Context ctx = window_context(params.vocab, params.window, history);
                    std::vector<double> p = next_token_distribution(params, ctx, 1.0);
                    std::vector<double>& slot = grad_slot(*grad, ctx, vsize);
                    const double coeff = -w * reward;
                    for (std::size_t v = 0; v < vsize; ++v) slot[v] -= coeff * p[v];
                    slot[static_cast<std::size_t>(r.response[t])] += coeff;
                }
                history.push_back(r.response[t]);
            }
        }
    }
    return -objective;
}

ParamGrad finite_difference_grad(const std::function<double(const PolicyParams&)>& f,
                                 const PolicyParams& params, double h) {
    if (!(h >= 1e-7 && h <= 1e-3))
        throw std::invalid_argument("finite-difference step must lie in [1e-7, 1e-3]");
    ParamGrad out;
    PolicyParams work = params;
    for (auto& [ctx, logits] : work.table) {
        std::vector<double> row(logits.size(), 0.0);
        for (std::size_t v = 0; v < logits.size(); ++v) {
            const double orig = logits[v];
            logits[v] = orig + h;
            double up = f(work);
            logits[v] = orig - h;
            double down = f(work);
            logits[v] = orig;
            row[v] = (up - down) / (2.0 * h);
        }
        out[ctx] = std::move(row);
    }
    return out;
}

Trainer::Trainer(TaskSpec task, TrainConfig cfg, PolicyParams initial)
    : task_(std::move(task)), cfg_(std::move(cfg)), params_(std::move(initial)) {
    cfg_.validate();
    params_.vocab.validate();
    if (params_.vocab.size() != task_.vocab.size() ||
        !(params_.vocab == task_.vocab))
        throw std::invalid_argument("policy and task vocabularies differ");
}

namespace {

std::string dump_group(const TaskSpec& task, const RolloutGroup& g) {
    std::ostringstream os;
    os << "prompt '" << task.vocab.render(g.prompt) << "' rewards [";
    for (std::size_t i = 0; i < g.rewards.size(); ++i)
        os << (i ? " " : "") << g.rewards[i];
    os << "]";
    return os.str();
}

bool grad_finite(const ParamGrad& grad, double* norm_out) {
    double sq = 0.0;
    for (const auto& [ctx, row] : grad)
        for (double v : row) sq += v * v;
    if (!std::isfinite(sq)) return false;
    *norm_out = std::sqrt(sq);
    return true;
}

}  // namespace

StepResult Trainer::step() {
    ++step_;
    const PolicyParams params_old = params_;

    // prompt draw for this batch
    RngStream prompt_rng = derive_stream(cfg_.master_seed, stream_tag::prompts, step_, 0, 0);
    std::vector<std::size_t> prompt_indices(static_cast<std::size_t>(cfg_.prompts_per_batch));
    for (auto& idx : prompt_indices)
        idx = static_cast<std::size_t>(prompt_rng.uniform_int(task_.prompt_space.size()));

    StepResult res;
    res.groups = collect_groups(params_old, task_, prompt_indices, cfg_.group_size,
                                cfg_.sampling, cfg_.master_seed, step_);

    // frozen advantages and confidences under the collection-time policy
    std::vector<std::vector<double>> adv_rows;
    adv_rows.reserve(res.groups.size());
    int degenerate = 0;
    for (const RolloutGroup& g : res.groups) {
        ConfidenceReport conf =
            group_confidence(params_old, g.prompt, g.rollouts, cfg_.fraction);
        AdvantageVector av =
            reweight(g.rewards, cfg_.delta, cfg_.arm, conf.prompt_conf, conf.answer_conf);
        int sum = 0;
        for (int r : g.rewards) sum += r;
        bool low = sum == 0, high = sum == static_cast<int>(g.rewards.size());
        if (cfg_.arm.skip_rule == SkipRule::all_incorrect ? low : (low || high)) ++degenerate;
        adv_rows.push_back(av.reweighted);
        res.advantages.push_back(std::move(av));
        res.confidences.push_back(std::move(conf));
    }

    // gradient updates
    double loss_acc = 0.0, norm_acc = 0.0;
    int n_updates = 0;
    ParamGrad grad;
    if (cfg_.algo == Algo::reinforce) {
        double loss = reinforce_loss_and_grad(params_, res.groups, &grad);
        double norm = 0.0;
        if (!std::isfinite(loss) || !grad_finite(grad, &norm))
            throw std::runtime_error("non-finite loss/gradient at step " +
                                     std::to_string(step_) + "; " +
                                     dump_group(task_, res.groups.front()));
        for (auto& [ctx, row] : grad) {
            std::vector<double>& logits = params_.logits_at(ctx);
            for (std::size_t v = 0; v < row.size(); ++v)
                logits[v] -= cfg_.learning_rate * row[v];
        }
        ++params_.version;
        loss_acc = loss;
        norm_acc = norm;
        n_updates = 1;
    } else {
        // contiguous minibatch split, sizes as even as possible
        const std::size_t n_groups = res.groups.size();
        const auto n_chunks = static_cast<std::size_t>(
            std::min<std::size_t>(cfg_.minibatches_per_batch, n_groups));
        for (int pass = 0; pass < cfg_.updates_per_collection; ++pass) {
            std::size_t begin = 0;
            for (std::size_t chunk = 0; chunk < n_chunks; ++chunk) {
                std::size_t count = n_groups / n_chunks + (chunk < n_groups % n_chunks ? 1 : 0);
                std::vector<RolloutGroup> mb(res.groups.begin() + begin,
                                             res.groups.begin() + begin + count);
                std::vector<std::vector<double>> mb_adv(adv_rows.begin() + begin,
                                                        adv_rows.begin() + begin + count);
                begin += count;

                double loss = surrogate_loss_and_grad(params_, mb, mb_adv, cfg_.clip,
                                                      cfg_.normalization, &grad);
                double norm = 0.0;
                if (!std::isfinite(loss) || !grad_finite(grad, &norm))
                    throw std::runtime_error("non-finite loss/gradient at step " +
                                             std::to_string(step_) + "; " +
                                             dump_group(task_, mb.front()));
                for (auto& [ctx, row] : grad) {
                    std::vector<double>& logits = params_.logits_at(ctx);
                    for (std::size_t v = 0; v < row.size(); ++v)
                        logits[v] -= cfg_.learning_rate * row[v];
                }
                ++params_.version;
                loss_acc += loss;
                norm_acc += norm;
                ++n_updates;
            }
        }
    }

    // batch statistics
    BatchStats& st = res.stats;
    st.step = step_;
    st.groups_total = static_cast<int>(res.groups.size());
    st.groups_skipped = degenerate;
    st.loss = loss_acc / static_cast<double>(n_updates);
    st.grad_norm = norm_acc / static_cast<double>(n_updates);

    double reward_acc = 0.0;
    long reward_n = 0;
    for (const RolloutGroup& g : res.groups)
        for (int r : g.rewards) {
            reward_acc += static_cast<double>(r);
            ++reward_n;
        }
    st.mean_reward = reward_acc / static_cast<double>(reward_n);

    double ent_acc = 0.0;
    long ent_n = 0;
    for (const RolloutGroup& g : res.groups)
        for (const Rollout& r : g.rollouts) {
            TokenSeq history = r.prompt;
            for (Token tok : r.response) {
                Context ctx = window_context(params_old.vocab, params_old.window, history);
                ent_acc += policy_entropy(params_old, ctx);
                ++ent_n;
                history.push_back(tok);
            }
        }
    st.mean_token_entropy = ent_acc / static_cast<double>(ent_n);

    bool first = true;
    double adv_acc = 0.0;
    long adv_n = 0;
    for (const auto& row : adv_rows)
        for (double a : row) {
            if (first) {
                st.adv_min = st.adv_max = a;
                first = false;
            } else {
                st.adv_min = std::min(st.adv_min, a);
                st.adv_max = std::max(st.adv_max, a);
            }
            adv_acc += a;
            ++adv_n;
        }
    st.adv_mean = adv_acc / static_cast<double>(adv_n);

    double pc_acc = 0.0, ac_acc = 0.0;
    for (const ConfidenceReport& c : res.confidences) {
        pc_acc += c.prompt_conf;
        ac_acc += c.answer_mean;
    }
    st.prompt_conf_mean = pc_acc / static_cast<double>(res.confidences.size());
    st.answer_conf_mean = ac_acc / static_cast<double>(res.confidences.size());

    return res;
}

}  // namespace grpolab
