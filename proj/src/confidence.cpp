#include "grpolab/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace grpolab {

std::vector<std::size_t> select_low_prob_positions(const std::vector<double>& probs,
                                                   double fraction) {
    if (probs.empty()) throw std::invalid_argument("cannot select positions from an empty sequence");
    if (!(fraction > 0.0) || fraction > 1.0)
        throw std::invalid_argument("fraction must lie in (0, 1]");
    const std::size_t n = probs.size();
    auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
    if (k < 1) k = 1;
    if (k > n) k = n;

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Lowest probability first; equal probabilities keep the earlier position.
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return probs[a] < probs[b]; });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

double sequence_confidence(const std::vector<double>& step_probs,
                           const std::vector<double>& step_logprobs, double fraction) {
    if (step_probs.size() != step_logprobs.size())
        throw std::invalid_argument("step probability and log-probability lengths differ");
    auto low = select_low_prob_positions(step_probs, fraction);
    double acc = 0.0;
    for (std::size_t pos : low) acc += step_logprobs[pos];
    return std::exp(acc / static_cast<double>(low.size()));
}

double prompt_confidence(const PolicyParams& params, const TokenSeq& prompt, double fraction) {
    // The prompt is scored as a continuation of nothing: BOS padding supplies
    // the left context for its first tokens.
    std::vector<double> lps = score_sequence(params, {}, prompt);
    std::vector<double> ps(lps.size());
    for (std::size_t i = 0; i < lps.size(); ++i) ps[i] = std::exp(lps[i]);
    return sequence_confidence(ps, lps, fraction);
}

double answer_confidence(const Rollout& rollout, double fraction) {
    return sequence_confidence(rollout.step_probs, rollout.step_logprobs, fraction);
}

ConfidenceReport group_confidence(const PolicyParams& params, const TokenSeq& prompt,
                                  const std::vector<Rollout>& group, double fraction) {
    ConfidenceReport rep;
    rep.prompt_conf = prompt_confidence(params, prompt, fraction);
    rep.answer_conf.reserve(group.size());
    double acc = 0.0;
    for (const Rollout& r : group) {
        double c = answer_confidence(r, fraction);
        rep.answer_conf.push_back(c);
        acc += c;
    }
    rep.answer_mean = group.empty() ? 0.0 : acc / static_cast<double>(group.size());
    return rep;
}

}  // namespace grpolab
