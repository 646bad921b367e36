#pragma once

#include <cstddef>
#include <vector>

#include "grpolab/policy.hpp"

namespace grpolab {

// Positions of the k lowest step probabilities, k = max(1, ceil(fraction*n)),
// ties broken toward the earlier position; result sorted ascending.
std::vector<std::size_t> select_low_prob_positions(const std::vector<double>& probs,
                                                   double fraction);

// Geometric mean of the selected low-probability steps:
//   exp( (1/k) * sum of log-probs over the bottom-k positions ).
// Empty input is a contract violation.
double sequence_confidence(const std::vector<double>& step_probs,
                           const std::vector<double>& step_logprobs, double fraction);

// Confidence of the prompt itself: score the prompt tokens under the policy
// (BOS-padded context, no temperature) and apply the same bottom-k rule.
double prompt_confidence(const PolicyParams& params, const TokenSeq& prompt, double fraction);

// Confidence of a sampled answer, from the probabilities recorded at
// generation time.
double answer_confidence(const Rollout& rollout, double fraction);

struct ConfidenceReport {
    double prompt_conf = 0.0;
    std::vector<double> answer_conf;  // one per group member
    double answer_mean = 0.0;
};

ConfidenceReport group_confidence(const PolicyParams& params, const TokenSeq& prompt,
                                  const std::vector<Rollout>& group, double fraction);

}  // namespace grpolab
