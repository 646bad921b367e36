#pragma once

#include <cstddef>
#include <vector>

#include "grpolab/policy.hpp"
#include "grpolab/tasks.hpp"

namespace grpolab {

// Unbiased estimator of P(at least one of k draws correct) given c correct
// among n exchangeable samples: 1 - C(n-c, k)/C(n, k).
double pass_at_k(int n, int c, int k);

struct EntropyStats {
    double mean = 0.0;
    double p05 = 0.0, p25 = 0.0, p50 = 0.0, p75 = 0.0, p95 = 0.0;
};

// Policy entropy at every context visited while generating each rollout's
// response (temperature-1 distributions). Percentiles use linear
// interpolation on the sorted sample.
EntropyStats token_entropy_stats(const PolicyParams& params, const std::vector<Rollout>& rollouts);

// Unique n-grams across all sequences divided by total n-gram count.
// Sequences shorter than n contribute nothing; erroring only when no sequence
// yields a single n-gram.
double distinct_n(const std::vector<TokenSeq>& sequences, int n);

// Mean over hypotheses of BLEU(hypothesis | all other sequences): clipped
// n-gram precisions for n = 1..max_n (capped at the shortest sequence
// length), geometric mean, brevity penalty against the closest reference
// length. Zero precisions are smoothed to 1/(2 * hypothesis n-gram count).
double self_bleu(const std::vector<TokenSeq>& sequences, int max_n = 4);

struct ManifoldStats {
    double entropy = 0.0;     // H over the renormalized success set, in nats
    double kl_uniform = 0.0;  // ln K+ - H
    std::size_t k_plus = 0;
};

// Exact policy distribution over the enumerated correct responses,
// renormalized; computed in log space so tiny sequence probabilities cannot
// underflow the normalization.
ManifoldStats success_manifold_entropy(const PolicyParams& params, const SuccessSet& success_set);

}  // namespace grpolab
