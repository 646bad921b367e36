#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <vector>

#include "grpolab/rng.hpp"
#include "grpolab/vocab.hpp"

namespace grpolab {

// A context is exactly `window` preceding token ids, BOS-padded on the left.
using Context = std::vector<Token>;

// Sorted map keeps iteration (serialization, gradient application) in a fixed
// deterministic order.
using LogitTable = std::map<Context, std::vector<double>>;

struct SamplingConfig {
    double temperature = 1.0;
    double top_p = 1.0;
    int max_len = 12;  // response token budget, EOS included

    void validate() const;
    bool operator==(const SamplingConfig&) const = default;
};

// Tabular order-W autoregressive softmax policy. Contexts absent from the
// table carry all-zero logits, so a fresh policy is the maximum-entropy
// (uniform) one.
struct PolicyParams {
    Vocab vocab;
    int window = 3;
    LogitTable table;
    std::uint64_t version = 0;  // monotone update counter

    // Logit vector for a context, materializing a zero entry if absent.
    std::vector<double>& logits_at(const Context& ctx);
    // Read-only view; nullptr when the context is absent (implicit zeros).
    const std::vector<double>* find(const Context& ctx) const;
};

PolicyParams make_uniform_policy(Vocab vocab, int window);

// One sampled sequence with the per-token probabilities recorded under the
// sampling policy at temperature 1 (the distribution confidence and ratio
// computations are defined on).
struct Rollout {
    TokenSeq prompt;
    TokenSeq response;  // EOS-terminated unless truncated at max_len
    std::vector<double> step_probs;
    std::vector<double> step_logprobs;
    bool truncated = false;
};

// Last `window` tokens of `history`, BOS-padded on the left when history is
// shorter than the window.
Context window_context(const Vocab& vocab, int window, const TokenSeq& history);

// softmax(logits / temperature); sums to 1, all entries strictly positive.
std::vector<double> next_token_distribution(const PolicyParams& params, const Context& ctx,
                                            double temperature);

// Entry t is log pi(target[t] | prefix ++ target[<t]) at temperature 1.
// Scoring a prompt is the call with an empty prefix.
std::vector<double> score_sequence(const PolicyParams& params, const TokenSeq& prefix,
                                   const TokenSeq& target);

// Generates until EOS or cfg.max_len. Sampling applies temperature then
// nucleus truncation; recorded step probabilities always come from the full
// temperature-1 distribution.
Rollout sample_rollout(const PolicyParams& params, const TokenSeq& prompt,
                       const SamplingConfig& cfg, RngStream& rng);

// Gradient of log pi(token | ctx) w.r.t. the logits of that context:
// e_token - softmax(logits). Zero on every other table entry.
struct SparseGrad {
    Context ctx;
    std::vector<double> d;
};
SparseGrad log_prob_gradient(const PolicyParams& params, const Context& ctx, Token token);

// Shannon entropy (nats) of the next-token distribution at temperature 1.
double policy_entropy(const PolicyParams& params, const Context& ctx);

// Versioned plain-text serialization; round-trips bit-exactly.
void save_policy(const PolicyParams& params, std::ostream& os);
PolicyParams load_policy(std::istream& is);
void save_policy_file(const PolicyParams& params, const std::string& path);
PolicyParams load_policy_file(const std::string& path);

}  // namespace grpolab
