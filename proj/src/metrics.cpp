#include "grpolab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace grpolab {

double pass_at_k(int n, int c, int k) {
    if (n < 1) throw std::invalid_argument("pass@k needs at least one sample");
    if (c < 0 || c > n) throw std::invalid_argument("correct count outside [0, n]");
    if (k < 1 || k > n) throw std::invalid_argument("k must lie in [1, n]");
    if (c == 0) return 0.0;
    if (n - c < k) return 1.0;  // every k-subset hits a correct sample
    // C(n-c, k)/C(n, k) as a running product of (n-c-i)/(n-i), each factor in (0,1).
    double miss = 1.0;
    for (int i = 0; i < k; ++i)
        miss *= static_cast<double>(n - c - i) / static_cast<double>(n - i);
    return 1.0 - miss;
}

namespace {

double percentile(const std::vector<double>& sorted, double q) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    double pos = q / 100.0 * static_cast<double>(n - 1);
    auto lo = static_cast<std::size_t>(pos);
    if (lo >= n - 1) return sorted[n - 1];
    double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

using Gram = std::vector<Token>;

std::map<Gram, int> ngram_counts(const TokenSeq& seq, int n) {
    std::map<Gram, int> counts;
    if (static_cast<int>(seq.size()) < n) return counts;
    for (std::size_t i = 0; i + n <= seq.size(); ++i)
        ++counts[Gram(seq.begin() + i, seq.begin() + i + n)];
    return counts;
}

}  // namespace

EntropyStats token_entropy_stats(const PolicyParams& params,
                                 const std::vector<Rollout>& rollouts) {
    std::vector<double> samples;
    for (const Rollout& r : rollouts) {
        TokenSeq history = r.prompt;
        for (Token tok : r.response) {
            Context ctx = window_context(params.vocab, params.window, history);
            samples.push_back(policy_entropy(params, ctx));
            history.push_back(tok);
        }
    }
    if (samples.empty()) throw std::invalid_argument("no visited contexts to summarize");
    std::sort(samples.begin(), samples.end());
    EntropyStats s;
    double acc = 0.0;
    for (double v : samples) acc += v;
    s.mean = acc / static_cast<double>(samples.size());
    s.p05 = percentile(samples, 5.0);
    s.p25 = percentile(samples, 25.0);
    s.p50 = percentile(samples, 50.0);
    s.p75 = percentile(samples, 75.0);
    s.p95 = percentile(samples, 95.0);
    return s;
}

double distinct_n(const std::vector<TokenSeq>& sequences, int n) {
    if (sequences.empty()) throw std::invalid_argument("distinct_n over an empty set");
    if (n < 1) throw std::invalid_argument("n-gram order must be positive");
    std::map<Gram, int> unique;
    long total = 0;
    for (const TokenSeq& seq : sequences) {
        for (auto& [gram, count] : ngram_counts(seq, n)) {
            unique[gram] += count;
            total += count;
        }
    }
    if (total == 0)
        throw std::invalid_argument("every sequence is shorter than the n-gram order");
    return static_cast<double>(unique.size()) / static_cast<double>(total);
}

namespace {

// Highest and second-highest per-sequence count of one n-gram, so
// max over all references except a given owner is a single lookup.
struct Top2 {
    int best = 0;
    std::size_t best_owner = 0;
    int second = 0;

    void offer(int count, std::size_t owner) {
        if (count > best) {
            second = best;
            best = count;
            best_owner = owner;
        } else if (count > second) {
            second = count;
        }
    }
    int max_excluding(std::size_t owner) const { return owner == best_owner ? second : best; }
};

}  // namespace

double self_bleu(const std::vector<TokenSeq>& sequences, int max_n) {
    if (sequences.size() < 2)
        throw std::invalid_argument("self-BLEU needs at least two sequences");
    if (max_n < 1) throw std::invalid_argument("n-gram order must be positive");

    std::size_t shortest = std::numeric_limits<std::size_t>::max();
    for (const TokenSeq& s : sequences) shortest = std::min(shortest, s.size());
    if (shortest == 0) throw std::invalid_argument("self-BLEU over an empty sequence");
    int n_max = std::min<int>(max_n, static_cast<int>(shortest));

    // log-precision accumulator per hypothesis across n-gram orders
    std::vector<double> log_prec(sequences.size(), 0.0);
    for (int n = 1; n <= n_max; ++n) {
        std::vector<std::map<Gram, int>> counts(sequences.size());
        std::map<Gram, Top2> pool;
        for (std::size_t j = 0; j < sequences.size(); ++j) {
            counts[j] = ngram_counts(sequences[j], n);
            for (auto& [gram, c] : counts[j]) pool[gram].offer(c, j);
        }
        for (std::size_t h = 0; h < sequences.size(); ++h) {
            long hyp_total = 0, clipped = 0;
            for (auto& [gram, c] : counts[h]) {
                hyp_total += c;
                clipped += std::min(c, pool.at(gram).max_excluding(h));
            }
            double p = (clipped > 0)
                           ? static_cast<double>(clipped) / static_cast<double>(hyp_total)
                           : 1.0 / (2.0 * static_cast<double>(hyp_total));
            log_prec[h] += std::log(p);
        }
    }

    double total = 0.0;
    for (std::size_t h = 0; h < sequences.size(); ++h) {
        const long hl = static_cast<long>(sequences[h].size());
        // Brevity penalty against the reference whose length is closest
        // (ties toward the shorter reference).
        long best_r = -1;
        for (std::size_t j = 0; j < sequences.size(); ++j) {
            if (j == h) continue;
            long r = static_cast<long>(sequences[j].size());
            if (best_r < 0 || std::labs(r - hl) < std::labs(best_r - hl) ||
                (std::labs(r - hl) == std::labs(best_r - hl) && r < best_r))
                best_r = r;
        }
        double bp =
            std::min(1.0, std::exp(1.0 - static_cast<double>(best_r) / static_cast<double>(hl)));
        total += bp * std::exp(log_prec[h] / static_cast<double>(n_max));
    }
    return total / static_cast<double>(sequences.size());
}

ManifoldStats success_manifold_entropy(const PolicyParams& params,
                                       const SuccessSet& success_set) {
    if (success_set.members.empty())
        throw std::invalid_argument("success manifold is empty for this prompt");
    ManifoldStats out;
    out.k_plus = success_set.members.size();

    std::vector<double> lp(out.k_plus);
    for (std::size_t i = 0; i < out.k_plus; ++i) {
        const std::vector<double> steps =
            score_sequence(params, success_set.prompt, success_set.members[i]);
        double acc = 0.0;
        for (double v : steps) acc += v;
        lp[i] = acc;
    }
    double m = *std::max_element(lp.begin(), lp.end());
    double z = 0.0;
    for (double v : lp) z += std::exp(v - m);
    double lse = m + std::log(z);

    double h = 0.0;
    for (double v : lp) {
        double logp = v - lse;
        h -= std::exp(logp) * logp;
    }
    out.entropy = h;
    out.kl_uniform = std::log(static_cast<double>(out.k_plus)) - h;
    return out;
}

}  // namespace grpolab
