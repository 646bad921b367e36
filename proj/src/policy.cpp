#include "grpolab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace grpolab {

namespace {

void check_finite(const std::vector<double>& logits) {
    for (double v : logits) {
        if (!std::isfinite(v)) throw std::runtime_error("policy: non-finite logit (corrupted parameters)");
    }
}

// log softmax(logits)[.], numerically stable. This is the single code path
// behind scoring and rollout recording, so the two agree bit-for-bit.
std::vector<double> log_softmax(const std::vector<double>& logits) {
    check_finite(logits);
    double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - m);
    double lse = m + std::log(sum);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
    return out;
}

const std::vector<double>& logits_or_zero(const PolicyParams& p, const Context& ctx,
                                          std::vector<double>& scratch) {
    if (const auto* v = p.find(ctx)) return *v;
    scratch.assign(static_cast<std::size_t>(p.vocab.size()), 0.0);
    return scratch;
}

void check_context(const PolicyParams& p, const Context& ctx) {
    if (static_cast<int>(ctx.size()) != p.window)
        throw std::invalid_argument("policy: context length must equal the window");
    for (Token t : ctx) {
        if (!p.vocab.contains(t)) throw std::invalid_argument("policy: context token outside vocab");
    }
}

}  // namespace

void SamplingConfig::validate() const {
    if (!(temperature > 0.0)) throw std::invalid_argument("sampling: temperature must be > 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw std::invalid_argument("sampling: top_p must be in (0, 1]");
    if (max_len < 1) throw std::invalid_argument("sampling: max_len must be >= 1");
}

std::vector<double>& PolicyParams::logits_at(const Context& ctx) {
    auto it = table.find(ctx);
    if (it == table.end()) {
        it = table.emplace(ctx, std::vector<double>(static_cast<std::size_t>(vocab.size()), 0.0)).first;
    }
    return it->second;
}

const std::vector<double>* PolicyParams::find(const Context& ctx) const {
    auto it = table.find(ctx);
    return it == table.end() ? nullptr : &it->second;
}

PolicyParams make_uniform_policy(Vocab vocab, int window) {
    vocab.validate();
    if (window < 1) throw std::invalid_argument("policy: window must be >= 1");
    PolicyParams p;
    p.vocab = std::move(vocab);
    p.window = window;
    return p;
}

Context window_context(const Vocab& vocab, int window, const TokenSeq& history) {
    Context ctx(static_cast<std::size_t>(window), vocab.bos);
    std::size_t n = history.size();
    std::size_t take = std::min<std::size_t>(n, static_cast<std::size_t>(window));
    for (std::size_t i = 0; i < take; ++i) {
        ctx[static_cast<std::size_t>(window) - take + i] = history[n - take + i];
    }
    return ctx;
}

std::vector<double> next_token_distribution(const PolicyParams& params, const Context& ctx,
                                            double temperature) {
    check_context(params, ctx);
    if (!(temperature > 0.0)) throw std::invalid_argument("policy: temperature must be > 0");
    std::vector<double> scratch;
    const auto& logits = logits_or_zero(params, ctx, scratch);
    check_finite(logits);
    double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp((logits[i] - m) / temperature);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

std::vector<double> score_sequence(const PolicyParams& params, const TokenSeq& prefix,
                                   const TokenSeq& target) {
    if (target.empty()) throw std::invalid_argument("policy: score target must be nonempty");
    for (Token t : prefix)
        if (!params.vocab.contains(t)) throw std::invalid_argument("policy: prefix token outside vocab");
    TokenSeq history = prefix;
    std::vector<double> out;
    out.reserve(target.size());
    std::vector<double> scratch;
    for (Token t : target) {
        if (!params.vocab.contains(t)) throw std::invalid_argument("policy: target token outside vocab");
        Context ctx = window_context(params.vocab, params.window, history);
        const auto& logits = logits_or_zero(params, ctx, scratch);
        out.push_back(log_softmax(logits)[static_cast<std::size_t>(t)]);
        history.push_back(t);
    }
    return out;
}

Rollout sample_rollout(const PolicyParams& params, const TokenSeq& prompt,
                       const SamplingConfig& cfg, RngStream& rng) {
    cfg.validate();
    if (prompt.empty()) throw std::invalid_argument("policy: prompt must be nonempty");
    for (Token t : prompt)
        if (!params.vocab.contains(t)) throw std::invalid_argument("policy: prompt token outside vocab");

    const int V = params.vocab.size();
    Rollout r;
    r.prompt = prompt;
    TokenSeq history = prompt;
    std::vector<double> scratch;

    while (static_cast<int>(r.response.size()) < cfg.max_len) {
        Context ctx = window_context(params.vocab, params.window, history);
        const auto& logits = logits_or_zero(params, ctx, scratch);
        std::vector<double> lsm = log_softmax(logits);  // full distribution, temperature 1

        // Tempered proposal for the actual draw.
        std::vector<double> probs = next_token_distribution(params, ctx, cfg.temperature);

        Token tok;
        if (cfg.top_p < 1.0) {
            // Smallest prefix of probability-sorted tokens reaching top_p,
            // renormalized. Ties in probability break by token id so the cut
            // is deterministic.
            std::vector<int> order(static_cast<std::size_t>(V));
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](int a, int b) {
                if (probs[static_cast<std::size_t>(a)] != probs[static_cast<std::size_t>(b)])
                    return probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(b)];
                return a < b;
            });
            double cum = 0.0;
            std::size_t keep = order.size();
            for (std::size_t i = 0; i < order.size(); ++i) {
                cum += probs[static_cast<std::size_t>(order[i])];
                if (cum >= cfg.top_p) {
                    keep = i + 1;
                    break;
                }
            }
            double mass = 0.0;
            for (std::size_t i = 0; i < keep; ++i) mass += probs[static_cast<std::size_t>(order[i])];
            double u = rng.uniform() * mass;
            double acc = 0.0;
            tok = order[keep - 1];
            for (std::size_t i = 0; i < keep; ++i) {
                acc += probs[static_cast<std::size_t>(order[i])];
                if (u < acc) {
                    tok = order[i];
                    break;
                }
            }
        } else {
            double u = rng.uniform();
            double acc = 0.0;
            tok = V - 1;
            for (int i = 0; i < V; ++i) {
                acc += probs[static_cast<std::size_t>(i)];
                if (u < acc) {
                    tok = i;
                    break;
                }
            }
        }

        double lp = lsm[static_cast<std::size_t>(tok)];
        r.response.push_back(tok);
        r.step_logprobs.push_back(lp);
        r.step_probs.push_back(std::exp(lp));
        history.push_back(tok);
        if (tok == params.vocab.eos) return r;
    }
    r.truncated = true;
    return r;
}

SparseGrad log_prob_gradient(const PolicyParams& params, const Context& ctx, Token token) {
    check_context(params, ctx);
    if (!params.vocab.contains(token)) throw std::invalid_argument("policy: token outside vocab");
    std::vector<double> p = next_token_distribution(params, ctx, 1.0);
    SparseGrad g;
    g.ctx = ctx;
    g.d.resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) g.d[i] = -p[i];
    g.d[static_cast<std::size_t>(token)] += 1.0;
    return g;
}

double policy_entropy(const PolicyParams& params, const Context& ctx) {
    std::vector<double> p = next_token_distribution(params, ctx, 1.0);
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) h -= v * std::log(v);
    }
    return h;
}

namespace {

// %.17g round-trips IEEE-754 doubles exactly through strtod.
std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

[[noreturn]] void bad_policy_file(const std::string& what) {
    throw std::runtime_error("policy file: " + what);
}

}  // namespace

void save_policy(const PolicyParams& params, std::ostream& os) {
    os << "grpolab-policy v1\n";
    os << "vocab_size " << params.vocab.size() << "\n";
    os << "tokens";
    for (const auto& t : params.vocab.tokens) os << " " << t;
    os << "\n";
    os << "bos " << params.vocab.bos << "\n";
    os << "eos " << params.vocab.eos << "\n";
    os << "window " << params.window << "\n";
    os << "version " << params.version << "\n";
    os << "entries " << params.table.size() << "\n";
    for (const auto& [ctx, logits] : params.table) {
        os << "ctx";
        for (Token t : ctx) os << " " << t;
        for (double v : logits) os << " " << fmt_double(v);
        os << "\n";
    }
}

PolicyParams load_policy(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != "grpolab-policy v1") bad_policy_file("bad magic line");

    auto expect_kv = [&](const std::string& key) -> std::string {
        if (!std::getline(is, line)) bad_policy_file("truncated header (expected " + key + ")");
        if (line.rfind(key + " ", 0) != 0) bad_policy_file("expected '" + key + "', got: " + line);
        return line.substr(key.size() + 1);
    };

    PolicyParams p;
    int vsize = std::stoi(expect_kv("vocab_size"));
    {
        std::istringstream ss(expect_kv("tokens"));
        std::string tok;
        while (ss >> tok) p.vocab.tokens.push_back(tok);
        if (static_cast<int>(p.vocab.tokens.size()) != vsize) bad_policy_file("token count mismatch");
    }
    p.vocab.bos = std::stoi(expect_kv("bos"));
    p.vocab.eos = std::stoi(expect_kv("eos"));
    p.vocab.validate();
    p.window = std::stoi(expect_kv("window"));
    if (p.window < 1) bad_policy_file("window must be >= 1");
    p.version = std::stoull(expect_kv("version"));
    std::size_t entries = std::stoull(expect_kv("entries"));

    for (std::size_t e = 0; e < entries; ++e) {
        if (!std::getline(is, line)) bad_policy_file("truncated entry list");
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag != "ctx") bad_policy_file("expected ctx record, got: " + line);
        Context ctx(static_cast<std::size_t>(p.window));
        for (auto& t : ctx) {
            if (!(ss >> t) || !p.vocab.contains(t)) bad_policy_file("bad context token");
        }
        std::vector<double> logits(static_cast<std::size_t>(vsize));
        for (auto& v : logits) {
            std::string num;
            if (!(ss >> num)) bad_policy_file("short logit vector");
            v = std::strtod(num.c_str(), nullptr);
            if (!std::isfinite(v)) bad_policy_file("non-finite logit");
        }
        p.table.emplace(std::move(ctx), std::move(logits));
    }
    return p;
}

void save_policy_file(const PolicyParams& params, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    save_policy(params, os);
    if (!os) throw std::runtime_error("write failed: " + path);
}

PolicyParams load_policy_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    return load_policy(is);
}

}  // namespace grpolab
