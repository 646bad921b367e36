#include "grpolab/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace grpolab {

namespace {

// Shared digit block: ids 2..11 name "0".."9". All three tasks encode their
// prompt instances in decimal digits so prompts live in the same vocab as
// responses.
std::vector<std::string> digit_names() {
    std::vector<std::string> names = {"<bos>", "<eos>"};
    for (int d = 0; d <= 9; ++d) names.push_back(std::string(1, char('0' + d)));
    return names;
}

constexpr Token kDigitBase = 2;  // token id of digit 0

bool is_digit_token(const Vocab& v, Token t) {
    return t >= kDigitBase && t < kDigitBase + 10 && t < v.size();
}

int digit_value(Token t) { return t - kDigitBase; }

TokenSeq encode_number(int value) {
    if (value < 0) throw std::invalid_argument("task prompts encode non-negative numbers only");
    std::string s = std::to_string(value);
    TokenSeq out;
    for (char c : s) out.push_back(kDigitBase + (c - '0'));
    return out;
}

// Parses a digit-token run as a base-10 number; -1 if any token is not a digit.
int decode_number(const Vocab& v, const TokenSeq& toks, std::size_t begin, std::size_t end) {
    if (begin >= end) return -1;
    long val = 0;
    for (std::size_t i = begin; i < end; ++i) {
        if (!is_digit_token(v, toks[i])) return -1;
        val = val * 10 + digit_value(toks[i]);
        if (val > 1000000) return -1;
    }
    return static_cast<int>(val);
}

void validate_task(const TaskSpec& t) {
    t.vocab.validate();
    if (t.prompt_space.empty()) throw std::invalid_argument("task has an empty prompt space");
    if (t.max_response_len < 1) throw std::invalid_argument("max_response_len must be at least 1");
    for (const auto& pc : t.prompt_space) {
        if (pc.prompt.empty()) throw std::invalid_argument("task contains an empty prompt");
        for (Token tok : pc.prompt) {
            if (tok < 0 || tok >= t.vocab.size())
                throw std::invalid_argument("prompt token outside task vocab");
            if (tok == t.vocab.bos || tok == t.vocab.eos)
                throw std::invalid_argument("prompt may not contain special tokens");
        }
    }
}

// Well-formedness shared by all verifiers: exactly one EOS, at the end, at
// least one content token, within budget. Returns the content length, or -1.
int response_body_len(const TaskSpec& t, const TokenSeq& response) {
    if (response.empty()) return -1;
    if (static_cast<int>(response.size()) > t.max_response_len) return -1;
    if (response.back() != t.vocab.eos) return -1;
    if (response.size() < 2) return -1;  // need content before EOS
    for (std::size_t i = 0; i + 1 < response.size(); ++i) {
        Token tok = response[i];
        if (tok < 0 || tok >= t.vocab.size()) return -1;
        if (tok == t.vocab.eos || tok == t.vocab.bos) return -1;
    }
    return static_cast<int>(response.size()) - 1;
}

int verify_sum_to_target(const TaskSpec& t, const TokenSeq& prompt, const TokenSeq& response) {
    int body = response_body_len(t, response);
    if (body < 0) return 0;
    int target = decode_number(t.vocab, prompt, 0, prompt.size());
    if (target < 0) return 0;
    long sum = 0;
    for (int i = 0; i < body; ++i) {
        if (!is_digit_token(t.vocab, response[i])) return 0;
        sum += digit_value(response[i]);
    }
    return sum == target ? 1 : 0;
}

int verify_balanced_brackets(const TaskSpec& t, const TokenSeq& prompt, const TokenSeq& response) {
    int body = response_body_len(t, response);
    if (body < 0) return 0;
    int want_len = decode_number(t.vocab, prompt, 0, prompt.size());
    if (want_len < 0 || body != want_len) return 0;
    Token open = t.vocab.id_of("(");
    Token close = t.vocab.id_of(")");
    int depth = 0;
    for (int i = 0; i < body; ++i) {
        if (response[i] == open) {
            ++depth;
        } else if (response[i] == close) {
            if (--depth < 0) return 0;
        } else {
            return 0;
        }
    }
    return depth == 0 ? 1 : 0;
}

int verify_grid_paths(const TaskSpec& t, const TokenSeq& prompt, const TokenSeq& response) {
    int body = response_body_len(t, response);
    if (body < 0) return 0;
    if (prompt.size() != 2) return 0;
    int m = decode_number(t.vocab, prompt, 0, 1);
    int n = decode_number(t.vocab, prompt, 1, 2);
    if (m < 0 || n < 0) return 0;
    if (body != m + n) return 0;  // only minimal paths count
    Token up = t.vocab.id_of("U");
    Token down = t.vocab.id_of("D");
    Token right = t.vocab.id_of("R");
    Token left = t.vocab.id_of("L");
    int x = 0, y = 0;
    for (int i = 0; i < body; ++i) {
        Token tok = response[i];
        if (tok == up) ++y;
        else if (tok == down) --y;
        else if (tok == right) ++x;
        else if (tok == left) --x;
        else return 0;
    }
    return (x == m && y == n) ? 1 : 0;
}

}  // namespace

std::string task_kind_name(TaskKind k) {
    switch (k) {
        case TaskKind::sum_to_target: return "sum_to_target";
        case TaskKind::balanced_brackets: return "balanced_brackets";
        case TaskKind::grid_paths: return "grid_paths";
    }
    throw std::logic_error("unknown task kind");
}

TaskKind task_kind_from_name(const std::string& name) {
    if (name == "sum_to_target") return TaskKind::sum_to_target;
    if (name == "balanced_brackets") return TaskKind::balanced_brackets;
    if (name == "grid_paths") return TaskKind::grid_paths;
    throw std::invalid_argument("unknown task: '" + name +
                                "' (expected sum_to_target, balanced_brackets, or grid_paths)");
}

TaskSpec make_sum_to_target_task(const std::vector<int>& targets, int max_response_len) {
    if (targets.empty()) throw std::invalid_argument("sum_to_target needs at least one target");
    TaskSpec t;
    t.kind = TaskKind::sum_to_target;
    t.vocab.tokens = digit_names();
    t.max_response_len = max_response_len;
    for (int target : targets) {
        if (target < 0 || target > 99)
            throw std::invalid_argument("sum_to_target targets must lie in [0, 99]");
        // A target of s needs at least ceil(s/9) digits (one even for 0) plus EOS.
        int min_digits = std::max(1, (target + 8) / 9);
        if (min_digits + 1 > max_response_len)
            throw std::invalid_argument("sum_to_target target " + std::to_string(target) +
                                        " is unreachable within max_response_len");
        t.prompt_space.push_back({encode_number(target), target});
    }
    validate_task(t);
    return t;
}

TaskSpec make_balanced_brackets_task(const std::vector<int>& lengths, int max_response_len) {
    if (lengths.empty()) throw std::invalid_argument("balanced_brackets needs at least one length");
    TaskSpec t;
    t.kind = TaskKind::balanced_brackets;
    t.vocab.tokens = digit_names();
    t.vocab.tokens.push_back("(");
    t.vocab.tokens.push_back(")");
    t.max_response_len = max_response_len;
    for (int len : lengths) {
        if (len < 2 || len > 8 || len % 2 != 0)
            throw std::invalid_argument("balanced_brackets lengths must be even and in [2, 8]");
        if (len + 1 > max_response_len)
            throw std::invalid_argument("balanced_brackets length " + std::to_string(len) +
                                        " is unreachable within max_response_len");
        t.prompt_space.push_back({encode_number(len), len});
    }
    validate_task(t);
    return t;
}

TaskSpec make_grid_paths_task(const std::vector<std::pair<int, int>>& grids, int max_response_len) {
    if (grids.empty()) throw std::invalid_argument("grid_paths needs at least one grid");
    TaskSpec t;
    t.kind = TaskKind::grid_paths;
    t.vocab.tokens = digit_names();
    t.vocab.tokens.push_back("U");
    t.vocab.tokens.push_back("D");
    t.vocab.tokens.push_back("R");
    t.vocab.tokens.push_back("L");
    t.max_response_len = max_response_len;
    for (auto [m, n] : grids) {
        if (m < 1 || m > 9 || n < 1 || n > 9)
            throw std::invalid_argument("grid_paths dimensions must lie in [1, 9]");
        if (m + n + 1 > max_response_len)
            throw std::invalid_argument("grid " + std::to_string(m) + "x" + std::to_string(n) +
                                        " is unreachable within max_response_len");
        TokenSeq prompt = encode_number(m);
        TokenSeq side = encode_number(n);
        prompt.insert(prompt.end(), side.begin(), side.end());
        t.prompt_space.push_back({std::move(prompt), m + n});
    }
    validate_task(t);
    return t;
}

int verify(const TaskSpec& task, const TokenSeq& prompt, const TokenSeq& response) {
    switch (task.kind) {
        case TaskKind::sum_to_target: return verify_sum_to_target(task, prompt, response);
        case TaskKind::balanced_brackets: return verify_balanced_brackets(task, prompt, response);
        case TaskKind::grid_paths: return verify_grid_paths(task, prompt, response);
    }
    return 0;
}

double enumeration_candidate_count(const TaskSpec& task) {
    // Candidates are non-EOS bodies of length 1..max_len-1; every body is
    // tested with EOS appended. BOS never appears mid-sequence either, so the
    // per-position branching factor is V-2.
    double branch = static_cast<double>(task.vocab.size() - 2);
    double total = 0.0;
    double layer = 1.0;
    for (int len = 1; len + 1 <= task.max_response_len; ++len) {
        layer *= branch;
        total += layer;
    }
    return total;
}

SuccessSet enumerate_success_set(const TaskSpec& task, const TokenSeq& prompt) {
    validate_task(task);
    constexpr double kEnumerationGuard = 1e8;
    double candidates = enumeration_candidate_count(task);
    if (candidates > kEnumerationGuard) {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "success-set enumeration would scan %.3g sequences (guard %.0e); "
                      "reduce max_response_len or vocab size",
                      candidates, kEnumerationGuard);
        throw std::runtime_error(buf);
    }

    SuccessSet out;
    out.prompt = prompt;
    TokenSeq body;
    // Iterative DFS over bodies; tokens skip BOS and EOS.
    std::vector<Token> content;
    for (Token tok = 0; tok < task.vocab.size(); ++tok)
        if (tok != task.vocab.bos && tok != task.vocab.eos) content.push_back(tok);

    // depth-first with explicit stack of next-child indices
    std::vector<std::size_t> child{0};
    while (!child.empty()) {
        if (child.back() < content.size() &&
            static_cast<int>(body.size()) + 1 + 1 <= task.max_response_len) {
            body.push_back(content[child.back()]);
            TokenSeq candidate = body;
            candidate.push_back(task.vocab.eos);
            if (verify(task, prompt, candidate) == 1) out.members.push_back(candidate);
            child.push_back(0);
        } else {
            child.pop_back();
            if (!child.empty()) {
                body.pop_back();
                ++child.back();
            }
        }
    }
    std::sort(out.members.begin(), out.members.end());
    out.members.erase(std::unique(out.members.begin(), out.members.end()), out.members.end());
    return out;
}

std::size_t sample_prompt_index(const TaskSpec& task, RngStream& rng) {
    if (task.prompt_space.empty()) throw std::invalid_argument("task has an empty prompt space");
    return static_cast<std::size_t>(rng.uniform_int(task.prompt_space.size()));
}

TokenSeq sample_prompt(const TaskSpec& task, RngStream& rng) {
    return task.prompt_space[sample_prompt_index(task, rng)].prompt;
}

}  // namespace grpolab
