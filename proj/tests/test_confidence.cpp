#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "grpolab/confidence.hpp"
#include "grpolab/policy.hpp"
#include "grpolab/rng.hpp"

using namespace grpolab;

namespace {

std::vector<double> logs_of(const std::vector<double>& probs) {
    std::vector<double> out;
    out.reserve(probs.size());
    for (double p : probs) out.push_back(std::log(p));
    return out;
}

double confidence_of(const std::vector<double>& probs, double fraction) {
    return sequence_confidence(probs, logs_of(probs), fraction);
}

Vocab small_vocab() {
    Vocab v;
    v.tokens = {"<bos>", "<eos>", "a", "b"};
    return v;
}

}  // namespace

TEST_CASE("lowest-probability position selection on a five-step sequence") {
    std::vector<double> probs = {0.9, 0.5, 0.8, 0.1, 0.95};
    std::vector<std::size_t> sel = select_low_prob_positions(probs, 0.2);
    REQUIRE(sel.size() == 1);  // ceil(0.2 * 5) = 1
    CHECK(sel[0] == 3);
    CHECK(confidence_of(probs, 0.2) == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("equal probabilities tie-break toward earlier positions") {
    std::vector<double> probs(10, 0.5);
    std::vector<std::size_t> sel = select_low_prob_positions(probs, 0.2);
    REQUIRE(sel.size() == 2);  // ceil(0.2 * 10) = 2
    CHECK(sel[0] == 0);
    CHECK(sel[1] == 1);
    CHECK(confidence_of(probs, 0.2) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("full-fraction confidence is the plain geometric mean") {
    std::vector<double> probs = {0.1, 0.4};
    std::vector<std::size_t> sel = select_low_prob_positions(probs, 1.0);
    REQUIRE(sel.size() == 2);
    CHECK(sel == std::vector<std::size_t>{0, 1});
    // exp((ln 0.1 + ln 0.4) / 2) = sqrt(0.04) = 0.2
    CHECK(confidence_of(probs, 1.0) == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("selection size follows the ceiling rule") {
    auto k_for = [](std::size_t n, double fraction) {
        std::vector<double> probs(n, 0.5);
        return select_low_prob_positions(probs, fraction).size();
    };
    CHECK(k_for(1, 0.2) == 1);   // floor of one position
    CHECK(k_for(4, 0.2) == 1);   // ceil(0.8)
    CHECK(k_for(5, 0.2) == 1);   // ceil(1.0)
    CHECK(k_for(6, 0.2) == 2);   // ceil(1.2)
    CHECK(k_for(10, 0.2) == 2);  // ceil(2.0)
    CHECK(k_for(11, 0.2) == 3);  // ceil(2.2)
    CHECK(k_for(3, 1.0) == 3);
    CHECK(k_for(7, 0.5) == 4);   // ceil(3.5)
}

TEST_CASE("selected positions always carry the smallest product of probabilities") {
    // brute force over every subset of matching size, all lengths up to 12
    RngStream rng(2024);
    for (int n = 1; n <= 12; ++n) {
        for (int trial = 0; trial < 30; ++trial) {
            std::vector<double> probs(n);
            for (double& p : probs) p = 0.05 + 0.9 * rng.uniform();
            double fraction = 0.1 + 0.9 * rng.uniform();
            std::vector<std::size_t> sel = select_low_prob_positions(probs, fraction);
            std::size_t k = sel.size();
            REQUIRE(k >= 1);
            CHECK(std::is_sorted(sel.begin(), sel.end()));

            double chosen = 0.0;
            for (std::size_t i : sel) chosen += std::log(probs[i]);

            double best = 0.0;
            bool first = true;
            for (unsigned mask = 0; mask < (1u << n); ++mask) {
                if (static_cast<std::size_t>(__builtin_popcount(mask)) != k) continue;
                double s = 0.0;
                for (int i = 0; i < n; ++i)
                    if (mask & (1u << i)) s += std::log(probs[i]);
                if (first || s < best) best = s;
                first = false;
            }
            CHECK(chosen == doctest::Approx(best).epsilon(1e-12));
        }
    }
}

TEST_CASE("raising a selected probability never lowers confidence") {
    std::vector<double> probs = {0.9, 0.2, 0.6, 0.3};
    double before = confidence_of(probs, 0.5);  // selects {1, 3}
    probs[1] = 0.25;
    double after = confidence_of(probs, 0.5);  // same selection, higher low value
    CHECK(after > before);
}

TEST_CASE("empty sequences and bad fractions are rejected") {
    CHECK_THROWS_AS(select_low_prob_positions({}, 0.2), std::invalid_argument);
    CHECK_THROWS_AS(confidence_of({}, 0.2), std::invalid_argument);
    CHECK_THROWS_AS(select_low_prob_positions({0.5}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(select_low_prob_positions({0.5}, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(select_low_prob_positions({0.5}, -0.1), std::invalid_argument);
}

TEST_CASE("prompt confidence under the uniform policy is one over V") {
    PolicyParams p = make_uniform_policy(small_vocab(), 2);
    CHECK(prompt_confidence(p, {2, 3}, 0.2) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(prompt_confidence(p, {2}, 1.0) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("prompt confidence matches a hand-built mixed policy") {
    PolicyParams p = make_uniform_policy(small_vocab(), 2);
    p.logits_at({0, 0}) = {std::log(2.0), 0.0, 0.0, 0.0};  // probs [0.4, 0.2, 0.2, 0.2]
    p.logits_at({0, 2}) = {0.0, 0.0, std::log(3.0), 0.0};  // probs [1/6, 1/6, 1/2, 1/6]
    // Scoring prompt {2, 3}: P(2 | BOS BOS) = 0.2, then P(3 | BOS 2) = 1/6.
    double c_full = prompt_confidence(p, {2, 3}, 1.0);
    CHECK(c_full == doctest::Approx(std::sqrt(0.2 * (1.0 / 6.0))).epsilon(1e-12));
    double c_low = prompt_confidence(p, {2, 3}, 0.2);  // k=1 -> min(0.2, 1/6)
    CHECK(c_low == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("a near-deterministic policy scores its prompt near one") {
    PolicyParams p = make_uniform_policy(small_vocab(), 1);
    p.logits_at({0}) = {0.0, 0.0, 40.0, 0.0};
    p.logits_at({2}) = {0.0, 0.0, 0.0, 40.0};
    CHECK(prompt_confidence(p, {2, 3}, 0.2) > 0.999);
}

TEST_CASE("answer confidence works from the recorded rollout probabilities") {
    Rollout roll;
    roll.prompt = {2};
    roll.response = {3, 2, 3, 2, 1};
    roll.step_probs = {0.9, 0.5, 0.8, 0.1, 0.95};
    roll.step_logprobs = logs_of(roll.step_probs);
    CHECK(answer_confidence(roll, 0.2) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(answer_confidence(roll, 1.0) ==
          doctest::Approx(std::exp((std::log(0.9) + std::log(0.5) + std::log(0.8) +
                                    std::log(0.1) + std::log(0.95)) /
                                   5.0))
              .epsilon(1e-13));
}

TEST_CASE("single-token answers return that token's probability at any fraction") {
    for (double fraction : {0.2, 0.5, 1.0}) {
        Rollout roll;
        roll.response = {1};
        roll.step_probs = {0.37};
        roll.step_logprobs = logs_of(roll.step_probs);
        CHECK(answer_confidence(roll, fraction) == doctest::Approx(0.37).epsilon(1e-14));
    }
}

TEST_CASE("group confidence aggregates prompt and per-member answers") {
    PolicyParams p = make_uniform_policy(small_vocab(), 2);
    std::vector<Rollout> group(2);
    group[0].response = {2, 1};
    group[0].step_probs = {0.5, 0.8};
    group[0].step_logprobs = logs_of(group[0].step_probs);
    group[1].response = {3, 1};
    group[1].step_probs = {0.2, 0.9};
    group[1].step_logprobs = logs_of(group[1].step_probs);

    ConfidenceReport rep = group_confidence(p, {2}, group, 0.2);
    CHECK(rep.prompt_conf == doctest::Approx(0.25).epsilon(1e-14));
    REQUIRE(rep.answer_conf.size() == 2);
    CHECK(rep.answer_conf[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(rep.answer_conf[1] == doctest::Approx(0.2).epsilon(1e-14));
    CHECK(rep.answer_mean == doctest::Approx(0.35).epsilon(1e-14));
}

TEST_CASE("confidence of any sequence lies in the unit interval") {
    RngStream rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        int n = 1 + static_cast<int>(rng.uniform_int(12));
        std::vector<double> probs(n);
        for (double& p : probs) p = 1e-6 + (1.0 - 2e-6) * rng.uniform();
        double c = confidence_of(probs, 0.2);
        CHECK(c > 0.0);
        CHECK(c <= 1.0);
    }
}
