#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "grpolab/rng.hpp"
#include "grpolab/vocab.hpp"

namespace grpolab {

enum class TaskKind { sum_to_target, balanced_brackets, grid_paths };

std::string task_kind_name(TaskKind k);
TaskKind task_kind_from_name(const std::string& name);

struct PromptCase {
    TokenSeq prompt;
    int difficulty = 0;
};

// A synthetic verifiable-reward task: a finite prompt space, a shared vocab
// for prompts and responses, and a deterministic binary verifier.
struct TaskSpec {
    TaskKind kind = TaskKind::sum_to_target;
    Vocab vocab;
    std::vector<PromptCase> prompt_space;
    int max_response_len = 4;  // response budget including the terminating EOS
};

// All distinct correct responses for one prompt.
struct SuccessSet {
    TokenSeq prompt;
    std::vector<TokenSeq> members;  // EOS-terminated, deduplicated, sorted
    std::size_t cardinality() const { return members.size(); }
};

// Task builders. Prompts encode the instance with tokens from the task vocab
// so the policy that generates answers can also score the prompt.
//   sum_to_target:     prompt = decimal digits of the target; a response is
//                      one or more digits summing to the target, then EOS.
//   balanced_brackets: prompt = one digit, the required bracket-string length
//                      (even, 2..8); a response is a balanced bracket string
//                      of exactly that length, then EOS.
//   grid_paths:        prompt = two digits m, n; a response is a minimal
//                      U/D/R/L path from (0,0) to (m,n), i.e. m rights and
//                      n ups in any order, then EOS.
TaskSpec make_sum_to_target_task(const std::vector<int>& targets, int max_response_len);
TaskSpec make_balanced_brackets_task(const std::vector<int>& lengths, int max_response_len);
TaskSpec make_grid_paths_task(const std::vector<std::pair<int, int>>& grids, int max_response_len);

// 1 iff the response is well-formed (single EOS at the end, within budget)
// and semantically correct for the prompt. Deterministic and total; malformed
// generations simply score 0.
int verify(const TaskSpec& task, const TokenSeq& prompt, const TokenSeq& response);

// Exhaustive enumeration of every correct EOS-terminated response up to the
// budget. Guarded so runaway vocab/length combinations error out instead of
// hanging.
SuccessSet enumerate_success_set(const TaskSpec& task, const TokenSeq& prompt);

// Number of candidate sequences enumerate_success_set would scan.
double enumeration_candidate_count(const TaskSpec& task);

std::size_t sample_prompt_index(const TaskSpec& task, RngStream& rng);
TokenSeq sample_prompt(const TaskSpec& task, RngStream& rng);

}  // namespace grpolab
