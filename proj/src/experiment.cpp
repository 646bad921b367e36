#include "grpolab/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "grpolab/metrics.hpp"

namespace grpolab {

namespace fs = std::filesystem;
using nlohmann::json;

std::string artifact_version() { return "grpolab 1.0.0"; }

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string utc_now() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

fs::path claim_run_dir(const fs::path& out_root, const std::string& label) {
    fs::create_directories(out_root);
    fs::path dir = out_root / label;
    for (int suffix = 2; fs::exists(dir); ++suffix)
        dir = out_root / (label + "-" + std::to_string(suffix));
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double percentile_sorted(const std::vector<double>& sorted, double q) {
    const std::size_t n = sorted.size();
    if (n == 0) return kNaN;
    if (n == 1) return sorted[0];
    double pos = q / 100.0 * static_cast<double>(n - 1);
    auto lo = static_cast<std::size_t>(pos);
    if (lo >= n - 1) return sorted[n - 1];
    double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

double median_of(std::vector<double> v) {
    if (v.empty()) return kNaN;
    std::sort(v.begin(), v.end());
    return percentile_sorted(v, 50.0);
}

double iqr_of(std::vector<double> v) {
    if (v.empty()) return kNaN;
    std::sort(v.begin(), v.end());
    return percentile_sorted(v, 75.0) - percentile_sorted(v, 25.0);
}

// Success sets enumerated once per run for the manifold diagnostics. Prompts
// whose success set exceeds the cap (or whose enumeration would trip the
// scan guard) are simply not tracked.
struct TrackedManifolds {
    std::vector<std::pair<std::string, SuccessSet>> sets;  // label -> members
};

TrackedManifolds enumerate_manifolds(const TaskSpec& task, std::size_t max_members) {
    TrackedManifolds out;
    std::set<std::string> seen;
    for (const PromptCase& pc : task.prompt_space) {
        std::string label = task.vocab.render(pc.prompt, "");
        if (!seen.insert(label).second) continue;
        try {
            SuccessSet s = enumerate_success_set(task, pc.prompt);
            if (!s.members.empty() && s.members.size() <= max_members)
                out.sets.emplace_back(label, std::move(s));
        } catch (const std::runtime_error&) {
            // enumeration guard tripped; this prompt is not tracked
        }
    }
    return out;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, const fs::path& out_root,
                         const std::string& label) {
    cfg.validate();
    TaskSpec task = cfg.task.build();

    RunResult res;
    res.dir = claim_run_dir(out_root, label);
    res.manifest_path = res.dir / "manifest.ini";
    res.metrics_path = res.dir / "metrics.jsonl";
    res.checkpoint_path = res.dir / "policy.txt";
    res.status = "running";

    const std::string started = utc_now();
    auto write_manifest = [&](const std::string& status, std::uint64_t steps,
                              const std::string& abort_reason) {
        std::vector<std::pair<std::string, std::string>> run_info = {
            {"label", label},
            {"artifact_version", artifact_version()},
            {"status", status},
            {"started_utc", started},
            {"finished_utc", status == "running" ? "" : utc_now()},
            {"completed_steps", std::to_string(steps)},
            {"metrics_file", "metrics.jsonl"},
            {"checkpoint_file", "policy.txt"},
        };
        if (!abort_reason.empty()) run_info.emplace_back("abort", abort_reason);
        write_text(res.manifest_path, serialize_experiment(cfg, nullptr, &run_info));
    };
    write_manifest("running", 0, "");

    TrackedManifolds manifolds = enumerate_manifolds(task, cfg.metrics.manifold_max_members);

    Trainer trainer(task, cfg.train, make_uniform_policy(task.vocab, cfg.window));
    std::ofstream metrics(res.metrics_path, std::ios::binary);
    if (!metrics) throw std::runtime_error("cannot write " + res.metrics_path.string());

    SamplingConfig eval_cfg;
    eval_cfg.temperature = cfg.metrics.eval_temperature;
    eval_cfg.top_p = cfg.metrics.eval_top_p;
    eval_cfg.max_len = cfg.train.sampling.max_len;

    json last_manifold_entropy = json::object();
    json last_manifold_kl = json::object();
    json last_manifold_kplus = json::object();

    try {
        for (int step = 1; step <= cfg.train.total_steps; ++step) {
            StepResult sr = trainer.step();
            const PolicyParams& params = trainer.params();

            // evaluation draw against the freshly updated policy
            std::vector<Rollout> eval_rollouts;
            std::vector<double> per_prompt_distinct, per_prompt_bleu;
            std::vector<double> pass_sums(cfg.metrics.pass_k.size(), 0.0);
            for (std::size_t pidx = 0; pidx < task.prompt_space.size(); ++pidx) {
                const TokenSeq& prompt = task.prompt_space[pidx].prompt;
                std::vector<TokenSeq> responses;
                int correct = 0;
                for (int member = 0; member < cfg.metrics.eval_samples; ++member) {
                    RngStream rng = derive_stream(cfg.train.master_seed, stream_tag::eval,
                                                  static_cast<std::uint64_t>(step), pidx,
                                                  static_cast<std::uint64_t>(member));
                    Rollout r = sample_rollout(params, prompt, eval_cfg, rng);
                    correct += verify(task, prompt, r.response);
                    responses.push_back(r.response);
                    eval_rollouts.push_back(std::move(r));
                }
                for (std::size_t ki = 0; ki < cfg.metrics.pass_k.size(); ++ki)
                    pass_sums[ki] +=
                        pass_at_k(cfg.metrics.eval_samples, correct, cfg.metrics.pass_k[ki]);
                try {
                    per_prompt_distinct.push_back(distinct_n(responses, 2));
                } catch (const std::invalid_argument&) {
                    // every response shorter than the n-gram order
                }
                per_prompt_bleu.push_back(self_bleu(responses, cfg.metrics.self_bleu_max_n));
            }
            const auto n_prompts = static_cast<double>(task.prompt_space.size());
            EntropyStats ent = token_entropy_stats(params, eval_rollouts);

            bool refresh_manifold = step == 1 || step == cfg.train.total_steps ||
                                    step % cfg.metrics.manifold_interval == 0;
            if (refresh_manifold) {
                last_manifold_entropy = json::object();
                last_manifold_kl = json::object();
                last_manifold_kplus = json::object();
                for (const auto& [mlabel, sset] : manifolds.sets) {
                    ManifoldStats ms = success_manifold_entropy(params, sset);
                    last_manifold_entropy[mlabel] = ms.entropy;
                    last_manifold_kl[mlabel] = ms.kl_uniform;
                    last_manifold_kplus[mlabel] = ms.k_plus;
                }
            }

            json row;
            row["step"] = sr.stats.step;
            row["mean_reward"] = sr.stats.mean_reward;
            row["train_entropy_mean"] = sr.stats.mean_token_entropy;
            row["loss"] = sr.stats.loss;
            row["grad_norm"] = sr.stats.grad_norm;
            row["groups_skipped"] = sr.stats.groups_skipped;
            row["groups_total"] = sr.stats.groups_total;
            row["adv_mean"] = sr.stats.adv_mean;
            row["adv_min"] = sr.stats.adv_min;
            row["adv_max"] = sr.stats.adv_max;
            row["prompt_conf_mean"] = sr.stats.prompt_conf_mean;
            row["answer_conf_mean"] = sr.stats.answer_conf_mean;
            json pk = json::object();
            for (std::size_t ki = 0; ki < cfg.metrics.pass_k.size(); ++ki)
                pk[std::to_string(cfg.metrics.pass_k[ki])] = pass_sums[ki] / n_prompts;
            row["pass_at"] = pk;
            row["entropy_mean"] = ent.mean;
            row["entropy_p05"] = ent.p05;
            row["entropy_p25"] = ent.p25;
            row["entropy_p50"] = ent.p50;
            row["entropy_p75"] = ent.p75;
            row["entropy_p95"] = ent.p95;
            double d2 = kNaN;
            if (!per_prompt_distinct.empty()) {
                d2 = 0.0;
                for (double v : per_prompt_distinct) d2 += v;
                d2 /= static_cast<double>(per_prompt_distinct.size());
            }
            row["distinct_2"] = d2;
            double sb = 0.0;
            for (double v : per_prompt_bleu) sb += v;
            row["self_bleu"] = sb / n_prompts;
            row["manifold_entropy"] = last_manifold_entropy;
            row["manifold_kl"] = last_manifold_kl;
            row["manifold_k_plus"] = last_manifold_kplus;

            metrics << row.dump() << "\n";
            metrics.flush();

            if (step == cfg.train.total_steps) {
                res.final_mean_reward = sr.stats.mean_reward;
                res.final_pass1 = pk.contains("1") ? pk["1"].get<double>() : kNaN;
                int max_k = *std::max_element(cfg.metrics.pass_k.begin(),
                                              cfg.metrics.pass_k.end());
                res.final_pass_maxk = pk[std::to_string(max_k)].get<double>();
                res.final_entropy_mean = ent.mean;
                if (last_manifold_entropy.empty()) {
                    res.final_manifold_entropy = kNaN;
                } else {
                    double acc = 0.0;
                    for (const auto& [k, v] : last_manifold_entropy.items())
                        acc += v.get<double>();
                    res.final_manifold_entropy =
                        acc / static_cast<double>(last_manifold_entropy.size());
                }
            }
        }
    } catch (const std::exception& ex) {
        res.status = "aborted";
        res.abort_reason = ex.what();
        res.completed_steps = trainer.completed_steps();
        write_text(res.dir / "abort.txt", std::string(ex.what()) + "\n");
        write_manifest("aborted", res.completed_steps, ex.what());
        throw;
    }

    save_policy_file(trainer.params(), res.checkpoint_path.string());
    res.status = "completed";
    res.completed_steps = trainer.completed_steps();
    write_manifest("completed", res.completed_steps, "");
    return res;
}

ReplayResult replay_manifest(const fs::path& manifest_path, const fs::path& out_root,
                             const std::string& label) {
    ExperimentFile file = load_experiment_file(manifest_path.string());
    std::string orig_label = "replay";
    std::string metrics_file = "metrics.jsonl";
    for (const auto& [key, value] : file.run_info) {
        if (key == "label" && !value.empty()) orig_label = value;
        if (key == "metrics_file" && !value.empty()) metrics_file = value;
    }

    ReplayResult out;
    out.original_metrics = (manifest_path.parent_path() / metrics_file).string();
    out.rerun = run_experiment(file.config, out_root,
                               label.empty() ? orig_label + "-replay" : label);
    if (fs::exists(out.original_metrics)) {
        out.compared = true;
        out.identical = read_text(out.original_metrics) == read_text(out.rerun.metrics_path);
    }
    return out;
}

ExperimentConfig apply_axis_value(const ExperimentConfig& base, const std::string& axis,
                                  const std::string& value) {
    ExperimentConfig cfg = base;
    if (axis == "algo") {
        cfg.train.algo = algo_from_name(value);
        if (cfg.train.algo != Algo::progrpo) cfg.train.arm.mode = ArmMode::off;
    } else if (axis == "alpha") {
        char* end = nullptr;
        cfg.train.arm.alpha = std::strtod(value.c_str(), &end);
        if (value.empty() || *end != '\0')
            throw std::invalid_argument("bad alpha value '" + value + "'");
    } else if (axis == "arm_mode") {
        cfg.train.arm.mode = arm_mode_from_name(value);
        if (cfg.train.arm.mode != ArmMode::off && cfg.train.algo == Algo::grpo)
            cfg.train.algo = Algo::progrpo;
    } else if (axis == "seed") {
        char* end = nullptr;
        cfg.train.master_seed = std::strtoull(value.c_str(), &end, 10);
        if (value.empty() || *end != '\0')
            throw std::invalid_argument("bad seed value '" + value + "'");
    } else {
        throw std::invalid_argument("sweep axis must be one of algo, alpha, arm_mode, seed");
    }
    return cfg;
}

SweepResult run_sweep(const ExperimentConfig& base, const SweepSpec& spec,
                      const fs::path& out_root, const std::string& label,
                      std::ostream* progress) {
    spec.validate();
    SweepResult result;
    result.dir = claim_run_dir(out_root, label);

    std::vector<std::uint64_t> seeds = spec.seeds;
    if (spec.axis == "seed")
        seeds = {0};  // placeholder; the axis value itself carries the seed
    else if (seeds.empty())
        seeds = {base.train.master_seed};

    json summary_runs = json::array();
    for (const std::string& value : spec.values) {
        SweepRow row;
        row.value = value;
        std::vector<double> pass1, passk, entropy, manifold, reward;
        for (std::uint64_t seed : seeds) {
            ExperimentConfig cfg;
            std::string run_label;
            try {
                cfg = apply_axis_value(base, spec.axis, value);
                if (spec.axis != "seed") {
                    cfg.train.master_seed = seed;
                    run_label = spec.axis + "_" + value + "/seed_" + std::to_string(seed);
                } else {
                    run_label = "seed_" + value;
                }
                // child directories live inside the sweep directory
                fs::path child_root = result.dir / fs::path(run_label).parent_path();
                std::string child_label = fs::path(run_label).filename().string();
                RunResult rr = run_experiment(cfg, child_root, child_label);
                ++row.runs;
                pass1.push_back(rr.final_pass1);
                passk.push_back(rr.final_pass_maxk);
                entropy.push_back(rr.final_entropy_mean);
                if (std::isfinite(rr.final_manifold_entropy))
                    manifold.push_back(rr.final_manifold_entropy);
                reward.push_back(rr.final_mean_reward);
                json jr;
                jr["value"] = value;
                jr["seed"] = spec.axis == "seed" ? std::stoull(value) : seed;
                jr["dir"] = rr.dir.string();
                jr["pass1"] = rr.final_pass1;
                jr["pass_maxk"] = rr.final_pass_maxk;
                jr["entropy_mean"] = rr.final_entropy_mean;
                jr["manifold_entropy"] = rr.final_manifold_entropy;
                jr["mean_reward"] = rr.final_mean_reward;
                jr["status"] = "completed";
                summary_runs.push_back(jr);
                result.runs.push_back(std::move(rr));
                if (progress)
                    *progress << "[sweep] " << spec.axis << "=" << value << " seed="
                              << (spec.axis == "seed" ? value : std::to_string(seed))
                              << "  pass@1 " << std::fixed << std::setprecision(4)
                              << pass1.back() << "  reward " << reward.back() << "\n";
            } catch (const std::exception& ex) {
                ++row.runs;
                ++row.failed;
                json jr;
                jr["value"] = value;
                jr["status"] = "failed";
                jr["error"] = ex.what();
                summary_runs.push_back(jr);
                if (progress)
                    *progress << "[sweep] " << spec.axis << "=" << value
                              << " FAILED: " << ex.what() << "\n";
            }
        }
        row.pass1_median = median_of(pass1);
        row.pass1_iqr = iqr_of(pass1);
        row.passk_median = median_of(passk);
        row.passk_iqr = iqr_of(passk);
        row.entropy_median = median_of(entropy);
        row.manifold_median = median_of(manifold);
        row.reward_median = median_of(reward);
        result.rows.push_back(std::move(row));
    }

    json summary;
    summary["axis"] = spec.axis;
    json jrows = json::array();
    for (const SweepRow& row : result.rows) {
        json jr;
        jr["value"] = row.value;
        jr["runs"] = row.runs;
        jr["failed"] = row.failed;
        jr["pass1_median"] = row.pass1_median;
        jr["pass1_iqr"] = row.pass1_iqr;
        jr["passk_median"] = row.passk_median;
        jr["passk_iqr"] = row.passk_iqr;
        jr["entropy_median"] = row.entropy_median;
        jr["manifold_entropy_median"] = row.manifold_median;
        jr["reward_median"] = row.reward_median;
        jrows.push_back(jr);
    }
    summary["values"] = jrows;
    summary["runs"] = summary_runs;
    write_text(result.dir / "summary.json", summary.dump(2) + "\n");

    std::ostringstream table;
    table << std::left << std::setw(24) << spec.axis << std::right << std::setw(8) << "runs"
          << std::setw(12) << "pass@1" << std::setw(12) << "p1 iqr" << std::setw(12)
          << "pass@maxk" << std::setw(12) << "entropy" << std::setw(12) << "manifold"
          << std::setw(12) << "reward" << "\n";
    table << std::string(104, '-') << "\n";
    table << std::fixed << std::setprecision(4);
    for (const SweepRow& row : result.rows) {
        table << std::left << std::setw(24) << row.value << std::right << std::setw(8)
              << row.runs - row.failed << std::setw(12) << row.pass1_median << std::setw(12)
              << row.pass1_iqr << std::setw(12) << row.passk_median << std::setw(12)
              << row.entropy_median << std::setw(12) << row.manifold_median << std::setw(12)
              << row.reward_median << "\n";
    }
    write_text(result.dir / "summary.txt", table.str());
    if (progress) *progress << table.str();
    return result;
}

}  // namespace grpolab
