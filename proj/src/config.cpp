#include "grpolab/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace grpolab {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

[[noreturn]] void fail(const std::string& source, int line, const std::string& msg) {
    throw std::runtime_error(source + " line " + std::to_string(line) + ": " + msg);
}

struct Entry {
    std::string value;
    int line = 0;
};

struct Section {
    std::map<std::string, Entry> kv;
    std::vector<std::pair<std::string, std::string>> ordered;  // file order
    int line = 0;
    mutable std::set<std::string> used;
};

struct RawFile {
    std::string source;
    std::map<std::string, Section> sections;

    bool has(const std::string& name) const { return sections.count(name) > 0; }
};

RawFile parse_raw(const std::string& text, const std::string& source) {
    static const std::set<std::string> known = {"task", "train", "arm",
                                                "metrics", "sweep", "run"};
    RawFile raw;
    raw.source = source;
    std::istringstream is(text);
    std::string line;
    std::string current;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') fail(source, lineno, "unterminated section header");
            std::string name = trim(t.substr(1, t.size() - 2));
            if (!known.count(name))
                fail(source, lineno,
                     "unknown section [" + name +
                         "] (expected task, train, arm, metrics, sweep, or run)");
            if (raw.sections.count(name))
                fail(source, lineno, "duplicate section [" + name + "]");
            raw.sections[name].line = lineno;
            current = name;
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos)
            fail(source, lineno, "expected 'key = value' or a [section] header");
        if (current.empty()) fail(source, lineno, "key before any [section] header");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty()) fail(source, lineno, "empty key");
        Section& sec = raw.sections[current];
        if (sec.kv.count(key))
            fail(source, lineno, "duplicate key '" + key + "' in [" + current + "]");
        sec.kv[key] = {value, lineno};
        sec.ordered.emplace_back(key, value);
    }
    return raw;
}

// Typed access into one section with consumed-key bookkeeping.
class Reader {
  public:
    Reader(const RawFile& raw, const std::string& section)
        : raw_(raw), name_(section), sec_(raw.sections.count(section)
                                              ? &raw.sections.at(section)
                                              : nullptr) {}

    bool present() const { return sec_ != nullptr; }

    const Entry* find(const std::string& key) const {
        if (!sec_) return nullptr;
        auto it = sec_->kv.find(key);
        if (it == sec_->kv.end()) return nullptr;
        sec_->used.insert(key);
        return &it->second;
    }

    [[noreturn]] void fail_key(const std::string& key, const Entry& e,
                               const std::string& msg) const {
        fail(raw_.source, e.line, "[" + name_ + "] " + key + ": " + msg);
    }

    std::string require(const std::string& key) const {
        const Entry* e = find(key);
        if (!e) {
            int line = sec_ ? sec_->line : 0;
            fail(raw_.source, line, "[" + name_ + "] missing required key '" + key + "'");
        }
        return e->value;
    }

    void get_string(const std::string& key, std::string& out) const {
        if (const Entry* e = find(key)) out = e->value;
    }

    void get_int(const std::string& key, int& out) const {
        if (const Entry* e = find(key)) out = parse_int(key, *e);
    }

    void get_u64(const std::string& key, std::uint64_t& out) const {
        if (const Entry* e = find(key)) {
            char* end = nullptr;
            unsigned long long v = std::strtoull(e->value.c_str(), &end, 10);
            if (e->value.empty() || *end != '\0')
                fail_key(key, *e, "not an unsigned integer ('" + e->value + "')");
            out = v;
        }
    }

    void get_size(const std::string& key, std::size_t& out) const {
        std::uint64_t v = out;
        get_u64(key, v);
        out = static_cast<std::size_t>(v);
    }

    void get_double(const std::string& key, double& out) const {
        if (const Entry* e = find(key)) {
            char* end = nullptr;
            double v = std::strtod(e->value.c_str(), &end);
            if (e->value.empty() || *end != '\0')
                fail_key(key, *e, "not a number ('" + e->value + "')");
            out = v;
        }
    }

    int parse_int(const std::string& key, const Entry& e) const {
        char* end = nullptr;
        long v = std::strtol(e.value.c_str(), &end, 10);
        if (e.value.empty() || *end != '\0')
            fail_key(key, e, "not an integer ('" + e.value + "')");
        return static_cast<int>(v);
    }

    std::vector<std::string> split_list(const std::string& value) const {
        std::string v = value;
        std::replace(v.begin(), v.end(), ',', ' ');
        std::istringstream is(v);
        std::vector<std::string> out;
        std::string tok;
        while (is >> tok) out.push_back(tok);
        return out;
    }

    void get_int_list(const std::string& key, std::vector<int>& out) const {
        if (const Entry* e = find(key)) {
            std::vector<int> vals;
            for (const std::string& tok : split_list(e->value)) {
                char* end = nullptr;
                long v = std::strtol(tok.c_str(), &end, 10);
                if (*end != '\0') fail_key(key, *e, "not an integer list ('" + e->value + "')");
                vals.push_back(static_cast<int>(v));
            }
            if (vals.empty()) fail_key(key, *e, "empty list");
            out = std::move(vals);
        }
    }

    void finish() const {
        if (!sec_) return;
        for (const auto& [key, entry] : sec_->kv)
            if (!sec_->used.count(key))
                fail(raw_.source, entry.line, "unknown key '" + key + "' in [" + name_ + "]");
    }

  private:
    const RawFile& raw_;
    std::string name_;
    const Section* sec_;
};

std::string normalize_mode_word(std::string s) {
    std::replace(s.begin(), s.end(), '-', '_');
    return s;
}

}  // namespace

TaskSpec TaskConfig::build() const {
    switch (kind) {
        case TaskKind::sum_to_target: return make_sum_to_target_task(targets, max_response_len);
        case TaskKind::balanced_brackets:
            return make_balanced_brackets_task(lengths, max_response_len);
        case TaskKind::grid_paths: return make_grid_paths_task(grids, max_response_len);
    }
    throw std::logic_error("unknown task kind");
}

void MetricsConfig::validate() const {
    if (pass_k.empty()) throw std::invalid_argument("pass_k list must not be empty");
    if (eval_samples < 2) throw std::invalid_argument("eval_samples must be at least 2");
    for (int k : pass_k)
        if (k < 1 || k > eval_samples)
            throw std::invalid_argument("pass_k entries must lie in [1, eval_samples]");
    if (!(eval_temperature > 0.0))
        throw std::invalid_argument("eval_temperature must be positive");
    if (!(eval_top_p > 0.0) || eval_top_p > 1.0)
        throw std::invalid_argument("eval_top_p must lie in (0, 1]");
    if (manifold_interval < 1)
        throw std::invalid_argument("manifold_interval must be at least 1");
    if (self_bleu_max_n < 1) throw std::invalid_argument("self_bleu_max_n must be at least 1");
}

void ExperimentConfig::validate() const {
    if (window < 1) throw std::invalid_argument("window must be at least 1");
    task.build();  // validates the task description
    train.validate();
    metrics.validate();
}

void SweepSpec::validate() const {
    std::string a = normalize_mode_word(axis);
    if (a != "algo" && a != "alpha" && a != "arm_mode" && a != "seed")
        throw std::invalid_argument("sweep axis must be one of algo, alpha, arm_mode, seed");
    if (values.empty()) throw std::invalid_argument("sweep values must not be empty");
}

ExperimentConfig default_experiment_config() {
    ExperimentConfig cfg;
    // struct defaults already describe the reference sum-to-target setup; the
    // sampling budget just needs to match the task's response budget.
    cfg.train.sampling.max_len = cfg.task.max_response_len;
    return cfg;
}

ExperimentFile parse_experiment_text(const std::string& text, const std::string& source) {
    RawFile raw = parse_raw(text, source);
    ExperimentFile out;
    ExperimentConfig& cfg = out.config;

    if (!raw.has("task"))
        throw std::runtime_error(source + ": missing [task] section (kind, instance list, "
                                          "max_response_len)");
    {
        Reader r(raw, "task");
        cfg.task.targets.clear();
        cfg.task.lengths.clear();
        cfg.task.grids.clear();
        std::string kind = r.require("kind");
        try {
            cfg.task.kind = task_kind_from_name(kind);
        } catch (const std::exception& ex) {
            r.fail_key("kind", *r.find("kind"), ex.what());
        }
        r.require("max_response_len");
        r.get_int("max_response_len", cfg.task.max_response_len);
        switch (cfg.task.kind) {
            case TaskKind::sum_to_target:
                r.require("targets");
                r.get_int_list("targets", cfg.task.targets);
                break;
            case TaskKind::balanced_brackets:
                r.require("lengths");
                r.get_int_list("lengths", cfg.task.lengths);
                break;
            case TaskKind::grid_paths: {
                const Entry* e = r.find("grids");
                if (!e) r.require("grids");
                for (const std::string& tok : r.split_list(e->value)) {
                    auto x = tok.find('x');
                    if (x == std::string::npos || x == 0 || x + 1 >= tok.size())
                        r.fail_key("grids", *e, "expected entries like '2x3' ('" + tok + "')");
                    char* end = nullptr;
                    long m = std::strtol(tok.substr(0, x).c_str(), &end, 10);
                    bool ok = *end == '\0';
                    long n = std::strtol(tok.substr(x + 1).c_str(), &end, 10);
                    ok = ok && *end == '\0';
                    if (!ok) r.fail_key("grids", *e, "expected entries like '2x3' ('" + tok + "')");
                    cfg.task.grids.emplace_back(static_cast<int>(m), static_cast<int>(n));
                }
                break;
            }
        }
        r.finish();
    }

    {
        Reader r(raw, "train");
        if (const Entry* e = r.find("algo")) {
            try {
                cfg.train.algo = algo_from_name(e->value);
            } catch (const std::exception& ex) {
                r.fail_key("algo", *e, ex.what());
            }
        }
        r.get_int("group_size", cfg.train.group_size);
        r.get_int("prompts_per_batch", cfg.train.prompts_per_batch);
        r.get_int("minibatches_per_batch", cfg.train.minibatches_per_batch);
        r.get_int("updates_per_collection", cfg.train.updates_per_collection);
        r.get_double("learning_rate", cfg.train.learning_rate);
        if (const Entry* e = r.find("normalization")) {
            try {
                cfg.train.normalization = loss_norm_from_name(e->value);
            } catch (const std::exception& ex) {
                r.fail_key("normalization", *e, ex.what());
            }
        }
        r.get_double("eps_low", cfg.train.clip.eps_low);
        r.get_double("eps_high", cfg.train.clip.eps_high);
        r.get_double("temperature", cfg.train.sampling.temperature);
        r.get_double("top_p", cfg.train.sampling.top_p);
        r.get_int("max_sample_len", cfg.train.sampling.max_len);
        r.get_int("window", cfg.window);
        r.get_double("delta", cfg.train.delta);
        r.get_int("total_steps", cfg.train.total_steps);
        r.get_u64("seed", cfg.train.master_seed);
        r.finish();
    }

    {
        Reader r(raw, "arm");
        if (const Entry* e = r.find("mode")) {
            try {
                cfg.train.arm.mode = arm_mode_from_name(normalize_mode_word(e->value));
            } catch (const std::exception& ex) {
                r.fail_key("mode", *e, ex.what());
            }
        }
        r.get_double("alpha", cfg.train.arm.alpha);
        if (const Entry* e = r.find("skip_rule")) {
            try {
                cfg.train.arm.skip_rule = skip_rule_from_name(normalize_mode_word(e->value));
            } catch (const std::exception& ex) {
                r.fail_key("skip_rule", *e, ex.what());
            }
        }
        r.get_double("fraction", cfg.train.fraction);
        r.finish();
    }

    {
        Reader r(raw, "metrics");
        r.get_int_list("pass_k", cfg.metrics.pass_k);
        r.get_int("eval_samples", cfg.metrics.eval_samples);
        r.get_double("eval_temperature", cfg.metrics.eval_temperature);
        r.get_double("eval_top_p", cfg.metrics.eval_top_p);
        r.get_int("manifold_interval", cfg.metrics.manifold_interval);
        r.get_size("manifold_max_members", cfg.metrics.manifold_max_members);
        r.get_int("self_bleu_max_n", cfg.metrics.self_bleu_max_n);
        r.finish();
    }

    if (raw.has("sweep")) {
        Reader r(raw, "sweep");
        SweepSpec sw;
        sw.axis = normalize_mode_word(r.require("axis"));
        const Entry* values = r.find("values");
        if (!values) r.require("values");
        sw.values = r.split_list(values->value);
        if (const Entry* e = r.find("seeds")) {
            for (const std::string& tok : r.split_list(e->value)) {
                auto dots = tok.find("..");
                char* end = nullptr;
                if (dots == std::string::npos) {
                    unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
                    if (*end != '\0') r.fail_key("seeds", *e, "bad seed '" + tok + "'");
                    sw.seeds.push_back(v);
                } else {
                    unsigned long long a = std::strtoull(tok.substr(0, dots).c_str(), &end, 10);
                    bool ok = *end == '\0';
                    unsigned long long b = std::strtoull(tok.substr(dots + 2).c_str(), &end, 10);
                    ok = ok && *end == '\0' && a <= b;
                    if (!ok) r.fail_key("seeds", *e, "bad seed range '" + tok + "'");
                    for (unsigned long long s = a; s <= b; ++s) sw.seeds.push_back(s);
                }
            }
        }
        try {
            sw.validate();
        } catch (const std::exception& ex) {
            fail(source, raw.sections.at("sweep").line, std::string("[sweep] ") + ex.what());
        }
        out.sweep = std::move(sw);
        r.finish();
    }

    if (raw.has("run")) {
        out.run_info = raw.sections.at("run").ordered;
        for (const auto& [key, value] : out.run_info)
            raw.sections.at("run").used.insert(key);
    }

    try {
        cfg.validate();
    } catch (const std::exception& ex) {
        throw std::runtime_error(source + ": " + ex.what());
    }
    return out;
}

ExperimentFile load_experiment_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_experiment_text(ss.str(), path);
}

std::string serialize_experiment(const ExperimentConfig& cfg, const SweepSpec* sweep,
                                 const std::vector<std::pair<std::string, std::string>>* run_info) {
    std::ostringstream os;
    os << "[task]\n";
    os << "kind = " << task_kind_name(cfg.task.kind) << "\n";
    switch (cfg.task.kind) {
        case TaskKind::sum_to_target: {
            os << "targets =";
            for (int t : cfg.task.targets) os << " " << t;
            os << "\n";
            break;
        }
        case TaskKind::balanced_brackets: {
            os << "lengths =";
            for (int l : cfg.task.lengths) os << " " << l;
            os << "\n";
            break;
        }
        case TaskKind::grid_paths: {
            os << "grids =";
            for (auto [m, n] : cfg.task.grids) os << " " << m << "x" << n;
            os << "\n";
            break;
        }
    }
    os << "max_response_len = " << cfg.task.max_response_len << "\n";

    os << "\n[train]\n";
    os << "algo = " << algo_name(cfg.train.algo) << "\n";
    os << "group_size = " << cfg.train.group_size << "\n";
    os << "prompts_per_batch = " << cfg.train.prompts_per_batch << "\n";
    os << "minibatches_per_batch = " << cfg.train.minibatches_per_batch << "\n";
    os << "updates_per_collection = " << cfg.train.updates_per_collection << "\n";
    os << "learning_rate = " << fmt_double(cfg.train.learning_rate) << "\n";
    os << "normalization = " << loss_norm_name(cfg.train.normalization) << "\n";
    os << "eps_low = " << fmt_double(cfg.train.clip.eps_low) << "\n";
    os << "eps_high = " << fmt_double(cfg.train.clip.eps_high) << "\n";
    os << "temperature = " << fmt_double(cfg.train.sampling.temperature) << "\n";
    os << "top_p = " << fmt_double(cfg.train.sampling.top_p) << "\n";
    os << "max_sample_len = " << cfg.train.sampling.max_len << "\n";
    os << "window = " << cfg.window << "\n";
    os << "delta = " << fmt_double(cfg.train.delta) << "\n";
    os << "total_steps = " << cfg.train.total_steps << "\n";
    os << "seed = " << cfg.train.master_seed << "\n";

    os << "\n[arm]\n";
    os << "mode = " << arm_mode_name(cfg.train.arm.mode) << "\n";
    os << "alpha = " << fmt_double(cfg.train.arm.alpha) << "\n";
    os << "skip_rule = " << skip_rule_name(cfg.train.arm.skip_rule) << "\n";
    os << "fraction = " << fmt_double(cfg.train.fraction) << "\n";

    os << "\n[metrics]\n";
    os << "pass_k =";
    for (int k : cfg.metrics.pass_k) os << " " << k;
    os << "\n";
    os << "eval_samples = " << cfg.metrics.eval_samples << "\n";
    os << "eval_temperature = " << fmt_double(cfg.metrics.eval_temperature) << "\n";
    os << "eval_top_p = " << fmt_double(cfg.metrics.eval_top_p) << "\n";
    os << "manifold_interval = " << cfg.metrics.manifold_interval << "\n";
    os << "manifold_max_members = " << cfg.metrics.manifold_max_members << "\n";
    os << "self_bleu_max_n = " << cfg.metrics.self_bleu_max_n << "\n";

    if (sweep) {
        os << "\n[sweep]\n";
        os << "axis = " << sweep->axis << "\n";
        os << "values =";
        for (const std::string& v : sweep->values) os << " " << v;
        os << "\n";
        if (!sweep->seeds.empty()) {
            os << "seeds =";
            for (std::uint64_t s : sweep->seeds) os << " " << s;
            os << "\n";
        }
    }
    if (run_info && !run_info->empty()) {
        os << "\n[run]\n";
        for (const auto& [key, value] : *run_info) os << key << " = " << value << "\n";
    }
    return os.str();
}

}  // namespace grpolab
