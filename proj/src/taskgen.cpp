#include "csr/taskgen.hpp"

#include <algorithm>
#include <set>

namespace csr {

std::string structure_name(StructureKind kind) {
    switch (kind) {
        case StructureKind::linear_chain: return "linear_chain";
        case StructureKind::tree: return "tree";
        case StructureKind::dag_confounders: return "dag_confounders";
    }
    throw std::logic_error("structure_name");
}

StructureKind structure_from_name(const std::string& name) {
    if (name == "linear_chain") return StructureKind::linear_chain;
    if (name == "tree") return StructureKind::tree;
    if (name == "dag_confounders") return StructureKind::dag_confounders;
    throw std::invalid_argument("unknown structure kind: " + name);
}

void GeneratorConfig::validate() const {
    if (answer_vocab < 2) throw std::invalid_argument("answer_vocab must be >= 2");
    if (operand_min < 0 || operand_max >= answer_vocab || operand_min > operand_max)
        throw std::invalid_argument("operand range must sit inside [0, answer_vocab)");
    if (steps_min < 1 || steps_min > steps_max || steps_max > max_steps_cap)
        throw std::invalid_argument("bad num_steps range");
    if (mix_linear < 0 || mix_tree < 0 || mix_dag < 0 ||
        mix_linear + mix_tree + mix_dag <= 0)
        throw std::invalid_argument("structure mix weights must be nonnegative, not all zero");
    if (shortcut_rate < 0 || shortcut_rate > 1)
        throw std::invalid_argument("shortcut_rate outside [0,1]");
    if (reject_budget < 1) throw std::invalid_argument("reject_budget must be >= 1");
}

nlohmann::json GeneratorConfig::to_json() const {
    return nlohmann::json{
        {"seed", seed},
        {"operand_min", operand_min},
        {"operand_max", operand_max},
        {"answer_vocab", answer_vocab},
        {"steps_min", steps_min},
        {"steps_max", steps_max},
        {"mix_linear", mix_linear},
        {"mix_tree", mix_tree},
        {"mix_dag", mix_dag},
        {"shortcut_rate", shortcut_rate},
        {"max_steps_cap", max_steps_cap},
        {"context_limit", context_limit},
        {"reject_budget", reject_budget},
    };
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
    GeneratorConfig cfg;
    cfg.seed = j.value("seed", cfg.seed);
    cfg.operand_min = j.value("operand_min", cfg.operand_min);
    cfg.operand_max = j.value("operand_max", cfg.operand_max);
    cfg.answer_vocab = j.value("answer_vocab", cfg.answer_vocab);
    cfg.steps_min = j.value("steps_min", cfg.steps_min);
    cfg.steps_max = j.value("steps_max", cfg.steps_max);
    cfg.mix_linear = j.value("mix_linear", cfg.mix_linear);
    cfg.mix_tree = j.value("mix_tree", cfg.mix_tree);
    cfg.mix_dag = j.value("mix_dag", cfg.mix_dag);
    cfg.shortcut_rate = j.value("shortcut_rate", cfg.shortcut_rate);
    cfg.max_steps_cap = j.value("max_steps_cap", cfg.max_steps_cap);
    cfg.context_limit = j.value("context_limit", cfg.context_limit);
    cfg.reject_budget = j.value("reject_budget", cfg.reject_budget);
    return cfg;
}

std::uint64_t GeneratorConfig::config_hash() const {
    return fnv1a(to_json().dump());
}

namespace {

long long apply_op(Op op, long long a, long long b) {
    switch (op) {
        case Op::add: return a + b;
        case Op::sub: return a - b;
        case Op::mul: return a * b;
    }
    throw std::logic_error("apply_op");
}

int mod_value(long long v, int value_count) {
    long long m = v % value_count;
    if (m < 0) m += value_count;
    return static_cast<int>(m);
}

// Exact evaluation with stored-result independence: refs resolve to
// recomputed values. Returns false when any value leaves [0, V).
bool execute_exact(const Trace& trace, int value_count, std::vector<int>* values) {
    values->assign(trace.steps.size(), 0);
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        const Step& s = trace.steps[i];
        const long long a = s.lhs.is_ref ? (*values)[s.lhs.value] : s.lhs.value;
        const long long b = s.rhs.is_ref ? (*values)[s.rhs.value] : s.rhs.value;
        const long long r = apply_op(s.op, a, b);
        if (r < 0 || r >= value_count) return false;
        (*values)[i] = static_cast<int>(r);
    }
    return true;
}

std::vector<int> causal_step_set(const CausalStructure& st) {
    // Reverse reachability from answer_step over producer->consumer edges.
    std::vector<std::vector<int>> producers(st.num_steps);
    for (auto [p, c] : st.edges) producers[c].push_back(p);
    std::vector<bool> causal(st.num_steps, false);
    std::vector<int> stack{st.answer_step};
    causal[st.answer_step] = true;
    while (!stack.empty()) {
        int s = stack.back();
        stack.pop_back();
        for (int p : producers[s]) {
            if (!causal[p]) {
                causal[p] = true;
                stack.push_back(p);
            }
        }
    }
    std::vector<int> out;
    for (int i = 0; i < st.num_steps; ++i) {
        if (causal[i]) out.push_back(i);
    }
    return out;
}

struct Skeleton {
    CausalStructure structure;
    // operand patterns; literal values filled in later
    std::vector<Operand> lhs, rhs;
};

Skeleton build_skeleton(StructureKind kind, int n, Rng& rng) {
    Skeleton sk;
    sk.structure.kind = kind;
    sk.structure.num_steps = n;
    sk.structure.answer_step = n - 1;
    sk.lhs.resize(n);
    sk.rhs.resize(n);
    auto lit = Operand::lit(0);

    switch (kind) {
        case StructureKind::linear_chain:
            for (int i = 0; i < n; ++i) {
                sk.lhs[i] = i == 0 ? lit : Operand::ref(i - 1);
                sk.rhs[i] = lit;
                if (i > 0) sk.structure.edges.emplace_back(i - 1, i);
            }
            break;
        case StructureKind::tree: {
            // Two parallel chains merged by the final step.
            const int l1 = rng.uniform_int(1, n - 2);
            const int l2 = n - 1 - l1;
            for (int i = 0; i < l1; ++i) {
                sk.lhs[i] = i == 0 ? lit : Operand::ref(i - 1);
                sk.rhs[i] = lit;
                if (i > 0) sk.structure.edges.emplace_back(i - 1, i);
            }
            for (int j = 0; j < l2; ++j) {
                const int i = l1 + j;
                sk.lhs[i] = j == 0 ? lit : Operand::ref(i - 1);
                sk.rhs[i] = lit;
                if (j > 0) sk.structure.edges.emplace_back(i - 1, i);
            }
            sk.lhs[n - 1] = Operand::ref(l1 - 1);
            sk.rhs[n - 1] = Operand::ref(l1 + l2 - 1);
            sk.structure.edges.emplace_back(l1 - 1, n - 1);
            sk.structure.edges.emplace_back(l1 + l2 - 1, n - 1);
            break;
        }
        case StructureKind::dag_confounders: {
            // Confounder steps compute from literals and feed nothing; the
            // causal chain runs through the remaining slots ending at n-1.
            const int max_conf = std::max(1, std::min(n - 1, n / 3 + 1));
            const int c = rng.uniform_int(1, max_conf);
            std::vector<int> slots(n - 1);
            for (int i = 0; i < n - 1; ++i) slots[i] = i;
            rng.shuffle(slots);
            std::set<int> confounders(slots.begin(), slots.begin() + c);
            int prev_causal = -1;
            for (int i = 0; i < n; ++i) {
                if (confounders.contains(i)) {
                    sk.lhs[i] = lit;
                    sk.rhs[i] = lit;
                    continue;
                }
                sk.lhs[i] = prev_causal < 0 ? lit : Operand::ref(prev_causal);
                sk.rhs[i] = lit;
                if (prev_causal >= 0) sk.structure.edges.emplace_back(prev_causal, i);
                prev_causal = i;
            }
            break;
        }
    }
    return sk;
}

StructureKind sample_kind(const GeneratorConfig& cfg, Rng& rng) {
    const double total = cfg.mix_linear + cfg.mix_tree + cfg.mix_dag;
    const double u = rng.uniform() * total;
    if (u < cfg.mix_linear) return StructureKind::linear_chain;
    if (u < cfg.mix_linear + cfg.mix_tree) return StructureKind::tree;
    return StructureKind::dag_confounders;
}

int min_steps_for(StructureKind kind) {
    switch (kind) {
        case StructureKind::linear_chain: return 1;
        case StructureKind::tree: return 3;
        case StructureKind::dag_confounders: return 2;
    }
    return 1;
}

}  // namespace

int reexecute_mod(const Trace& trace, int answer_step, int value_count) {
    if (answer_step < 0 || answer_step >= static_cast<int>(trace.steps.size()))
        throw std::invalid_argument("reexecute_mod: answer_step out of range");
    std::vector<int> values(trace.steps.size(), 0);
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        const Step& s = trace.steps[i];
        if ((s.lhs.is_ref && s.lhs.value >= static_cast<int>(i)) ||
            (s.rhs.is_ref && s.rhs.value >= static_cast<int>(i)))
            throw std::invalid_argument("reexecute_mod: forward reference");
        const long long a = s.lhs.is_ref ? values[s.lhs.value] : s.lhs.value;
        const long long b = s.rhs.is_ref ? values[s.rhs.value] : s.rhs.value;
        values[i] = mod_value(apply_op(s.op, a, b), value_count);
    }
    return values[answer_step];
}

ReasoningTask generate_task(const GeneratorConfig& cfg, Rng& rng) {
    cfg.validate();
    const Vocabulary vocab = cfg.vocabulary();

    for (int attempt = 0; attempt < cfg.reject_budget; ++attempt) {
        const StructureKind kind = sample_kind(cfg, rng);
        const int lo = std::max(cfg.steps_min, min_steps_for(kind));
        const int hi = std::max(cfg.steps_max, lo);
        const int n = rng.uniform_int(lo, hi);

        Skeleton sk = build_skeleton(kind, n, rng);
        Trace trace;
        trace.steps.resize(n);
        for (int i = 0; i < n; ++i) {
            Step& s = trace.steps[i];
            s.lhs = sk.lhs[i].is_ref ? sk.lhs[i]
                                     : Operand::lit(rng.uniform_int(cfg.operand_min, cfg.operand_max));
            s.rhs = sk.rhs[i].is_ref ? sk.rhs[i]
                                     : Operand::lit(rng.uniform_int(cfg.operand_min, cfg.operand_max));
            s.op = static_cast<Op>(rng.uniform_int(0, kNumOps - 1));
        }

        std::vector<int> values;
        if (!execute_exact(trace, cfg.answer_vocab, &values)) continue;
        for (int i = 0; i < n; ++i) trace.steps[i].result = values[i];
        const int answer = values[sk.structure.answer_step];

        // Coincidence filter: every single causal-operator flip must move the
        // re-executed answer, so "causal edit => answer changes" is exact.
        const std::vector<int> causal = causal_step_set(sk.structure);
        bool coincident = false;
        for (int step : causal) {
            const Op original = trace.steps[step].op;
            for (Op alt : op_alternatives(original)) {
                trace.steps[step].op = alt;
                if (reexecute_mod(trace, sk.structure.answer_step, cfg.answer_vocab) == answer) {
                    coincident = true;
                }
            }
            trace.steps[step].op = original;
            if (coincident) break;
        }
        if (coincident) continue;

        ReasoningTask task;
        task.trace = trace;
        task.answer = answer;
        task.structure = sk.structure;
        task.causal_steps = causal;
        task.shortcut_present = rng.bernoulli(cfg.shortcut_rate);

        for (const Step& s : trace.steps) {
            if (!s.lhs.is_ref) task.question_tokens.push_back(vocab.value_token(s.lhs.value));
            if (!s.rhs.is_ref) task.question_tokens.push_back(vocab.value_token(s.rhs.value));
        }
        if (task.shortcut_present)
            task.question_tokens.push_back(vocab.shortcut_token(answer));

        TokenSequence seq;
        try {
            seq = render(task.question_tokens, task.trace, vocab,
                         {TraceTemplate::trailing_sep, cfg.context_limit});
        } catch (const ContextLimitError&) {
            continue;
        }
        const std::vector<int> ops = seq.op_positions();
        for (int step : causal) task.causal_op_positions.push_back(ops[step]);
        return task;
    }
    throw GenerationError("generate_task: rejection budget of " +
                          std::to_string(cfg.reject_budget) +
                          " exhausted (values cannot fit in [0, " +
                          std::to_string(cfg.answer_vocab) + "))");
}

nlohmann::json DatasetManifest::to_json() const {
    return nlohmann::json{
        {"seed", seed},
        {"config_hash", config_hash},
        {"n", n},
        {"structure_counts",
         {{"linear_chain", count_linear}, {"tree", count_tree}, {"dag_confounders", count_dag}}},
        {"shortcut_count", count_shortcut},
        {"config", config.to_json()},
        {"vocab", config.vocabulary().to_json()},
    };
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
    DatasetManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config_hash = j.at("config_hash").get<std::uint64_t>();
    m.n = j.at("n").get<int>();
    m.count_linear = j.at("structure_counts").at("linear_chain").get<int>();
    m.count_tree = j.at("structure_counts").at("tree").get<int>();
    m.count_dag = j.at("structure_counts").at("dag_confounders").get<int>();
    m.count_shortcut = j.at("shortcut_count").get<int>();
    m.config = GeneratorConfig::from_json(j.at("config"));
    return m;
}

std::vector<ReasoningTask> generate_dataset(const GeneratorConfig& cfg, int n,
                                            DatasetManifest* manifest, ExecMode mode) {
    cfg.validate();
    if (n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");

    std::vector<ReasoningTask> tasks(n);
    std::string first_error;
    // One independent stream per task; stream index = task index.
    // Exceptions may not cross the omp region, so failures are collected.
    if (mode == ExecMode::parallel) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < n; ++i) {
            try {
                Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(i));
                tasks[i] = generate_task(cfg, rng);
            } catch (const std::exception& e) {
#pragma omp critical
                if (first_error.empty()) first_error = e.what();
            }
        }
    } else {
        for (int i = 0; i < n; ++i) {
            Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(i));
            tasks[i] = generate_task(cfg, rng);
        }
    }
    if (!first_error.empty()) throw GenerationError(first_error);

    if (manifest) {
        *manifest = DatasetManifest{};
        manifest->seed = cfg.seed;
        manifest->config_hash = cfg.config_hash();
        manifest->n = n;
        manifest->config = cfg;
        for (const auto& t : tasks) {
            switch (t.structure.kind) {
                case StructureKind::linear_chain: ++manifest->count_linear; break;
                case StructureKind::tree: ++manifest->count_tree; break;
                case StructureKind::dag_confounders: ++manifest->count_dag; break;
            }
            if (t.shortcut_present) ++manifest->count_shortcut;
        }
    }
    return tasks;
}

TokenSequence render_task(const ReasoningTask& task, const Vocabulary& vocab,
                          int context_limit) {
    return render(task.question_tokens, task.trace, vocab,
                  {TraceTemplate::trailing_sep, context_limit});
}

}  // namespace csr
