#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "csr/exec.hpp"
#include "csr/rng.hpp"
#include "csr/trace.hpp"
#include "csr/vocab.hpp"

namespace csr {

enum class StructureKind : unsigned char { linear_chain, tree, dag_confounders };

std::string structure_name(StructureKind kind);
StructureKind structure_from_name(const std::string& name);

struct CausalStructure {
    StructureKind kind = StructureKind::linear_chain;
    int num_steps = 0;
    std::vector<std::pair<int, int>> edges;  // producer step -> consumer step
    int answer_step = 0;
};

struct ReasoningTask {
    std::vector<int> question_tokens;
    Trace trace;
    int answer = 0;
    CausalStructure structure;
    std::vector<int> causal_op_positions;  // token indices, default rendering
    std::vector<int> causal_steps;         // step indices feeding answer_step
    bool shortcut_present = false;
};

struct GeneratorConfig {
    std::uint64_t seed = 0;
    int operand_min = 1;
    int operand_max = 9;
    int answer_vocab = 128;  // V; every value lives in [0, V)
    int steps_min = 3;
    int steps_max = 5;
    double mix_linear = 1.0;
    double mix_tree = 0.0;
    double mix_dag = 0.0;
    double shortcut_rate = 0.0;
    int max_steps_cap = 16;
    int context_limit = 256;
    int reject_budget = 100;

    void validate() const;
    Vocabulary vocabulary() const { return Vocabulary(answer_vocab, max_steps_cap); }

    nlohmann::json to_json() const;
    static GeneratorConfig from_json(const nlohmann::json& j);
    std::uint64_t config_hash() const;
};

struct GenerationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Executor semantics: recompute every step from its operands (references
// resolve to recomputed values, not stored ones) with results reduced into
// [0, V). Total on any structurally well-formed trace.
int reexecute_mod(const Trace& trace, int answer_step, int value_count);

ReasoningTask generate_task(const GeneratorConfig& cfg, Rng& rng);

struct DatasetManifest {
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
    int n = 0;
    int count_linear = 0;
    int count_tree = 0;
    int count_dag = 0;
    int count_shortcut = 0;
    GeneratorConfig config;

    nlohmann::json to_json() const;
    static DatasetManifest from_json(const nlohmann::json& j);
};

// Pure function of (cfg, n); task i is drawn from stream i of cfg.seed.
std::vector<ReasoningTask> generate_dataset(const GeneratorConfig& cfg, int n,
                                            DatasetManifest* manifest = nullptr,
                                            ExecMode mode = ExecMode::parallel);

// Convenience: default-template rendering of a task.
TokenSequence render_task(const ReasoningTask& task, const Vocabulary& vocab,
                          int context_limit = 256);

}  // namespace csr
