#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "csr/exec.hpp"
#include "csr/intervene.hpp"
#include "csr/model.hpp"
#include "csr/taskgen.hpp"
#include "csr/trace.hpp"
#include "csr/verifier.hpp"

namespace csr {

enum class OptimizerKind : unsigned char { adam, sgd };

struct TrainConfig {
    double lambda = 0.5;
    DivergenceKind divergence = DivergenceKind::kl;
    int warm_start_step = 0;
    double k_ratio = 0.3;  // 1.0 disables the edit-subset restriction
    int edit_depth = 1;    // L
    ProposePolicy edit_policy = ProposePolicy::random_swap;
    double lr = 1e-3;
    int epochs = 20;
    int batch_size = 32;
    std::uint64_t seed = 0;
    double coverage_target = 1.0;  // fraction of post-warm-start examples attempting CSR
    OperatorNoiseConfig op_noise;
    bool noisy_gate = false;
    NoisyVerifierConfig gate_noise;
    OptimizerKind optimizer = OptimizerKind::adam;
    int embed_dim = 64;
    double answer_temp_train = 1.2;
    double csr_clip = 50.0;
    int resample_budget = 8;
    double editor_lr = 0.05;
    EditorRewardConfig editor_reward;
    ExecMode exec = ExecMode::parallel;
    bool save_epoch_checkpoints = true;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
    std::uint64_t config_hash() const;
};

struct LossBreakdown {
    double l_task = 0.0;
    double l_csr = 0.0;  // clipped value entering l_total; 0 when ungated
    bool gated = false;
    double l_total = 0.0;
    double l_csr_raw = 0.0;  // divergence before clipping
};

enum class SkipReason : unsigned char {
    none,
    warm_start,
    coverage,
    no_edit,
    gate_failed,
    nonfinite,
};

std::string skip_reason_name(SkipReason r);

struct StepOutcome {
    LossBreakdown loss;
    GradientBundle grad;
    SkipReason skip = SkipReason::none;
    bool usable = true;  // false when the loss was non-finite
    int forward_passes = 1;
    // learned-editor bookkeeping (set when an edit was proposed)
    bool editor_proposed = false;
    EditScript script;
    std::vector<int> candidates;
    TokenSequence seq;
    double editor_reward = 0.0;
    int sampled_max_depth = 0;
};

struct RunLedger {
    struct StepRecord {
        long step = 0;
        double mean_l_task = 0.0;
        double mean_l_csr = 0.0;
        int gated = 0;
        int batch = 0;
        long forwards = 0;
    };
    std::vector<StepRecord> steps;
    long example_steps = 0;   // baseline forward passes
    long forward_passes = 0;  // actual forward passes
    long gated_examples = 0;
    long post_warm_examples = 0;
    std::map<std::string, long> skips;
    double wall_seconds = 0.0;

    double measured_alpha() const {
        return post_warm_examples > 0
                   ? static_cast<double>(gated_examples) / post_warm_examples
                   : 0.0;
    }
    // extra forward passes relative to a plain task-loss run
    double forward_overhead() const {
        return example_steps > 0
                   ? static_cast<double>(forward_passes - example_steps) / example_steps
                   : 0.0;
    }
    nlohmann::json summary_json() const;
};

// One example through Algorithm flow: forward, edit proposal restricted to
// identified ∩ last-k candidates, verifier gate, counterfactual pass and
// combined loss when gated.
StepOutcome csr_step(const ModelParams& params, const ReasoningTask& task,
                     const TrainConfig& cfg, long step_index,
                     const EditorPolicy* editor, Rng& rng, const Vocabulary& vocab);

class Optimizer {
public:
    Optimizer(OptimizerKind kind, double lr);
    void step(ModelParams& params, const GradientBundle& grad);
    OptimizerKind kind() const { return kind_; }

private:
    OptimizerKind kind_;
    double lr_;
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    long t_ = 0;
    std::vector<double> m_, v_;
};

struct TrainDivergedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainResult {
    ModelParams params;
    RunLedger ledger;
    std::optional<EditorPolicy> editor;
};

// Deterministic given (dataset, cfg, seed). When out_dir is non-empty the
// run writes ledger.jsonl, summary.json, per-epoch checkpoints (if enabled)
// and the final checkpoint there.
TrainResult train_run(const std::vector<ReasoningTask>& dataset, const TrainConfig& cfg,
                      const Vocabulary& vocab, const std::string& out_dir = "");

}  // namespace csr
