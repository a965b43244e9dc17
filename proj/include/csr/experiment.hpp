#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "csr/metrics.hpp"
#include "csr/model.hpp"
#include "csr/taskgen.hpp"
#include "csr/train.hpp"

namespace csr {

// ---- noisy-verifier identity -------------------------------------------

struct NoisyVerifierStats {
    double flip_invalid_rate = 0.0;
    double q_hat = 0.0, se_q = 0.0;
    double mu_a = 0.0, se_mu_a = 0.0;
    double mu_star = 0.0, se_mu_star = 0.0;
    double delta = 0.0;  // mu_star - mu_a
    double e_lcsr = 0.0, se_e = 0.0;
    double combined_se = 0.0;
    long n = 0;
    bool pass = false;

    nlohmann::json to_json() const;
};

struct NoisyVerifierCheck {
    std::vector<NoisyVerifierStats> cells;
    bool q_monotone = true;
    bool pass = false;

    nlohmann::json to_json() const;
};

// E[L_CSR] = q * mu_A, estimated on independent halves of the event stream so
// the comparison is a real statistical check rather than an algebraic one.
NoisyVerifierCheck check_noisy_verifier(const ModelParams& params,
                                        const std::vector<ReasoningTask>& tasks,
                                        const Vocabulary& vocab,
                                        const std::vector<double>& flip_invalid_rates,
                                        int n_per_cell, std::uint64_t seed,
                                        DivergenceKind kind = DivergenceKind::kl,
                                        double answer_temp = 1.0);

// ---- dominance (CS vs COMP/SUFF) ---------------------------------------

struct CiPair {
    double lo = 0.0, hi = 0.0;
};

struct DominanceCell {
    long n = 0;
    double mean_cs = 0.0, mean_comp = 0.0, mean_suff = 0.0;
    CiPair ci_cs, ci_comp, ci_suff;
    bool dominance = false;      // mean CS >= mean COMP and mean CS >= mean SUFF
    bool ci_separated = false;   // CS CI sits above both other CIs

    nlohmann::json to_json() const;
};

struct DominanceReport {
    bool refused = false;
    std::string refusal_reason;
    double model_accuracy = 0.0;
    DominanceCell main;
    std::optional<DominanceCell> control;  // confounder-targeted edits
    bool control_failed_as_expected = false;
    bool pass = false;

    nlohmann::json to_json() const;
};

// Main cell: causal single-op edits on linear-chain tasks. Control cell:
// edits forced onto confounder operators of DAG tasks, where dominance is
// expected to break down.
DominanceReport check_dominance(const ModelParams& params,
                                const std::vector<ReasoningTask>& linear_tasks,
                                const std::vector<ReasoningTask>& dag_tasks,
                                const Vocabulary& vocab, int n, std::uint64_t seed,
                                double min_accuracy = 0.9, double answer_temp = 1.0);

// ---- shortcut prevention ------------------------------------------------

struct ShortcutRunStats {
    std::uint64_t seed = 0;
    double lambda = 0.0;
    double accuracy = 0.0;
    double cos = 0.0;
    double scrambled_accuracy = 0.0;
    double reliance = 0.0;  // accuracy - scrambled accuracy
    double alpha = 0.0;     // measured CSR coverage

    nlohmann::json to_json() const;
};

struct ShortcutReport {
    std::vector<ShortcutRunStats> baseline_runs;  // lambda = 0
    std::vector<ShortcutRunStats> csr_runs;
    bool refused = false;
    std::string refusal_reason;
    bool pass = false;

    double mean_cos_baseline = 0.0, sd_cos_baseline = 0.0;
    double mean_cos_csr = 0.0, sd_cos_csr = 0.0;
    double mean_acc_baseline = 0.0, mean_acc_csr = 0.0;
    double mean_reliance_baseline = 0.0, mean_reliance_csr = 0.0;

    nlohmann::json to_json() const;
};

// Eval-time copies with the SHORTCUT token re-pointed at a random answer.
std::vector<ReasoningTask> scramble_shortcut(const std::vector<ReasoningTask>& tasks,
                                             const Vocabulary& vocab,
                                             std::uint64_t seed);

ShortcutReport check_shortcut(const GeneratorConfig& gen, const TrainConfig& base,
                              const std::vector<std::uint64_t>& seeds, int train_n,
                              int eval_n, const std::string& out_dir = "");

// ---- sweeps --------------------------------------------------------------

enum class SweepKind : unsigned char { lambda, noise, divergence, depth, editor };

std::string sweep_kind_name(SweepKind kind);

struct SweepCell {
    std::string label;
    std::vector<double> cos_values;       // per seed
    std::vector<double> accuracy_values;  // per seed
    std::vector<double> alpha_values;     // per seed (accepted-edit rate)
    double cos_mean = 0.0, cos_sd = 0.0;
    double acc_mean = 0.0, acc_sd = 0.0;

    nlohmann::json to_json() const;
};

struct SweepReport {
    SweepKind kind = SweepKind::lambda;
    std::vector<SweepCell> cells;
    bool verdicts_emitted = false;  // suppressed for < 3 seeds
    std::map<std::string, bool> verdicts;
    std::string argmax_label;  // depth sweep

    nlohmann::json to_json() const;
};

struct SweepSettings {
    GeneratorConfig gen;
    TrainConfig base;
    std::vector<std::uint64_t> seeds;
    int train_n = 5000;
    int eval_n = 1000;
    std::string out_dir;
    int workers = 1;  // bounded pool over (cell, seed) runs
};

SweepReport sweep(SweepKind kind, const std::vector<double>& grid,
                  const SweepSettings& settings);

// ---- shared helpers -------------------------------------------------------

double mean_of(const std::vector<double>& v);
double sd_of(const std::vector<double>& v);

// out_root/<command>_<UTC stamp>[_k] ; created, unique
std::string make_run_dir(const std::string& out_root, const std::string& command);

int env_worker_count();  // CSR_LAB_WORKERS, default 1

}  // namespace csr
