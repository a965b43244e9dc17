#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "csr/exec.hpp"
#include "csr/intervene.hpp"
#include "csr/model.hpp"
#include "csr/taskgen.hpp"

namespace csr {

// Read-only answer scorer; implementations must be safe to call from
// multiple threads.
struct AnswerModel {
    virtual AnswerDistribution score(const TokenSequence& seq) const = 0;
    virtual ~AnswerModel() = default;
};

class NeuralAnswerModel : public AnswerModel {
public:
    NeuralAnswerModel(ModelParams params, double answer_temp = 1.0)
        : params_(std::move(params)), temp_(answer_temp) {}
    AnswerDistribution score(const TokenSequence& seq) const override {
        return forward(params_, seq, temp_);
    }

private:
    ModelParams params_;
    double temp_;
};

struct MetricsConfig {
    std::uint64_t seed = 0;
    ProposePolicy edit_policy = ProposePolicy::random_swap;
    int edit_depth = 1;
    int resample_budget = 8;
    int ece_bins = 10;
    double answer_temp_eval = 1.0;
    ExecMode exec = ExecMode::parallel;
};

struct FractionStat {
    std::optional<double> value;
    long num = 0;
    long den = 0;
};

struct RationaleMask {
    std::vector<int> positions;  // token indices within the trace segment
};

// Token span of every causal step (lhs op rhs = result).
RationaleMask causal_rationale(const ReasoningTask& task, const TokenSequence& seq);

struct ProbeResult {
    double cs = 0.0;
    double comp = 0.0;
    double suff = 0.0;
};

// CS / COMP / SUFF against a rationale mask and an edited sequence. Token
// removal is realized with the reserved MASK token; SUFF masks the trace
// complement only, so R = all trace tokens gives SUFF = 0.
ProbeResult probes(const AnswerModel& model, const ReasoningTask& task,
                   const RationaleMask& mask, const TokenSequence& edited,
                   const Vocabulary& vocab);

struct ProbeRow {
    int id = 0;
    bool correct = false;
    bool flipped = false;
    double cs = 0.0;
    double comp = 0.0;
    double suff = 0.0;
    std::string edit_policy;
    bool gate = false;
};

struct MetricsReport {
    double accuracy = 0.0;
    FractionStat cos;
    FractionStat sis;
    double mean_cs = 0.0;
    double mean_comp = 0.0;
    double mean_suff = 0.0;
    double ece = 0.0;
    std::optional<double> flip_precision;
    std::optional<double> flip_recall;
    long flip_tp = 0, flip_fp = 0, flip_fn = 0, flip_tn = 0;
    long n_eval = 0;
    long cos_excluded = 0;  // gate failures after resampling
    long sis_excluded = 0;  // no applicable transformation

    nlohmann::json to_json() const;
};

double cos_metric(const AnswerModel& model, const std::vector<ReasoningTask>& tasks,
                  const Vocabulary& vocab, const MetricsConfig& cfg,
                  const EditorPolicy* editor = nullptr, FractionStat* stat = nullptr);

double sis_metric(const AnswerModel& model, const std::vector<ReasoningTask>& tasks,
                  const Vocabulary& vocab, const MetricsConfig& cfg,
                  FractionStat* stat = nullptr);

double accuracy_metric(const AnswerModel& model, const std::vector<ReasoningTask>& tasks,
                       const Vocabulary& vocab, const MetricsConfig& cfg);

double ece_from_samples(const std::vector<std::pair<double, bool>>& samples, int bins);

double ece_metric(const AnswerModel& model, const std::vector<ReasoningTask>& tasks,
                  const Vocabulary& vocab, const MetricsConfig& cfg);

std::pair<std::optional<double>, std::optional<double>> flip_pr(
    const AnswerModel& model, const std::vector<ReasoningTask>& tasks,
    const Vocabulary& vocab, const MetricsConfig& cfg,
    const EditorPolicy* editor = nullptr);

// Full report; per-example probe rows are appended to *rows when given.
MetricsReport evaluate(const AnswerModel& model, const std::vector<ReasoningTask>& tasks,
                       const Vocabulary& vocab, const MetricsConfig& cfg,
                       const EditorPolicy* editor = nullptr,
                       std::vector<ProbeRow>* rows = nullptr);

std::string probe_rows_csv(const std::vector<ProbeRow>& rows);

}  // namespace csr
