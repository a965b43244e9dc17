#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "csr/rng.hpp"
#include "csr/trace.hpp"

namespace csr {

// Row-major matrix of doubles; the whole artifact runs in double precision.
struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    void zero() { std::fill(data.begin(), data.end(), 0.0); }
};

struct AnswerDistribution {
    std::vector<double> probs;
    std::vector<double> log_probs;
    double temperature_applied = 1.0;

    // Argmax with ties broken toward the smaller id.
    int argmax() const;
};

int predict(const AnswerDistribution& dist);

struct ModelConfig {
    int embed_dim = 64;
    int token_vocab = 0;   // total token ids the model accepts
    int answer_count = 0;  // V
    double eps_floor = 1e-8;

    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

// Embeddings -> one self-attention block (residual) -> mean pooling ->
// tanh MLP -> answer logits.
struct ModelParams {
    ModelConfig cfg;
    Mat embed;           // token_vocab x d
    Mat wq, wk, wv, wo;  // d x d
    Mat w1;              // d x d
    std::vector<double> b1;  // d
    Mat w2;              // d x answer_count
    std::vector<double> b2;  // answer_count

    static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);

    // Flat parameter view in a fixed order; used by the optimizer and the
    // finite-difference tests.
    std::size_t param_count() const;
    double* param_at(std::size_t i);
    double param_at(std::size_t i) const;

    nlohmann::json to_checkpoint() const;
    static ModelParams from_checkpoint(const nlohmann::json& j);
};

struct GradientBundle {
    Mat embed, wq, wk, wv, wo, w1;
    std::vector<double> b1;
    Mat w2;
    std::vector<double> b2;

    static GradientBundle zeros_like(const ModelParams& p);
    void zero();
    void add_scaled(const GradientBundle& g, double s);
    void scale(double s);
    std::size_t param_count() const;
    double param_at(std::size_t i) const;
    bool all_finite() const;
};

// softmax(logits / temp), then floor smoothing: p = (1 - V*eps)*q + eps.
// Keeps every probability >= eps and the sum exactly 1.
AnswerDistribution forward(const ModelParams& params, const TokenSequence& seq,
                           double answer_temp);

enum class DivergenceKind : unsigned char { kl, js, tv };

std::string divergence_name(DivergenceKind kind);
DivergenceKind divergence_from_name(const std::string& name);

double task_loss(const AnswerDistribution& dist, int y_true);
double divergence(const AnswerDistribution& p, const AnswerDistribution& p_cf,
                  DivergenceKind kind);

struct LossSpec {
    const TokenSequence* original = nullptr;
    int y_true = 0;
    double answer_temp = 1.2;
    double lambda = 0.0;
    DivergenceKind div = DivergenceKind::kl;
    const TokenSequence* counterfactual = nullptr;  // null: task loss only
    double csr_clip = 50.0;
};

struct BackwardResult {
    double loss = 0.0;
    double l_task = 0.0;
    double l_csr = 0.0;  // raw divergence (before clip), 0 when no counterfactual
};

struct NonFiniteLossError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Loss value plus analytic reverse-mode gradients, accumulated into *grad.
BackwardResult backward(const ModelParams& params, const LossSpec& spec,
                        GradientBundle* grad);

}  // namespace csr
