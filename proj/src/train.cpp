#include "csr/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace csr {

namespace {

std::string policy_name(ProposePolicy p) {
    return p == ProposePolicy::random_swap ? "random_swap" : "learned_editor";
}

ProposePolicy policy_from_name(const std::string& s) {
    if (s == "random_swap") return ProposePolicy::random_swap;
    if (s == "learned_editor") return ProposePolicy::learned_editor;
    throw std::invalid_argument("unknown edit policy: " + s);
}

std::string optimizer_name(OptimizerKind k) {
    return k == OptimizerKind::adam ? "adam" : "sgd";
}

OptimizerKind optimizer_from_name(const std::string& s) {
    if (s == "adam") return OptimizerKind::adam;
    if (s == "sgd") return OptimizerKind::sgd;
    throw std::invalid_argument("unknown optimizer: " + s);
}

// rng stream labels
constexpr std::uint64_t kStreamInit = 0x1357'9bdf'0000'0001ULL;
constexpr std::uint64_t kStreamShuffle = 0x1357'9bdf'0000'0002ULL;
constexpr std::uint64_t kStreamStep = 0x1357'9bdf'0000'0003ULL;

}  // namespace

void TrainConfig::validate() const {
    if (lambda < 0) throw std::invalid_argument("lambda must be >= 0");
    if (k_ratio <= 0 || k_ratio > 1) throw std::invalid_argument("k_ratio outside (0,1]");
    if (edit_depth < 1 || edit_depth > 3)
        throw std::invalid_argument("edit_depth must be in {1,2,3}");
    if (lr <= 0) throw std::invalid_argument("lr must be > 0 (use optimizer step 0 times instead)");
    if (epochs < 1 || batch_size < 1) throw std::invalid_argument("bad epochs/batch_size");
    if (coverage_target < 0 || coverage_target > 1)
        throw std::invalid_argument("coverage_target outside [0,1]");
    if (warm_start_step < 0) throw std::invalid_argument("warm_start_step must be >= 0");
    if (embed_dim < 1) throw std::invalid_argument("embed_dim must be >= 1");
    if (csr_clip <= 0) throw std::invalid_argument("csr_clip must be > 0");
    if (resample_budget < 1) throw std::invalid_argument("resample_budget must be >= 1");
    op_noise.validate();
    gate_noise.validate();
}

nlohmann::json TrainConfig::to_json() const {
    return nlohmann::json{
        {"lambda", lambda},
        {"divergence", divergence_name(divergence)},
        {"warm_start_step", warm_start_step},
        {"k_ratio", k_ratio},
        {"edit_depth", edit_depth},
        {"edit_policy", policy_name(edit_policy)},
        {"lr", lr},
        {"epochs", epochs},
        {"batch_size", batch_size},
        {"seed", seed},
        {"coverage_target", coverage_target},
        {"op_noise_rate", op_noise.noise_rate},
        {"noisy_gate", noisy_gate},
        {"gate_flip_valid_rate", gate_noise.flip_valid_rate},
        {"gate_flip_invalid_rate", gate_noise.flip_invalid_rate},
        {"optimizer", optimizer_name(optimizer)},
        {"embed_dim", embed_dim},
        {"answer_temp_train", answer_temp_train},
        {"csr_clip", csr_clip},
        {"resample_budget", resample_budget},
        {"editor_lr", editor_lr},
        {"editor_lambda_impact", editor_reward.lambda_impact},
        {"editor_lambda_length", editor_reward.lambda_length},
        {"exec", exec == ExecMode::parallel ? "parallel" : "serial"},
        {"save_epoch_checkpoints", save_epoch_checkpoints},
    };
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.lambda = j.value("lambda", c.lambda);
    if (j.contains("divergence")) c.divergence = divergence_from_name(j.at("divergence"));
    c.warm_start_step = j.value("warm_start_step", c.warm_start_step);
    c.k_ratio = j.value("k_ratio", c.k_ratio);
    c.edit_depth = j.value("edit_depth", c.edit_depth);
    if (j.contains("edit_policy")) c.edit_policy = policy_from_name(j.at("edit_policy"));
    c.lr = j.value("lr", c.lr);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.coverage_target = j.value("coverage_target", c.coverage_target);
    c.op_noise.noise_rate = j.value("op_noise_rate", c.op_noise.noise_rate);
    c.noisy_gate = j.value("noisy_gate", c.noisy_gate);
    c.gate_noise.flip_valid_rate = j.value("gate_flip_valid_rate", 0.0);
    c.gate_noise.flip_invalid_rate = j.value("gate_flip_invalid_rate", 0.0);
    if (j.contains("optimizer")) c.optimizer = optimizer_from_name(j.at("optimizer"));
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.answer_temp_train = j.value("answer_temp_train", c.answer_temp_train);
    c.csr_clip = j.value("csr_clip", c.csr_clip);
    c.resample_budget = j.value("resample_budget", c.resample_budget);
    c.editor_lr = j.value("editor_lr", c.editor_lr);
    c.editor_reward.lambda_impact = j.value("editor_lambda_impact", 0.1);
    c.editor_reward.lambda_length = j.value("editor_lambda_length", 0.05);
    if (j.contains("exec"))
        c.exec = j.at("exec") == "serial" ? ExecMode::serial : ExecMode::parallel;
    c.save_epoch_checkpoints = j.value("save_epoch_checkpoints", c.save_epoch_checkpoints);
    return c;
}

std::uint64_t TrainConfig::config_hash() const { return fnv1a(to_json().dump()); }

std::string skip_reason_name(SkipReason r) {
    switch (r) {
        case SkipReason::none: return "none";
        case SkipReason::warm_start: return "warm_start";
        case SkipReason::coverage: return "coverage";
        case SkipReason::no_edit: return "no_edit";
        case SkipReason::gate_failed: return "gate_failed";
        case SkipReason::nonfinite: return "nonfinite";
    }
    throw std::logic_error("skip_reason_name");
}

nlohmann::json RunLedger::summary_json() const {
    nlohmann::json skips_json = nlohmann::json::object();
    for (const auto& [k, v] : skips) skips_json[k] = v;
    return nlohmann::json{
        {"steps", static_cast<long>(steps.size())},
        {"example_steps", example_steps},
        {"forward_passes", forward_passes},
        {"forward_overhead", forward_overhead()},
        {"gated_examples", gated_examples},
        {"post_warm_examples", post_warm_examples},
        {"measured_alpha", measured_alpha()},
        {"skips", skips_json},
        {"wall_seconds", wall_seconds},
    };
}

StepOutcome csr_step(const ModelParams& params, const ReasoningTask& task,
                     const TrainConfig& cfg, long step_index,
                     const EditorPolicy* editor, Rng& rng, const Vocabulary& vocab) {
    StepOutcome out;
    out.grad = GradientBundle::zeros_like(params);
    out.seq = render_task(task, vocab, 1 << 20);

    LossSpec spec;
    spec.original = &out.seq;
    spec.y_true = task.answer;
    spec.answer_temp = cfg.answer_temp_train;
    spec.div = cfg.divergence;
    spec.csr_clip = cfg.csr_clip;

    std::optional<ProposedEdit> proposal;
    bool gated = false;

    if (step_index < cfg.warm_start_step) {
        out.skip = SkipReason::warm_start;
    } else if (cfg.coverage_target < 1.0 && !rng.bernoulli(cfg.coverage_target)) {
        out.skip = SkipReason::coverage;
    } else {
        const std::vector<int> identified =
            identify_operators(out.seq, task.causal_op_positions, cfg.op_noise, rng);
        const std::vector<int> lastk = last_k_op_subset(out.seq, cfg.k_ratio);
        for (int p : identified) {
            if (out.seq.op_mask[p] &&
                std::find(lastk.begin(), lastk.end(), p) != lastk.end())
                out.candidates.push_back(p);
        }
        proposal = propose_invalidating_edit(
            out.seq, task.trace, out.candidates, cfg.edit_policy, editor,
            cfg.edit_depth, rng, vocab, cfg.resample_budget);
        if (!proposal) {
            out.skip = SkipReason::no_edit;
        } else {
            VerifierVerdict v_orig, v_cf;
            if (cfg.noisy_gate) {
                v_orig = verify_noisy(task.trace, cfg.gate_noise, rng);
                v_cf = verify_noisy(proposal->edited_trace, cfg.gate_noise, rng);
            } else {
                v_orig = verify(task.trace);
                v_cf = verify(proposal->edited_trace);
            }
            gated = v_orig.valid && !v_cf.valid;
            if (!gated) out.skip = SkipReason::gate_failed;
        }
    }

    if (gated) {
        spec.counterfactual = &proposal->edited_seq;
        spec.lambda = cfg.lambda;
    }

    try {
        const BackwardResult res = backward(params, spec, &out.grad);
        out.loss.l_task = res.l_task;
        out.loss.gated = gated;
        if (gated) {
            out.loss.l_csr_raw = res.l_csr;
            out.loss.l_csr = std::min(res.l_csr, cfg.csr_clip);
        }
        out.loss.l_total = res.loss;
        out.forward_passes = gated ? 2 : 1;
        if (!out.grad.all_finite()) throw NonFiniteLossError("non-finite gradient");
    } catch (const NonFiniteLossError&) {
        out.skip = SkipReason::nonfinite;
        out.usable = false;
        out.grad.zero();
        out.forward_passes = gated ? 2 : 1;
    }

    if (proposal && cfg.edit_policy == ProposePolicy::learned_editor) {
        out.editor_proposed = true;
        out.script = proposal->script;
        out.sampled_max_depth = proposal->sampled_max_depth;
        const double r_validity = gated ? 1.0 : 0.0;
        const double r_impact = gated && out.usable ? out.loss.l_csr : 0.0;
        out.editor_reward = r_validity + cfg.editor_reward.lambda_impact * r_impact -
                            cfg.editor_reward.lambda_length * out.script.depth();
    }
    return out;
}

Optimizer::Optimizer(OptimizerKind kind, double lr) : kind_(kind), lr_(lr) {}

namespace {

template <typename P, typename Fn>
void for_each_param_array(P& p, Fn&& fn) {
    fn(p.embed.data);
    fn(p.wq.data);
    fn(p.wk.data);
    fn(p.wv.data);
    fn(p.wo.data);
    fn(p.w1.data);
    fn(p.b1);
    fn(p.w2.data);
    fn(p.b2);
}

}  // namespace

void Optimizer::step(ModelParams& params, const GradientBundle& grad) {
    std::vector<double*> dst;
    std::vector<const double*> src;
    std::size_t total = 0;
    for_each_param_array(params, [&](std::vector<double>& a) {
        dst.push_back(a.data());
        total += a.size();
    });
    std::vector<std::size_t> sizes;
    for_each_param_array(const_cast<GradientBundle&>(grad),
                         [&](std::vector<double>& a) {
                             src.push_back(a.data());
                             sizes.push_back(a.size());
                         });

    if (kind_ == OptimizerKind::sgd) {
        for (std::size_t k = 0; k < dst.size(); ++k)
            for (std::size_t i = 0; i < sizes[k]; ++i) dst[k][i] -= lr_ * src[k][i];
        return;
    }

    if (m_.empty()) {
        m_.assign(total, 0.0);
        v_.assign(total, 0.0);
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    std::size_t off = 0;
    for (std::size_t k = 0; k < dst.size(); ++k) {
        for (std::size_t i = 0; i < sizes[k]; ++i, ++off) {
            const double g = src[k][i];
            m_[off] = beta1_ * m_[off] + (1.0 - beta1_) * g;
            v_[off] = beta2_ * v_[off] + (1.0 - beta2_) * g * g;
            const double mhat = m_[off] / bc1;
            const double vhat = v_[off] / bc2;
            dst[k][i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

TrainResult train_run(const std::vector<ReasoningTask>& dataset, const TrainConfig& cfg,
                      const Vocabulary& vocab, const std::string& out_dir) {
    cfg.validate();
    if (dataset.empty()) throw std::invalid_argument("train_run: empty dataset");
    const auto wall_start = std::chrono::steady_clock::now();

    ModelConfig mc;
    mc.embed_dim = cfg.embed_dim;
    mc.token_vocab = vocab.size();
    mc.answer_count = vocab.value_count();

    TrainResult result;
    result.params = ModelParams::init(mc, mix64(cfg.seed, kStreamInit));
    if (cfg.edit_policy == ProposePolicy::learned_editor)
        result.editor = EditorPolicy{};

    Optimizer opt(cfg.optimizer, cfg.lr);
    RunLedger& ledger = result.ledger;

    std::ofstream ledger_out;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        ledger_out.open(out_dir + "/ledger.jsonl");
    }

    const int n = static_cast<int>(dataset.size());
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;

    long step_index = 0;
    long example_counter = 0;
    GradientBundle mean_grad = GradientBundle::zeros_like(result.params);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng = Rng::stream(cfg.seed, mix64(kStreamShuffle, epoch));
        shuffle_rng.shuffle(order);

        for (int start = 0; start < n; start += cfg.batch_size) {
            const int bs = std::min(cfg.batch_size, n - start);
            std::vector<StepOutcome> outcomes(bs);
            const EditorPolicy* editor_snapshot =
                result.editor ? &*result.editor : nullptr;
            EditorPolicy editor_copy;
            if (editor_snapshot) {
                editor_copy = *editor_snapshot;
                editor_snapshot = &editor_copy;
            }

            std::string batch_error;
            if (cfg.exec == ExecMode::parallel) {
#pragma omp parallel for schedule(static)
                for (int k = 0; k < bs; ++k) {
                    try {
                        Rng rng =
                            Rng::stream(cfg.seed, mix64(kStreamStep, example_counter + k));
                        outcomes[k] = csr_step(result.params, dataset[order[start + k]],
                                               cfg, step_index, editor_snapshot, rng, vocab);
                    } catch (const std::exception& e) {
#pragma omp critical
                        if (batch_error.empty()) batch_error = e.what();
                    }
                }
            } else {
                for (int k = 0; k < bs; ++k) {
                    Rng rng = Rng::stream(cfg.seed, mix64(kStreamStep, example_counter + k));
                    outcomes[k] = csr_step(result.params, dataset[order[start + k]], cfg,
                                           step_index, editor_snapshot, rng, vocab);
                }
            }
            if (!batch_error.empty()) throw std::runtime_error(batch_error);

            // fixed-order reduction keeps results identical across thread counts
            mean_grad.zero();
            int usable = 0;
            double sum_task = 0.0, sum_csr = 0.0;
            int gated = 0;
            long forwards = 0;
            for (const StepOutcome& o : outcomes) {
                forwards += o.forward_passes;
                if (o.skip != SkipReason::none) ++ledger.skips[skip_reason_name(o.skip)];
                if (step_index >= cfg.warm_start_step) ++ledger.post_warm_examples;
                if (!o.usable) continue;
                ++usable;
                mean_grad.add_scaled(o.grad, 1.0);
                sum_task += o.loss.l_task;
                if (o.loss.gated) {
                    ++gated;
                    sum_csr += o.loss.l_csr;
                }
            }
            ledger.example_steps += bs;
            ledger.forward_passes += forwards;
            ledger.gated_examples += gated;

            if (usable > 0) {
                mean_grad.scale(1.0 / usable);
                opt.step(result.params, mean_grad);
            }

            if (result.editor) {
                for (const StepOutcome& o : outcomes) {
                    if (!o.editor_proposed) continue;
                    editor_update(*result.editor, o.seq, o.candidates, vocab, o.script,
                                  o.editor_reward, cfg.editor_lr, o.sampled_max_depth);
                }
            }

            RunLedger::StepRecord rec;
            rec.step = step_index;
            rec.batch = bs;
            rec.gated = gated;
            rec.forwards = forwards;
            rec.mean_l_task = usable > 0 ? sum_task / usable : 0.0;
            rec.mean_l_csr = gated > 0 ? sum_csr / gated : 0.0;
            ledger.steps.push_back(rec);
            if (ledger_out.is_open()) {
                ledger_out << nlohmann::json{{"step", rec.step},
                                             {"l_task", rec.mean_l_task},
                                             {"l_csr", rec.mean_l_csr},
                                             {"gated", rec.gated},
                                             {"batch", rec.batch},
                                             {"forwards", rec.forwards}}
                                  .dump()
                           << "\n";
            }

            bool params_finite = true;
            for_each_param_array(result.params, [&](std::vector<double>& a) {
                for (double x : a) {
                    if (!std::isfinite(x)) params_finite = false;
                }
            });
            if (!params_finite) {
                ledger.wall_seconds =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                  wall_start)
                        .count();
                if (!out_dir.empty()) {
                    std::ofstream(out_dir + "/summary.json")
                        << ledger.summary_json().dump(2) << "\n";
                }
                throw TrainDivergedError("parameters diverged at step " +
                                         std::to_string(step_index));
            }

            ++step_index;
            example_counter += bs;
        }

        if (!out_dir.empty() && cfg.save_epoch_checkpoints) {
            char name[64];
            std::snprintf(name, sizeof(name), "/checkpoint_epoch_%03d.json", epoch);
            std::ofstream(out_dir + name) << result.params.to_checkpoint().dump() << "\n";
        }
    }

    ledger.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start)
            .count();

    if (!out_dir.empty()) {
        std::ofstream(out_dir + "/checkpoint.json")
            << result.params.to_checkpoint().dump() << "\n";
        if (result.editor)
            std::ofstream(out_dir + "/editor.json") << result.editor->to_json().dump(2) << "\n";
        nlohmann::json summary = ledger.summary_json();
        summary["train_config"] = cfg.to_json();
        summary["config_hash"] = cfg.config_hash();
        std::ofstream(out_dir + "/summary.json") << summary.dump(2) << "\n";
    }
    return result;
}

}  // namespace csr
