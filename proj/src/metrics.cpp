#include "csr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "csr/verifier.hpp"

namespace csr {

RationaleMask causal_rationale(const ReasoningTask& task, const TokenSequence& seq) {
    RationaleMask mask;
    const std::vector<int> ops = seq.op_positions();
    for (int step : task.causal_steps) {
        if (step < 0 || step >= static_cast<int>(ops.size())) continue;
        const int p = ops[step];
        for (int k = -1; k <= 3; ++k) mask.positions.push_back(p + k);
    }
    std::sort(mask.positions.begin(), mask.positions.end());
    return mask;
}

ProbeResult probes(const AnswerModel& model, const ReasoningTask& task,
                   const RationaleMask& mask, const TokenSequence& edited,
                   const Vocabulary& vocab) {
    if (mask.positions.empty())
        throw std::invalid_argument("probes: empty rationale mask");
    const TokenSequence seq = render_task(task, vocab, 1 << 20);

    TokenSequence removed = seq;  // T \ R
    for (int p : mask.positions) {
        if (p >= 0 && p < static_cast<int>(removed.size()))
            removed.tokens[p] = vocab.mask_token();
    }
    TokenSequence kept = seq;  // R only: mask the trace-segment complement
    const std::vector<bool> in_mask = [&] {
        std::vector<bool> v(seq.size(), false);
        for (int p : mask.positions)
            if (p >= 0 && p < static_cast<int>(seq.size())) v[p] = true;
        return v;
    }();
    for (std::size_t i = 0; i < kept.size(); ++i) {
        if (kept.segment[i] == Segment::trace && !in_mask[i])
            kept.tokens[i] = vocab.mask_token();
    }

    const AnswerDistribution p = model.score(seq);
    ProbeResult out;
    out.cs = divergence(p, model.score(edited), DivergenceKind::kl);
    out.comp = divergence(p, model.score(removed), DivergenceKind::kl);
    out.suff = divergence(p, model.score(kept), DivergenceKind::kl);
    return out;
}

double ece_from_samples(const std::vector<std::pair<double, bool>>& samples, int bins) {
    if (samples.empty() || bins < 1) return 0.0;
    std::vector<double> conf_sum(bins, 0.0);
    std::vector<long> hits(bins, 0), count(bins, 0);
    for (const auto& [conf, correct] : samples) {
        int b = static_cast<int>(conf * bins);
        b = std::clamp(b, 0, bins - 1);
        conf_sum[b] += conf;
        hits[b] += correct ? 1 : 0;
        ++count[b];
    }
    double ece = 0.0;
    const double n = static_cast<double>(samples.size());
    for (int b = 0; b < bins; ++b) {
        if (count[b] == 0) continue;
        const double acc = static_cast<double>(hits[b]) / count[b];
        const double conf = conf_sum[b] / count[b];
        ece += (count[b] / n) * std::abs(acc - conf);
    }
    return ece;
}

namespace {

struct EvalOptions {
    bool want_edit = true;      // causal edit probe (COS, flip positives, CS)
    bool want_semantic = true;  // semantic probe (SIS, flip negatives)
    bool want_probes = true;    // COMP/SUFF
};

struct EvalRow {
    bool ok = false;  // row computed without error
    bool correct = false;
    double confidence = 0.0;
    bool has_edit = false;
    bool flipped = false;
    bool has_semantic = false;
    bool semantic_flipped = false;
    double cs = 0.0, comp = 0.0, suff = 0.0;
    bool has_probes = false;
    std::string error;
};

EvalRow eval_one(const AnswerModel& model, const ReasoningTask& task,
                 const Vocabulary& vocab, const MetricsConfig& cfg,
                 const EditorPolicy* editor, const EvalOptions& opt, Rng& rng) {
    EvalRow row;
    const TokenSequence seq = render_task(task, vocab, 1 << 20);
    const AnswerDistribution dist = model.score(seq);
    const int pred = predict(dist);
    row.correct = pred == task.answer;
    row.confidence = dist.probs[pred];

    std::optional<ProposedEdit> proposal;
    if (opt.want_edit) {
        proposal = propose_invalidating_edit(seq, task.trace, task.causal_op_positions,
                                             cfg.edit_policy, editor, cfg.edit_depth,
                                             rng, vocab, cfg.resample_budget);
        // evaluation gate: exact verifier on both sides
        if (proposal && !(verify(task.trace).valid &&
                          !verify(proposal->edited_trace).valid))
            proposal.reset();
        if (proposal) {
            row.has_edit = true;
            row.flipped = predict(model.score(proposal->edited_seq)) != pred;
        }
    }

    if (opt.want_semantic) {
        const SemanticVariant variant = semantic_variant(seq, rng, vocab, 1 << 20);
        if (variant.changed) {
            row.has_semantic = true;
            row.semantic_flipped = predict(model.score(variant.seq)) != pred;
        }
    }

    if (opt.want_probes && proposal) {
        const RationaleMask mask = causal_rationale(task, seq);
        if (!mask.positions.empty()) {
            const ProbeResult pr = probes(model, task, mask, proposal->edited_seq, vocab);
            row.cs = pr.cs;
            row.comp = pr.comp;
            row.suff = pr.suff;
            row.has_probes = true;
        }
    }
    row.ok = true;
    return row;
}

std::vector<EvalRow> eval_all(const AnswerModel& model,
                              const std::vector<ReasoningTask>& tasks,
                              const Vocabulary& vocab, const MetricsConfig& cfg,
                              const EditorPolicy* editor, const EvalOptions& opt) {
    const int n = static_cast<int>(tasks.size());
    std::vector<EvalRow> rows(n);
    if (cfg.exec == ExecMode::parallel) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < n; ++i) {
            try {
                Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(i));
                rows[i] = eval_one(model, tasks[i], vocab, cfg, editor, opt, rng);
            } catch (const std::exception& e) {
                rows[i].ok = false;
                rows[i].error = e.what();
            }
        }
    } else {
        for (int i = 0; i < n; ++i) {
            Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(i));
            rows[i] = eval_one(model, tasks[i], vocab, cfg, editor, opt, rng);
        }
    }
    for (const EvalRow& r : rows) {
        if (!r.ok && !r.error.empty()) throw std::runtime_error(r.error);
    }
    return rows;
}

}  // namespace

double cos_metric(const AnswerModel& model, const std::vector<ReasoningTask>& tasks,
                  const Vocabulary& vocab, const MetricsConfig& cfg,
                  const EditorPolicy* editor, FractionStat* stat) {
    if (tasks.empty()) throw std::invalid_argument("cos_metric: empty dataset");
    EvalOptions opt;
    opt.want_semantic = false;
    opt.want_probes = false;
    const auto rows = eval_all(model, tasks, vocab, cfg, editor, opt);
    FractionStat s;
    for (const EvalRow& r : rows) {
        if (!r.correct || !r.has_edit) continue;
        ++s.den;
        s.num += r.flipped ? 1 : 0;
    }
    if (s.den > 0) s.value = static_cast<double>(s.num) / s.den;
    if (stat) *stat = s;
    return s.value.value_or(0.0);
}

double sis_metric(const AnswerModel& model, const std::vector<ReasoningTask>& tasks,
                  const Vocabulary& vocab, const MetricsConfig& cfg,
                  FractionStat* stat) {
    if (tasks.empty()) throw std::invalid_argument("sis_metric: empty dataset");
    EvalOptions opt;
    opt.want_edit = false;
    opt.want_probes = false;
    const auto rows = eval_all(model, tasks, vocab, cfg, nullptr, opt);
    FractionStat s;
    for (const EvalRow& r : rows) {
        if (!r.correct || !r.has_semantic) continue;
        ++s.den;
        s.num += r.semantic_flipped ? 0 : 1;
    }
    if (s.den > 0) s.value = static_cast<double>(s.num) / s.den;
    if (stat) *stat = s;
    return s.value.value_or(0.0);
}

double accuracy_metric(const AnswerModel& model, const std::vector<ReasoningTask>& tasks,
                       const Vocabulary& vocab, const MetricsConfig& cfg) {
    if (tasks.empty()) throw std::invalid_argument("accuracy_metric: empty dataset");
    EvalOptions opt;
    opt.want_edit = false;
    opt.want_semantic = false;
    opt.want_probes = false;
    const auto rows = eval_all(model, tasks, vocab, cfg, nullptr, opt);
    long correct = 0;
    for (const EvalRow& r : rows) correct += r.correct ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(rows.size());
}

double ece_metric(const AnswerModel& model, const std::vector<ReasoningTask>& tasks,
                  const Vocabulary& vocab, const MetricsConfig& cfg) {
    if (tasks.empty()) throw std::invalid_argument("ece_metric: empty dataset");
    EvalOptions opt;
    opt.want_edit = false;
    opt.want_semantic = false;
    opt.want_probes = false;
    const auto rows = eval_all(model, tasks, vocab, cfg, nullptr, opt);
    std::vector<std::pair<double, bool>> samples;
    samples.reserve(rows.size());
    for (const EvalRow& r : rows) samples.emplace_back(r.confidence, r.correct);
    return ece_from_samples(samples, cfg.ece_bins);
}

std::pair<std::optional<double>, std::optional<double>> flip_pr(
    const AnswerModel& model, const std::vector<ReasoningTask>& tasks,
    const Vocabulary& vocab, const MetricsConfig& cfg, const EditorPolicy* editor) {
    if (tasks.empty()) throw std::invalid_argument("flip_pr: empty dataset");
    EvalOptions opt;
    opt.want_probes = false;
    const auto rows = eval_all(model, tasks, vocab, cfg, editor, opt);
    long tp = 0, fp = 0, fn = 0;
    for (const EvalRow& r : rows) {
        if (r.has_edit) (r.flipped ? tp : fn) += 1;
        if (r.has_semantic && r.semantic_flipped) ++fp;
    }
    std::optional<double> precision, recall;
    if (tp + fp > 0) precision = static_cast<double>(tp) / (tp + fp);
    if (tp + fn > 0) recall = static_cast<double>(tp) / (tp + fn);
    return {precision, recall};
}

nlohmann::json MetricsReport::to_json() const {
    auto frac = [](const FractionStat& s) {
        nlohmann::json j{{"num", s.num}, {"den", s.den}};
        if (s.value)
            j["value"] = *s.value;
        else
            j["value"] = nullptr;
        return j;
    };
    nlohmann::json j{
        {"accuracy", accuracy},
        {"cos", frac(cos)},
        {"sis", frac(sis)},
        {"mean_cs", mean_cs},
        {"mean_comp", mean_comp},
        {"mean_suff", mean_suff},
        {"ece", ece},
        {"flip_counts", {{"tp", flip_tp}, {"fp", flip_fp}, {"fn", flip_fn}, {"tn", flip_tn}}},
        {"n_eval", n_eval},
        {"cos_excluded", cos_excluded},
        {"sis_excluded", sis_excluded},
    };
    j["flip_precision"] = flip_precision ? nlohmann::json(*flip_precision) : nullptr;
    j["flip_recall"] = flip_recall ? nlohmann::json(*flip_recall) : nullptr;
    return j;
}

MetricsReport evaluate(const AnswerModel& model, const std::vector<ReasoningTask>& tasks,
                       const Vocabulary& vocab, const MetricsConfig& cfg,
                       const EditorPolicy* editor, std::vector<ProbeRow>* rows_out) {
    if (tasks.empty()) throw std::invalid_argument("evaluate: empty dataset");
    const auto rows = eval_all(model, tasks, vocab, cfg, editor, EvalOptions{});

    MetricsReport rep;
    rep.n_eval = static_cast<long>(rows.size());
    long correct = 0;
    long probe_rows = 0;
    std::vector<std::pair<double, bool>> calib;
    calib.reserve(rows.size());

    for (std::size_t i = 0; i < rows.size(); ++i) {
        const EvalRow& r = rows[i];
        correct += r.correct ? 1 : 0;
        calib.emplace_back(r.confidence, r.correct);

        if (r.correct) {
            if (r.has_edit) {
                ++rep.cos.den;
                rep.cos.num += r.flipped ? 1 : 0;
            } else {
                ++rep.cos_excluded;
            }
            if (r.has_semantic) {
                ++rep.sis.den;
                rep.sis.num += r.semantic_flipped ? 0 : 1;
            } else {
                ++rep.sis_excluded;
            }
        }
        if (r.has_edit) (r.flipped ? rep.flip_tp : rep.flip_fn) += 1;
        if (r.has_semantic) (r.semantic_flipped ? rep.flip_fp : rep.flip_tn) += 1;
        if (r.has_probes) {
            ++probe_rows;
            rep.mean_cs += r.cs;
            rep.mean_comp += r.comp;
            rep.mean_suff += r.suff;
        }
        if (rows_out) {
            ProbeRow pr;
            pr.id = static_cast<int>(i);
            pr.correct = r.correct;
            pr.flipped = r.flipped;
            pr.cs = r.cs;
            pr.comp = r.comp;
            pr.suff = r.suff;
            pr.edit_policy = cfg.edit_policy == ProposePolicy::random_swap
                                 ? "random_swap"
                                 : "learned_editor";
            pr.gate = r.has_edit;
            rows_out->push_back(pr);
        }
    }

    rep.accuracy = static_cast<double>(correct) / static_cast<double>(rows.size());
    if (rep.cos.den > 0)
        rep.cos.value = static_cast<double>(rep.cos.num) / rep.cos.den;
    if (rep.sis.den > 0)
        rep.sis.value = static_cast<double>(rep.sis.num) / rep.sis.den;
    if (probe_rows > 0) {
        rep.mean_cs /= probe_rows;
        rep.mean_comp /= probe_rows;
        rep.mean_suff /= probe_rows;
    }
    if (rep.flip_tp + rep.flip_fp > 0)
        rep.flip_precision =
            static_cast<double>(rep.flip_tp) / (rep.flip_tp + rep.flip_fp);
    if (rep.flip_tp + rep.flip_fn > 0)
        rep.flip_recall = static_cast<double>(rep.flip_tp) / (rep.flip_tp + rep.flip_fn);
    rep.ece = ece_from_samples(calib, cfg.ece_bins);
    return rep;
}

std::string probe_rows_csv(const std::vector<ProbeRow>& rows) {
    std::ostringstream out;
    out << "id,correct,flipped,cs,comp,suff,edit_policy,gate\n";
    for (const ProbeRow& r : rows) {
        out << r.id << ',' << (r.correct ? 1 : 0) << ',' << (r.flipped ? 1 : 0) << ','
            << r.cs << ',' << r.comp << ',' << r.suff << ',' << r.edit_policy << ','
            << (r.gate ? 1 : 0) << '\n';
    }
    return out.str();
}

}  // namespace csr
