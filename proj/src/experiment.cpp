#include "csr/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include "csr/dataset_io.hpp"
#include "csr/verifier.hpp"

namespace csr {

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string make_run_dir(const std::string& out_root, const std::string& command) {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    char stamp[32];
    std::tm tm_utc{};
    gmtime_r(&tt, &tm_utc);
    std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm_utc);

    std::string base = out_root + "/" + command + "_" + stamp;
    std::string dir = base;
    for (int k = 2; std::filesystem::exists(dir); ++k)
        dir = base + "_" + std::to_string(k);
    std::filesystem::create_directories(dir);
    return dir;
}

int env_worker_count() {
    const char* raw = std::getenv("CSR_LAB_WORKERS");
    if (!raw) return 1;
    const int n = std::atoi(raw);
    return n >= 1 ? n : 1;
}

// ---- noisy-verifier identity -------------------------------------------

nlohmann::json NoisyVerifierStats::to_json() const {
    return nlohmann::json{
        {"flip_invalid_rate", flip_invalid_rate},
        {"q_hat", q_hat},
        {"se_q", se_q},
        {"mu_a", mu_a},
        {"se_mu_a", se_mu_a},
        {"mu_star", mu_star},
        {"se_mu_star", se_mu_star},
        {"delta", delta},
        {"e_lcsr", e_lcsr},
        {"se_e", se_e},
        {"combined_se", combined_se},
        {"n", n},
        {"pass", pass},
    };
}

nlohmann::json NoisyVerifierCheck::to_json() const {
    nlohmann::json cells_json = nlohmann::json::array();
    for (const auto& c : cells) cells_json.push_back(c.to_json());
    return nlohmann::json{
        {"cells", cells_json}, {"q_monotone", q_monotone}, {"pass", pass}};
}

NoisyVerifierCheck check_noisy_verifier(const ModelParams& params,
                                        const std::vector<ReasoningTask>& tasks,
                                        const Vocabulary& vocab,
                                        const std::vector<double>& flip_invalid_rates,
                                        int n_per_cell, std::uint64_t seed,
                                        DivergenceKind kind, double answer_temp) {
    if (tasks.empty()) throw std::invalid_argument("check_noisy_verifier: empty dataset");
    if (n_per_cell < 10) throw std::invalid_argument("check_noisy_verifier: n too small");

    // original-side distributions are shared across cells
    std::vector<TokenSequence> seqs(tasks.size());
    std::vector<AnswerDistribution> orig(tasks.size());
    const int nt = static_cast<int>(tasks.size());
#pragma omp parallel for schedule(static)
    for (int i = 0; i < nt; ++i) {
        seqs[i] = render_task(tasks[i], vocab, 1 << 20);
        orig[i] = forward(params, seqs[i], answer_temp);
    }

    NoisyVerifierCheck out;
    for (std::size_t cell = 0; cell < flip_invalid_rates.size(); ++cell) {
        const double rate = flip_invalid_rates[cell];
        NoisyVerifierConfig gate_cfg;
        gate_cfg.flip_invalid_rate = rate;

        struct Event {
            bool gated;
            double d;
        };
        std::vector<Event> events(n_per_cell);
        std::vector<char> valid(n_per_cell, 0);
#pragma omp parallel for schedule(static)
        for (int i = 0; i < n_per_cell; ++i) {
            Rng rng = Rng::stream(seed, mix64(cell * 1000003ULL, i));
            const std::size_t ti = i % tasks.size();
            const ReasoningTask& task = tasks[ti];
            auto proposal = propose_invalidating_edit(
                seqs[ti], task.trace, task.causal_op_positions,
                ProposePolicy::random_swap, nullptr, 1, rng, vocab, 8);
            if (!proposal) continue;
            const AnswerDistribution cf = forward(params, proposal->edited_seq, answer_temp);
            const double d = divergence(orig[ti], cf, kind);
            const bool g = verify_noisy(task.trace, gate_cfg, rng).valid &&
                           !verify_noisy(proposal->edited_trace, gate_cfg, rng).valid;
            events[i] = {g, d};
            valid[i] = 1;
        }

        // independent halves: even events estimate E[L_CSR], odd events
        // estimate q and the conditional means
        std::vector<double> lcsr_half;
        std::vector<double> d_all_half, d_gated_half;
        long gated_half = 0, n_half = 0;
        for (int i = 0; i < n_per_cell; ++i) {
            if (!valid[i]) continue;
            if (i % 2 == 0) {
                lcsr_half.push_back(events[i].gated ? events[i].d : 0.0);
            } else {
                ++n_half;
                d_all_half.push_back(events[i].d);
                if (events[i].gated) {
                    ++gated_half;
                    d_gated_half.push_back(events[i].d);
                }
            }
        }

        NoisyVerifierStats st;
        st.flip_invalid_rate = rate;
        st.n = static_cast<long>(lcsr_half.size()) + n_half;
        st.e_lcsr = mean_of(lcsr_half);
        st.se_e = sd_of(lcsr_half) / std::sqrt(static_cast<double>(lcsr_half.size()));
        st.q_hat = n_half > 0 ? static_cast<double>(gated_half) / n_half : 0.0;
        st.se_q = std::sqrt(st.q_hat * (1.0 - st.q_hat) / std::max<long>(n_half, 1));
        st.mu_a = mean_of(d_gated_half);
        st.se_mu_a = d_gated_half.size() > 1
                         ? sd_of(d_gated_half) /
                               std::sqrt(static_cast<double>(d_gated_half.size()))
                         : 0.0;
        st.mu_star = mean_of(d_all_half);
        st.se_mu_star = d_all_half.size() > 1
                            ? sd_of(d_all_half) /
                                  std::sqrt(static_cast<double>(d_all_half.size()))
                            : 0.0;
        st.delta = st.mu_star - st.mu_a;
        st.combined_se = std::sqrt(st.se_e * st.se_e +
                                   st.mu_a * st.mu_a * st.se_q * st.se_q +
                                   st.q_hat * st.q_hat * st.se_mu_a * st.se_mu_a);
        st.pass = std::abs(st.e_lcsr - st.q_hat * st.mu_a) <=
                  2.0 * st.combined_se + 1e-12;
        out.cells.push_back(st);
    }

    out.pass = true;
    for (std::size_t i = 0; i < out.cells.size(); ++i) {
        out.pass = out.pass && out.cells[i].pass;
        if (i > 0 && out.cells[i].q_hat > out.cells[i - 1].q_hat + 1e-12)
            out.q_monotone = false;
    }
    // monotone only meaningful when rates are increasing
    for (std::size_t i = 1; i < flip_invalid_rates.size(); ++i) {
        if (flip_invalid_rates[i] < flip_invalid_rates[i - 1]) out.q_monotone = true;
    }
    out.pass = out.pass && out.q_monotone;
    return out;
}

// ---- dominance ------------------------------------------------------------

nlohmann::json DominanceCell::to_json() const {
    return nlohmann::json{
        {"n", n},
        {"mean_cs", mean_cs},
        {"mean_comp", mean_comp},
        {"mean_suff", mean_suff},
        {"ci_cs", {ci_cs.lo, ci_cs.hi}},
        {"ci_comp", {ci_comp.lo, ci_comp.hi}},
        {"ci_suff", {ci_suff.lo, ci_suff.hi}},
        {"dominance", dominance},
        {"ci_separated", ci_separated},
    };
}

nlohmann::json DominanceReport::to_json() const {
    nlohmann::json j{
        {"refused", refused},
        {"refusal_reason", refusal_reason},
        {"model_accuracy", model_accuracy},
        {"main", main.to_json()},
        {"control_failed_as_expected", control_failed_as_expected},
        {"pass", pass},
    };
    j["control"] = control ? control->to_json() : nlohmann::json(nullptr);
    return j;
}

namespace {

CiPair bootstrap_ci(const std::vector<double>& values, int batches, Rng& rng) {
    std::vector<double> means(batches);
    for (int b = 0; b < batches; ++b) {
        double s = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i)
            s += values[rng.index(values.size())];
        means[b] = s / static_cast<double>(values.size());
    }
    std::sort(means.begin(), means.end());
    const auto lo = static_cast<std::size_t>(0.025 * (batches - 1));
    const auto hi = static_cast<std::size_t>(0.975 * (batches - 1));
    return {means[lo], means[hi]};
}

DominanceCell probe_cell(const AnswerModel& model,
                         const std::vector<ReasoningTask>& tasks,
                         const Vocabulary& vocab, int n, std::uint64_t seed,
                         bool target_confounders) {
    std::vector<double> cs, comp, suff;
    const int limit = std::min<int>(n, static_cast<int>(tasks.size()));
    std::vector<ProbeResult> results(limit);
    std::vector<char> ok(limit, 0);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < limit; ++i) {
        try {
            const ReasoningTask& task = tasks[i];
            Rng rng = Rng::stream(seed, i);
            const TokenSequence seq = render_task(task, vocab, 1 << 20);
            std::vector<int> candidates;
            if (target_confounders) {
                const std::vector<int> ops = seq.op_positions();
                for (int s = 0; s < static_cast<int>(ops.size()); ++s) {
                    if (std::find(task.causal_steps.begin(), task.causal_steps.end(),
                                  s) == task.causal_steps.end())
                        candidates.push_back(ops[s]);
                }
            } else {
                candidates = task.causal_op_positions;
            }
            auto proposal = propose_invalidating_edit(seq, task.trace, candidates,
                                                      ProposePolicy::random_swap,
                                                      nullptr, 1, rng, vocab, 8);
            if (!proposal) continue;
            const RationaleMask mask = causal_rationale(task, seq);
            if (mask.positions.empty()) continue;
            results[i] = probes(model, task, mask, proposal->edited_seq, vocab);
            ok[i] = 1;
        } catch (const std::exception&) {
            ok[i] = 0;
        }
    }
    for (int i = 0; i < limit; ++i) {
        if (!ok[i]) continue;
        cs.push_back(results[i].cs);
        comp.push_back(results[i].comp);
        suff.push_back(results[i].suff);
    }

    DominanceCell cell;
    cell.n = static_cast<long>(cs.size());
    if (cs.empty()) return cell;
    cell.mean_cs = mean_of(cs);
    cell.mean_comp = mean_of(comp);
    cell.mean_suff = mean_of(suff);
    Rng boot = Rng::stream(seed, 0xB007);
    cell.ci_cs = bootstrap_ci(cs, 1000, boot);
    cell.ci_comp = bootstrap_ci(comp, 1000, boot);
    cell.ci_suff = bootstrap_ci(suff, 1000, boot);
    cell.dominance = cell.mean_cs >= cell.mean_comp && cell.mean_cs >= cell.mean_suff;
    cell.ci_separated = cell.ci_cs.lo > cell.ci_comp.hi && cell.ci_cs.lo > cell.ci_suff.hi;
    return cell;
}

}  // namespace

DominanceReport check_dominance(const ModelParams& params,
                                const std::vector<ReasoningTask>& linear_tasks,
                                const std::vector<ReasoningTask>& dag_tasks,
                                const Vocabulary& vocab, int n, std::uint64_t seed,
                                double min_accuracy, double answer_temp) {
    if (linear_tasks.empty())
        throw std::invalid_argument("check_dominance: empty dataset");
    DominanceReport rep;
    const NeuralAnswerModel model(params, answer_temp);

    MetricsConfig mc;
    mc.seed = mix64(seed, 0xACC);
    rep.model_accuracy = accuracy_metric(model, linear_tasks, vocab, mc);
    if (rep.model_accuracy < min_accuracy) {
        rep.refused = true;
        rep.refusal_reason = "model accuracy " + std::to_string(rep.model_accuracy) +
                             " below required " + std::to_string(min_accuracy) +
                             "; theorem preconditions unmet";
        return rep;
    }

    rep.main = probe_cell(model, linear_tasks, vocab, n, mix64(seed, 1), false);
    if (!dag_tasks.empty()) {
        rep.control = probe_cell(model, dag_tasks, vocab, n, mix64(seed, 2), true);
        rep.control_failed_as_expected = !rep.control->dominance;
    }
    rep.pass = rep.main.dominance && rep.main.ci_separated &&
               (!rep.control || rep.control_failed_as_expected);
    return rep;
}

// ---- shortcut prevention ---------------------------------------------------

nlohmann::json ShortcutRunStats::to_json() const {
    return nlohmann::json{
        {"seed", seed},
        {"lambda", lambda},
        {"accuracy", accuracy},
        {"cos", cos},
        {"scrambled_accuracy", scrambled_accuracy},
        {"reliance", reliance},
        {"alpha", alpha},
    };
}

nlohmann::json ShortcutReport::to_json() const {
    nlohmann::json base = nlohmann::json::array(), csr = nlohmann::json::array();
    for (const auto& r : baseline_runs) base.push_back(r.to_json());
    for (const auto& r : csr_runs) csr.push_back(r.to_json());
    return nlohmann::json{
        {"baseline_runs", base},
        {"csr_runs", csr},
        {"refused", refused},
        {"refusal_reason", refusal_reason},
        {"pass", pass},
        {"mean_cos_baseline", mean_cos_baseline},
        {"sd_cos_baseline", sd_cos_baseline},
        {"mean_cos_csr", mean_cos_csr},
        {"sd_cos_csr", sd_cos_csr},
        {"mean_acc_baseline", mean_acc_baseline},
        {"mean_acc_csr", mean_acc_csr},
        {"mean_reliance_baseline", mean_reliance_baseline},
        {"mean_reliance_csr", mean_reliance_csr},
    };
}

std::vector<ReasoningTask> scramble_shortcut(const std::vector<ReasoningTask>& tasks,
                                             const Vocabulary& vocab,
                                             std::uint64_t seed) {
    std::vector<ReasoningTask> out = tasks;
    for (std::size_t i = 0; i < out.size(); ++i) {
        Rng rng = Rng::stream(seed, i);
        for (int& tok : out[i].question_tokens) {
            if (vocab.is_shortcut(tok))
                tok = vocab.shortcut_token(rng.uniform_int(0, vocab.value_count() - 1));
        }
    }
    return out;
}

namespace {

ShortcutRunStats shortcut_run(const GeneratorConfig& gen, const TrainConfig& base,
                              double lambda, std::uint64_t seed, int train_n,
                              int eval_n, const std::string& out_dir) {
    GeneratorConfig train_gen = gen;
    train_gen.seed = mix64(gen.seed, mix64(seed, 0x7A));
    GeneratorConfig eval_gen = gen;
    eval_gen.seed = mix64(gen.seed, mix64(seed, 0xEA));

    const Vocabulary vocab = gen.vocabulary();
    const auto train_tasks = generate_dataset(train_gen, train_n);
    const auto eval_tasks = generate_dataset(eval_gen, eval_n);

    TrainConfig cfg = base;
    cfg.lambda = lambda;
    cfg.seed = seed;

    const TrainResult result = train_run(train_tasks, cfg, vocab, out_dir);
    const NeuralAnswerModel model(result.params, 1.0);

    MetricsConfig mc;
    mc.seed = mix64(seed, 0x11E);
    ShortcutRunStats st;
    st.seed = seed;
    st.lambda = lambda;
    st.accuracy = accuracy_metric(model, eval_tasks, vocab, mc);
    st.cos = cos_metric(model, eval_tasks, vocab, mc);
    const auto scrambled = scramble_shortcut(eval_tasks, vocab, mix64(seed, 0x5C));
    st.scrambled_accuracy = accuracy_metric(model, scrambled, vocab, mc);
    st.reliance = st.accuracy - st.scrambled_accuracy;
    st.alpha = result.ledger.measured_alpha();
    return st;
}

}  // namespace

ShortcutReport check_shortcut(const GeneratorConfig& gen, const TrainConfig& base,
                              const std::vector<std::uint64_t>& seeds, int train_n,
                              int eval_n, const std::string& out_dir) {
    if (seeds.empty()) throw std::invalid_argument("check_shortcut: no seeds");
    ShortcutReport rep;

    for (std::uint64_t seed : seeds) {
        const std::string base_dir =
            out_dir.empty() ? "" : out_dir + "/baseline_seed_" + std::to_string(seed);
        const std::string csr_dir =
            out_dir.empty() ? "" : out_dir + "/csr_seed_" + std::to_string(seed);
        rep.baseline_runs.push_back(
            shortcut_run(gen, base, 0.0, seed, train_n, eval_n, base_dir));
        rep.csr_runs.push_back(
            shortcut_run(gen, base, base.lambda, seed, train_n, eval_n, csr_dir));
    }

    for (const auto& r : rep.csr_runs) {
        if (r.alpha <= 0.5) {
            rep.refused = true;
            rep.refusal_reason = "measured coverage alpha " + std::to_string(r.alpha) +
                                 " <= 0.5 (seed " + std::to_string(r.seed) + ")";
        }
    }

    auto collect = [](const std::vector<ShortcutRunStats>& runs, auto field) {
        std::vector<double> v;
        for (const auto& r : runs) v.push_back(field(r));
        return v;
    };
    const auto cos_b = collect(rep.baseline_runs, [](const auto& r) { return r.cos; });
    const auto cos_c = collect(rep.csr_runs, [](const auto& r) { return r.cos; });
    rep.mean_cos_baseline = mean_of(cos_b);
    rep.sd_cos_baseline = sd_of(cos_b);
    rep.mean_cos_csr = mean_of(cos_c);
    rep.sd_cos_csr = sd_of(cos_c);
    rep.mean_acc_baseline =
        mean_of(collect(rep.baseline_runs, [](const auto& r) { return r.accuracy; }));
    rep.mean_acc_csr =
        mean_of(collect(rep.csr_runs, [](const auto& r) { return r.accuracy; }));
    rep.mean_reliance_baseline =
        mean_of(collect(rep.baseline_runs, [](const auto& r) { return r.reliance; }));
    rep.mean_reliance_csr =
        mean_of(collect(rep.csr_runs, [](const auto& r) { return r.reliance; }));

    rep.pass = !rep.refused && rep.mean_cos_csr > rep.mean_cos_baseline &&
               rep.mean_reliance_csr < rep.mean_reliance_baseline;
    return rep;
}

// ---- sweeps ----------------------------------------------------------------

std::string sweep_kind_name(SweepKind kind) {
    switch (kind) {
        case SweepKind::lambda: return "lambda";
        case SweepKind::noise: return "noise";
        case SweepKind::divergence: return "divergence";
        case SweepKind::depth: return "depth";
        case SweepKind::editor: return "editor";
    }
    throw std::logic_error("sweep_kind_name");
}

nlohmann::json SweepCell::to_json() const {
    return nlohmann::json{
        {"label", label},
        {"cos_values", cos_values},
        {"accuracy_values", accuracy_values},
        {"alpha_values", alpha_values},
        {"cos_mean", cos_mean},
        {"cos_sd", cos_sd},
        {"acc_mean", acc_mean},
        {"acc_sd", acc_sd},
    };
}

nlohmann::json SweepReport::to_json() const {
    nlohmann::json cells_json = nlohmann::json::array();
    for (const auto& c : cells) cells_json.push_back(c.to_json());
    nlohmann::json verdicts_json = nlohmann::json::object();
    for (const auto& [k, v] : verdicts) verdicts_json[k] = v;
    return nlohmann::json{
        {"kind", sweep_kind_name(kind)},
        {"cells", cells_json},
        {"verdicts_emitted", verdicts_emitted},
        {"verdicts", verdicts_json},
        {"argmax_label", argmax_label},
    };
}

namespace {

struct CellSpec {
    std::string label;
    TrainConfig cfg;
};

std::vector<CellSpec> sweep_cells(SweepKind kind, const std::vector<double>& grid,
                                  const TrainConfig& base) {
    std::vector<CellSpec> specs;
    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%g", v);
        return std::string(buf);
    };
    switch (kind) {
        case SweepKind::lambda:
            for (double g : grid) {
                CellSpec s{fmt(g), base};
                s.cfg.lambda = g;
                specs.push_back(s);
            }
            break;
        case SweepKind::noise:
            for (double g : grid) {
                CellSpec s{fmt(g), base};
                s.cfg.op_noise.noise_rate = g;
                specs.push_back(s);
            }
            break;
        case SweepKind::divergence: {
            CellSpec baseline{"baseline", base};
            baseline.cfg.lambda = 0.0;
            specs.push_back(baseline);
            for (DivergenceKind dk :
                 {DivergenceKind::kl, DivergenceKind::js, DivergenceKind::tv}) {
                CellSpec s{divergence_name(dk), base};
                s.cfg.divergence = dk;
                specs.push_back(s);
            }
            break;
        }
        case SweepKind::depth:
            for (double g : grid) {
                CellSpec s{fmt(g), base};
                s.cfg.edit_depth = static_cast<int>(g);
                specs.push_back(s);
            }
            break;
        case SweepKind::editor: {
            CellSpec r{"random_swap", base};
            r.cfg.edit_policy = ProposePolicy::random_swap;
            specs.push_back(r);
            CellSpec l{"learned_editor", base};
            l.cfg.edit_policy = ProposePolicy::learned_editor;
            specs.push_back(l);
            break;
        }
    }
    return specs;
}

}  // namespace

SweepReport sweep(SweepKind kind, const std::vector<double>& grid,
                  const SweepSettings& settings) {
    if (settings.seeds.empty()) throw std::invalid_argument("sweep: no seeds");
    const std::vector<CellSpec> specs = sweep_cells(kind, grid, settings.base);
    if (specs.empty()) throw std::invalid_argument("sweep: empty grid");

    const Vocabulary vocab = settings.gen.vocabulary();
    GeneratorConfig eval_gen = settings.gen;
    eval_gen.seed = mix64(settings.gen.seed, 0xEFA1);
    const auto eval_tasks = generate_dataset(eval_gen, settings.eval_n);

    struct Item {
        std::size_t cell;
        std::size_t seed_idx;
    };
    std::vector<Item> items;
    for (std::size_t c = 0; c < specs.size(); ++c)
        for (std::size_t s = 0; s < settings.seeds.size(); ++s) items.push_back({c, s});

    struct ItemResult {
        double cos = 0.0, acc = 0.0, alpha = 0.0;
        std::string error;
    };
    std::vector<ItemResult> results(items.size());

    auto run_item = [&](std::size_t idx) {
        const Item& item = items[idx];
        const CellSpec& spec = specs[item.cell];
        const std::uint64_t seed = settings.seeds[item.seed_idx];
        try {
            GeneratorConfig train_gen = settings.gen;
            train_gen.seed = mix64(settings.gen.seed, mix64(seed, 0x7141));
            const auto train_tasks = generate_dataset(train_gen, settings.train_n);

            TrainConfig cfg = spec.cfg;
            cfg.seed = seed;
            std::string dir;
            if (!settings.out_dir.empty()) {
                dir = settings.out_dir + "/" + spec.label + "/seed_" +
                      std::to_string(seed);
            }
            const TrainResult tr = train_run(train_tasks, cfg, vocab, dir);
            const NeuralAnswerModel model(tr.params, 1.0);
            MetricsConfig mc;
            mc.seed = 0xC05;
            results[idx].acc = accuracy_metric(model, eval_tasks, vocab, mc);
            results[idx].cos = cos_metric(model, eval_tasks, vocab, mc);
            results[idx].alpha = tr.ledger.measured_alpha();
        } catch (const std::exception& e) {
            results[idx].error = e.what();
        }
    };

    const int workers = std::max(1, settings.workers);
    if (workers == 1) {
        for (std::size_t i = 0; i < items.size(); ++i) run_item(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < items.size();
                     i = next.fetch_add(1))
                    run_item(i);
            });
        }
        for (auto& t : pool) t.join();
    }

    for (const auto& r : results) {
        if (!r.error.empty()) throw std::runtime_error("sweep cell failed: " + r.error);
    }

    SweepReport rep;
    rep.kind = kind;
    rep.cells.resize(specs.size());
    for (std::size_t c = 0; c < specs.size(); ++c) rep.cells[c].label = specs[c].label;
    for (std::size_t i = 0; i < items.size(); ++i) {
        SweepCell& cell = rep.cells[items[i].cell];
        cell.cos_values.push_back(results[i].cos);
        cell.accuracy_values.push_back(results[i].acc);
        cell.alpha_values.push_back(results[i].alpha);
    }
    for (SweepCell& cell : rep.cells) {
        cell.cos_mean = mean_of(cell.cos_values);
        cell.cos_sd = sd_of(cell.cos_values);
        cell.acc_mean = mean_of(cell.accuracy_values);
        cell.acc_sd = sd_of(cell.accuracy_values);
    }

    rep.verdicts_emitted = settings.seeds.size() >= 3;
    auto cell_by = [&](const std::string& label) -> const SweepCell* {
        for (const auto& c : rep.cells)
            if (c.label == label) return &c;
        return nullptr;
    };

    if (rep.verdicts_emitted) {
        switch (kind) {
            case SweepKind::lambda: {
                const SweepCell* c01 = cell_by("0.1");
                const SweepCell* c05 = cell_by("0.5");
                const SweepCell* c10 = cell_by("1");
                if (c01 && c05)
                    rep.verdicts["cos_0.5_gt_0.1"] = c05->cos_mean > c01->cos_mean;
                if (c05 && c10)
                    rep.verdicts["acc_1.0_lt_0.5"] = c10->acc_mean < c05->acc_mean;
                if (c01 && c05)
                    rep.verdicts["cos_0.5_gt_0.1_separated"] =
                        c05->cos_mean - c05->cos_sd > c01->cos_mean + c01->cos_sd;
                break;
            }
            case SweepKind::noise: {
                bool non_increasing = true;
                for (std::size_t i = 1; i < rep.cells.size(); ++i) {
                    // non-increasing within one sd
                    if (rep.cells[i].cos_mean >
                        rep.cells[i - 1].cos_mean + rep.cells[i - 1].cos_sd)
                        non_increasing = false;
                }
                rep.verdicts["cos_non_increasing"] = non_increasing;
                break;
            }
            case SweepKind::divergence: {
                const SweepCell* baseline = cell_by("baseline");
                bool all_beat = baseline != nullptr;
                for (const char* name : {"kl", "js", "tv"}) {
                    const SweepCell* c = cell_by(name);
                    all_beat = all_beat && c && baseline &&
                               c->cos_mean > baseline->cos_mean;
                }
                rep.verdicts["all_divergences_beat_lambda0"] = all_beat;
                break;
            }
            case SweepKind::depth:
                break;  // report-only
            case SweepKind::editor: {
                const SweepCell* r = cell_by("random_swap");
                const SweepCell* l = cell_by("learned_editor");
                if (r && l) {
                    rep.verdicts["learned_beats_random_by_5pts"] =
                        l->cos_mean >= r->cos_mean + 0.05;
                    rep.verdicts["learned_accept_rate_exceeds_random"] =
                        mean_of(l->alpha_values) > mean_of(r->alpha_values);
                    rep.verdicts["pass"] =
                        rep.verdicts["learned_beats_random_by_5pts"] ||
                        rep.verdicts["learned_accept_rate_exceeds_random"];
                }
                break;
            }
        }
    }

    // depth sweep reports the argmax cell either way
    if (kind == SweepKind::depth && !rep.cells.empty()) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < rep.cells.size(); ++i)
            if (rep.cells[i].cos_mean > rep.cells[best].cos_mean) best = i;
        rep.argmax_label = rep.cells[best].label;
    }

    if (!settings.out_dir.empty())
        write_json_file(settings.out_dir + "/sweep_report.json", rep.to_json());
    return rep;
}

}  // namespace csr
