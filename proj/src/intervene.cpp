#include "csr/intervene.hpp"

#include <algorithm>
#include <cmath>

#include "csr/verifier.hpp"

namespace csr {

namespace {

void check_candidates(const TokenSequence& seq, const std::vector<int>& candidates) {
    for (int p : candidates) {
        if (p < 0 || p >= static_cast<int>(seq.size()) || !seq.op_mask[p])
            throw std::invalid_argument("edit candidate " + std::to_string(p) +
                                        " is not an operator position");
    }
}

std::array<double, kEditorFeatures> position_features(const TokenSequence& seq,
                                                      const std::vector<int>& ops,
                                                      const Vocabulary& vocab, int pos) {
    std::array<double, kEditorFeatures> f{};
    f[0] = 1.0;
    const auto len = static_cast<double>(seq.size());
    f[1] = len > 1 ? pos / (len - 1.0) : 0.0;
    const auto it = std::find(ops.begin(), ops.end(), pos);
    const auto rank = static_cast<double>(it - ops.begin());
    f[2] = ops.size() > 1 ? rank / (static_cast<double>(ops.size()) - 1.0) : 0.0;
    f[3 + static_cast<int>(vocab.op_of(seq.tokens[pos]))] = 1.0;
    return f;
}

double dot(const std::array<double, kEditorFeatures>& a,
           const std::array<double, kEditorFeatures>& b) {
    double s = 0.0;
    for (int i = 0; i < kEditorFeatures; ++i) s += a[i] * b[i];
    return s;
}

std::vector<double> softmax(const std::vector<double>& scores) {
    const double mx = *std::max_element(scores.begin(), scores.end());
    std::vector<double> p(scores.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        p[i] = std::exp(scores[i] - mx);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

std::size_t sample_index(const std::vector<double>& probs, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return probs.size() - 1;
}

}  // namespace

std::optional<EditScript> random_swap(const TokenSequence& seq,
                                      const std::vector<int>& candidates,
                                      const Vocabulary& vocab, Rng& rng, int depth) {
    check_candidates(seq, candidates);
    if (depth < 1 || candidates.empty() ||
        depth > static_cast<int>(candidates.size()))
        return std::nullopt;

    std::vector<int> pool = candidates;
    EditScript script;
    script.policy = depth > 1 ? EditPolicyTag::multi_edit : EditPolicyTag::random_swap;
    for (int t = 0; t < depth; ++t) {
        const std::size_t pick = rng.index(pool.size());
        const int pos = pool[pick];
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));

        const int old_tok = seq.tokens[pos];
        const std::vector<Op> alts = op_alternatives(vocab.op_of(old_tok));
        const Op alt = alts[rng.index(alts.size())];
        script.edits.push_back({pos, old_tok, vocab.op_token(alt)});
    }
    return script;
}

TokenSequence apply_edits(const TokenSequence& seq, const EditScript& script) {
    TokenSequence out = seq;
    for (const Edit& e : script.edits) {
        if (e.position < 0 || e.position >= static_cast<int>(out.size()))
            throw std::invalid_argument("apply_edits: position out of range");
        if (out.tokens[e.position] != e.old_symbol)
            throw std::invalid_argument("apply_edits: old symbol mismatch at position " +
                                        std::to_string(e.position));
        out.tokens[e.position] = e.new_symbol;
    }
    return out;
}

Trace apply_edits_to_trace(const TokenSequence& seq, const Trace& trace,
                           const EditScript& script, const Vocabulary& vocab) {
    const std::vector<int> ops = seq.op_positions();
    Trace out = trace;
    for (const Edit& e : script.edits) {
        const auto it = std::find(ops.begin(), ops.end(), e.position);
        if (it == ops.end())
            throw std::invalid_argument("apply_edits_to_trace: position is not an operator");
        const auto step = static_cast<std::size_t>(it - ops.begin());
        if (step >= out.steps.size())
            throw std::invalid_argument("apply_edits_to_trace: operator beyond trace steps");
        out.steps[step].op = vocab.op_of(e.new_symbol);
    }
    return out;
}

nlohmann::json EditorPolicy::to_json() const {
    nlohmann::json repl = nlohmann::json::array();
    for (const auto& row : replacement_weights)
        repl.push_back(std::vector<double>(row.begin(), row.end()));
    return nlohmann::json{
        {"format_version", 1},
        {"position_weights", std::vector<double>(position_weights.begin(), position_weights.end())},
        {"replacement_weights", repl},
        {"depth_weights", std::vector<double>(depth_weights.begin(), depth_weights.end())},
        {"sample_temperature", sample_temperature},
        {"baseline", baseline},
        {"baseline_decay", baseline_decay},
        {"skipped_updates", skipped_updates},
    };
}

EditorPolicy EditorPolicy::from_json(const nlohmann::json& j) {
    EditorPolicy p;
    const auto pw = j.at("position_weights").get<std::vector<double>>();
    if (pw.size() != kEditorFeatures)
        throw std::runtime_error("editor checkpoint: bad position_weights size");
    std::copy(pw.begin(), pw.end(), p.position_weights.begin());
    const auto& repl = j.at("replacement_weights");
    for (int i = 0; i < kNumOps; ++i) {
        const auto row = repl.at(i).get<std::vector<double>>();
        std::copy(row.begin(), row.end(), p.replacement_weights[i].begin());
    }
    const auto dw = j.at("depth_weights").get<std::vector<double>>();
    std::copy(dw.begin(), dw.end(), p.depth_weights.begin());
    p.sample_temperature = j.at("sample_temperature").get<double>();
    p.baseline = j.at("baseline").get<double>();
    p.baseline_decay = j.at("baseline_decay").get<double>();
    p.skipped_updates = j.at("skipped_updates").get<int>();
    return p;
}

std::optional<EditorProposal> editor_propose(const TokenSequence& seq,
                                             const std::vector<int>& candidates,
                                             const Vocabulary& vocab,
                                             const EditorPolicy& policy, int depth,
                                             Rng& rng) {
    check_candidates(seq, candidates);
    if (policy.sample_temperature <= 0)
        throw std::invalid_argument("editor sample_temperature must be > 0");
    if (depth < 1 || candidates.empty() ||
        depth > static_cast<int>(candidates.size()))
        return std::nullopt;

    const std::vector<int> ops = seq.op_positions();
    std::vector<int> pool = candidates;
    EditorProposal out;
    out.script.policy = EditPolicyTag::learned_editor;

    for (int t = 0; t < depth; ++t) {
        std::vector<double> scores(pool.size());
        for (std::size_t i = 0; i < pool.size(); ++i)
            scores[i] = dot(policy.position_weights,
                            position_features(seq, ops, vocab, pool[i])) /
                        policy.sample_temperature;
        const std::vector<double> probs = softmax(scores);
        const std::size_t pick = sample_index(probs, rng);
        out.log_prob += std::log(probs[pick]);
        const int pos = pool[pick];
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));

        const Op old_op = vocab.op_of(seq.tokens[pos]);
        const std::vector<Op> alts = op_alternatives(old_op);
        std::vector<double> rscores(alts.size());
        for (std::size_t i = 0; i < alts.size(); ++i)
            rscores[i] = policy.replacement_weights[static_cast<int>(old_op)]
                                                   [static_cast<int>(alts[i])];
        const std::vector<double> rprobs = softmax(rscores);
        const std::size_t rpick = sample_index(rprobs, rng);
        out.log_prob += std::log(rprobs[rpick]);
        out.script.edits.push_back(
            {pos, seq.tokens[pos], vocab.op_token(alts[rpick])});
    }
    return out;
}

double editor_log_prob(const TokenSequence& seq, const std::vector<int>& candidates,
                       const Vocabulary& vocab, const EditorPolicy& policy,
                       const EditScript& script) {
    const std::vector<int> ops = seq.op_positions();
    std::vector<int> pool = candidates;
    double lp = 0.0;
    for (const Edit& e : script.edits) {
        std::vector<double> scores(pool.size());
        for (std::size_t i = 0; i < pool.size(); ++i)
            scores[i] = dot(policy.position_weights,
                            position_features(seq, ops, vocab, pool[i])) /
                        policy.sample_temperature;
        const std::vector<double> probs = softmax(scores);
        const auto it = std::find(pool.begin(), pool.end(), e.position);
        if (it == pool.end())
            throw std::invalid_argument("editor_log_prob: edit position not in pool");
        lp += std::log(probs[static_cast<std::size_t>(it - pool.begin())]);
        pool.erase(it);

        const Op old_op = vocab.op_of(e.old_symbol);
        const std::vector<Op> alts = op_alternatives(old_op);
        std::vector<double> rscores(alts.size());
        for (std::size_t i = 0; i < alts.size(); ++i)
            rscores[i] = policy.replacement_weights[static_cast<int>(old_op)]
                                                   [static_cast<int>(alts[i])];
        const std::vector<double> rprobs = softmax(rscores);
        const Op new_op = vocab.op_of(e.new_symbol);
        const auto rit = std::find(alts.begin(), alts.end(), new_op);
        if (rit == alts.end())
            throw std::invalid_argument("editor_log_prob: replacement equals original");
        lp += std::log(rprobs[static_cast<std::size_t>(rit - alts.begin())]);
    }
    return lp;
}

std::pair<int, double> editor_sample_depth(const EditorPolicy& policy, int max_depth,
                                           Rng& rng) {
    const int k = std::clamp(max_depth, 1, 3);
    std::vector<double> scores(policy.depth_weights.begin(),
                               policy.depth_weights.begin() + k);
    const std::vector<double> probs = softmax(scores);
    const std::size_t pick = sample_index(probs, rng);
    return {static_cast<int>(pick) + 1, std::log(probs[pick])};
}

void editor_update(EditorPolicy& policy, const TokenSequence& seq,
                   const std::vector<int>& candidates, const Vocabulary& vocab,
                   const EditScript& script, double reward, double lr,
                   int sampled_max_depth) {
    if (!std::isfinite(reward)) {
        ++policy.skipped_updates;
        return;
    }
    const double advantage = reward - policy.baseline;

    EditorPolicy updated = policy;
    bool finite = true;
    const std::vector<int> ops = seq.op_positions();
    std::vector<int> pool = candidates;

    for (const Edit& e : script.edits) {
        std::vector<double> scores(pool.size());
        std::vector<std::array<double, kEditorFeatures>> feats(pool.size());
        for (std::size_t i = 0; i < pool.size(); ++i) {
            feats[i] = position_features(seq, ops, vocab, pool[i]);
            scores[i] = dot(policy.position_weights, feats[i]) / policy.sample_temperature;
        }
        const std::vector<double> probs = softmax(scores);
        const auto it = std::find(pool.begin(), pool.end(), e.position);
        if (it == pool.end())
            throw std::invalid_argument("editor_update: edit position not in pool");
        const auto chosen = static_cast<std::size_t>(it - pool.begin());

        // grad log pi for softmax-without-replacement, one draw at a time
        for (int f = 0; f < kEditorFeatures; ++f) {
            double g = feats[chosen][f];
            for (std::size_t i = 0; i < pool.size(); ++i) g -= probs[i] * feats[i][f];
            updated.position_weights[f] +=
                lr * advantage * g / policy.sample_temperature;
            if (!std::isfinite(updated.position_weights[f])) finite = false;
        }
        pool.erase(it);

        const Op old_op = vocab.op_of(e.old_symbol);
        const std::vector<Op> alts = op_alternatives(old_op);
        std::vector<double> rscores(alts.size());
        for (std::size_t i = 0; i < alts.size(); ++i)
            rscores[i] = policy.replacement_weights[static_cast<int>(old_op)]
                                                   [static_cast<int>(alts[i])];
        const std::vector<double> rprobs = softmax(rscores);
        const Op new_op = vocab.op_of(e.new_symbol);
        for (std::size_t i = 0; i < alts.size(); ++i) {
            const double ind = alts[i] == new_op ? 1.0 : 0.0;
            auto& w = updated.replacement_weights[static_cast<int>(old_op)]
                                                 [static_cast<int>(alts[i])];
            w += lr * advantage * (ind - rprobs[i]);
            if (!std::isfinite(w)) finite = false;
        }
    }

    if (sampled_max_depth >= 1) {
        const int k = std::clamp(sampled_max_depth, 1, 3);
        std::vector<double> scores(policy.depth_weights.begin(),
                                   policy.depth_weights.begin() + k);
        const std::vector<double> probs = softmax(scores);
        const int chosen = script.depth() - 1;
        if (chosen >= 0 && chosen < k) {
            for (int i = 0; i < k; ++i) {
                const double ind = i == chosen ? 1.0 : 0.0;
                updated.depth_weights[i] += lr * advantage * (ind - probs[i]);
                if (!std::isfinite(updated.depth_weights[i])) finite = false;
            }
        }
    }

    if (!finite) {
        ++policy.skipped_updates;
        return;
    }
    updated.baseline = policy.baseline_decay * policy.baseline +
                       (1.0 - policy.baseline_decay) * reward;
    policy = updated;
}

std::optional<ProposedEdit> propose_invalidating_edit(
    const TokenSequence& seq, const Trace& trace, const std::vector<int>& candidates,
    ProposePolicy policy, const EditorPolicy* editor, int max_depth, Rng& rng,
    const Vocabulary& vocab, int budget) {
    if (candidates.empty()) return std::nullopt;

    for (int attempt = 1; attempt <= budget; ++attempt) {
        ProposedEdit out;
        out.attempts = attempt;
        if (policy == ProposePolicy::learned_editor) {
            if (!editor) throw std::invalid_argument("learned editor policy without editor");
            auto [depth, depth_lp] = editor_sample_depth(
                *editor, std::min(max_depth, static_cast<int>(candidates.size())), rng);
            auto prop = editor_propose(seq, candidates, vocab, *editor, depth, rng);
            if (!prop) return std::nullopt;
            out.script = std::move(prop->script);
            out.log_prob = prop->log_prob + depth_lp;
            out.sampled_max_depth = std::min(max_depth, static_cast<int>(candidates.size()));
        } else {
            auto script = random_swap(seq, candidates, vocab, rng, max_depth);
            if (!script) return std::nullopt;
            out.script = std::move(*script);
        }
        out.edited_trace = apply_edits_to_trace(seq, trace, out.script, vocab);
        if (!verify(out.edited_trace).valid) {
            out.edited_seq = apply_edits(seq, out.script);
            return out;
        }
    }
    return std::nullopt;
}

SemanticVariant semantic_variant(const TokenSequence& seq, Rng& rng,
                                 const Vocabulary& vocab, int context_limit) {
    ParsedSequence parsed = parse(seq, vocab);

    enum class Transform { operand_swap, template_flip, question_reorder };
    std::vector<Transform> applicable;

    std::vector<int> swappable;
    for (std::size_t i = 0; i < parsed.trace.steps.size(); ++i) {
        const Step& s = parsed.trace.steps[i];
        if ((s.op == Op::add || s.op == Op::mul) && !(s.lhs == s.rhs))
            swappable.push_back(static_cast<int>(i));
    }
    if (!swappable.empty()) applicable.push_back(Transform::operand_swap);
    applicable.push_back(Transform::template_flip);

    // count distinct orderings of plain question value tokens
    std::vector<std::size_t> value_positions;
    for (std::size_t i = 0; i < parsed.question_tokens.size(); ++i) {
        if (vocab.is_value(parsed.question_tokens[i])) value_positions.push_back(i);
    }
    bool reorderable = false;
    for (std::size_t i = 1; i < value_positions.size(); ++i) {
        if (parsed.question_tokens[value_positions[i]] !=
            parsed.question_tokens[value_positions[0]])
            reorderable = true;
    }
    if (reorderable) applicable.push_back(Transform::question_reorder);

    if (applicable.empty()) return {seq, false};

    const Transform chosen = applicable[rng.index(applicable.size())];
    TraceTemplate templ = parsed.templ;
    switch (chosen) {
        case Transform::operand_swap: {
            Step& s = parsed.trace.steps[static_cast<std::size_t>(
                swappable[rng.index(swappable.size())])];
            std::swap(s.lhs, s.rhs);
            break;
        }
        case Transform::template_flip:
            templ = templ == TraceTemplate::trailing_sep ? TraceTemplate::leading_sep
                                                         : TraceTemplate::trailing_sep;
            break;
        case Transform::question_reorder: {
            // rotate the question's value tokens by one slot
            std::vector<int> vals;
            for (std::size_t p : value_positions) vals.push_back(parsed.question_tokens[p]);
            std::rotate(vals.begin(), vals.begin() + 1, vals.end());
            for (std::size_t i = 0; i < value_positions.size(); ++i)
                parsed.question_tokens[value_positions[i]] = vals[i];
            break;
        }
    }

    TokenSequence out = render(parsed.question_tokens, parsed.trace, vocab,
                               {templ, context_limit});
    return {out, true};
}

}  // namespace csr
