#include "csr/trace.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace csr {

std::vector<int> TokenSequence::op_positions() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < op_mask.size(); ++i) {
        if (op_mask[i]) out.push_back(static_cast<int>(i));
    }
    return out;
}

namespace {

int operand_token(const Operand& o, const Vocabulary& vocab) {
    return o.is_ref ? vocab.ref_token(o.value) : vocab.value_token(o.value);
}

void push(TokenSequence& seq, int token, Segment seg, bool is_op = false) {
    seq.tokens.push_back(token);
    seq.op_mask.push_back(is_op);
    seq.segment.push_back(seg);
}

}  // namespace

TokenSequence render(const std::vector<int>& question_tokens, const Trace& trace,
                     const Vocabulary& vocab, const RenderOptions& opts) {
    if (trace.steps.empty()) throw std::invalid_argument("render: empty trace");
    if (static_cast<int>(trace.steps.size()) > vocab.max_steps())
        throw std::invalid_argument("render: trace exceeds vocabulary max_steps");

    TokenSequence seq;
    for (int t : question_tokens) push(seq, t, Segment::question);
    push(seq, vocab.qsep_token(), Segment::separator);

    const int sep = opts.templ == TraceTemplate::trailing_sep ? vocab.sep_a_token()
                                                              : vocab.sep_b_token();
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        const Step& s = trace.steps[i];
        if (opts.templ == TraceTemplate::leading_sep) push(seq, sep, Segment::separator);
        push(seq, operand_token(s.lhs, vocab), Segment::trace);
        push(seq, vocab.op_token(s.op), Segment::trace, /*is_op=*/true);
        push(seq, operand_token(s.rhs, vocab), Segment::trace);
        push(seq, vocab.eq_token(), Segment::trace);
        push(seq, vocab.value_token(s.result), Segment::trace);
        if (opts.templ == TraceTemplate::trailing_sep) push(seq, sep, Segment::separator);
    }

    if (static_cast<int>(seq.size()) > opts.context_limit) {
        throw ContextLimitError("rendered sequence length " +
                                std::to_string(seq.size()) + " exceeds context limit " +
                                std::to_string(opts.context_limit));
    }
    return seq;
}

ParsedSequence parse(const TokenSequence& seq, const Vocabulary& vocab) {
    ParsedSequence out;
    std::size_t i = 0;
    while (i < seq.size() && seq.tokens[i] != vocab.qsep_token()) {
        const int t = seq.tokens[i];
        if (vocab.is_shortcut(t)) out.shortcut_value = vocab.shortcut_value_of(t);
        out.question_tokens.push_back(t);
        ++i;
    }
    if (i == seq.size()) throw ParseError("parse: missing question/trace boundary");
    ++i;  // qsep

    bool saw_leading = false;
    auto expect = [&](const char* what) -> int {
        if (i >= seq.size()) throw ParseError(std::string("parse: truncated step, expected ") + what);
        return seq.tokens[i++];
    };
    auto read_operand = [&](int t) -> Operand {
        if (vocab.is_ref(t)) return Operand::ref(vocab.ref_step_of(t));
        if (vocab.is_value(t)) return Operand::lit(vocab.value_of(t));
        throw ParseError("parse: expected operand, got " + vocab.token_text(t));
    };

    while (i < seq.size()) {
        int t = seq.tokens[i];
        if (t == vocab.sep_a_token()) { ++i; continue; }
        if (t == vocab.sep_b_token()) { saw_leading = true; ++i; continue; }

        Step s;
        s.lhs = read_operand(expect("lhs"));
        const int opt = expect("op");
        if (!vocab.is_op(opt)) throw ParseError("parse: expected operator, got " + vocab.token_text(opt));
        s.op = vocab.op_of(opt);
        s.rhs = read_operand(expect("rhs"));
        const int eq = expect("'='");
        if (eq != vocab.eq_token()) throw ParseError("parse: expected '=', got " + vocab.token_text(eq));
        const int res = expect("result");
        if (!vocab.is_value(res)) throw ParseError("parse: expected result value, got " + vocab.token_text(res));
        s.result = vocab.value_of(res);
        out.trace.steps.push_back(s);
    }
    if (out.trace.steps.empty()) throw ParseError("parse: no steps");
    out.templ = saw_leading ? TraceTemplate::leading_sep : TraceTemplate::trailing_sep;
    return out;
}

std::vector<int> last_k_op_subset(const TokenSequence& seq, double k_ratio) {
    if (k_ratio <= 0.0 || k_ratio > 1.0)
        throw std::invalid_argument("last_k_op_subset: k_ratio outside (0,1]");
    std::vector<int> ops = seq.op_positions();
    if (ops.empty()) return {};
    const auto keep = static_cast<std::size_t>(
        std::ceil(k_ratio * static_cast<double>(ops.size())));
    return std::vector<int>(ops.end() - keep, ops.end());
}

std::vector<int> identify_operators(const TokenSequence& seq,
                                    const std::vector<int>& truth,
                                    const OperatorNoiseConfig& noise, Rng& rng) {
    noise.validate();
    const std::set<int> truth_set(truth.begin(), truth.end());
    for (int p : truth) {
        if (p < 0 || p >= static_cast<int>(seq.size()) || !seq.op_mask[p])
            throw std::invalid_argument("identify_operators: truth position not an operator");
    }

    // Contamination pool: trace-segment tokens that are not truly causal.
    // Covers both non-causal operators and distractor tokens.
    std::vector<int> pool;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (seq.segment[i] == Segment::trace && !truth_set.contains(static_cast<int>(i)))
            pool.push_back(static_cast<int>(i));
    }

    std::set<int> out;
    for (int p : truth) {
        if (!pool.empty() && rng.bernoulli(noise.noise_rate)) {
            out.insert(pool[rng.index(pool.size())]);
        } else {
            out.insert(p);
        }
    }
    return {out.begin(), out.end()};
}

}  // namespace csr
