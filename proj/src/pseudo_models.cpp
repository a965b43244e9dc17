#include "csr/pseudo_models.hpp"

#include <cmath>

namespace csr {

AnswerDistribution smoothed_onehot(int index, int answer_count, double eps) {
    AnswerDistribution d;
    d.probs.assign(answer_count, eps);
    d.probs[index] += 1.0 - eps * answer_count;
    d.log_probs.resize(answer_count);
    for (int i = 0; i < answer_count; ++i) d.log_probs[i] = std::log(d.probs[i]);
    return d;
}

AnswerDistribution smoothed_uniform(int answer_count, double eps) {
    (void)eps;  // uniform is already floored
    AnswerDistribution d;
    d.probs.assign(answer_count, 1.0 / answer_count);
    d.log_probs.assign(answer_count, std::log(1.0 / answer_count));
    return d;
}

AnswerDistribution SymbolicExecutorModel::score(const TokenSequence& seq) const {
    const int v = vocab_.value_count();
    constexpr long long kUnknown = -1;

    // walk the trace segment; each step is (operand op operand = value)
    std::size_t i = 0;
    while (i < seq.size() && seq.tokens[i] != vocab_.qsep_token()) ++i;
    if (i == seq.size()) return smoothed_uniform(v, eps_);
    ++i;

    std::vector<long long> values;
    while (i < seq.size()) {
        const int t = seq.tokens[i];
        if (vocab_.is_separator(t)) {
            ++i;
            continue;
        }
        if (i + 4 >= seq.size()) return smoothed_uniform(v, eps_);

        auto operand = [&](int tok) -> long long {
            if (vocab_.is_value(tok)) return vocab_.value_of(tok);
            if (vocab_.is_ref(tok)) {
                const int step = vocab_.ref_step_of(tok);
                if (step < 0 || step >= static_cast<int>(values.size())) return kUnknown;
                return values[step];
            }
            return kUnknown;  // MASK or anything else
        };
        const long long a = operand(seq.tokens[i]);
        const int op_tok = seq.tokens[i + 1];
        const long long b = operand(seq.tokens[i + 2]);
        if (seq.tokens[i + 3] != vocab_.eq_token() &&
            seq.tokens[i + 3] != vocab_.mask_token())
            return smoothed_uniform(v, eps_);

        long long r = kUnknown;
        if (a != kUnknown && b != kUnknown && vocab_.is_op(op_tok)) {
            switch (vocab_.op_of(op_tok)) {
                case Op::add: r = a + b; break;
                case Op::sub: r = a - b; break;
                case Op::mul: r = a * b; break;
            }
            r %= v;
            if (r < 0) r += v;
        }
        values.push_back(r);
        i += 5;
    }

    if (values.empty() || values.back() == kUnknown) return smoothed_uniform(v, eps_);
    return smoothed_onehot(static_cast<int>(values.back()), v, eps_);
}

AnswerDistribution ShortcutOnlyModel::score(const TokenSequence& seq) const {
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (seq.segment[i] == Segment::question && vocab_.is_shortcut(seq.tokens[i]))
            return smoothed_onehot(vocab_.shortcut_value_of(seq.tokens[i]),
                                   vocab_.value_count(), eps_);
    }
    return smoothed_uniform(vocab_.value_count(), eps_);
}

AnswerDistribution PositionReaderModel::score(const TokenSequence& seq) const {
    if (seq.size() >= 2) {
        const int t = seq.tokens[seq.size() - 2];
        if (vocab_.is_value(t))
            return smoothed_onehot(vocab_.value_of(t), vocab_.value_count(), eps_);
    }
    return smoothed_uniform(vocab_.value_count(), eps_);
}

AnswerDistribution HashFlipModel::score(const TokenSequence& seq) const {
    const std::uint64_t h =
        fnv1a(seq.tokens.data(), seq.tokens.size() * sizeof(int));
    return smoothed_onehot((h & 1) == 0 ? a_ : b_, vocab_.value_count(), eps_);
}

}  // namespace csr
