#include "csr/verifier.hpp"

#include <cmath>

namespace csr {

namespace {

long long eval_op(Op op, long long a, long long b) {
    switch (op) {
        case Op::add: return a + b;
        case Op::sub: return a - b;
        case Op::mul: return a * b;
    }
    throw std::logic_error("eval_op");
}

long long resolve(const Operand& o, const Trace& trace, std::size_t step) {
    if (!o.is_ref) return o.value;
    if (o.value < 0 || o.value >= static_cast<int>(step))
        throw TraceStructureError("step " + std::to_string(step) +
                                  " references step " + std::to_string(o.value));
    return trace.steps[o.value].result;
}

}  // namespace

VerifierVerdict verify(const Trace& trace) {
    if (trace.steps.empty()) throw TraceStructureError("empty trace");
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        const Step& s = trace.steps[i];
        const long long a = resolve(s.lhs, trace, i);
        const long long b = resolve(s.rhs, trace, i);
        if (eval_op(s.op, a, b) != s.result)
            return VerifierVerdict::bad(static_cast<int>(i));
    }
    return VerifierVerdict::ok();
}

VerifierVerdict verify_noisy(const Trace& trace, const NoisyVerifierConfig& cfg, Rng& rng) {
    cfg.validate();
    VerifierVerdict v = verify(trace);
    if (v.valid) {
        if (rng.bernoulli(cfg.flip_valid_rate)) return VerifierVerdict::bad(0);
    } else {
        if (rng.bernoulli(cfg.flip_invalid_rate)) return VerifierVerdict::ok();
    }
    return v;
}

AcceptanceEstimate acceptance_rate(
    std::span<const std::pair<VerifierVerdict, VerifierVerdict>> pairs) {
    if (pairs.empty()) throw std::invalid_argument("acceptance_rate: empty stream");
    long accepted = 0;
    for (const auto& [orig, edited] : pairs) {
        if (orig.valid && !edited.valid) ++accepted;
    }
    AcceptanceEstimate est;
    est.n = static_cast<long>(pairs.size());
    est.q_hat = static_cast<double>(accepted) / static_cast<double>(est.n);
    est.se = std::sqrt(est.q_hat * (1.0 - est.q_hat) / static_cast<double>(est.n));
    return est;
}

}  // namespace csr
