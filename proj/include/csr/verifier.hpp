#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>

#include "csr/rng.hpp"
#include "csr/trace.hpp"

namespace csr {

// Raised for malformed traces (empty, forward references); distinct from an
// invalid verdict, which is a normal outcome.
struct TraceStructureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct VerifierVerdict {
    bool valid = false;                     // 1 = valid, 0 = invalid
    std::optional<int> first_failure;      // earliest violating step

    static VerifierVerdict ok() { return {true, std::nullopt}; }
    static VerifierVerdict bad(int step) { return {false, step}; }
};

// Exact arithmetic check: valid iff every step's stored result equals exact
// evaluation of (lhs op rhs), with references resolving to stored results.
VerifierVerdict verify(const Trace& trace);

struct NoisyVerifierConfig {
    double flip_valid_rate = 0.0;    // valid trace misjudged invalid
    double flip_invalid_rate = 0.0;  // invalid trace misjudged valid
    std::uint64_t seed = 0;

    void validate() const {
        if (flip_valid_rate < 0 || flip_valid_rate > 1 || flip_invalid_rate < 0 ||
            flip_invalid_rate > 1)
            throw std::invalid_argument("verifier flip rates outside [0,1]");
    }
};

// Exact verdict with the bit flipped independently at the configured rates.
VerifierVerdict verify_noisy(const Trace& trace, const NoisyVerifierConfig& cfg, Rng& rng);

struct AcceptanceEstimate {
    double q_hat = 0.0;
    double se = 0.0;
    long n = 0;
};

// q estimate over (v(T), v(T')) verdict pairs: fraction with valid original
// and invalid counterfactual.
AcceptanceEstimate acceptance_rate(
    std::span<const std::pair<VerifierVerdict, VerifierVerdict>> pairs);

}  // namespace csr
