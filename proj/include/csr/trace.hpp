#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "csr/rng.hpp"
#include "csr/vocab.hpp"

namespace csr {

// Step operand: a literal value or a reference to an earlier step's result.
struct Operand {
    bool is_ref = false;
    int value = 0;  // literal value, or step index when is_ref

    static Operand lit(int v) { return {false, v}; }
    static Operand ref(int step) { return {true, step}; }
    bool operator==(const Operand&) const = default;
};

struct Step {
    Operand lhs;
    Op op = Op::add;
    Operand rhs;
    int result = 0;
    bool operator==(const Step&) const = default;
};

struct Trace {
    std::vector<Step> steps;
    bool operator==(const Trace&) const = default;
};

enum class Segment : unsigned char { question, trace, separator };

struct TokenSequence {
    std::vector<int> tokens;
    std::vector<bool> op_mask;
    std::vector<Segment> segment;

    std::size_t size() const { return tokens.size(); }
    std::vector<int> op_positions() const;
};

// Two step templates: A writes "step ;" per step, B writes "; step".
// B shifts every trace token one slot right; both parse back identically.
enum class TraceTemplate : unsigned char { trailing_sep, leading_sep };

struct RenderOptions {
    TraceTemplate templ = TraceTemplate::trailing_sep;
    int context_limit = 256;
};

struct ContextLimitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

TokenSequence render(const std::vector<int>& question_tokens, const Trace& trace,
                     const Vocabulary& vocab, const RenderOptions& opts = {});

struct ParsedSequence {
    std::vector<int> question_tokens;
    Trace trace;
    std::optional<int> shortcut_value;
    TraceTemplate templ = TraceTemplate::trailing_sep;
};

ParsedSequence parse(const TokenSequence& seq, const Vocabulary& vocab);

// Operator positions with the highest indices: ceil(k_ratio * |ops|) of them.
// Empty when the sequence has no operator tokens.
std::vector<int> last_k_op_subset(const TokenSequence& seq, double k_ratio);

struct OperatorNoiseConfig {
    double noise_rate = 0.0;  // rho
    std::uint64_t seed = 0;

    void validate() const {
        if (noise_rate < 0.0 || noise_rate > 1.0)
            throw std::invalid_argument("noise_rate outside [0,1]");
    }
};

// Imperfect operator identification: each truly causal slot survives with
// probability 1-rho and is otherwise replaced by a uniformly random
// non-causal operator or distractor token position from the trace segment.
std::vector<int> identify_operators(const TokenSequence& seq,
                                    const std::vector<int>& truth,
                                    const OperatorNoiseConfig& noise, Rng& rng);

}  // namespace csr
