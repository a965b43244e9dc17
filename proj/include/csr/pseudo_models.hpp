#pragma once

#include "csr/metrics.hpp"

namespace csr {

AnswerDistribution smoothed_onehot(int index, int answer_count, double eps = 1e-8);
AnswerDistribution smoothed_uniform(int answer_count, double eps = 1e-8);

// Re-executes the trace symbolically (mod V, unknowns propagate through
// MASK tokens) and answers with a one-hot at the recomputed final value.
// The faithful pole: causal edits always flip it, semantic variants never do.
class SymbolicExecutorModel : public AnswerModel {
public:
    explicit SymbolicExecutorModel(const Vocabulary& vocab, double eps = 1e-8)
        : vocab_(vocab), eps_(eps) {}
    AnswerDistribution score(const TokenSequence& seq) const override;

private:
    Vocabulary vocab_;
    double eps_;
};

// Reads only the question's SHORTCUT token; the trace is ignored entirely.
// The unfaithful pole: trace edits never move it.
class ShortcutOnlyModel : public AnswerModel {
public:
    explicit ShortcutOnlyModel(const Vocabulary& vocab, double eps = 1e-8)
        : vocab_(vocab), eps_(eps) {}
    AnswerDistribution score(const TokenSequence& seq) const override;

private:
    Vocabulary vocab_;
    double eps_;
};

// Answers with the value token at a fixed offset from the end; correct on the
// default template, thrown off by template variation.
class PositionReaderModel : public AnswerModel {
public:
    explicit PositionReaderModel(const Vocabulary& vocab, double eps = 1e-8)
        : vocab_(vocab), eps_(eps) {}
    AnswerDistribution score(const TokenSequence& seq) const override;

private:
    Vocabulary vocab_;
    double eps_;
};

// Answers one of two fixed classes by hashing the whole sequence; any
// perturbation flips it with probability ~1/2.
class HashFlipModel : public AnswerModel {
public:
    HashFlipModel(const Vocabulary& vocab, int class_a, int class_b, double eps = 1e-8)
        : vocab_(vocab), a_(class_a), b_(class_b), eps_(eps) {}
    AnswerDistribution score(const TokenSequence& seq) const override;

private:
    Vocabulary vocab_;
    int a_, b_;
    double eps_;
};

}  // namespace csr
