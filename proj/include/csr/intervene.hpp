#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "csr/rng.hpp"
#include "csr/trace.hpp"
#include "csr/vocab.hpp"

namespace csr {

enum class EditPolicyTag : unsigned char {
    fixed_swap,
    random_swap,
    multi_edit,
    learned_editor,
    semantic_preserving,
};

struct Edit {
    int position = 0;
    int old_symbol = 0;
    int new_symbol = 0;
};

struct EditScript {
    std::vector<Edit> edits;
    EditPolicyTag policy = EditPolicyTag::random_swap;

    int depth() const { return static_cast<int>(edits.size()); }
};

// L distinct operator positions chosen uniformly, each operator replaced by a
// uniformly chosen different one. Empty result = NoEditPossible.
std::optional<EditScript> random_swap(const TokenSequence& seq,
                                      const std::vector<int>& candidates,
                                      const Vocabulary& vocab, Rng& rng, int depth);

TokenSequence apply_edits(const TokenSequence& seq, const EditScript& script);

// Apply an operator edit script directly to a trace (operator positions map
// to steps in order).
Trace apply_edits_to_trace(const TokenSequence& seq, const Trace& trace,
                           const EditScript& script, const Vocabulary& vocab);

constexpr int kEditorFeatures = 6;  // bias, rel. position, rel. op rank, op one-hot

// Linear position scorer over hand-built features plus a replacement table
// over operator pairs and a depth head for multi-edit sampling. The causal
// flag is deliberately not a feature; the policy has to learn it.
struct EditorPolicy {
    std::array<double, kEditorFeatures> position_weights{};
    std::array<std::array<double, kNumOps>, kNumOps> replacement_weights{};
    std::array<double, 3> depth_weights{};
    double sample_temperature = 0.7;
    double baseline = 0.0;
    double baseline_decay = 0.99;
    int skipped_updates = 0;

    nlohmann::json to_json() const;
    static EditorPolicy from_json(const nlohmann::json& j);
};

struct EditorRewardConfig {
    double lambda_impact = 0.1;
    double lambda_length = 0.05;
};

struct EditorProposal {
    EditScript script;
    double log_prob = 0.0;
};

// Positions sampled without replacement from softmax(score / tau), then a
// replacement operator per position from the replacement table.
std::optional<EditorProposal> editor_propose(const TokenSequence& seq,
                                             const std::vector<int>& candidates,
                                             const Vocabulary& vocab,
                                             const EditorPolicy& policy, int depth,
                                             Rng& rng);

// Log-probability of an existing script under the policy (the sampled path,
// in edit order).
double editor_log_prob(const TokenSequence& seq, const std::vector<int>& candidates,
                       const Vocabulary& vocab, const EditorPolicy& policy,
                       const EditScript& script);

// Edit count for one proposal, sampled from the depth head over {1..max_depth}.
// Returns (depth, log-probability of that choice).
std::pair<int, double> editor_sample_depth(const EditorPolicy& policy, int max_depth,
                                           Rng& rng);

// REINFORCE update: weights move along (reward - baseline) * grad log pi;
// the baseline then absorbs the reward via exponential moving average.
// sampled_max_depth < 1 means the depth head was not used for this script.
void editor_update(EditorPolicy& policy, const TokenSequence& seq,
                   const std::vector<int>& candidates, const Vocabulary& vocab,
                   const EditScript& script, double reward, double lr,
                   int sampled_max_depth = 0);

enum class ProposePolicy : unsigned char { random_swap, learned_editor };

struct ProposedEdit {
    EditScript script;
    TokenSequence edited_seq;
    Trace edited_trace;
    double log_prob = 0.0;
    int sampled_max_depth = 0;
    int attempts = 0;
};

// Proposes an edit that the exact verifier rejects (v(T')=0), resampling up
// to `budget` times. For the learned editor the edit count is drawn from the
// depth head, capped at max_depth.
std::optional<ProposedEdit> propose_invalidating_edit(
    const TokenSequence& seq, const Trace& trace, const std::vector<int>& candidates,
    ProposePolicy policy, const EditorPolicy* editor, int max_depth, Rng& rng,
    const Vocabulary& vocab, int budget = 8);

struct SemanticVariant {
    TokenSequence seq;
    bool changed = false;
};

// Meaning-preserving rewrite: commutative operand swap (+ and x), step
// template variation, or question-token reordering. The result re-verifies
// valid and re-executes to the same answer.
SemanticVariant semantic_variant(const TokenSequence& seq, Rng& rng,
                                 const Vocabulary& vocab, int context_limit = 256);

}  // namespace csr
