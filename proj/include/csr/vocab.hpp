#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace csr {

enum class Op { add, sub, mul };

constexpr int kNumOps = 3;

char op_symbol(Op op);
Op op_from_symbol(char c);

// All operator alternatives to `op` (the two other symbols).
std::vector<Op> op_alternatives(Op op);

// Closed token set. Every domain concept is exactly one token:
//   [0, V)                 value literals
//   V .. V+2               operators + - x
//   V+3                    '='
//   V+4 / V+5              step separators (template A / template B)
//   V+6                    question/trace boundary
//   V+7                    MASK
//   V+8 .. V+8+V-1         SHORTCUT(answer)
//   then                   step references @0 .. @(max_steps-1)
class Vocabulary {
public:
    Vocabulary(int value_count, int max_steps);

    int value_count() const { return value_count_; }
    int max_steps() const { return max_steps_; }
    int size() const { return ref_base_ + max_steps_; }

    int value_token(int v) const;
    int op_token(Op op) const { return value_count_ + static_cast<int>(op); }
    int eq_token() const { return value_count_ + 3; }
    int sep_a_token() const { return value_count_ + 4; }
    int sep_b_token() const { return value_count_ + 5; }
    int qsep_token() const { return value_count_ + 6; }
    int mask_token() const { return value_count_ + 7; }
    int shortcut_token(int answer) const;
    int ref_token(int step) const;

    bool is_value(int id) const { return id >= 0 && id < value_count_; }
    bool is_op(int id) const {
        return id >= value_count_ && id < value_count_ + kNumOps;
    }
    bool is_shortcut(int id) const {
        return id >= shortcut_base_ && id < shortcut_base_ + value_count_;
    }
    bool is_ref(int id) const {
        return id >= ref_base_ && id < ref_base_ + max_steps_;
    }
    bool is_separator(int id) const {
        return id == sep_a_token() || id == sep_b_token() || id == qsep_token();
    }

    int value_of(int id) const;
    Op op_of(int id) const;
    int shortcut_value_of(int id) const;
    int ref_step_of(int id) const;

    std::string token_text(int id) const;

    nlohmann::json to_json() const;
    static Vocabulary from_json(const nlohmann::json& j);

private:
    int value_count_;
    int max_steps_;
    int shortcut_base_;
    int ref_base_;
};

}  // namespace csr
