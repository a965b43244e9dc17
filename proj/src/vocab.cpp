#include "csr/vocab.hpp"

#include <stdexcept>

namespace csr {

char op_symbol(Op op) {
    switch (op) {
        case Op::add: return '+';
        case Op::sub: return '-';
        case Op::mul: return 'x';
    }
    throw std::logic_error("op_symbol: bad op");
}

Op op_from_symbol(char c) {
    switch (c) {
        case '+': return Op::add;
        case '-': return Op::sub;
        case 'x': return Op::mul;
        case '*': return Op::mul;
    }
    throw std::invalid_argument(std::string("op_from_symbol: '") + c + "'");
}

std::vector<Op> op_alternatives(Op op) {
    std::vector<Op> out;
    for (int k = 0; k < kNumOps; ++k) {
        if (static_cast<Op>(k) != op) out.push_back(static_cast<Op>(k));
    }
    return out;
}

Vocabulary::Vocabulary(int value_count, int max_steps)
    : value_count_(value_count), max_steps_(max_steps) {
    if (value_count < 2) throw std::invalid_argument("vocabulary needs >= 2 values");
    if (max_steps < 1) throw std::invalid_argument("vocabulary needs >= 1 step");
    shortcut_base_ = value_count_ + 8;
    ref_base_ = shortcut_base_ + value_count_;
}

int Vocabulary::value_token(int v) const {
    if (v < 0 || v >= value_count_) throw std::out_of_range("value_token");
    return v;
}

int Vocabulary::shortcut_token(int answer) const {
    if (answer < 0 || answer >= value_count_) throw std::out_of_range("shortcut_token");
    return shortcut_base_ + answer;
}

int Vocabulary::ref_token(int step) const {
    if (step < 0 || step >= max_steps_) throw std::out_of_range("ref_token");
    return ref_base_ + step;
}

int Vocabulary::value_of(int id) const {
    if (!is_value(id)) throw std::out_of_range("value_of");
    return id;
}

Op Vocabulary::op_of(int id) const {
    if (!is_op(id)) throw std::out_of_range("op_of");
    return static_cast<Op>(id - value_count_);
}

int Vocabulary::shortcut_value_of(int id) const {
    if (!is_shortcut(id)) throw std::out_of_range("shortcut_value_of");
    return id - shortcut_base_;
}

int Vocabulary::ref_step_of(int id) const {
    if (!is_ref(id)) throw std::out_of_range("ref_step_of");
    return id - ref_base_;
}

std::string Vocabulary::token_text(int id) const {
    if (is_value(id)) return std::to_string(id);
    if (is_op(id)) return std::string(1, op_symbol(op_of(id)));
    if (id == eq_token()) return "=";
    if (id == sep_a_token()) return ";";
    if (id == sep_b_token()) return "|";
    if (id == qsep_token()) return "::";
    if (id == mask_token()) return "<mask>";
    if (is_shortcut(id)) return "SHORTCUT(" + std::to_string(shortcut_value_of(id)) + ")";
    if (is_ref(id)) return "@" + std::to_string(ref_step_of(id));
    throw std::out_of_range("token_text: id " + std::to_string(id));
}

nlohmann::json Vocabulary::to_json() const {
    nlohmann::json tokens = nlohmann::json::array();
    for (int id = 0; id < size(); ++id) {
        tokens.push_back(token_text(id));
    }
    return nlohmann::json{{"value_count", value_count_},
                          {"max_steps", max_steps_},
                          {"tokens", tokens}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
    return Vocabulary(j.at("value_count").get<int>(), j.at("max_steps").get<int>());
}

}  // namespace csr
