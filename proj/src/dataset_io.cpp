#include "csr/dataset_io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace csr {

namespace {

nlohmann::json operand_json(const Operand& o) {
    return o.is_ref ? nlohmann::json{{"ref", o.value}} : nlohmann::json{{"lit", o.value}};
}

Operand operand_from_json(const nlohmann::json& j) {
    if (j.contains("ref")) return Operand::ref(j.at("ref").get<int>());
    return Operand::lit(j.at("lit").get<int>());
}

}  // namespace

nlohmann::json task_to_json(const ReasoningTask& task) {
    nlohmann::json steps = nlohmann::json::array();
    for (const Step& s : task.trace.steps) {
        steps.push_back(nlohmann::json{{"l", operand_json(s.lhs)},
                                       {"op", std::string(1, op_symbol(s.op))},
                                       {"r", operand_json(s.rhs)},
                                       {"res", s.result}});
    }
    nlohmann::json edges = nlohmann::json::array();
    for (auto [p, c] : task.structure.edges) edges.push_back({p, c});
    return nlohmann::json{
        {"question_tokens", task.question_tokens},
        {"trace_steps", steps},
        {"answer", task.answer},
        {"structure",
         {{"kind", structure_name(task.structure.kind)},
          {"num_steps", task.structure.num_steps},
          {"edges", edges},
          {"answer_step", task.structure.answer_step}}},
        {"causal_op_positions", task.causal_op_positions},
        {"causal_steps", task.causal_steps},
        {"shortcut", task.shortcut_present},
    };
}

ReasoningTask task_from_json(const nlohmann::json& j) {
    ReasoningTask task;
    task.question_tokens = j.at("question_tokens").get<std::vector<int>>();
    for (const auto& sj : j.at("trace_steps")) {
        Step s;
        s.lhs = operand_from_json(sj.at("l"));
        s.op = op_from_symbol(sj.at("op").get<std::string>().at(0));
        s.rhs = operand_from_json(sj.at("r"));
        s.result = sj.at("res").get<int>();
        task.trace.steps.push_back(s);
    }
    task.answer = j.at("answer").get<int>();
    const auto& st = j.at("structure");
    task.structure.kind = structure_from_name(st.at("kind").get<std::string>());
    task.structure.num_steps = st.at("num_steps").get<int>();
    for (const auto& e : st.at("edges"))
        task.structure.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    task.structure.answer_step = st.at("answer_step").get<int>();
    task.causal_op_positions = j.at("causal_op_positions").get<std::vector<int>>();
    task.causal_steps = j.at("causal_steps").get<std::vector<int>>();
    task.shortcut_present = j.at("shortcut").get<bool>();
    return task;
}

void write_dataset_jsonl(const std::string& path, const std::vector<ReasoningTask>& tasks) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (const ReasoningTask& t : tasks) out << task_to_json(t).dump() << "\n";
}

std::vector<ReasoningTask> read_dataset_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset: " + path);
    std::vector<ReasoningTask> tasks;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        tasks.push_back(task_from_json(nlohmann::json::parse(line)));
    }
    return tasks;
}

void write_json_file(const std::string& path, const nlohmann::json& j, int indent) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << j.dump(indent) << "\n";
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    return nlohmann::json::parse(in);
}

std::uint64_t file_content_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string content = ss.str();
    return fnv1a(content.data(), content.size());
}

}  // namespace csr
