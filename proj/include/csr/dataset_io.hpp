#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "csr/taskgen.hpp"

namespace csr {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

nlohmann::json task_to_json(const ReasoningTask& task);
ReasoningTask task_from_json(const nlohmann::json& j);

// JSON-lines, one task per line; manifest travels as a sidecar JSON file.
void write_dataset_jsonl(const std::string& path, const std::vector<ReasoningTask>& tasks);
std::vector<ReasoningTask> read_dataset_jsonl(const std::string& path);

void write_json_file(const std::string& path, const nlohmann::json& j, int indent = 2);
nlohmann::json read_json_file(const std::string& path);

std::uint64_t file_content_hash(const std::string& path);

}  // namespace csr
