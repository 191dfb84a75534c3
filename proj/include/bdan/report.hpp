#pragma once

#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "bdan/data_io.hpp"
#include "bdan/train.hpp"

namespace bdan {

using json = nlohmann::json;

/// Bad configuration value or unknown key; `key()` names it.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string key, const std::string& why)
        : std::invalid_argument(key + ": " + why), key_(std::move(key)) {}
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

/// Applies "dotted.key=value" overrides in order; values parse as JSON when
/// possible and fall back to strings.
json apply_overrides(json cfg, const std::vector<std::string>& overrides);

/// Rejects keys outside `known`.
void check_known_keys(const json& cfg, const std::set<std::string>& known);

TrainConfig train_config_from_json(const json& j);
json to_json(const TrainConfig& cfg);
const std::set<std::string>& train_config_keys();

DriftConfig drift_config_from_json(const json& j);
const std::set<std::string>& drift_config_keys();

json to_json(const LossReport& r);
json to_json(const DriftRecord& r);
json to_json(const TaskResult& r, bool include_steps = false);
TaskResult task_result_from_json(const json& j);

/// Rows = STS tasks, columns = folds then mean. Fixed 6-decimal formatting.
std::string results_csv(const std::vector<TaskResult>& results);

/// One JSON object per line, one line per training step.
std::string loss_reports_jsonl(const TaskResult& r);

/// CRC-32 of a file's bytes as 8 lowercase hex digits.
std::string file_checksum(const std::filesystem::path& path);

/// Writes manifest.json listing `files` (relative to `dir`) with checksums.
void write_manifest(const std::filesystem::path& dir, const std::vector<std::string>& files);

void write_text(const std::filesystem::path& path, const std::string& text);
json read_json(const std::filesystem::path& path);

}  // namespace bdan
