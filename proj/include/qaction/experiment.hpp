#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "qaction/model.hpp"
#include "qaction/parallel.hpp"

namespace qa {

// A config is one JSON document: "model" plus one section per command.
// Unknown keys anywhere are rejected with InputError before any compute.
nlohmann::json load_config(const std::string& path);
void validate_config(const nlohmann::json& config);

// FNV-1a 64 over the canonical (sorted-key, compact) dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

struct RunContext {
  std::uint64_t seed = 0;
  Execution exec = Execution::Parallel;
};

struct OutputFile {
  std::string name;
  std::string contents;
};

struct CommandResult {
  std::vector<OutputFile> files;
  nlohmann::json summary;
  // Human-readable lines (verify prints one per check).
  std::vector<std::string> report;
  // False when a verify check failed.
  bool passed = true;
};

// "# config_hash=<hash> seed=<seed> command=<name>"
std::string metadata_line(const nlohmann::json& config, const std::string& command, std::uint64_t seed);

CommandResult run_command(const std::string& command, const nlohmann::json& config, const RunContext& context = {});

const std::vector<std::string>& command_names();

}  // namespace qa
