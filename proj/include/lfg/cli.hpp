#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lfg/agents.hpp"
#include "lfg/eval.hpp"
#include "lfg/search.hpp"

namespace lfg {

enum class AgentKind { Scripted, Llm };
std::string_view agent_kind_name(AgentKind k);
AgentKind parse_agent_kind(std::string_view s);

enum class EvalMode { Split, KFold };

// Flat `key = value` run configuration. Lines starting with '#' are comments.
struct RunConfig {
    std::filesystem::path dataset;
    std::string label_column;             // by name
    std::optional<std::size_t> label_index;  // or zero-based index
    bool drop_missing = false;
    double train_fraction = 0.55;
    std::uint64_t seed = 42;

    std::size_t agents = 3;
    // One entry per agent, or a single entry applied to all.
    std::vector<AgentKind> agent_kinds{AgentKind::Scripted};
    // Scripted tags, or free strategy text for LLM agents; empty = rotation.
    std::vector<std::string> strategies;

    SearchConfig search;
    ModelSpec model;
    EvalMode eval_mode = EvalMode::Split;
    std::size_t folds = 5;

    LlmSettings llm;
    std::filesystem::path output_dir = "runs";

    AgentKind kind_of(std::size_t agent) const;
    std::string strategy_of(std::size_t agent) const;
};

// Throws ConfigError on unknown keys or malformed values. Relative dataset and
// output paths are resolved against `base_dir`.
RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const RunConfig& config);
// Throws ConfigError (bad ranges) or FileNotFound (missing dataset).
void validate_config(const RunConfig& config);

struct RunArtifacts {
    std::filesystem::path run_dir;
    RunResult result;
};

// Executes a full run and writes config.txt, nodes.jsonl, best_subset.csv and
// summary.json into a fresh directory under config.output_dir.
RunArtifacts cmd_run(const RunConfig& config);
// Table of per-iteration optima, raw and best rows, and the feature-count
// series. Throws IncompleteRun.
std::string cmd_report(const std::filesystem::path& run_dir);
// Throws IncompleteRun or UnknownFeature.
std::string cmd_explain(const std::filesystem::path& run_dir, const std::string& feature);

// Mean subset size of the agents' current nodes after each generation layer.
std::vector<double> feature_count_series(const std::vector<GenerationNode>& nodes);

std::string error_json(std::string_view code, std::string_view message);

// Entry point shared by the executable and the tests. Returns the exit code:
// 0 success, 2 user or config error, 3 runtime error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lfg
