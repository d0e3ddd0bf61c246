#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "lfg/agents.hpp"
#include "lfg/data.hpp"
#include "lfg/eval.hpp"
#include "lfg/rng.hpp"
#include "lfg/search.hpp"

namespace testkit {

inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Box-Muller on our own uniform draws; std::normal_distribution differs
// between standard libraries.
inline double normal(std::mt19937_64& rng) {
    double u = uniform01(rng);
    while (u <= 0.0) u = uniform01(rng);
    const double v = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u)) * std::cos(6.283185307179586 * v);
}

inline std::string col(std::size_t i) { return "f" + std::to_string(i + 1); }

// label = [f1 * f2 > 0], flipped with probability `noise`; f3..f6 are noise.
inline lfg::Dataset planted_interaction(std::size_t n, std::uint64_t seed, double noise = 0.1,
                                        std::size_t distractors = 4) {
    std::mt19937_64 rng(seed);
    std::vector<lfg::Column> cols(2 + distractors);
    for (std::size_t j = 0; j < cols.size(); ++j) cols[j].name = col(j);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& c : cols) c.values.push_back(normal(rng));
        int y = cols[0].values[i] * cols[1].values[i] > 0.0 ? 1 : 0;
        if (uniform01(rng) < noise) y = 1 - y;
        labels[i] = y;
    }
    return lfg::Dataset(std::move(cols), std::move(labels), {"neg", "pos"});
}

// Three classes separated partly by a linear and partly by a squared term,
// on positive-valued columns so that every unary operation has some chance.
inline lfg::Dataset synthetic_multiclass(std::size_t n, std::uint64_t seed, std::size_t features = 5) {
    std::mt19937_64 rng(seed);
    std::vector<lfg::Column> cols(features);
    for (std::size_t j = 0; j < features; ++j) cols[j].name = col(j);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& c : cols) c.values.push_back(1.0 + 2.0 * uniform01(rng));
        const double a = cols[0].values[i] * cols[1].values[i];
        const double b = cols[2].values[i] * cols[2].values[i];
        const double s = a - b + 0.6 * normal(rng);
        labels[i] = s < -1.2 ? 0 : (s < 1.2 ? 1 : 2);
    }
    return lfg::Dataset(std::move(cols), std::move(labels), {"c0", "c1", "c2"});
}

struct ScriptedRun {
    lfg::RunResult result;
    std::string log;
    std::vector<lfg::GenerationNode> nodes;
};

inline ScriptedRun run_scripted(std::shared_ptr<const lfg::Dataset> data, const lfg::SearchConfig& config,
                                const std::vector<lfg::AgentStrategy>& strategies, std::uint64_t seed,
                                lfg::ModelSpec model = {}, double train_fraction = 0.55) {
    auto s = lfg::split(*data, train_fraction, seed);
    auto rows = s.train_indices;
    auto evaluator = std::make_shared<const lfg::DownstreamEvaluator>(data, s, model);
    std::vector<std::unique_ptr<lfg::Agent>> agents;
    for (std::size_t a = 0; a < strategies.size(); ++a) {
        agents.push_back(std::make_unique<lfg::ScriptedAgent>(strategies[a], lfg::mix_seed(seed, a + 1)));
    }
    lfg::TaskInfo task;
    task.model_tag = model.tag();
    lfg::SearchEngine engine(config, data, evaluator, std::move(agents), rows, task);
    ScriptedRun out;
    out.result = engine.run();
    lfg::NodeLogHeader header{std::string(lfg::metric_name(config.metric)), model.tag(), "split", config.exploration,
                              config.iterations};
    out.log = lfg::node_log_jsonl(engine.tree(), header);
    out.nodes = engine.tree().nodes();
    return out;
}

inline std::vector<lfg::AgentStrategy> default_team(std::size_t n = 3) {
    std::vector<lfg::AgentStrategy> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(lfg::default_strategy(i));
    return out;
}

}  // namespace testkit
