#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lfg/agents.hpp"
#include "lfg/eval.hpp"
#include "lfg/expr.hpp"

namespace lfg {

struct SearchConfig {
    std::size_t iterations = 10;  // generation-layer cap T
    std::size_t mcts_rounds = 5;
    std::size_t mcts_select = 2;  // nodes expanded per round
    double exploration = 1.4142;  // UCB constant C
    std::size_t patience = 3;     // 0 disables early stopping
    std::size_t k_max = 3;
    std::size_t max_depth = kDefaultMaxDepth;
    bool drops_enabled = true;
    // Layer-1 agents start from disjoint slices of the original columns
    // instead of the full set.
    bool partition_features = false;
    bool parallel = true;
    Metric metric = Metric::Accuracy;
};

enum class NodePhase { Root, Generation, Mcts };
std::string_view phase_name(NodePhase p);
NodePhase parse_phase(std::string_view s);

struct GenerationNode {
    std::size_t id = 0;
    std::optional<std::size_t> parent;
    std::size_t layer = 0;
    NodePhase phase = NodePhase::Root;
    std::size_t round = 0;  // generation layer t, or MCTS round r
    std::optional<std::size_t> agent;
    std::string strategy;
    AgentProposal proposal;
    FeatureSubset subset;
    std::vector<std::string> added;
    std::vector<std::string> excluded;
    EvalReport theta;
    double delta = 0.0;
    double w = 0.0;
    std::size_t visits = 0;
    std::vector<std::size_t> children;

    bool is_leaf() const noexcept { return children.empty(); }
};

// Layered search tree. Node values follow the mean-of-children-deltas rule
// and are recomputed whenever a child is attached; visit counts are bumped
// along the whole ancestor chain.
class SearchTree {
public:
    SearchTree(double exploration, std::size_t max_layers, Metric metric);

    std::size_t add_root(FeatureSubset subset, SubsetEvaluation evaluation);
    // Attaches a child, sets its delta against the parent and refreshes the
    // parent's value. Returns the new node id.
    std::size_t attach(std::size_t parent, GenerationNode node);
    // Records a layer index even when it received no nodes.
    void touch_layer(std::size_t layer);
    // Selection bookkeeping: +1 visit for every node on root..id.
    void visit_path(std::size_t id);

    const GenerationNode& root() const { return nodes_.at(0); }
    const GenerationNode& node(std::size_t id) const { return nodes_.at(id); }
    const std::vector<GenerationNode>& nodes() const noexcept { return nodes_; }
    std::size_t size() const noexcept { return nodes_.size(); }
    bool empty() const noexcept { return nodes_.empty(); }
    // layers()[t] lists the node ids of layer t (layer 0 holds the root).
    const std::vector<std::vector<std::size_t>>& layers() const noexcept { return layers_; }
    std::vector<std::size_t> path_to(std::size_t id) const;

    double exploration() const noexcept { return exploration_; }
    std::size_t max_layers() const noexcept { return max_layers_; }
    Metric metric() const noexcept { return metric_; }
    double score(std::size_t id) const { return nodes_.at(id).theta.primary(metric_); }

    // Largest |w_i - mean(children deltas)| over internal nodes.
    double value_consistency_error() const;

    // Rebuilds a tree from logged nodes (ids must be dense and in order).
    static SearchTree from_nodes(std::vector<GenerationNode> nodes, double exploration, std::size_t max_layers,
                                 Metric metric);

private:
    void refresh_value(std::size_t id);

    double exploration_;
    std::size_t max_layers_;
    Metric metric_;
    std::vector<GenerationNode> nodes_;
    std::vector<std::vector<std::size_t>> layers_;
};

// w + C * sqrt(2 ln(parent_visits) / visits).
double ucb_score(double w, double visits, double parent_visits, double exploration);
// Throws RootHasNoUcb for the root.
double ucb(const GenerationNode& node, const SearchTree& tree);

// Top-m expandable nodes (non-root, layer below the cap) by UCB; ties go to
// the higher score, then the lower id. Throws NothingToSelect.
std::vector<std::size_t> select_nodes(const SearchTree& tree, std::size_t m);

// Operations not yet used anywhere in the node's subset; all operations when
// every one has been used.
std::vector<std::string> novel_operations(const FeatureSubset& subset);

struct IterationOptimum {
    NodePhase phase = NodePhase::Generation;
    std::size_t round = 0;
    std::size_t node = 0;
};

struct RunResult {
    std::size_t best_node = 0;
    FeatureSubset best_subset;
    EvalReport best_report;
    EvalReport baseline;
    // Leaf with the highest value w.
    std::size_t mcts_choice = 0;
    std::vector<IterationOptimum> optima;
    std::vector<GenerationNode> nodes;
    std::size_t generation_layers = 0;
    std::string stop_reason;

    double improvement(Metric m) const { return best_report.primary(m) - baseline.primary(m); }
};

// Best subset by score over the per-iteration optima and the root; the root
// wins ties, so the result never scores below the raw baseline.
RunResult best_subset(const SearchTree& tree);

class SearchEngine {
public:
    SearchEngine(SearchConfig config, std::shared_ptr<const Dataset> data, std::shared_ptr<const SubsetEvaluator> evaluator,
                 std::vector<std::unique_ptr<Agent>> agents, std::vector<std::size_t> context_rows, TaskInfo task = {});

    // Evaluates the original features as the root (visits 1).
    const SearchTree& init_root();
    // One generation layer; throws AllAgentsEmpty after recording an empty layer.
    std::vector<std::size_t> run_layer(std::size_t t);
    // Children of `node` built from operations new to its lineage; returns
    // the new ids (possibly none).
    std::vector<std::size_t> expand(std::size_t node, std::size_t round);
    // Full pipeline: root, generation layers, MCTS rounds, best subset.
    RunResult run();

    const SearchTree& tree() const { return *tree_; }
    const SearchConfig& config() const noexcept { return config_; }

private:
    struct Outcome {
        std::size_t agent = 0;
        AgentProposal proposal;
        std::optional<FeatureSubset> subset;
        std::optional<SubsetEvaluation> evaluation;
    };

    AgentContext make_context(std::size_t agent, std::size_t parent, std::size_t iteration,
                              std::vector<std::string> allowed_ops, std::optional<FeatureSubset> override_subset);
    std::vector<Outcome> propose_and_evaluate(const std::vector<AgentContext>& contexts,
                                              const std::vector<std::size_t>& parents);
    std::shared_ptr<const FeatureView> view_for(const FeatureSubset& subset);

    SearchConfig config_;
    std::shared_ptr<const Dataset> data_;
    std::shared_ptr<const SubsetEvaluator> evaluator_;
    std::vector<std::unique_ptr<Agent>> agents_;
    std::vector<std::size_t> context_rows_;
    TaskInfo task_;
    std::optional<SearchTree> tree_;
    std::vector<std::size_t> heads_;
    EvalCache view_cache_;
    std::set<std::string> original_columns_;
};

// ---------------------------------------------------------------------------
// JSON-lines node log: a header record, then one record per node.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kNodeLogSchema = "lfg-node-log";
inline constexpr int kNodeLogVersion = 1;

struct NodeLogHeader {
    std::string metric;
    std::string model;
    std::string protocol;
    double exploration = 0.0;
    std::size_t max_layers = 0;
};

std::string node_log_jsonl(const SearchTree& tree, const NodeLogHeader& header);
void write_node_log(const std::filesystem::path& path, const SearchTree& tree, const NodeLogHeader& header);

struct NodeLog {
    NodeLogHeader header;
    std::vector<GenerationNode> nodes;
};

// Throws IncompleteRun on a missing or malformed log.
NodeLog read_node_log(const std::filesystem::path& path);

}  // namespace lfg
