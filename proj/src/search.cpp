#include "lfg/search.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>

#include "lfg/error.hpp"

namespace lfg {

std::string_view phase_name(NodePhase p) {
    switch (p) {
        case NodePhase::Root: return "root";
        case NodePhase::Generation: return "generation";
        case NodePhase::Mcts: return "mcts";
    }
    return "root";
}

NodePhase parse_phase(std::string_view s) {
    if (s == "root") return NodePhase::Root;
    if (s == "generation") return NodePhase::Generation;
    if (s == "mcts") return NodePhase::Mcts;
    throw Error(ErrorCode::IncompleteRun, "unknown node phase '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// SearchTree
// ---------------------------------------------------------------------------

SearchTree::SearchTree(double exploration, std::size_t max_layers, Metric metric)
    : exploration_(exploration), max_layers_(max_layers), metric_(metric) {}

std::size_t SearchTree::add_root(FeatureSubset subset, SubsetEvaluation evaluation) {
    if (!nodes_.empty()) throw Error(ErrorCode::PreconditionViolation, "tree already has a root");
    GenerationNode root;
    root.id = 0;
    root.phase = NodePhase::Root;
    subset.set_origin(0);
    root.subset = std::move(subset);
    root.theta = std::move(evaluation.report);
    root.excluded = std::move(evaluation.excluded);
    root.visits = 1;
    nodes_.push_back(std::move(root));
    layers_.assign(1, {0});
    return 0;
}

void SearchTree::touch_layer(std::size_t layer) {
    if (layers_.size() <= layer) layers_.resize(layer + 1);
}

std::size_t SearchTree::attach(std::size_t parent, GenerationNode node) {
    if (parent >= nodes_.size()) throw Error(ErrorCode::PreconditionViolation, "unknown parent node");
    if (node.layer <= nodes_[parent].layer) {
        throw Error(ErrorCode::PreconditionViolation, "child layer must come after its parent's");
    }
    const std::size_t id = nodes_.size();
    node.id = id;
    node.parent = parent;
    node.subset.set_origin(static_cast<std::int64_t>(id));
    node.delta = node.theta.primary(metric_) - nodes_[parent].theta.primary(metric_);
    node.w = node.delta;
    node.visits = 1;
    node.children.clear();
    touch_layer(node.layer);
    layers_[node.layer].push_back(id);
    nodes_.push_back(std::move(node));

    nodes_[parent].children.push_back(id);
    refresh_value(parent);
    for (std::optional<std::size_t> a = parent; a; a = nodes_[*a].parent) ++nodes_[*a].visits;
    return id;
}

void SearchTree::refresh_value(std::size_t id) {
    auto& n = nodes_[id];
    if (n.children.empty()) {
        n.w = n.delta;
        return;
    }
    double sum = 0.0;
    for (auto c : n.children) sum += nodes_[c].delta;
    n.w = sum / static_cast<double>(n.children.size());
}

void SearchTree::visit_path(std::size_t id) {
    for (std::optional<std::size_t> a = id; a; a = nodes_.at(*a).parent) ++nodes_[*a].visits;
}

std::vector<std::size_t> SearchTree::path_to(std::size_t id) const {
    std::vector<std::size_t> path;
    for (std::optional<std::size_t> a = id; a; a = nodes_.at(*a).parent) path.push_back(*a);
    std::reverse(path.begin(), path.end());
    return path;
}

double SearchTree::value_consistency_error() const {
    double worst = 0.0;
    for (const auto& n : nodes_) {
        if (n.children.empty()) continue;
        double sum = 0.0;
        for (auto c : n.children) sum += nodes_[c].delta;
        worst = std::max(worst, std::fabs(n.w - sum / static_cast<double>(n.children.size())));
    }
    return worst;
}

SearchTree SearchTree::from_nodes(std::vector<GenerationNode> nodes, double exploration, std::size_t max_layers,
                                  Metric metric) {
    SearchTree tree(exploration, max_layers, metric);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].id != i) throw Error(ErrorCode::IncompleteRun, "node ids are not dense");
        nodes[i].children.clear();
    }
    for (const auto& n : nodes) {
        if (n.parent) {
            if (*n.parent >= n.id) throw Error(ErrorCode::IncompleteRun, "parent logged after child");
            nodes[*n.parent].children.push_back(n.id);
        }
        tree.touch_layer(n.layer);
        tree.layers_[n.layer].push_back(n.id);
    }
    tree.nodes_ = std::move(nodes);
    return tree;
}

// ---------------------------------------------------------------------------
// Selection
// ---------------------------------------------------------------------------

double ucb_score(double w, double visits, double parent_visits, double exploration) {
    return w + exploration * std::sqrt(2.0 * std::log(parent_visits) / visits);
}

double ucb(const GenerationNode& node, const SearchTree& tree) {
    if (!node.parent) throw Error(ErrorCode::RootHasNoUcb, "the root node has no UCB score");
    const auto& parent = tree.node(*node.parent);
    if (node.visits < 1 || parent.visits < 1) {
        throw Error(ErrorCode::PreconditionViolation, "UCB needs at least one visit on node and parent");
    }
    return ucb_score(node.w, static_cast<double>(node.visits), static_cast<double>(parent.visits),
                     tree.exploration());
}

std::vector<std::size_t> select_nodes(const SearchTree& tree, std::size_t m) {
    struct Scored {
        double ucb;
        double theta;
        std::size_t id;
    };
    std::vector<Scored> candidates;
    for (const auto& n : tree.nodes()) {
        if (!n.parent || n.layer >= tree.max_layers()) continue;
        candidates.push_back({ucb(n, tree), tree.score(n.id), n.id});
    }
    if (candidates.empty()) throw Error(ErrorCode::NothingToSelect, "no expandable node in the tree");
    std::sort(candidates.begin(), candidates.end(), [](const Scored& a, const Scored& b) {
        if (a.ucb != b.ucb) return a.ucb > b.ucb;
        if (a.theta != b.theta) return a.theta > b.theta;
        return a.id < b.id;
    });
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < candidates.size() && i < m; ++i) out.push_back(candidates[i].id);
    return out;
}

std::vector<std::string> novel_operations(const FeatureSubset& subset) {
    std::set<OpId> used;
    for (const auto& e : subset.exprs()) used.merge(e.operations_used());
    std::vector<std::string> out;
    for (const auto& op : operation_registry()) {
        if (!used.count(op.id)) out.emplace_back(op.name);
    }
    if (out.empty()) {
        for (const auto& op : operation_registry()) out.emplace_back(op.name);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Result extraction
// ---------------------------------------------------------------------------

RunResult best_subset(const SearchTree& tree) {
    if (tree.empty()) throw Error(ErrorCode::PreconditionViolation, "tree has no root");
    RunResult result;

    // Group nodes into iterations: one per generation layer and MCTS round,
    // in order of first appearance.
    std::vector<IterationOptimum> optima;
    for (const auto& n : tree.nodes()) {
        if (n.phase == NodePhase::Root) continue;
        auto it = std::find_if(optima.begin(), optima.end(), [&](const IterationOptimum& o) {
            return o.phase == n.phase && o.round == n.round;
        });
        if (it == optima.end()) {
            optima.push_back({n.phase, n.round, n.id});
        } else if (tree.score(n.id) > tree.score(it->node)) {
            it->node = n.id;
        }
    }

    std::size_t best = 0;
    for (const auto& o : optima) {
        if (tree.score(o.node) > tree.score(best)) best = o.node;
    }

    std::optional<std::size_t> choice;
    for (const auto& n : tree.nodes()) {
        if (!n.is_leaf() || !n.parent) continue;
        if (!choice || n.w > tree.node(*choice).w) choice = n.id;
    }

    result.best_node = best;
    result.best_subset = tree.node(best).subset;
    result.best_report = tree.node(best).theta;
    result.baseline = tree.root().theta;
    result.mcts_choice = choice.value_or(0);
    result.optima = std::move(optima);
    result.nodes = tree.nodes();
    return result;
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

SearchEngine::SearchEngine(SearchConfig config, std::shared_ptr<const Dataset> data,
                           std::shared_ptr<const SubsetEvaluator> evaluator, std::vector<std::unique_ptr<Agent>> agents,
                           std::vector<std::size_t> context_rows, TaskInfo task)
    : config_(config),
      data_(std::move(data)),
      evaluator_(std::move(evaluator)),
      agents_(std::move(agents)),
      context_rows_(std::move(context_rows)),
      task_(std::move(task)) {
    if (!data_ || !evaluator_) throw Error(ErrorCode::PreconditionViolation, "engine needs data and an evaluator");
    for (const auto& name : data_->column_names()) original_columns_.insert(name);
    if (task_.n_samples == 0) task_.n_samples = data_->n_samples();
    if (task_.n_classes == 0) task_.n_classes = data_->n_classes();
    task_.metric = config_.metric;
}

const SearchTree& SearchEngine::init_root() {
    tree_.emplace(config_.exploration, config_.iterations, config_.metric);
    auto subset = FeatureSubset::originals(*data_);
    auto evaluation = evaluator_->evaluate(subset);
    tree_->add_root(std::move(subset), std::move(evaluation));
    heads_.assign(agents_.size(), 0);
    return *tree_;
}

std::shared_ptr<const FeatureView> SearchEngine::view_for(const FeatureSubset& subset) {
    return std::make_shared<const FeatureView>(make_feature_view(subset, *data_, context_rows_, &view_cache_));
}

AgentContext SearchEngine::make_context(std::size_t agent, std::size_t parent, std::size_t iteration,
                                        std::vector<std::string> allowed_ops,
                                        std::optional<FeatureSubset> override_subset) {
    const SearchTree& tree = *tree_;
    const GenerationNode& p = tree.node(parent);

    AgentContext ctx;
    ctx.agent_id = agent;
    ctx.iteration = iteration;
    ctx.subset = override_subset ? std::move(*override_subset) : p.subset;
    ctx.view = view_for(ctx.subset);
    ctx.summaries = summarize(*ctx.view, original_columns_);
    ctx.baseline = tree.root().theta;
    for (auto id : tree.path_to(parent)) {
        const auto& n = tree.node(id);
        if (!n.parent) continue;
        ctx.feedback.push_back({n.layer, n.theta, n.delta});
        for (const auto& action : n.proposal.actions) {
            if (const auto* drop = std::get_if<DropAction>(&action)) ctx.avoid.push_back(drop->feature);
        }
    }
    for (auto id : tree.layers().at(p.layer)) {
        const auto& peer = tree.node(id);
        if (peer.agent && *peer.agent != agent && !peer.proposal.rationale.empty()) {
            ctx.peer_rationales.push_back({*peer.agent, peer.proposal.rationale});
        }
    }
    ctx.last_added = p.added;
    for (auto c : p.children) {
        for (const auto& name : tree.node(c).added) ctx.avoid.push_back(name);
    }
    ctx.allowed_ops = std::move(allowed_ops);
    ctx.original_columns = original_columns_;
    ctx.k_max = config_.k_max;
    ctx.max_depth = config_.max_depth;
    ctx.drops_enabled = config_.drops_enabled;
    ctx.task = task_;
    return ctx;
}

std::vector<SearchEngine::Outcome> SearchEngine::propose_and_evaluate(const std::vector<AgentContext>& contexts,
                                                                      const std::vector<std::size_t>& parents) {
    auto work = [&](std::size_t i) {
        Outcome out;
        out.agent = contexts[i].agent_id;
        try {
            out.proposal = agents_[out.agent]->propose(contexts[i]);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::AgentUnavailable) throw;
            out.proposal = AgentProposal{{}, std::string("agent unavailable: ") + e.what()};
        }
        if (out.proposal.actions.empty()) return out;
        FeatureSubset child = apply_proposal(contexts[i].subset, out.proposal);
        const auto& parent_subset = tree_->node(parents[i]).subset;
        if (child.names() == parent_subset.names()) return out;
        for (auto c : tree_->node(parents[i]).children) {
            if (tree_->node(c).subset.names() == child.names()) return out;
        }
        out.evaluation = evaluator_->evaluate(child);
        out.subset = std::move(child);
        return out;
    };

    std::vector<Outcome> outcomes(contexts.size());
    if (config_.parallel && contexts.size() > 1) {
        std::vector<std::future<Outcome>> futures;
        for (std::size_t i = 0; i < contexts.size(); ++i) futures.push_back(std::async(std::launch::async, work, i));
        for (std::size_t i = 0; i < futures.size(); ++i) outcomes[i] = futures[i].get();
    } else {
        for (std::size_t i = 0; i < contexts.size(); ++i) outcomes[i] = work(i);
    }
    return outcomes;
}

namespace {

std::vector<std::string> all_operation_names() {
    std::vector<std::string> out;
    for (const auto& op : operation_registry()) out.emplace_back(op.name);
    return out;
}

std::vector<std::string> added_features(const FeatureSubset& parent, const FeatureSubset& child) {
    std::vector<std::string> out;
    for (const auto& name : child.names()) {
        if (!parent.contains(name)) out.push_back(name);
    }
    return out;
}

}  // namespace

std::vector<std::size_t> SearchEngine::run_layer(std::size_t t) {
    if (!tree_) throw Error(ErrorCode::PreconditionViolation, "init_root must run first");
    if (t == 0 || t > config_.iterations) {
        throw Error(ErrorCode::PreconditionViolation, "layer " + std::to_string(t) + " outside 1.." +
                                                          std::to_string(config_.iterations));
    }

    std::vector<AgentContext> contexts;
    std::vector<std::size_t> parents;
    for (std::size_t a = 0; a < agents_.size(); ++a) {
        std::optional<FeatureSubset> slice;
        if (config_.partition_features && heads_[a] == 0 && agents_.size() > 1) {
            std::vector<FeatureExpr> cols;
            const auto& root = tree_->root().subset.exprs();
            for (std::size_t i = a; i < root.size(); i += agents_.size()) cols.push_back(root[i]);
            if (!cols.empty()) slice = FeatureSubset(std::move(cols));
        }
        contexts.push_back(make_context(a, heads_[a], t, all_operation_names(), std::move(slice)));
        parents.push_back(heads_[a]);
    }

    auto outcomes = propose_and_evaluate(contexts, parents);

    tree_->touch_layer(t);
    std::vector<std::size_t> created;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        auto& o = outcomes[i];
        if (!o.subset) continue;
        GenerationNode node;
        node.layer = tree_->node(parents[i]).layer + 1;
        node.layer = std::max(node.layer, t);
        node.phase = NodePhase::Generation;
        node.round = t;
        node.agent = o.agent;
        node.strategy = agents_[o.agent]->strategy();
        node.added = added_features(tree_->node(parents[i]).subset, *o.subset);
        node.proposal = std::move(o.proposal);
        node.subset = std::move(*o.subset);
        node.theta = std::move(o.evaluation->report);
        node.excluded = std::move(o.evaluation->excluded);
        const std::size_t id = tree_->attach(parents[i], std::move(node));
        heads_[o.agent] = id;
        created.push_back(id);
    }
    if (created.empty()) {
        throw Error(ErrorCode::AllAgentsEmpty, "every agent returned an empty proposal in layer " + std::to_string(t));
    }
    return created;
}

std::vector<std::size_t> SearchEngine::expand(std::size_t node_id, std::size_t round) {
    if (!tree_) throw Error(ErrorCode::PreconditionViolation, "init_root must run first");
    const auto allowed = novel_operations(tree_->node(node_id).subset);

    std::vector<AgentContext> contexts;
    std::vector<std::size_t> parents;
    for (std::size_t a = 0; a < agents_.size(); ++a) {
        contexts.push_back(make_context(a, node_id, tree_->node(node_id).layer + 1, allowed, std::nullopt));
        parents.push_back(node_id);
    }
    auto outcomes = propose_and_evaluate(contexts, parents);

    std::vector<std::size_t> created;
    for (auto& o : outcomes) {
        if (!o.subset) continue;
        // Two agents may converge on the same subset within one round.
        bool duplicate = false;
        for (auto c : tree_->node(node_id).children) {
            if (tree_->node(c).subset.names() == o.subset->names()) duplicate = true;
        }
        if (duplicate) continue;
        GenerationNode node;
        node.layer = tree_->node(node_id).layer + 1;
        node.phase = NodePhase::Mcts;
        node.round = round;
        node.agent = o.agent;
        node.strategy = agents_[o.agent]->strategy();
        node.added = added_features(tree_->node(node_id).subset, *o.subset);
        node.proposal = std::move(o.proposal);
        node.subset = std::move(*o.subset);
        node.theta = std::move(o.evaluation->report);
        node.excluded = std::move(o.evaluation->excluded);
        created.push_back(tree_->attach(node_id, std::move(node)));
    }
    return created;
}

RunResult SearchEngine::run() {
    init_root();
    std::string stop_reason = "iteration cap reached";
    std::size_t layers_run = 0;
    double best = tree_->score(0);
    std::size_t flat = 0;

    for (std::size_t t = 1; t <= config_.iterations; ++t) {
        std::vector<std::size_t> created;
        try {
            created = run_layer(t);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::AllAgentsEmpty) throw;
            stop_reason = "all agents empty at layer " + std::to_string(t);
            break;
        }
        layers_run = t;
        double layer_best = tree_->score(created.front());
        for (auto id : created) layer_best = std::max(layer_best, tree_->score(id));
        if (layer_best > best) {
            best = layer_best;
            flat = 0;
        } else if (++flat >= config_.patience && config_.patience > 0 && t < config_.iterations) {
            stop_reason = "patience exhausted after layer " + std::to_string(t);
            break;
        }
    }

    for (std::size_t r = 1; r <= config_.mcts_rounds; ++r) {
        std::vector<std::size_t> selected;
        try {
            selected = select_nodes(*tree_, config_.mcts_select);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NothingToSelect) throw;
            break;
        }
        for (auto id : selected) tree_->visit_path(id);
        for (auto id : selected) expand(id, r);
    }

    RunResult result = best_subset(*tree_);
    result.generation_layers = layers_run;
    result.stop_reason = stop_reason;
    return result;
}

}  // namespace lfg
