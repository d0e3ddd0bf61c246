#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>

#include <unistd.h>

#include "lfg/error.hpp"
#include "lfg/search.hpp"
#include "support.hpp"

using namespace lfg;

namespace {

SubsetEvaluation eval_with(double acc) {
    SubsetEvaluation e;
    e.report.accuracy = acc;
    e.report.f1 = acc / 2;
    return e;
}

FeatureSubset base_subset(std::size_t n) {
    std::vector<FeatureExpr> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(FeatureExpr::base(testkit::col(i)));
    return FeatureSubset(std::move(v));
}

GenerationNode child(std::size_t layer, double acc, FeatureSubset s = base_subset(1)) {
    GenerationNode n;
    n.layer = layer;
    n.phase = NodePhase::Generation;
    n.round = layer;
    n.theta.accuracy = acc;
    n.subset = std::move(s);
    return n;
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::IoError;
}

// Accuracy = base + bonus per generated feature whose name contains a key.
class TableEvaluator final : public SubsetEvaluator {
public:
    double base = 0.5;
    std::map<std::string, double> bonus;
    SubsetEvaluation evaluate(const FeatureSubset& subset) const override {
        double acc = base;
        for (const auto& n : subset.names()) {
            for (const auto& [k, b] : bonus) {
                if (n.find(k) != std::string::npos) acc += b;
            }
        }
        return eval_with(acc);
    }
};

class FnAgent final : public Agent {
public:
    using Fn = std::function<AgentProposal(const AgentContext&)>;
    explicit FnAgent(Fn fn, std::string tag = "fn") : fn_(std::move(fn)), tag_(std::move(tag)) {}
    AgentProposal propose(const AgentContext& ctx) override { return fn_(ctx); }
    std::string strategy() const override { return tag_; }

private:
    Fn fn_;
    std::string tag_;
};

// Applies the first allowed unary op to the newest feature not yet wrapped.
AgentProposal grow_one(const AgentContext& ctx) {
    AgentProposal p;
    p.rationale = "grow";
    for (const auto& op : ctx.allowed_ops) {
        if (lookup(op).arity != 1) continue;
        for (auto it = ctx.subset.exprs().rbegin(); it != ctx.subset.exprs().rend(); ++it) {
            if (it->depth() >= ctx.max_depth) continue;
            const auto name = op + "(" + it->canonical_name() + ")";
            if (ctx.subset.contains(name)) continue;
            if (std::find(ctx.avoid.begin(), ctx.avoid.end(), name) != ctx.avoid.end()) continue;
            p.actions.push_back(GenerateAction{op, {it->canonical_name()}});
            return p;
        }
    }
    return p;
}

struct Rig {
    std::shared_ptr<const Dataset> data;
    std::shared_ptr<TableEvaluator> evaluator = std::make_shared<TableEvaluator>();
    std::vector<std::unique_ptr<Agent>> agents;
    SearchConfig config;

    Rig() : data(std::make_shared<const Dataset>(testkit::synthetic_multiclass(40, 1, 3))) {
        config.parallel = false;
    }
    SearchEngine engine() {
        std::vector<std::size_t> rows(data->n_samples());
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
        return SearchEngine(config, data, evaluator, std::move(agents), rows);
    }
};

std::string temp_path(const std::string& stem) {
    static int counter = 0;
    return (std::filesystem::temp_directory_path() /
            ("lfg_search_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + stem))
        .string();
}

}  // namespace

TEST_CASE("ucb examples") {
    // 0.5 + sqrt(2 ln 8 / 2) = 0.5 + sqrt(2.0794415) = 1.9420274
    CHECK(std::fabs(ucb_score(0.5, 2, 8, 1) - 1.9420274) < 1e-6);
    CHECK(ucb_score(0.3, 4, 9, 0) == 0.3);
    CHECK(ucb_score(0.3, 1, 1, 2.5) == 0.3);
    // equal w, same parent: fewer visits scores higher
    CHECK(ucb_score(0.1, 1, 10, 1.4142) > ucb_score(0.1, 5, 10, 1.4142));
}

TEST_CASE("ucb matches an independent formula") {
    std::mt19937_64 rng(55);
    for (int i = 0; i < 1000; ++i) {
        const double w = testkit::normal(rng) * 0.1;
        const double s = 1 + static_cast<double>(rng() % 50);
        const double sp = s + static_cast<double>(rng() % 200);
        const double c = 3 * testkit::uniform01(rng);
        const double expect = w + c * std::exp(0.5 * (std::log(2.0) + std::log(std::log(sp)) - std::log(s)));
        CHECK(std::fabs(ucb_score(w, s, sp, c) - expect) < 1e-12);
    }
}

TEST_CASE("node values and visits") {
    SearchTree tree(1.0, 10, Metric::Accuracy);
    tree.add_root(base_subset(2), eval_with(0.52));
    CHECK(tree.root().visits == 1);
    CHECK(code_of([&] { ucb(tree.root(), tree); }) == ErrorCode::RootHasNoUcb);

    const auto a = tree.attach(0, child(1, 0.55));
    CHECK(tree.node(a).delta == doctest::Approx(0.03));
    CHECK(tree.root().w == doctest::Approx(0.03));
    CHECK(tree.node(a).w == tree.node(a).delta);

    // a parent with w 0.03 from one child gains a child with delta +0.01
    const auto b = tree.attach(a, child(2, 0.55 + 0.03));
    CHECK(tree.node(a).w == doctest::Approx(0.03));
    tree.attach(a, child(2, 0.55 + 0.01 - 0.02));
    CHECK(tree.node(a).w == doctest::Approx((0.03 - 0.01) / 2));
    CHECK(tree.value_consistency_error() < 1e-12);

    // every attach bumps the ancestors
    CHECK(tree.root().visits == 4);
    CHECK(tree.node(a).visits == 3);
    tree.visit_path(b);
    CHECK(tree.root().visits == 5);
    CHECK(tree.node(a).visits == 4);
    CHECK(tree.node(b).visits == 2);
    CHECK(tree.path_to(b) == std::vector<std::size_t>{0, a, b});

    CHECK(code_of([&] { tree.attach(b, child(2, 0.1)); }) == ErrorCode::PreconditionViolation);
    CHECK(code_of([&] { tree.attach(99, child(3, 0.1)); }) == ErrorCode::PreconditionViolation);
}

TEST_CASE("node value consistency on random trees") {
    std::mt19937_64 rng(12);
    for (int rep = 0; rep < 30; ++rep) {
        SearchTree tree(1.4142, 12, Metric::Accuracy);
        tree.add_root(base_subset(1), eval_with(0.5));
        for (int i = 0; i < 60; ++i) {
            const std::size_t parent = rng() % tree.size();
            tree.attach(parent, child(tree.node(parent).layer + 1 + rng() % 2, testkit::uniform01(rng)));
            REQUIRE(tree.value_consistency_error() < 1e-12);
        }
        for (const auto& n : tree.nodes()) {
            if (n.children.empty()) {
                CHECK(n.w == n.delta);
                continue;
            }
            double sum = 0;
            for (auto c : n.children) sum += tree.node(c).delta;
            CHECK(std::fabs(n.w - sum / n.children.size()) < 1e-12);
            std::size_t below = 0;
            std::function<void(std::size_t)> count = [&](std::size_t id) {
                for (auto c : tree.node(id).children) {
                    ++below;
                    count(c);
                }
            };
            count(n.id);
            CHECK(n.visits == 1 + below);
        }
    }
}

TEST_CASE("select_nodes") {
    SearchTree tree(1.0, 10, Metric::Accuracy);
    tree.add_root(base_subset(1), eval_with(0.5));
    CHECK(code_of([&] { select_nodes(tree, 2); }) == ErrorCode::NothingToSelect);

    const auto hi = tree.attach(0, child(1, 0.53));
    const auto lo = tree.attach(0, child(1, 0.51));
    CHECK(select_nodes(tree, 1) == std::vector<std::size_t>{hi});
    const auto all = select_nodes(tree, 10);
    CHECK(all == std::vector<std::size_t>{hi, lo});

    // equal w: the less visited sibling wins
    SearchTree t2(1.0, 10, Metric::Accuracy);
    t2.add_root(base_subset(1), eval_with(0.5));
    const auto busy = t2.attach(0, child(1, 0.52));
    const auto idle = t2.attach(0, child(1, 0.52));
    for (int i = 0; i < 4; ++i) t2.visit_path(busy);
    CHECK(select_nodes(t2, 1) == std::vector<std::size_t>{idle});

    // full tie: lower id first
    SearchTree t3(1.0, 10, Metric::Accuracy);
    t3.add_root(base_subset(1), eval_with(0.5));
    const auto first = t3.attach(0, child(1, 0.52));
    t3.attach(0, child(1, 0.52));
    CHECK(select_nodes(t3, 1) == std::vector<std::size_t>{first});

    // nodes at the layer cap are not expandable
    SearchTree t4(1.0, 1, Metric::Accuracy);
    t4.add_root(base_subset(1), eval_with(0.5));
    t4.attach(0, child(1, 0.6));
    CHECK(code_of([&] { select_nodes(t4, 1); }) == ErrorCode::NothingToSelect);
}

TEST_CASE("novel operations") {
    const auto s = FeatureSubset({FeatureExpr::base("f1"), parse_expr("square(plus(f1,f2))")});
    const auto ops = novel_operations(s);
    CHECK(ops.size() == 12);
    CHECK(std::find(ops.begin(), ops.end(), "plus") == ops.end());
    CHECK(std::find(ops.begin(), ops.end(), "square") == ops.end());

    std::vector<FeatureExpr> every{FeatureExpr::base("f1")};
    for (const auto& op : operation_registry()) {
        std::vector<FeatureExpr> args(op.arity, FeatureExpr::base("f1"));
        every.push_back(FeatureExpr::apply(op.name, args));
    }
    CHECK(novel_operations(FeatureSubset(every)).size() == 14);
}

TEST_CASE("best subset") {
    SearchTree only(1.0, 10, Metric::Accuracy);
    only.add_root(base_subset(2), eval_with(0.529));
    const auto r0 = best_subset(only);
    CHECK(r0.best_node == 0);
    CHECK(r0.improvement(Metric::Accuracy) == 0.0);

    SearchTree tree(1.0, 10, Metric::Accuracy);
    tree.add_root(base_subset(2), eval_with(0.529));
    const auto a = tree.attach(0, child(1, 0.534));
    const auto b = tree.attach(a, child(2, 0.541));
    const auto r = best_subset(tree);
    CHECK(r.best_node == b);
    CHECK(r.best_report.accuracy == 0.541);
    CHECK(r.improvement(Metric::Accuracy) == doctest::Approx(0.012));

    // leaf ws 0.02 and 0.05
    SearchTree t2(1.0, 10, Metric::Accuracy);
    t2.add_root(base_subset(2), eval_with(0.5));
    t2.attach(0, child(1, 0.52));
    const auto best_leaf = t2.attach(0, child(1, 0.55));
    CHECK(best_subset(t2).mcts_choice == best_leaf);

    // worse children never displace the root
    SearchTree t3(1.0, 10, Metric::Accuracy);
    t3.add_root(base_subset(2), eval_with(0.6));
    t3.attach(0, child(1, 0.55));
    t3.attach(0, child(1, 0.6));
    CHECK(best_subset(t3).best_node == 0);
}

TEST_CASE("run_layer bounds, drops and deltas") {
    Rig rig;
    rig.evaluator->bonus = {{"square", 0.03}};
    for (int i = 0; i < 3; ++i) {
        rig.agents.push_back(std::make_unique<FnAgent>([](const AgentContext& ctx) {
            AgentProposal p;
            for (const auto& n : ctx.subset.names()) {
                if (ctx.subset.find(n)->is_base() && !ctx.subset.contains("square(" + n + ")") &&
                    p.actions.size() < ctx.k_max)
                    p.actions.push_back(GenerateAction{"square", {n}});
            }
            for (const auto& n : ctx.last_added) p.actions.push_back(DropAction{n});
            return p;
        }));
    }
    auto engine = rig.engine();
    engine.init_root();
    const auto layer1 = engine.run_layer(1);
    // one node per agent; each agent continues its own lineage
    CHECK(layer1.size() == 3);
    const auto& n1 = engine.tree().node(layer1[0]);
    CHECK(n1.subset.size() <= engine.tree().root().subset.size() + rig.config.k_max);
    CHECK(n1.delta == doctest::Approx(0.09));
    CHECK(engine.tree().root().w == doctest::Approx(0.09));
    CHECK(n1.added.size() == 3);

    // layer 2 drops what layer 1 added
    const auto layer2 = engine.run_layer(2);
    REQUIRE_FALSE(layer2.empty());
    const auto& n2 = engine.tree().node(layer2[0]);
    for (const auto& g : n1.added) CHECK_FALSE(n2.subset.contains(g));
}

TEST_CASE("all agents empty stops generation") {
    Rig rig;
    rig.agents.push_back(std::make_unique<FnAgent>([](const AgentContext&) { return AgentProposal{{}, "nothing"}; }));
    auto engine = rig.engine();
    engine.init_root();
    CHECK(code_of([&] { engine.run_layer(1); }) == ErrorCode::AllAgentsEmpty);

    Rig rig2;
    rig2.agents.push_back(std::make_unique<FnAgent>([](const AgentContext&) { return AgentProposal{{}, "nothing"}; }));
    auto e2 = rig2.engine();
    const auto r = e2.run();
    CHECK(r.generation_layers == 0);
    CHECK(r.stop_reason.find("all agents empty") != std::string::npos);
    CHECK(r.best_node == 0);
}

TEST_CASE("unavailable agent does not stop the run") {
    Rig rig;
    rig.agents.push_back(std::make_unique<FnAgent>(
        [](const AgentContext&) -> AgentProposal { throw Error(ErrorCode::AgentUnavailable, "down"); }));
    rig.agents.push_back(std::make_unique<FnAgent>(grow_one));
    rig.config.iterations = 2;
    rig.config.mcts_rounds = 0;
    auto engine = rig.engine();
    const auto r = engine.run();
    CHECK(r.generation_layers == 2);
    for (const auto& n : r.nodes) {
        if (n.agent) CHECK(*n.agent == 1);
    }
}

TEST_CASE("patience and the iteration cap") {
    {
        Rig rig;  // flat accuracy everywhere
        rig.agents.push_back(std::make_unique<FnAgent>(grow_one));
        rig.config.patience = 2;
        rig.config.mcts_rounds = 0;
        auto engine = rig.engine();
        const auto r = engine.run();
        CHECK(r.generation_layers == 2);
        CHECK(r.stop_reason.find("patience") != std::string::npos);
    }
    {
        Rig rig;
        rig.evaluator->bonus = {{"(", 0.01}};  // every generated feature helps
        rig.agents.push_back(std::make_unique<FnAgent>(grow_one));
        rig.config.iterations = 3;
        rig.config.mcts_rounds = 0;
        auto engine = rig.engine();
        const auto r = engine.run();
        CHECK(r.generation_layers == 3);
        CHECK(engine.tree().layers().size() == 4);
        CHECK(r.stop_reason == "iteration cap reached");
    }
}

TEST_CASE("mcts expansion uses novel operations") {
    Rig rig;
    rig.evaluator->bonus = {{"(", 0.01}};
    std::vector<std::vector<std::string>> offered;
    rig.agents.push_back(std::make_unique<FnAgent>([&](const AgentContext& ctx) {
        offered.push_back(ctx.allowed_ops);
        return grow_one(ctx);
    }));
    rig.config.iterations = 2;
    rig.config.mcts_rounds = 2;
    rig.config.mcts_select = 1;
    auto engine = rig.engine();
    const auto r = engine.run();
    std::size_t mcts = 0;
    for (const auto& n : r.nodes) {
        if (n.phase != NodePhase::Mcts) continue;
        ++mcts;
        const auto& parent = engine.tree().node(*n.parent);
        const auto used = [&] {
            std::set<std::string> out;
            for (const auto& e : parent.subset.exprs())
                for (auto id : e.operations_used()) out.insert(std::string(operation(id).name));
            return out;
        }();
        for (const auto& a : n.proposal.actions) {
            if (const auto* g = std::get_if<GenerateAction>(&a)) CHECK_FALSE(used.count(g->op));
        }
    }
    CHECK(mcts == 2);
    CHECK(offered.front().size() == 14);
    CHECK(offered.back().size() < 14);
    CHECK(engine.tree().value_consistency_error() < 1e-12);
    CHECK(r.best_report.accuracy >= r.baseline.accuracy);
}

TEST_CASE("scripted runs are deterministic and safe") {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        auto data = std::make_shared<const Dataset>(testkit::synthetic_multiclass(150, seed));
        SearchConfig cfg;
        cfg.iterations = 4;
        cfg.mcts_rounds = 2;
        const auto a = testkit::run_scripted(data, cfg, testkit::default_team(), seed);
        const auto b = testkit::run_scripted(data, cfg, testkit::default_team(), seed);
        CHECK(a.log == b.log);
        CHECK(a.result.best_report.accuracy >= a.result.baseline.accuracy);
        cfg.parallel = false;
        CHECK(testkit::run_scripted(data, cfg, testkit::default_team(), seed).log == a.log);
    }
}

TEST_CASE("feature counts never shrink without drops") {
    auto data = std::make_shared<const Dataset>(testkit::synthetic_multiclass(150, 9));
    SearchConfig cfg;
    cfg.iterations = 5;
    cfg.drops_enabled = false;
    const auto run = testkit::run_scripted(data, cfg, testkit::default_team(), 9);
    for (const auto& n : run.nodes) {
        if (!n.parent) continue;
        const auto& p = run.nodes[*n.parent];
        CHECK(n.subset.size() >= p.subset.size());
        for (const auto& name : p.subset.names()) CHECK(n.subset.contains(name));
    }
}

TEST_CASE("node log round trip") {
    auto data = std::make_shared<const Dataset>(testkit::synthetic_multiclass(120, 3));
    SearchConfig cfg;
    cfg.iterations = 3;
    cfg.mcts_rounds = 1;
    const auto run = testkit::run_scripted(data, cfg, testkit::default_team(), 3);
    const auto path = temp_path(".jsonl");
    std::ofstream(path) << run.log;
    const auto log = read_node_log(path);
    CHECK(log.header.metric == "accuracy");
    CHECK(log.header.max_layers == 3);
    REQUIRE(log.nodes.size() == run.nodes.size());
    for (std::size_t i = 0; i < log.nodes.size(); ++i) {
        const auto& a = log.nodes[i];
        const auto& b = run.nodes[i];
        CHECK(a.id == b.id);
        CHECK(a.parent == b.parent);
        CHECK(a.subset.names() == b.subset.names());
        CHECK(a.proposal == b.proposal);
        CHECK(a.theta.accuracy == b.theta.accuracy);
        CHECK(a.delta == b.delta);
        CHECK(a.w == b.w);
        CHECK(a.visits == b.visits);
    }
    const auto rebuilt = SearchTree::from_nodes(log.nodes, log.header.exploration, log.header.max_layers,
                                                Metric::Accuracy);
    CHECK(node_log_jsonl(rebuilt, log.header) == run.log);

    // a truncated log is rejected
    std::ofstream(path) << run.log.substr(0, run.log.rfind('\n', run.log.size() - 2) + 1);
    CHECK(code_of([&] { read_node_log(path); }) == ErrorCode::IncompleteRun);
    std::ofstream(path) << "";
    CHECK(code_of([&] { read_node_log(path); }) == ErrorCode::IncompleteRun);
    std::filesystem::remove(path);
    CHECK(code_of([&] { read_node_log(path); }) == ErrorCode::IncompleteRun);
}
