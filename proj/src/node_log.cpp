#include <fstream>
#include <sstream>

#include <json.hpp>

#include "json_io.hpp"
#include "lfg/error.hpp"
#include "lfg/search.hpp"

namespace lfg {

using nlohmann::json;

namespace detail {

json report_json(const EvalReport& r) {
    json j{{"accuracy", r.accuracy},
           {"precision", r.precision},
           {"recall", r.recall},
           {"f1", r.f1},
           {"per_class_precision", r.per_class_precision},
           {"per_class_recall", r.per_class_recall},
           {"model", r.model_tag},
           {"split", r.split_tag}};
    if (!r.folds.empty()) {
        json folds = json::array();
        for (const auto& f : r.folds) folds.push_back(report_json(f));
        j["folds"] = std::move(folds);
    }
    return j;
}

EvalReport report_from(const json& j) {
    EvalReport r;
    r.accuracy = j.at("accuracy").get<double>();
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.per_class_precision = j.value("per_class_precision", std::vector<double>{});
    r.per_class_recall = j.value("per_class_recall", std::vector<double>{});
    r.model_tag = j.value("model", "");
    r.split_tag = j.value("split", "");
    if (j.contains("folds")) {
        for (const auto& f : j.at("folds")) r.folds.push_back(report_from(f));
    }
    return r;
}

}  // namespace detail

namespace {

using detail::report_from;
using detail::report_json;

json action_json(const AgentAction& a) {
    if (const auto* g = std::get_if<GenerateAction>(&a)) return json{{"gen", g->op}, {"operands", g->operands}};
    return json{{"drop", std::get<DropAction>(a).feature}};
}

AgentAction action_from(const json& j) {
    if (j.contains("gen")) {
        return GenerateAction{j.at("gen").get<std::string>(), j.at("operands").get<std::vector<std::string>>()};
    }
    return DropAction{j.at("drop").get<std::string>()};
}

json node_json(const GenerationNode& n) {
    json actions = json::array();
    for (const auto& a : n.proposal.actions) actions.push_back(action_json(a));
    json j{{"id", n.id},
           {"parent", n.parent ? json(*n.parent) : json(nullptr)},
           {"layer", n.layer},
           {"phase", phase_name(n.phase)},
           {"round", n.round},
           {"agent", n.agent ? json(*n.agent) : json(nullptr)},
           {"strategy", n.strategy},
           {"actions", std::move(actions)},
           {"rationale", n.proposal.rationale},
           {"subset", n.subset.names()},
           {"added", n.added},
           {"excluded", n.excluded},
           {"theta", report_json(n.theta)},
           {"delta", n.delta},
           {"w", n.w},
           {"visits", n.visits}};
    return j;
}

GenerationNode node_from(const json& j) {
    GenerationNode n;
    n.id = j.at("id").get<std::size_t>();
    if (!j.at("parent").is_null()) n.parent = j.at("parent").get<std::size_t>();
    n.layer = j.at("layer").get<std::size_t>();
    n.phase = parse_phase(j.at("phase").get<std::string>());
    n.round = j.at("round").get<std::size_t>();
    if (!j.at("agent").is_null()) n.agent = j.at("agent").get<std::size_t>();
    n.strategy = j.value("strategy", "");
    for (const auto& a : j.at("actions")) n.proposal.actions.push_back(action_from(a));
    n.proposal.rationale = j.value("rationale", "");
    std::vector<FeatureExpr> exprs;
    for (const auto& name : j.at("subset")) exprs.push_back(parse_expr(name.get<std::string>()));
    n.subset = FeatureSubset(std::move(exprs), static_cast<std::int64_t>(n.id));
    n.added = j.value("added", std::vector<std::string>{});
    n.excluded = j.value("excluded", std::vector<std::string>{});
    n.theta = report_from(j.at("theta"));
    n.delta = j.at("delta").get<double>();
    n.w = j.at("w").get<double>();
    n.visits = j.at("visits").get<std::size_t>();
    return n;
}

}  // namespace

std::string node_log_jsonl(const SearchTree& tree, const NodeLogHeader& header) {
    std::ostringstream out;
    json head{{"schema", kNodeLogSchema},
              {"version", kNodeLogVersion},
              {"metric", header.metric},
              {"model", header.model},
              {"protocol", header.protocol},
              {"exploration", header.exploration},
              {"max_layers", header.max_layers},
              {"nodes", tree.size()}};
    out << head.dump() << "\n";
    for (const auto& n : tree.nodes()) out << node_json(n).dump() << "\n";
    return out.str();
}

void write_node_log(const std::filesystem::path& path, const SearchTree& tree, const NodeLogHeader& header) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    f << node_log_jsonl(tree, header);
    if (!f) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

NodeLog read_node_log(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::IncompleteRun, "missing node log " + path.string());
    NodeLog log;
    std::string line;
    std::size_t expected = 0;
    bool have_header = false;
    try {
        while (std::getline(f, line)) {
            if (line.empty() || line == "\r") continue;
            auto j = json::parse(line);
            if (!have_header) {
                if (j.value("schema", "") != kNodeLogSchema || j.value("version", 0) != kNodeLogVersion) {
                    throw Error(ErrorCode::IncompleteRun, "unrecognized node log header");
                }
                log.header.metric = j.at("metric").get<std::string>();
                log.header.model = j.value("model", "");
                log.header.protocol = j.value("protocol", "");
                log.header.exploration = j.at("exploration").get<double>();
                log.header.max_layers = j.at("max_layers").get<std::size_t>();
                expected = j.at("nodes").get<std::size_t>();
                have_header = true;
                continue;
            }
            log.nodes.push_back(node_from(j));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IncompleteRun, std::string("malformed node log: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::IncompleteRun) throw;
        throw Error(ErrorCode::IncompleteRun, std::string("malformed node log: ") + e.what());
    }
    if (!have_header) throw Error(ErrorCode::IncompleteRun, "node log has no header");
    if (log.nodes.size() != expected || log.nodes.empty()) {
        throw Error(ErrorCode::IncompleteRun, "node log holds " + std::to_string(log.nodes.size()) + " of " +
                                                  std::to_string(expected) + " nodes");
    }
    for (std::size_t i = 0; i < log.nodes.size(); ++i) {
        if (log.nodes[i].id != i) throw Error(ErrorCode::IncompleteRun, "node ids out of order");
    }
    return log;
}

}  // namespace lfg
