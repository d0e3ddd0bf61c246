#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "json_io.hpp"
#include "lfg/cli.hpp"
#include "lfg/error.hpp"
#include "lfg/rng.hpp"

namespace lfg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string protocol_tag(const RunConfig& c) {
    if (c.eval_mode == EvalMode::KFold) return "kfold(k=" + std::to_string(c.folds) + ",seed=" + std::to_string(c.seed) + ")";
    char buf[64];
    std::snprintf(buf, sizeof buf, "split(train=%.4g,seed=%llu,stratified)", c.train_fraction,
                  static_cast<unsigned long long>(c.seed));
    return buf;
}

std::string quote_csv(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

std::string real(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::string signed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.4f", v);
    return buf;
}

fs::path fresh_run_dir(const fs::path& base) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
    fs::create_directories(base);
    fs::path dir = base / ("run-" + std::string(stamp));
    for (int n = 2; fs::exists(dir); ++n) dir = base / ("run-" + std::string(stamp) + "-" + std::to_string(n));
    fs::create_directory(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    f << text;
    if (!f) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

std::vector<std::unique_ptr<Agent>> make_agents(const RunConfig& c) {
    std::vector<std::unique_ptr<Agent>> agents;
    std::shared_ptr<LlmTransport> transport;
    for (std::size_t a = 0; a < c.agents; ++a) {
        if (c.kind_of(a) == AgentKind::Scripted) {
            agents.push_back(std::make_unique<ScriptedAgent>(parse_strategy(c.strategy_of(a)), mix_seed(c.seed, a + 1)));
        } else {
            if (!transport) transport = std::make_shared<HttpChatTransport>(c.llm);
            agents.push_back(std::make_unique<LlmAgent>(transport, c.llm, c.strategy_of(a)));
        }
    }
    return agents;
}

void write_best_csv(const fs::path& path, const RunResult& result, const Dataset& d, const Protocol& protocol) {
    std::vector<std::string> names;
    std::vector<std::shared_ptr<const std::vector<double>>> columns;
    EvalCache cache;
    for (const auto& e : result.best_subset.exprs()) {
        try {
            columns.push_back(evaluate_cached(e, d, &cache));
            names.push_back(e.canonical_name());
        } catch (const DomainViolation&) {
        }
    }
    std::vector<std::string> role(d.n_samples());
    std::string role_header;
    if (const auto* s = std::get_if<SplitSpec>(&protocol)) {
        role_header = "split";
        for (auto i : s->train_indices) role[i] = "train";
        for (auto i : s->test_indices) role[i] = "test";
    } else {
        role_header = "fold";
        const auto& f = std::get<FoldSpec>(protocol);
        for (std::size_t i = 0; i < role.size(); ++i) role[i] = std::to_string(f.fold_assignments[i]);
    }

    std::ostringstream out;
    for (const auto& n : names) out << quote_csv(n) << ",";
    out << "label," << role_header << "\n";
    const auto labels = d.labels();
    for (std::size_t r = 0; r < d.n_samples(); ++r) {
        for (const auto& col : columns) out << real((*col)[r]) << ",";
        const int y = labels[r];
        const std::string label = static_cast<std::size_t>(y) < d.class_names().size() ? d.class_names()[y]
                                                                                        : std::to_string(y);
        out << quote_csv(label) << "," << role[r] << "\n";
    }
    write_text(path, out.str());
}

struct LoadedRun {
    NodeLog log;
    json summary;
    RunResult result;
};

LoadedRun load_run(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error(ErrorCode::IncompleteRun, "not a run directory: " + dir.string());
    LoadedRun run;
    run.log = read_node_log(dir / "nodes.jsonl");
    std::ifstream f(dir / "summary.json", std::ios::binary);
    if (!f) throw Error(ErrorCode::IncompleteRun, "run has no summary.json: " + dir.string());
    try {
        run.summary = json::parse(f);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IncompleteRun, std::string("malformed summary.json: ") + e.what());
    }
    const Metric metric = parse_metric(run.log.header.metric);
    auto tree = SearchTree::from_nodes(run.log.nodes, run.log.header.exploration, run.log.header.max_layers, metric);
    run.result = best_subset(tree);
    return run;
}

}  // namespace

std::vector<double> feature_count_series(const std::vector<GenerationNode>& nodes) {
    if (nodes.empty()) return {};
    std::map<std::size_t, std::size_t> head_size;
    std::size_t last_round = 0;
    for (const auto& n : nodes) {
        if (n.phase != NodePhase::Generation || !n.agent) continue;
        head_size[*n.agent] = nodes.front().subset.size();
        last_round = std::max(last_round, n.round);
    }
    std::vector<double> series;
    for (std::size_t t = 1; t <= last_round; ++t) {
        for (const auto& n : nodes) {
            if (n.phase == NodePhase::Generation && n.round == t && n.agent) head_size[*n.agent] = n.subset.size();
        }
        double sum = 0.0;
        for (const auto& [agent, size] : head_size) sum += static_cast<double>(size);
        series.push_back(sum / static_cast<double>(head_size.size()));
    }
    return series;
}

RunArtifacts cmd_run(const RunConfig& config) {
    validate_config(config);
    LabelSelector label = config.label_index ? LabelSelector(*config.label_index) : LabelSelector(config.label_column);
    auto data = std::make_shared<const Dataset>(load_csv(config.dataset, label, config.drop_missing));

    Protocol protocol;
    std::vector<std::size_t> context_rows;
    if (config.eval_mode == EvalMode::KFold) {
        protocol = kfold(*data, config.folds, config.seed);
        context_rows.resize(data->n_samples());
        for (std::size_t i = 0; i < context_rows.size(); ++i) context_rows[i] = i;
    } else {
        auto s = split(*data, config.train_fraction, config.seed);
        context_rows = s.train_indices;
        protocol = std::move(s);
    }
    auto evaluator = std::make_shared<const DownstreamEvaluator>(data, protocol, config.model);

    TaskInfo task;
    task.description = "Predict the class label from " + std::to_string(data->n_features()) + " numeric columns.";
    task.n_samples = data->n_samples();
    task.n_classes = data->n_classes();
    task.model_tag = config.model.tag();
    task.metric = config.search.metric;

    SearchEngine engine(config.search, data, evaluator, make_agents(config), context_rows, task);
    RunResult result = engine.run();

    RunArtifacts artifacts;
    artifacts.run_dir = fresh_run_dir(config.output_dir);
    const auto& dir = artifacts.run_dir;
    write_text(dir / "config.txt", serialize_config(config));

    NodeLogHeader header;
    header.metric = std::string(metric_name(config.search.metric));
    header.model = config.model.tag();
    header.protocol = protocol_tag(config);
    header.exploration = config.search.exploration;
    header.max_layers = config.search.iterations;
    write_node_log(dir / "nodes.jsonl", engine.tree(), header);

    write_best_csv(dir / "best_subset.csv", result, *data, protocol);

    const auto& best = engine.tree().node(result.best_node);
    std::vector<std::string> features;
    for (const auto& name : best.subset.names()) {
        if (std::find(best.excluded.begin(), best.excluded.end(), name) == best.excluded.end()) features.push_back(name);
    }
    json summary{{"metric", header.metric},
                 {"model", header.model},
                 {"protocol", header.protocol},
                 {"theta_0", detail::report_json(result.baseline)},
                 {"theta_best", detail::report_json(result.best_report)},
                 {"improvement", result.improvement(config.search.metric)},
                 {"best_node", result.best_node},
                 {"mcts_choice", result.mcts_choice},
                 {"features", features},
                 {"excluded", best.excluded},
                 {"nodes", engine.tree().size()},
                 {"generation_layers", result.generation_layers},
                 {"stop_reason", result.stop_reason},
                 {"dropped_rows", data->dropped_rows()},
                 {"feature_count_series", feature_count_series(engine.tree().nodes())}};
    write_text(dir / "summary.json", summary.dump(2) + "\n");

    artifacts.result = std::move(result);
    return artifacts;
}

std::string cmd_report(const fs::path& run_dir) {
    const LoadedRun run = load_run(run_dir);
    const Metric metric = parse_metric(run.log.header.metric);
    const auto& nodes = run.log.nodes;
    std::ostringstream out;

    out << "run: " << run_dir.string() << "\n";
    out << "metric: " << run.log.header.metric << "  model: " << run.log.header.model
        << "  protocol: " << run.log.header.protocol << "\n\n";

    char line[160];
    std::snprintf(line, sizeof line, "%-10s %6s %9s %9s %9s %9s %9s %8s\n", "row", "node", "accuracy", "precision",
                  "recall", "f1", "delta", "features");
    out << line;
    auto row = [&](const std::string& label, const GenerationNode& n, double delta) {
        std::snprintf(line, sizeof line, "%-10s %6zu %9s %9s %9s %9s %9s %8zu\n", label.c_str(), n.id,
                      fixed4(n.theta.accuracy).c_str(), fixed4(n.theta.precision).c_str(),
                      fixed4(n.theta.recall).c_str(), fixed4(n.theta.f1).c_str(), signed4(delta).c_str(),
                      n.subset.size());
        out << line;
    };
    const auto& root = nodes.front();
    row("raw", root, 0.0);
    for (const auto& o : run.result.optima) {
        const std::string label = (o.phase == NodePhase::Mcts ? "mcts " : "gen ") + std::to_string(o.round);
        row(label, nodes[o.node], nodes[o.node].theta.primary(metric) - root.theta.primary(metric));
    }
    row("best", nodes[run.result.best_node], run.result.improvement(metric));

    out << "\nmcts choice (leaf with highest w): node " << run.result.mcts_choice << "\n";
    out << "stop reason: " << run.summary.value("stop_reason", std::string("unknown")) << "\n";
    out << "\nfeature count per generation layer:\n";
    const auto series = feature_count_series(nodes);
    for (std::size_t t = 0; t < series.size(); ++t) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "  t=%zu  %.2f\n", t + 1, series[t]);
        out << buf;
    }
    if (series.empty()) out << "  (no generation layers)\n";
    return out.str();
}

std::string cmd_explain(const fs::path& run_dir, const std::string& feature) {
    const LoadedRun run = load_run(run_dir);
    const auto& nodes = run.log.nodes;
    const auto& best = nodes[run.result.best_node];

    std::string name = feature;
    try {
        name = parse_expr(feature).canonical_name();
    } catch (const Error&) {
        throw Error(ErrorCode::UnknownFeature, "'" + feature + "' is not in the final feature subset");
    }
    const FeatureExpr* expr = best.subset.find(name);
    if (!expr) throw Error(ErrorCode::UnknownFeature, "'" + feature + "' is not in the final feature subset");

    std::ostringstream out;
    out << "feature: " << name << "\n";
    out << "lineage:\n";
    for (const auto& step : lineage(*expr)) out << "  " << step << "\n";

    std::optional<std::size_t> producer;
    std::optional<std::size_t> cursor = best.id;
    std::vector<std::size_t> path;
    for (; cursor; cursor = nodes[*cursor].parent) path.push_back(*cursor);
    for (auto it = path.rbegin(); it != path.rend(); ++it) {
        const auto& added = nodes[*it].added;
        if (std::find(added.begin(), added.end(), name) != added.end()) producer = *it;
    }

    if (!producer) {
        out << "agent: none (original feature)\n";
        return out.str();
    }
    const auto& n = nodes[*producer];
    out << "introduced by: node " << n.id << " (" << phase_name(n.phase) << " " << n.round << ")";
    if (n.agent) out << ", agent " << *n.agent << " [" << n.strategy << "]";
    out << "\n";
    out << "rationale: " << (n.proposal.rationale.empty() ? "(none)" : n.proposal.rationale) << "\n";
    out << "delta: " << signed4(n.delta) << " (" << run.log.header.metric << ")\n";
    return out.str();
}

std::string error_json(std::string_view code, std::string_view message) {
    return json{{"error", code}, {"message", message}}.dump();
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"LFG feature generation engine", "lfg"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> iterations;
    std::optional<std::size_t> agents;
    auto* run = app.add_subcommand("run", "Run a feature-generation search");
    run->add_option("config", config_path, "Config file (key = value lines)")->required();
    run->add_option("--seed", seed, "Override the config seed");
    run->add_option("--iterations", iterations, "Override the generation-layer cap");
    run->add_option("--agents", agents, "Override the number of agents");

    std::string report_dir;
    auto* report = app.add_subcommand("report", "Print the result table of a finished run");
    report->add_option("dir", report_dir, "Run directory")->required();

    std::string explain_dir;
    std::string feature;
    auto* explain = app.add_subcommand("explain", "Explain how a feature of the best subset was derived");
    explain->add_option("dir", explain_dir, "Run directory")->required();
    explain->add_option("feature", feature, "Canonical feature name")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << error_json("UsageError", e.what()) << "\n";
        return 2;
    }

    try {
        if (*run) {
            RunConfig config = load_config(config_path);
            if (seed) config.seed = *seed;
            if (iterations) config.search.iterations = *iterations;
            if (agents) config.agents = *agents;
            auto artifacts = cmd_run(config);
            const auto& r = artifacts.result;
            json summary{{"run_dir", artifacts.run_dir.string()},
                         {"theta_0", r.baseline.primary(config.search.metric)},
                         {"theta_best", r.best_report.primary(config.search.metric)},
                         {"improvement", r.improvement(config.search.metric)},
                         {"features", r.best_subset.names()}};
            out << summary.dump() << "\n";
        } else if (*report) {
            out << cmd_report(report_dir);
        } else if (*explain) {
            out << cmd_explain(explain_dir, feature);
        }
    } catch (const Error& e) {
        err << error_json(e.code_name(), e.what()) << "\n";
        return is_user_error(e.code()) ? 2 : 3;
    } catch (const std::exception& e) {
        err << error_json("RuntimeError", e.what()) << "\n";
        return 3;
    }
    return 0;
}

}  // namespace lfg
