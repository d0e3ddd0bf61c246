#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "lfg/cli.hpp"
#include "lfg/error.hpp"

namespace lfg {

namespace fs = std::filesystem;

std::string_view agent_kind_name(AgentKind k) { return k == AgentKind::Llm ? "llm" : "scripted"; }

AgentKind parse_agent_kind(std::string_view s) {
    if (s == "scripted") return AgentKind::Scripted;
    if (s == "llm") return AgentKind::Llm;
    throw Error(ErrorCode::ConfigError, "unknown agent kind '" + std::string(s) + "'");
}

AgentKind RunConfig::kind_of(std::size_t agent) const {
    if (agent_kinds.empty()) return AgentKind::Scripted;
    return agent_kinds.size() == 1 ? agent_kinds.front() : agent_kinds.at(agent);
}

std::string RunConfig::strategy_of(std::size_t agent) const {
    if (agent < strategies.size()) return strategies[agent];
    if (strategies.size() == 1) return strategies.front();
    return std::string(strategy_name(default_strategy(agent)));
}

namespace {

std::string trim(std::string_view s) {
    const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (!s.empty() && ws(s.front())) s.remove_prefix(1);
    while (!s.empty() && ws(s.back())) s.remove_suffix(1);
    return std::string(s);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
    throw Error(ErrorCode::ConfigError, "invalid value '" + value + "' for key '" + key + "'");
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v);
    return out;
}

std::size_t to_count(const std::string& key, const std::string& v) { return static_cast<std::size_t>(to_u64(key, v)); }

double to_real(const std::string& key, const std::string& v) {
    double out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v);
    return out;
}

bool to_flag(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    bad_value(key, v);
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string fmt_real(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

fs::path resolve(const fs::path& base, const std::string& v) {
    fs::path p(v);
    if (p.is_relative() && !base.empty()) p = base / p;
    return p.lexically_normal();
}

}  // namespace

RunConfig parse_config(std::string_view text, const fs::path& base_dir) {
    RunConfig c;
    using Setter = std::function<void(const std::string&, const std::string&)>;
    const std::map<std::string, Setter> setters{
        {"dataset", [&](auto&, auto& v) { c.dataset = resolve(base_dir, v); }},
        {"label_column", [&](auto&, auto& v) { c.label_column = v; }},
        {"label_index", [&](auto& k, auto& v) { c.label_index = to_count(k, v); }},
        {"drop_missing", [&](auto& k, auto& v) { c.drop_missing = to_flag(k, v); }},
        {"train_fraction", [&](auto& k, auto& v) { c.train_fraction = to_real(k, v); }},
        {"seed", [&](auto& k, auto& v) { c.seed = to_u64(k, v); }},
        {"agents", [&](auto& k, auto& v) { c.agents = to_count(k, v); }},
        {"agent_kinds",
         [&](auto&, auto& v) {
             c.agent_kinds.clear();
             for (const auto& s : split_list(v)) c.agent_kinds.push_back(parse_agent_kind(s));
         }},
        {"strategies", [&](auto&, auto& v) { c.strategies = split_list(v); }},
        {"k_max", [&](auto& k, auto& v) { c.search.k_max = to_count(k, v); }},
        {"iterations", [&](auto& k, auto& v) { c.search.iterations = to_count(k, v); }},
        {"mcts_rounds", [&](auto& k, auto& v) { c.search.mcts_rounds = to_count(k, v); }},
        {"mcts_select", [&](auto& k, auto& v) { c.search.mcts_select = to_count(k, v); }},
        {"exploration", [&](auto& k, auto& v) { c.search.exploration = to_real(k, v); }},
        {"patience", [&](auto& k, auto& v) { c.search.patience = to_count(k, v); }},
        {"max_depth", [&](auto& k, auto& v) { c.search.max_depth = to_count(k, v); }},
        {"drop_actions", [&](auto& k, auto& v) { c.search.drops_enabled = to_flag(k, v); }},
        {"partition_features", [&](auto& k, auto& v) { c.search.partition_features = to_flag(k, v); }},
        {"parallel", [&](auto& k, auto& v) { c.search.parallel = to_flag(k, v); }},
        {"metric",
         [&](auto& k, auto& v) {
             try {
                 c.search.metric = parse_metric(v);
             } catch (const Error&) {
                 bad_value(k, v);
             }
         }},
        {"model",
         [&](auto& k, auto& v) {
             try {
                 c.model.kind = parse_model_kind(v);
             } catch (const Error&) {
                 bad_value(k, v);
             }
         }},
        {"knn_k", [&](auto& k, auto& v) { c.model.knn_k = to_count(k, v); }},
        {"tree_max_depth", [&](auto& k, auto& v) { c.model.tree_max_depth = to_count(k, v); }},
        {"tree_min_leaf", [&](auto& k, auto& v) { c.model.tree_min_samples_leaf = to_count(k, v); }},
        {"eval_mode",
         [&](auto& k, auto& v) {
             if (v == "split") {
                 c.eval_mode = EvalMode::Split;
             } else if (v == "kfold") {
                 c.eval_mode = EvalMode::KFold;
             } else {
                 bad_value(k, v);
             }
         }},
        {"folds", [&](auto& k, auto& v) { c.folds = to_count(k, v); }},
        {"llm_base_url", [&](auto&, auto& v) { c.llm.base_url = v; }},
        {"llm_model", [&](auto&, auto& v) { c.llm.model = v; }},
        {"llm_temperature", [&](auto& k, auto& v) { c.llm.temperature = to_real(k, v); }},
        {"llm_timeout", [&](auto& k, auto& v) { c.llm.timeout = std::chrono::seconds(to_count(k, v)); }},
        {"llm_retries", [&](auto& k, auto& v) { c.llm.retries = to_count(k, v); }},
        {"output_dir", [&](auto&, auto& v) { c.output_dir = resolve(base_dir, v); }},
    };

    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(std::string_view(t).substr(0, eq));
        const std::string value = trim(std::string_view(t).substr(eq + 1));
        auto it = setters.find(key);
        if (it == setters.end()) {
            throw Error(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
        it->second(key, value);
    }
    return c;
}

RunConfig load_config(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::FileNotFound, "cannot open config " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

std::string serialize_config(const RunConfig& c) {
    std::ostringstream out;
    auto join = [](const auto& items, auto fn) {
        std::string s;
        for (std::size_t i = 0; i < items.size(); ++i) s += (i ? "," : "") + std::string(fn(items[i]));
        return s;
    };
    out << "dataset = " << fs::absolute(c.dataset).lexically_normal().string() << "\n";
    if (c.label_index) {
        out << "label_index = " << *c.label_index << "\n";
    } else {
        out << "label_column = " << c.label_column << "\n";
    }
    out << "drop_missing = " << (c.drop_missing ? "true" : "false") << "\n";
    out << "train_fraction = " << fmt_real(c.train_fraction) << "\n";
    out << "seed = " << c.seed << "\n";
    out << "agents = " << c.agents << "\n";
    out << "agent_kinds = " << join(c.agent_kinds, agent_kind_name) << "\n";
    if (!c.strategies.empty()) out << "strategies = " << join(c.strategies, [](const std::string& s) { return s; }) << "\n";
    out << "k_max = " << c.search.k_max << "\n";
    out << "iterations = " << c.search.iterations << "\n";
    out << "mcts_rounds = " << c.search.mcts_rounds << "\n";
    out << "mcts_select = " << c.search.mcts_select << "\n";
    out << "exploration = " << fmt_real(c.search.exploration) << "\n";
    out << "patience = " << c.search.patience << "\n";
    out << "max_depth = " << c.search.max_depth << "\n";
    out << "drop_actions = " << (c.search.drops_enabled ? "true" : "false") << "\n";
    out << "partition_features = " << (c.search.partition_features ? "true" : "false") << "\n";
    out << "parallel = " << (c.search.parallel ? "true" : "false") << "\n";
    out << "metric = " << metric_name(c.search.metric) << "\n";
    out << "model = " << model_kind_name(c.model.kind) << "\n";
    out << "knn_k = " << c.model.knn_k << "\n";
    out << "tree_max_depth = " << c.model.tree_max_depth << "\n";
    out << "tree_min_leaf = " << c.model.tree_min_samples_leaf << "\n";
    out << "eval_mode = " << (c.eval_mode == EvalMode::KFold ? "kfold" : "split") << "\n";
    out << "folds = " << c.folds << "\n";
    out << "llm_base_url = " << c.llm.base_url << "\n";
    out << "llm_model = " << c.llm.model << "\n";
    out << "llm_temperature = " << fmt_real(c.llm.temperature) << "\n";
    out << "llm_timeout = " << c.llm.timeout.count() << "\n";
    out << "llm_retries = " << c.llm.retries << "\n";
    out << "output_dir = " << fs::absolute(c.output_dir).lexically_normal().string() << "\n";
    return out.str();
}

void validate_config(const RunConfig& c) {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); };
    if (c.dataset.empty()) fail("dataset is required");
    if (c.label_column.empty() && !c.label_index) fail("label_column or label_index is required");
    if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) fail("train_fraction must lie in (0,1)");
    if (c.agents == 0) fail("agents must be at least 1");
    if (c.agent_kinds.size() > 1 && c.agent_kinds.size() != c.agents) {
        fail("agent_kinds lists " + std::to_string(c.agent_kinds.size()) + " kinds for " + std::to_string(c.agents) +
             " agents");
    }
    if (c.strategies.size() > 1 && c.strategies.size() != c.agents) {
        fail("strategies lists " + std::to_string(c.strategies.size()) + " entries for " +
             std::to_string(c.agents) + " agents");
    }
    for (std::size_t a = 0; a < c.agents; ++a) {
        if (c.kind_of(a) == AgentKind::Scripted) {
            try {
                parse_strategy(c.strategy_of(a));
            } catch (const Error&) {
                fail("unknown scripted strategy '" + c.strategy_of(a) + "'");
            }
        }
    }
    if (c.search.iterations == 0) fail("iterations must be at least 1");
    if (c.search.exploration < 0.0) fail("exploration must be non-negative");
    if (c.search.max_depth == 0) fail("max_depth must be at least 1");
    if (c.model.knn_k == 0) fail("knn_k must be at least 1");
    if (c.model.tree_max_depth == 0) fail("tree_max_depth must be at least 1");
    if (c.model.tree_min_samples_leaf == 0) fail("tree_min_leaf must be at least 1");
    if (c.eval_mode == EvalMode::KFold && c.folds < 2) fail("folds must be at least 2");
    if (c.llm.retries > 10) fail("llm_retries must be at most 10");
    if (!fs::exists(c.dataset)) throw Error(ErrorCode::FileNotFound, "dataset not found: " + c.dataset.string());
}

}  // namespace lfg
