#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <memory>
#include <set>
#include <string>
#include <thread>
#include <vector>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <json.hpp>

#include "lfg/agents.hpp"
#include "lfg/error.hpp"
#include "support.hpp"

using namespace lfg;

namespace {

std::vector<std::string> all_ops() {
    std::vector<std::string> out;
    for (const auto& op : operation_registry()) out.emplace_back(op.name);
    return out;
}

AgentContext make_ctx(const Dataset& d, std::size_t k_max, FeatureSubset subset = {}) {
    if (subset.empty()) subset = FeatureSubset::originals(d);
    std::vector<std::size_t> rows(d.n_samples());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    AgentContext ctx;
    ctx.subset = subset;
    ctx.view = std::make_shared<FeatureView>(make_feature_view(subset, d, rows));
    for (const auto& n : d.column_names()) ctx.original_columns.insert(n);
    ctx.summaries = summarize(*ctx.view, ctx.original_columns);
    ctx.allowed_ops = all_ops();
    ctx.k_max = k_max;
    return ctx;
}

std::set<std::string> ops_in(const AgentProposal& p) {
    std::set<std::string> out;
    for (const auto& a : p.actions) {
        if (const auto* g = std::get_if<GenerateAction>(&a)) out.insert(g->op);
    }
    return out;
}

// Point-biserial correlation of mid-ranks against each one-vs-rest class
// indicator, largest magnitude; ranks by counting.
double oracle_rank_association(const std::vector<double>& v, const std::vector<int>& y, int k) {
    const std::size_t n = v.size();
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) {
        double less = 0, equal = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (v[j] < v[i]) ++less;
            else if (v[j] == v[i]) ++equal;
        }
        r[i] = less + (equal - 1) / 2;
    }
    double best = 0;
    for (int c = 0; c < k; ++c) {
        double mr = 0, mi = 0;
        for (std::size_t i = 0; i < n; ++i) {
            mr += r[i];
            mi += y[i] == c;
        }
        mr /= n;
        mi /= n;
        double sxy = 0, sxx = 0, syy = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double a = r[i] - mr, b = (y[i] == c) - mi;
            sxy += a * b;
            sxx += a * a;
            syy += b * b;
        }
        if (sxx > 0 && syy > 0) best = std::max(best, std::fabs(sxy / std::sqrt(sxx * syy)));
    }
    return best;
}

class FakeTransport final : public LlmTransport {
public:
    std::deque<std::string> replies;
    int fail_first = 0;
    std::vector<ChatRequest> seen;

    std::string complete(const ChatRequest& request) override {
        seen.push_back(request);
        if (fail_first > 0) {
            --fail_first;
            throw TransportError("connection refused");
        }
        if (replies.empty()) return "no block here, sorry";
        auto r = replies.front();
        if (replies.size() > 1) replies.pop_front();
        return r;
    }
};

MalformedReason reason_of(std::string_view text, const AgentContext& ctx) {
    try {
        parse_response(text, ctx);
    } catch (const MalformedResponse& e) {
        return e.reason();
    }
    FAIL("expected MalformedResponse for: " << text);
    return MalformedReason::EmptyResponse;
}

}  // namespace

TEST_CASE("association scores") {
    const std::vector<double> v{3, 1, 4, 1, 5, 9, 2, 6, 5, 3, 5};
    const std::vector<int> y{0, 0, 1, 0, 1, 1, 0, 1, 2, 2, 1};
    CHECK(rank_association(v, y, 3) == doctest::Approx(oracle_rank_association(v, y, 3)).epsilon(1e-12));
    // a monotone transform leaves the rank score unchanged
    std::vector<double> cubed;
    for (double x : v) cubed.push_back(x * x * x);
    CHECK(rank_association(cubed, y, 3) == doctest::Approx(rank_association(v, y, 3)).epsilon(1e-12));
    CHECK(class_association(std::vector<double>{1, 1, 1, 1}, std::vector<int>{0, 1, 0, 1}, 2) == 0.0);
    CHECK(class_association(std::vector<double>{0, 0, 1, 1}, std::vector<int>{0, 0, 1, 1}, 2) ==
          doctest::Approx(1.0));
}

TEST_CASE("interaction agent on a four-column toy table") {
    // label = [f1*f2 > 0] with 15% flips; f3, f4 are noise
    const auto d = testkit::planted_interaction(60, 7, 0.15, 2);
    const auto ctx = make_ctx(d, 2);
    const auto p = scripted_propose(AgentStrategy::InteractionBinary, 7, ctx);
    REQUIRE(p.actions.size() == 2);
    CHECK(p.generate_count() == 2);

    // brute force over every primary binary candidate
    const std::vector<int> y(d.labels().begin(), d.labels().end());
    const double floor = 3.0 / std::sqrt(60.0);
    std::vector<double> single;
    for (std::size_t j = 0; j < 4; ++j) single.push_back(oracle_rank_association(d.column(j).values, y, 2));
    std::vector<std::pair<double, std::string>> scored;
    for (std::size_t a = 0; a < 4; ++a) {
        for (std::size_t b = 0; b < 4; ++b) {
            if (a == b) continue;
            const auto& x = d.column(a).values;
            const auto& z = d.column(b).values;
            std::vector<double> prod, ratio;
            for (std::size_t i = 0; i < x.size(); ++i) {
                prod.push_back(x[i] * z[i]);
                ratio.push_back(x[i] / z[i]);
            }
            const double bar = std::max({floor, single[a], single[b]});
            const std::string fa = testkit::col(a), fb = testkit::col(b);
            if (a < b) {
                const double s = oracle_rank_association(prod, y, 2);
                if (s > bar) scored.emplace_back(s, "multiply(" + fa + "," + fb + ")");
            }
            const double s = oracle_rank_association(ratio, y, 2);
            if (s > bar) scored.emplace_back(s, "divide(" + fa + "," + fb + ")");
        }
    }
    std::sort(scored.begin(), scored.end(), [](const auto& l, const auto& r) { return l.first > r.first; });
    REQUIRE(scored.size() >= 2);
    if (scored.size() > 2) REQUIRE(scored[1].first > scored[2].first);

    std::set<std::string> expected{scored[0].second, scored[1].second};
    std::set<std::string> got;
    for (const auto& a : p.actions) {
        const auto& g = std::get<GenerateAction>(a);
        got.insert(g.op + "(" + g.operands[0] + "," + g.operands[1] + ")");
        CHECK((g.op == "multiply" || g.op == "divide"));
        for (const auto& o : g.operands) CHECK((o == "f1" || o == "f2"));
    }
    CHECK(got == expected);
    CHECK(scripted_propose(AgentStrategy::InteractionBinary, 7, ctx) == p);
}

TEST_CASE("scripted edge cases") {
    const auto d = testkit::synthetic_multiclass(80, 3, 4);
    auto ctx = make_ctx(d, 0);
    for (auto tag : {AgentStrategy::NonlinearUnary, AgentStrategy::InteractionBinary, AgentStrategy::Balanced}) {
        CHECK(scripted_propose(tag, 1, ctx).actions.empty());
    }

    auto one = make_ctx(d, 2, FeatureSubset({FeatureExpr::base("f1")}));
    const auto p = scripted_propose(AgentStrategy::InteractionBinary, 1, one);
    REQUIRE(p.generate_count() > 0);
    for (const auto& a : p.actions) CHECK(std::get<GenerateAction>(a).operands.size() == 1);
}

TEST_CASE("negative delta switches to the secondary family") {
    const auto d = testkit::synthetic_multiclass(120, 5, 4);
    auto ctx = make_ctx(d, 3);
    ctx.feedback.push_back({1, EvalReport{}, 0.01});
    const auto up_u = ops_in(scripted_propose(AgentStrategy::NonlinearUnary, 2, ctx));
    const auto up_b = ops_in(scripted_propose(AgentStrategy::InteractionBinary, 2, ctx));
    ctx.feedback.push_back({2, EvalReport{}, -0.02});
    const auto down_u = ops_in(scripted_propose(AgentStrategy::NonlinearUnary, 2, ctx));
    const auto down_b = ops_in(scripted_propose(AgentStrategy::InteractionBinary, 2, ctx));

    const std::set<std::string> unary1{"square", "sqrt", "log", "cube", "sigmoid"};
    const std::set<std::string> unary2{"cos", "sin", "tan", "exp", "reciprocal"};
    const std::set<std::string> binary2{"plus", "subtract"};
    REQUIRE_FALSE(up_u.empty());
    REQUIRE_FALSE(down_u.empty());
    for (const auto& o : up_u) CHECK(unary1.count(o));
    for (const auto& o : down_u) CHECK(unary2.count(o));
    for (const auto& o : down_b) CHECK((binary2.count(o) || unary2.count(o)));
    CHECK(up_b != down_b);
}

TEST_CASE("scripted proposals are valid and pure") {
    std::mt19937_64 rng(99);
    for (int i = 0; i < 60; ++i) {
        const std::size_t n = 40 + rng() % 60;
        const std::uint64_t seed = rng();
        const auto d = testkit::synthetic_multiclass(n, seed, 3 + rng() % 4);
        auto ctx = make_ctx(d, rng() % 5);
        ctx.iteration = 1 + rng() % 4;
        if (rng() % 2) {
            // grow the subset once so drops and depth limits come into play
            const auto first = scripted_propose(AgentStrategy::Balanced, i, ctx);
            const auto grown = apply_proposal(ctx.subset, first);
            auto next = make_ctx(d, ctx.k_max, grown);
            next.last_added.clear();
            for (const auto& n : grown.names()) {
                if (!ctx.subset.contains(n)) next.last_added.push_back(n);
            }
            next.feedback.push_back({1, EvalReport{}, rng() % 2 ? 0.01 : -0.01});
            next.max_depth = 1 + rng() % 3;
            next.drops_enabled = rng() % 2;
            ctx = next;
        }
        for (auto tag : {AgentStrategy::NonlinearUnary, AgentStrategy::InteractionBinary, AgentStrategy::Balanced}) {
            const auto seed = rng();
            const auto p = scripted_propose(tag, seed, ctx);
            CHECK_NOTHROW(validate_proposal(p, ctx));
            CHECK(p.generate_count() <= ctx.k_max);
            CHECK(scripted_propose(tag, seed, ctx) == p);
            CHECK_FALSE(p.rationale.empty());
        }
    }
}

TEST_CASE("default team covers the three strategies") {
    std::set<AgentStrategy> seen{default_strategy(0), default_strategy(1), default_strategy(2)};
    CHECK(seen.size() == 3);
    for (auto s : seen) CHECK(parse_strategy(strategy_name(s)) == s);
    CHECK_THROWS_AS(parse_strategy("greedy"), Error);
}

TEST_CASE("parse_response examples") {
    const auto d = testkit::synthetic_multiclass(30, 1, 4);
    auto ctx = make_ctx(d, 3);
    const auto p = parse_response("```\nGEN multiply f1 f2\nRATIONALE: interaction\n```", ctx);
    REQUIRE(p.actions.size() == 1);
    CHECK(std::get<GenerateAction>(p.actions[0]) == GenerateAction{"multiply", {"f1", "f2"}});
    CHECK(p.rationale == "interaction");

    const auto prose = parse_response("Sure! Here you go:\n```text\nGEN sqrt f3\nRATIONALE: a\nb\n```\nthanks", ctx);
    CHECK(prose.generate_count() == 1);

    CHECK(reason_of("GEN modulo f1 f2", ctx) == MalformedReason::UnknownOperation);
    CHECK(reason_of("GEN log f1 f2", ctx) == MalformedReason::ArityMismatch);
    CHECK(reason_of("", ctx) == MalformedReason::EmptyResponse);
    CHECK(reason_of("GEN sqrt f9", ctx) == MalformedReason::UnknownFeature);
    CHECK(reason_of("MAKE sqrt f1", ctx) == MalformedReason::SyntaxError);
    CHECK(reason_of("GEN sqrt f1\nGEN sqrt f2\nGEN sqrt f3\nGEN sqrt f4", ctx) == MalformedReason::TooManyGenerates);
    CHECK(reason_of("DROP f1", ctx) == MalformedReason::DropOfOriginal);
    ctx.drops_enabled = false;
    CHECK(reason_of("DROP f1", ctx) == MalformedReason::DropsDisabled);
    ctx.allowed_ops = {"sqrt"};
    CHECK(reason_of("GEN log f1", ctx) == MalformedReason::DisallowedOperation);
    ctx.allowed_ops = all_ops();
    ctx.max_depth = 1;
    ctx.subset.insert(FeatureExpr::apply("sqrt", {FeatureExpr::base("f1")}));
    CHECK(reason_of("GEN log sqrt(f1)", ctx) == MalformedReason::DepthExceeded);
}

TEST_CASE("render then parse is the identity") {
    const auto d = testkit::synthetic_multiclass(30, 2, 3);
    auto ctx = make_ctx(d, 3);
    ctx.subset.insert(FeatureExpr::apply("square", {FeatureExpr::base("f2")}));
    AgentProposal p;
    p.actions.push_back(DropAction{"square(f2)"});
    p.actions.push_back(GenerateAction{"divide", {"f3", "f1"}});
    p.actions.push_back(GenerateAction{"cos", {"square(f2)"}});
    p.rationale = "ratios first; then a periodic view";
    CHECK(parse_response(render_response(p), ctx) == p);
    p.rationale.clear();
    CHECK(parse_response(render_response(p), ctx) == p);
}

TEST_CASE("apply_proposal drops then adds") {
    FeatureSubset s({FeatureExpr::base("f1"), FeatureExpr::base("f2"),
                     FeatureExpr::apply("sqrt", {FeatureExpr::base("f1")})});
    AgentProposal p;
    p.actions.push_back(GenerateAction{"plus", {"f2", "f1"}});
    p.actions.push_back(DropAction{"sqrt(f1)"});
    p.actions.push_back(GenerateAction{"plus", {"f1", "f2"}});
    const auto out = apply_proposal(s, p);
    CHECK(out.names() == std::vector<std::string>{"f1", "f2", "plus(f1,f2)"});
}

TEST_CASE("prompt sections") {
    const auto d = testkit::synthetic_multiclass(30, 2, 3);
    auto ctx = make_ctx(d, 3);
    auto first = build_prompt(ctx);
    const auto a = first.find("## Feature Engineering");
    const auto b = first.find("## Iterative Refinement and Evaluation");
    const auto c = first.find("## Markdown and Organization");
    REQUIRE(a != std::string::npos);
    REQUIRE(b != std::string::npos);
    REQUIRE(c != std::string::npos);
    CHECK(a < b);
    CHECK(b < c);
    const auto sentinel = first.find(kNoFeedbackSentinel);
    CHECK(sentinel > b);
    CHECK(sentinel < c);
    CHECK(first.find("Available operations: sqrt, square, cos, sin, tan, exp, cube, log, reciprocal, sigmoid, plus, "
                     "subtract, multiply, divide\n") != std::string::npos);
    for (const auto& n : ctx.subset.names()) CHECK(first.find("| " + n + " |") != std::string::npos);
    CHECK(first.find("GEN <op> <feature> <feature>") > c);

    for (std::size_t t = 1; t <= 3; ++t) ctx.feedback.push_back({t, EvalReport{}, 0.01 * t});
    ctx.peer_rationales.push_back({2, "squares help"});
    const auto later = build_prompt(ctx);
    CHECK(later.find(kNoFeedbackSentinel) == std::string::npos);
    std::size_t rows = 0;
    for (std::size_t t = 1; t <= 3; ++t) rows += later.find("\n| " + std::to_string(t) + " | ") != std::string::npos;
    CHECK(rows == 3);
    CHECK(later.find("agent 2: squares help") != std::string::npos);
}

TEST_CASE("llm agent retries malformed replies then degrades") {
    const auto d = testkit::synthetic_multiclass(30, 2, 3);
    const auto ctx = make_ctx(d, 2);
    auto t = std::make_shared<FakeTransport>();
    LlmSettings s;
    s.retries = 2;
    LlmAgent agent(t, s, "interactions");
    const auto p = agent.propose(ctx);
    CHECK(p.actions.empty());
    CHECK(p.rationale.find("degraded") != std::string::npos);
    CHECK(t->seen.size() == 3);
    // each retry carries the rejected reply and the reason
    CHECK(t->seen[1].messages.size() == t->seen[0].messages.size() + 2);
    CHECK(t->seen[0].messages[0].role == "system");
    CHECK(t->seen[0].messages[0].content.find("interactions") != std::string::npos);
}

TEST_CASE("llm agent recovers on a later attempt") {
    const auto d = testkit::synthetic_multiclass(30, 2, 3);
    const auto ctx = make_ctx(d, 2);
    auto t = std::make_shared<FakeTransport>();
    t->replies = {"```\nGEN modulo f1 f2\n```", "```\nGEN square f1\nRATIONALE: curvature\n```"};
    t->fail_first = 1;
    LlmAgent agent(t, LlmSettings{}, "unary");
    const auto p = agent.propose(ctx);
    CHECK(p.generate_count() == 1);
    CHECK(p.rationale == "curvature");
    CHECK(t->seen.size() == 3);
}

TEST_CASE("llm agent unavailable after the retry budget") {
    const auto d = testkit::synthetic_multiclass(30, 2, 3);
    const auto ctx = make_ctx(d, 2);
    auto t = std::make_shared<FakeTransport>();
    t->fail_first = 100;
    LlmSettings s;
    s.retries = 2;
    LlmAgent agent(t, s, "x");
    try {
        agent.propose(ctx);
        FAIL("expected AgentUnavailable");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::AgentUnavailable);
    }
    CHECK(t->seen.size() == 3);
}

TEST_CASE("chat request body and reply extraction") {
    ChatRequest r;
    r.model = "m1";
    r.temperature = 0.25;
    r.messages = {{"system", "be brief"}, {"user", "hi \"there\""}};
    const auto j = nlohmann::json::parse(HttpChatTransport::request_body(r));
    CHECK(j["model"] == "m1");
    CHECK(j["temperature"] == 0.25);
    REQUIRE(j["messages"].size() == 2);
    CHECK(j["messages"][1]["role"] == "user");
    CHECK(j["messages"][1]["content"] == "hi \"there\"");

    CHECK(HttpChatTransport::extract_text(R"({"choices":[{"message":{"role":"assistant","content":"ok"}}]})") == "ok");
    CHECK(HttpChatTransport::extract_text(R"({"choices":[{"text":"legacy"}]})") == "legacy");
    CHECK(HttpChatTransport::extract_text(R"({"text":"plain"})") == "plain");
    CHECK_THROWS_AS(HttpChatTransport::extract_text("not json"), TransportError);
    CHECK_THROWS_AS(HttpChatTransport::extract_text(R"({"choices":[]})"), TransportError);
}

TEST_CASE("http transport against a local server") {
    httplib::Server server;
    std::string auth, body, path;
    server.Post(R"(/v1/chat/completions)", [&](const httplib::Request& req, httplib::Response& res) {
        auth = req.get_header_value("Authorization");
        body = req.body;
        path = req.path;
        res.set_content(R"({"choices":[{"message":{"content":"```\nGEN square f1\n```"}}]})", "application/json");
    });
    server.Post("/broken/chat/completions",
                [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ::setenv("LFG_TEST_KEY", "sk-test", 1);
    LlmSettings s;
    s.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1/";
    s.api_key_env = "LFG_TEST_KEY";
    s.timeout = std::chrono::seconds(5);
    HttpChatTransport t(s);
    ChatRequest r;
    r.model = "local";
    r.messages = {{"user", "go"}};
    CHECK(t.complete(r) == "```\nGEN square f1\n```");
    CHECK(auth == "Bearer sk-test");
    CHECK(path == "/v1/chat/completions");
    CHECK(nlohmann::json::parse(body)["model"] == "local");

    s.base_url = "http://127.0.0.1:" + std::to_string(port) + "/broken";
    CHECK_THROWS_AS(HttpChatTransport(s).complete(r), TransportError);

    server.stop();
    th.join();
    ::unsetenv("LFG_TEST_KEY");
}
