#include <cstdlib>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <json.hpp>

#include "lfg/agents.hpp"

namespace lfg {

using nlohmann::json;

HttpChatTransport::HttpChatTransport(LlmSettings settings) : settings_(std::move(settings)) {}

std::string HttpChatTransport::request_body(const ChatRequest& request) {
    json body;
    body["model"] = request.model;
    body["temperature"] = request.temperature;
    body["messages"] = json::array();
    for (const auto& m : request.messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    return body.dump();
}

std::string HttpChatTransport::extract_text(std::string_view response_body) {
    const json j = json::parse(response_body, nullptr, false);
    if (j.is_discarded()) throw TransportError("response is not JSON");
    if (j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
        const auto& choice = j["choices"][0];
        if (choice.contains("message") && choice["message"].contains("content") &&
            choice["message"]["content"].is_string()) {
            return choice["message"]["content"].get<std::string>();
        }
        if (choice.contains("text") && choice["text"].is_string()) return choice["text"].get<std::string>();
    }
    if (j.contains("text") && j["text"].is_string()) return j["text"].get<std::string>();
    throw TransportError("response carries no generated text");
}

std::string HttpChatTransport::complete(const ChatRequest& request) {
    // Split "https://host[:port]/prefix" into the client origin and path prefix.
    const std::string& url = settings_.base_url;
    const auto scheme_end = url.find("://");
    const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    const std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
    std::string prefix = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

    httplib::Client client(origin);
    const auto timeout = static_cast<time_t>(settings_.timeout.count());
    client.set_connection_timeout(timeout, 0);
    client.set_read_timeout(timeout, 0);
    client.set_write_timeout(timeout, 0);

    httplib::Headers headers;
    if (const char* key = std::getenv(settings_.api_key_env.c_str()); key && *key) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    auto res = client.Post(prefix + "/chat/completions", headers, request_body(request), "application/json");
    if (!res) throw TransportError("request failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300) {
        throw TransportError("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    }
    return extract_text(res->body);
}

LlmAgent::LlmAgent(std::shared_ptr<LlmTransport> transport, LlmSettings settings, std::string strategy_text,
                   PromptTemplate tmpl)
    : transport_(std::move(transport)),
      settings_(std::move(settings)),
      strategy_text_(std::move(strategy_text)),
      template_(std::move(tmpl)) {}

AgentProposal LlmAgent::propose(const AgentContext& ctx) {
    ChatRequest request;
    request.model = settings_.model;
    request.temperature = settings_.temperature;
    request.messages.push_back({"system", template_.persona + " Your strategy: " + strategy_text_ + "."});
    request.messages.push_back({"user", build_prompt(ctx, template_)});

    std::string last_problem;
    for (std::size_t attempt = 0; attempt <= settings_.retries; ++attempt) {
        std::string reply;
        try {
            reply = transport_->complete(request);
        } catch (const TransportError& e) {
            last_problem = e.what();
            if (attempt == settings_.retries) {
                throw Error(ErrorCode::AgentUnavailable, "agent " + std::to_string(ctx.agent_id) +
                                                             " unreachable after " + std::to_string(attempt + 1) +
                                                             " attempts: " + last_problem);
            }
            continue;
        }
        try {
            return parse_response(reply, ctx);
        } catch (const MalformedResponse& e) {
            last_problem = e.what();
            request.messages.push_back({"assistant", reply});
            request.messages.push_back({"user", std::string("Your reply was rejected (") + e.what() +
                                                    "). Answer again with one fenced block that follows the grammar."});
        }
    }
    AgentProposal degraded;
    degraded.rationale = "degraded to an empty proposal after " + std::to_string(settings_.retries + 1) +
                         " malformed replies; last error: " + last_problem;
    return degraded;
}

}  // namespace lfg
