#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lfg/error.hpp"
#include "lfg/eval.hpp"
#include "lfg/expr.hpp"

namespace lfg {

// ---------------------------------------------------------------------------
// Context handed to an agent for one proposal.
// ---------------------------------------------------------------------------

struct FeedbackEntry {
    std::size_t iteration = 0;
    EvalReport theta;
    double delta = 0.0;  // primary metric, against the previous entry (or the raw baseline)
};

struct PeerRationale {
    std::size_t agent_id = 0;
    std::string text;
};

struct FeatureSummary {
    std::string name;
    double mean = 0.0;
    double stddev = 0.0;
    double min = 0.0;
    double max = 0.0;
    bool generated = false;
};

// Training-row values of the evaluable members of a subset.
struct FeatureView {
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;
    std::vector<int> labels;
    int n_classes = 0;
};

FeatureView make_feature_view(const FeatureSubset& subset, const Dataset& d, std::span<const std::size_t> rows,
                              EvalCache* cache = nullptr);
std::vector<FeatureSummary> summarize(const FeatureView& view, const std::set<std::string>& original_columns);

struct TaskInfo {
    std::string description;
    std::size_t n_samples = 0;
    int n_classes = 0;
    std::string model_tag;
    Metric metric = Metric::Accuracy;
};

struct AgentContext {
    std::size_t agent_id = 0;
    std::size_t iteration = 1;
    FeatureSubset subset;
    std::shared_ptr<const FeatureView> view;
    std::vector<FeatureSummary> summaries;
    std::optional<EvalReport> baseline;
    // Ascending by iteration.
    std::vector<FeedbackEntry> feedback;
    std::vector<PeerRationale> peer_rationales;
    // Features introduced by the node this context continues from.
    std::vector<std::string> last_added;
    // Features already produced from this subset by earlier expansions.
    std::vector<std::string> avoid;
    std::vector<std::string> allowed_ops;
    std::set<std::string> original_columns;
    std::size_t k_max = 3;
    std::size_t max_depth = kDefaultMaxDepth;
    bool drops_enabled = true;
    TaskInfo task;

    bool op_allowed(std::string_view name) const;
    std::optional<double> last_delta() const;
};

// ---------------------------------------------------------------------------
// Proposals and the line-oriented wire grammar:
//   GEN <op> <name> | GEN <op> <name> <name> | DROP <name> | RATIONALE: <text>
// ---------------------------------------------------------------------------

struct GenerateAction {
    std::string op;
    std::vector<std::string> operands;
    friend bool operator==(const GenerateAction&, const GenerateAction&) = default;
};

struct DropAction {
    std::string feature;
    friend bool operator==(const DropAction&, const DropAction&) = default;
};

using AgentAction = std::variant<GenerateAction, DropAction>;

struct AgentProposal {
    std::vector<AgentAction> actions;
    std::string rationale;

    std::size_t generate_count() const;
    friend bool operator==(const AgentProposal&, const AgentProposal&) = default;
};

std::string render_action(const AgentAction& action);

enum class MalformedReason {
    EmptyResponse,
    SyntaxError,
    UnknownOperation,
    UnknownFeature,
    ArityMismatch,
    TooManyGenerates,
    DisallowedOperation,
    DepthExceeded,
    DropOfOriginal,
    DropsDisabled,
};

std::string_view malformed_reason_name(MalformedReason reason);

class MalformedResponse : public Error {
public:
    MalformedResponse(MalformedReason reason, const std::string& detail)
        : Error(ErrorCode::MalformedResponse,
                std::string(malformed_reason_name(reason)) + ": " + detail),
          reason_(reason) {}

    MalformedReason reason() const noexcept { return reason_; }

private:
    MalformedReason reason_;
};

// Fenced block with one action per line and the rationale last.
std::string render_response(const AgentProposal& proposal);

// Parses the first fenced block (or the whole text when there is none) and
// validates it against `ctx`. Throws MalformedResponse.
AgentProposal parse_response(std::string_view text, const AgentContext& ctx);

// Throws MalformedResponse when the proposal breaks a context constraint.
void validate_proposal(const AgentProposal& proposal, const AgentContext& ctx);

// Applies a validated proposal: drops first, then generated features in
// order, skipping duplicates.
FeatureSubset apply_proposal(const FeatureSubset& parent, const AgentProposal& proposal);

// ---------------------------------------------------------------------------
// Prompting
// ---------------------------------------------------------------------------

struct PromptTemplate {
    std::string task_description =
        "You are an expert data scientist generating new features for a tabular classification task. "
        "Combine the current features with the available mathematical operations so that the "
        "downstream classifier improves.";
    std::string persona = "You are a feature-engineering agent working alongside other agents.";
};

inline constexpr std::string_view kNoFeedbackSentinel = "no prior feedback";

std::string build_prompt(const AgentContext& ctx, const PromptTemplate& tmpl = {});

// ---------------------------------------------------------------------------
// Agents
// ---------------------------------------------------------------------------

class Agent {
public:
    virtual ~Agent() = default;
    virtual AgentProposal propose(const AgentContext& ctx) = 0;
    virtual std::string strategy() const = 0;
};

enum class AgentStrategy { NonlinearUnary, InteractionBinary, Balanced };

std::string_view strategy_name(AgentStrategy s);
AgentStrategy parse_strategy(std::string_view name);
// Default assignment for agent i of a team: the three tags in rotation.
AgentStrategy default_strategy(std::size_t agent_index);

// Pure function of (tag, seed, ctx).
AgentProposal scripted_propose(AgentStrategy tag, std::uint64_t seed, const AgentContext& ctx);

// Class-separation score used by the scripted policy: the largest absolute
// Pearson correlation between `values` and a one-vs-rest class indicator.
double class_association(std::span<const double> values, std::span<const int> labels, int n_classes);
// The same score computed on mid-ranks of `values`.
double rank_association(std::span<const double> values, std::span<const int> labels, int n_classes);

class ScriptedAgent final : public Agent {
public:
    ScriptedAgent(AgentStrategy tag, std::uint64_t seed) : tag_(tag), seed_(seed) {}
    AgentProposal propose(const AgentContext& ctx) override { return scripted_propose(tag_, seed_, ctx); }
    std::string strategy() const override { return std::string(strategy_name(tag_)); }

private:
    AgentStrategy tag_;
    std::uint64_t seed_;
};

struct ChatMessage {
    std::string role;
    std::string content;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.7;
};

class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class LlmTransport {
public:
    virtual ~LlmTransport() = default;
    // Returns the generated text; throws TransportError.
    virtual std::string complete(const ChatRequest& request) = 0;
};

struct LlmSettings {
    std::string base_url = "https://api.openai.com/v1";
    std::string model = "gpt-3.5-turbo";
    double temperature = 0.7;
    std::chrono::seconds timeout{60};
    std::size_t retries = 2;
    std::string api_key_env = "LFG_LLM_API_KEY";
};

// OpenAI-compatible chat-completions endpoint: POST {base_url}/chat/completions
// with {"model","messages","temperature"}; the reply text is read from
// choices[0].message.content (or a top-level "text" field).
class HttpChatTransport final : public LlmTransport {
public:
    explicit HttpChatTransport(LlmSettings settings);
    std::string complete(const ChatRequest& request) override;

    static std::string request_body(const ChatRequest& request);
    static std::string extract_text(std::string_view response_body);

private:
    LlmSettings settings_;
};

class LlmAgent final : public Agent {
public:
    LlmAgent(std::shared_ptr<LlmTransport> transport, LlmSettings settings, std::string strategy_text,
             PromptTemplate tmpl = {});

    // Malformed replies are retried `settings.retries` times and then degrade
    // to an empty proposal; transport failures past the same budget throw
    // AgentUnavailable.
    AgentProposal propose(const AgentContext& ctx) override;
    std::string strategy() const override { return strategy_text_; }

private:
    std::shared_ptr<LlmTransport> transport_;
    LlmSettings settings_;
    std::string strategy_text_;
    PromptTemplate template_;
};

}  // namespace lfg
