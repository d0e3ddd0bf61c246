#include <algorithm>
#include <sstream>

#include "lfg/agents.hpp"

namespace lfg {

std::string_view malformed_reason_name(MalformedReason reason) {
    switch (reason) {
        case MalformedReason::EmptyResponse: return "EmptyResponse";
        case MalformedReason::SyntaxError: return "SyntaxError";
        case MalformedReason::UnknownOperation: return "UnknownOperation";
        case MalformedReason::UnknownFeature: return "UnknownFeature";
        case MalformedReason::ArityMismatch: return "ArityMismatch";
        case MalformedReason::TooManyGenerates: return "TooManyGenerates";
        case MalformedReason::DisallowedOperation: return "DisallowedOperation";
        case MalformedReason::DepthExceeded: return "DepthExceeded";
        case MalformedReason::DropOfOriginal: return "DropOfOriginal";
        case MalformedReason::DropsDisabled: return "DropsDisabled";
    }
    return "Unknown";
}

std::size_t AgentProposal::generate_count() const {
    return static_cast<std::size_t>(std::count_if(actions.begin(), actions.end(), [](const AgentAction& a) {
        return std::holds_alternative<GenerateAction>(a);
    }));
}

std::string render_action(const AgentAction& action) {
    if (const auto* g = std::get_if<GenerateAction>(&action)) {
        std::string line = "GEN " + g->op;
        for (const auto& o : g->operands) line += " " + o;
        return line;
    }
    return "DROP " + std::get<DropAction>(action).feature;
}

std::string render_response(const AgentProposal& proposal) {
    std::string out = "```\n";
    for (const auto& a : proposal.actions) out += render_action(a) + "\n";
    out += "RATIONALE: " + proposal.rationale + "\n```\n";
    return out;
}

namespace {

std::string_view trim(std::string_view s) {
    const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (!s.empty() && ws(s.front())) s.remove_prefix(1);
    while (!s.empty() && ws(s.back())) s.remove_suffix(1);
    return s;
}

std::vector<std::string> tokens(std::string_view line) {
    std::vector<std::string> out;
    std::istringstream in{std::string(line)};
    for (std::string t; in >> t;) out.push_back(std::move(t));
    return out;
}

std::string_view fenced_block(std::string_view text) {
    const auto open = text.find("```");
    if (open == std::string_view::npos) return text;
    auto body_start = text.find('\n', open);
    if (body_start == std::string_view::npos) throw MalformedResponse(MalformedReason::SyntaxError, "unterminated fence");
    ++body_start;
    const auto close = text.find("```", body_start);
    if (close == std::string_view::npos) throw MalformedResponse(MalformedReason::SyntaxError, "unterminated fence");
    return text.substr(body_start, close - body_start);
}

}  // namespace

AgentProposal parse_response(std::string_view text, const AgentContext& ctx) {
    if (trim(text).empty()) throw MalformedResponse(MalformedReason::EmptyResponse, "no content");
    const std::string_view block = fenced_block(text);

    AgentProposal proposal;
    bool saw_rationale = false;
    std::size_t pos = 0;
    while (pos <= block.size()) {
        auto eol = block.find('\n', pos);
        if (eol == std::string_view::npos) eol = block.size();
        const std::string_view raw = block.substr(pos, eol - pos);
        const std::string_view line = trim(raw);
        pos = eol + 1;
        if (line.empty()) continue;

        constexpr std::string_view kRationale = "RATIONALE:";
        if (line.starts_with(kRationale)) {
            // The rationale runs to the end of the block.
            const std::size_t offset = static_cast<std::size_t>(line.data() - block.data()) + kRationale.size();
            proposal.rationale = std::string(trim(block.substr(offset)));
            saw_rationale = true;
            break;
        }

        const auto tok = tokens(line);
        if (tok[0] == "GEN") {
            if (tok.size() < 3) {
                throw MalformedResponse(MalformedReason::SyntaxError, "GEN needs an operation and operands: '" +
                                                                          std::string(line) + "'");
            }
            if (!is_known_operation(tok[1])) {
                throw MalformedResponse(MalformedReason::UnknownOperation, "'" + tok[1] + "'");
            }
            proposal.actions.push_back(GenerateAction{tok[1], {tok.begin() + 2, tok.end()}});
        } else if (tok[0] == "DROP") {
            if (tok.size() != 2) {
                throw MalformedResponse(MalformedReason::SyntaxError, "DROP takes one feature: '" +
                                                                          std::string(line) + "'");
            }
            proposal.actions.push_back(DropAction{tok[1]});
        } else {
            throw MalformedResponse(MalformedReason::SyntaxError, "unrecognized line '" + std::string(line) + "'");
        }
    }
    if (proposal.actions.empty() && !saw_rationale) {
        throw MalformedResponse(MalformedReason::EmptyResponse, "no actions and no rationale");
    }
    validate_proposal(proposal, ctx);
    return proposal;
}

void validate_proposal(const AgentProposal& proposal, const AgentContext& ctx) {
    for (const auto& action : proposal.actions) {
        if (const auto* g = std::get_if<GenerateAction>(&action)) {
            if (!is_known_operation(g->op)) throw MalformedResponse(MalformedReason::UnknownOperation, "'" + g->op + "'");
            const Operation& op = lookup(g->op);
            if (g->operands.size() != static_cast<std::size_t>(op.arity)) {
                throw MalformedResponse(MalformedReason::ArityMismatch,
                                        "'" + g->op + "' takes " + std::to_string(op.arity) + " operand(s), got " +
                                            std::to_string(g->operands.size()));
            }
            std::size_t depth = 0;
            for (const auto& name : g->operands) {
                const FeatureExpr* e = ctx.subset.find(name);
                if (!e) throw MalformedResponse(MalformedReason::UnknownFeature, "'" + name + "'");
                depth = std::max(depth, e->depth() + 1);
            }
            if (!ctx.op_allowed(g->op)) {
                throw MalformedResponse(MalformedReason::DisallowedOperation, "'" + g->op + "' is not offered");
            }
            if (depth > ctx.max_depth) {
                throw MalformedResponse(MalformedReason::DepthExceeded,
                                        render_action(action) + " exceeds depth " + std::to_string(ctx.max_depth));
            }
        } else {
            const auto& d = std::get<DropAction>(action);
            if (!ctx.drops_enabled) throw MalformedResponse(MalformedReason::DropsDisabled, "'" + d.feature + "'");
            if (!ctx.subset.contains(d.feature)) {
                throw MalformedResponse(MalformedReason::UnknownFeature, "'" + d.feature + "'");
            }
            if (ctx.original_columns.count(d.feature)) {
                throw MalformedResponse(MalformedReason::DropOfOriginal, "'" + d.feature + "'");
            }
        }
    }
    if (proposal.generate_count() > ctx.k_max) {
        throw MalformedResponse(MalformedReason::TooManyGenerates, std::to_string(proposal.generate_count()) +
                                                                       " GEN actions, limit " +
                                                                       std::to_string(ctx.k_max));
    }
}

FeatureSubset apply_proposal(const FeatureSubset& parent, const AgentProposal& proposal) {
    FeatureSubset child = parent;
    for (const auto& a : proposal.actions) {
        if (const auto* d = std::get_if<DropAction>(&a)) child.erase(d->feature);
    }
    for (const auto& a : proposal.actions) {
        const auto* g = std::get_if<GenerateAction>(&a);
        if (!g) continue;
        std::vector<FeatureExpr> operands;
        for (const auto& name : g->operands) {
            const FeatureExpr* e = parent.find(name);
            if (!e) throw Error(ErrorCode::UnknownFeature, "'" + name + "' is not in the parent subset");
            operands.push_back(*e);
        }
        child.insert(FeatureExpr::apply(g->op, std::move(operands)));
    }
    return child;
}

}  // namespace lfg
