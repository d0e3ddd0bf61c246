#include <cstdio>
#include <sstream>

#include "lfg/agents.hpp"

namespace lfg {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::string signed_fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.4f", v);
    return buf;
}

std::string general(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

}  // namespace

std::string build_prompt(const AgentContext& ctx, const PromptTemplate& tmpl) {
    std::ostringstream out;

    out << "## Feature Engineering\n\n";
    out << tmpl.task_description << "\n\n";
    if (!ctx.task.description.empty()) out << ctx.task.description << "\n";
    out << "Samples: " << ctx.task.n_samples << "; classes: " << ctx.task.n_classes
        << "; downstream model: " << ctx.task.model_tag << "; feedback metric: " << metric_name(ctx.task.metric)
        << ".\n\n";
    out << "Current features (" << ctx.subset.size() << "):\n\n";
    out << "| feature | kind | mean | std | min | max |\n";
    out << "|---|---|---|---|---|---|\n";
    for (const auto& s : ctx.summaries) {
        out << "| " << s.name << " | " << (s.generated ? "generated" : "original") << " | " << general(s.mean)
            << " | " << general(s.stddev) << " | " << general(s.min) << " | " << general(s.max) << " |\n";
    }
    out << "\nAvailable operations:";
    for (std::size_t i = 0; i < ctx.allowed_ops.size(); ++i) out << (i ? ", " : " ") << ctx.allowed_ops[i];
    out << "\n\n";
    out << "Unary operations take one feature, binary operations take two. Use at most " << ctx.k_max
        << " GEN actions; operands must be current feature names; expressions may nest at most " << ctx.max_depth
        << " operations deep.";
    if (ctx.drops_enabled) {
        out << " DROP may remove previously generated features, never original ones.";
    } else {
        out << " DROP actions are disabled.";
    }
    out << "\n\n";
    if (!ctx.avoid.empty()) {
        out << "Already tried from this feature set, do not repeat:";
        for (std::size_t i = 0; i < ctx.avoid.size(); ++i) out << (i ? ", " : " ") << ctx.avoid[i];
        out << "\n\n";
    }

    out << "## Iterative Refinement and Evaluation\n\n";
    if (ctx.baseline) {
        const auto& b = *ctx.baseline;
        out << "Raw-feature baseline: accuracy " << fmt(b.accuracy) << ", precision " << fmt(b.precision)
            << ", recall " << fmt(b.recall) << ", f1 " << fmt(b.f1) << ".\n\n";
    }
    if (ctx.feedback.empty()) {
        out << "There is " << kNoFeedbackSentinel << ": this is the first iteration.\n\n";
    } else {
        out << "Feedback from your previous iterations (delta is the change in " << metric_name(ctx.task.metric)
            << " against the iteration before):\n\n";
        out << "| t | accuracy | precision | recall | f1 | delta |\n";
        out << "|---|---|---|---|---|---|\n";
        for (const auto& f : ctx.feedback) {
            out << "| " << f.iteration << " | " << fmt(f.theta.accuracy) << " | " << fmt(f.theta.precision) << " | "
                << fmt(f.theta.recall) << " | " << fmt(f.theta.f1) << " | " << signed_fmt(f.delta) << " |\n";
        }
        out << "\nA positive delta means the last strategy was effective; refine it. A negative delta means it "
               "should be adjusted or replaced.\n\n";
    }
    if (ctx.peer_rationales.empty()) {
        out << "No peer reasoning has been shared yet.\n\n";
    } else {
        out << "Reasoning shared by the other agents in the previous round:\n\n";
        for (const auto& p : ctx.peer_rationales) out << "- agent " << p.agent_id << ": " << p.text << "\n";
        out << "\n";
    }

    out << "## Markdown and Organization\n\n";
    out << "Reply with exactly one fenced code block and nothing else. Inside the block write one action per "
           "line using this grammar:\n\n";
    out << "```\n";
    out << "GEN <op> <feature>\n";
    out << "GEN <op> <feature> <feature>\n";
    out << "DROP <feature>\n";
    out << "RATIONALE: <free text explaining your choices, to the end of the block>\n";
    out << "```\n\n";
    out << "Feature names must be copied exactly as listed above. The RATIONALE line comes last.\n";
    return out.str();
}

}  // namespace lfg
