#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <unordered_set>

#include "lfg/agents.hpp"
#include "lfg/rng.hpp"

namespace lfg {

std::string_view strategy_name(AgentStrategy s) {
    switch (s) {
        case AgentStrategy::NonlinearUnary: return "nonlinear-unary";
        case AgentStrategy::InteractionBinary: return "interaction-binary";
        case AgentStrategy::Balanced: return "balanced";
    }
    return "balanced";
}

AgentStrategy parse_strategy(std::string_view name) {
    if (name == "nonlinear-unary") return AgentStrategy::NonlinearUnary;
    if (name == "interaction-binary") return AgentStrategy::InteractionBinary;
    if (name == "balanced") return AgentStrategy::Balanced;
    throw Error(ErrorCode::ConfigError, "unknown agent strategy '" + std::string(name) + "'");
}

AgentStrategy default_strategy(std::size_t agent_index) {
    static constexpr std::array<AgentStrategy, 3> kRotation{
        AgentStrategy::NonlinearUnary, AgentStrategy::InteractionBinary, AgentStrategy::Balanced};
    return kRotation[agent_index % kRotation.size()];
}

double class_association(std::span<const double> values, std::span<const int> labels, int n_classes) {
    const std::size_t n = values.size();
    if (n == 0 || labels.size() != n) return 0.0;
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
    double sxx = 0.0;
    for (double v : values) sxx += (v - mean) * (v - mean);
    if (!(sxx > 0.0) || !std::isfinite(sxx)) return 0.0;

    std::vector<double> class_sum(static_cast<std::size_t>(std::max(n_classes, 1)), 0.0);
    std::vector<std::size_t> class_n(class_sum.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = static_cast<std::size_t>(labels[i]);
        if (c >= class_sum.size()) continue;
        class_sum[c] += values[i] - mean;
        ++class_n[c];
    }
    // With centered x, cov(x, 1[y=c]) * n = sum over class c of (x - mean).
    double best = 0.0;
    for (std::size_t c = 0; c < class_sum.size(); ++c) {
        const double p = static_cast<double>(class_n[c]) / static_cast<double>(n);
        if (p <= 0.0 || p >= 1.0) continue;
        const double corr = class_sum[c] / std::sqrt(sxx * static_cast<double>(n) * p * (1.0 - p));
        best = std::max(best, std::fabs(corr));
    }
    return best;
}

double rank_association(std::span<const double> values, std::span<const int> labels, int n_classes) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + j);
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mid;
        i = j + 1;
    }
    return class_association(ranks, labels, n_classes);
}

namespace {

constexpr std::array<std::string_view, 5> kUnaryPrimary{"square", "sqrt", "log", "cube", "sigmoid"};
constexpr std::array<std::string_view, 5> kUnarySecondary{"cos", "sin", "tan", "exp", "reciprocal"};
constexpr std::array<std::string_view, 2> kBinaryPrimary{"multiply", "divide"};
constexpr std::array<std::string_view, 2> kBinarySecondary{"plus", "subtract"};

// Pair scoring is quadratic in the feature count; wide tables are first
// narrowed to the features with the strongest individual class association.
constexpr std::size_t kMaxPairFeatures = 48;

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

struct Candidate {
    std::string name;
    GenerateAction action;
    double score = 0.0;
    std::uint64_t tiebreak = 0;
};

class Policy {
public:
    Policy(AgentStrategy tag, std::uint64_t seed, const AgentContext& ctx)
        : tag_(tag), seed_(seed), ctx_(ctx) {
        const auto delta = ctx.last_delta();
        secondary_ = delta && *delta < 0.0;
        for (const auto& name : ctx.subset.names()) taken_.insert(name);
        taken_.insert(ctx.avoid.begin(), ctx.avoid.end());
        if (ctx.drops_enabled && ctx.view) plan_drops();
        if (ctx.view) {
            for (std::size_t i = 0; i < ctx.view->names.size(); ++i) {
                const auto& name = ctx.view->names[i];
                if (std::find(drops_.begin(), drops_.end(), name) != drops_.end()) continue;
                const FeatureExpr* e = ctx.subset.find(name);
                if (e && e->depth() < ctx.max_depth) eligible_.push_back(i);
            }
        }
    }

    AgentProposal run() {
        AgentProposal p;
        for (const auto& d : drops_) p.actions.push_back(DropAction{d});
        if (ctx_.k_max == 0 || eligible_.empty()) {
            p.rationale = describe(0);
            return p;
        }

        std::size_t generated = 0;
        for (std::size_t slot = 0; slot < ctx_.k_max; ++slot) {
            std::optional<Candidate> pick;
            if (wants_binary(slot)) pick = next_binary();
            if (!pick && (tag_ != AgentStrategy::InteractionBinary || eligible_.size() < 2)) pick = next_unary();
            if (!pick && !wants_binary(slot)) pick = next_binary();
            if (!pick && tag_ == AgentStrategy::InteractionBinary) pick = next_refine();
            if (!pick) break;
            taken_.insert(pick->name);
            chosen_.push_back(*pick);
            p.actions.push_back(pick->action);
            ++generated;
        }
        p.rationale = describe(generated);
        return p;
    }

private:
    bool wants_binary(std::size_t slot) const {
        switch (tag_) {
            case AgentStrategy::NonlinearUnary: return false;
            case AgentStrategy::InteractionBinary: return true;
            case AgentStrategy::Balanced: return (slot + ctx_.iteration) % 2 == 1;
        }
        return false;
    }

    std::vector<const Operation*> ops_for(int arity) const {
        std::span<const std::string_view> primary = arity == 1 ? std::span<const std::string_view>(kUnaryPrimary)
                                                               : std::span<const std::string_view>(kBinaryPrimary);
        std::span<const std::string_view> secondary = arity == 1
                                                          ? std::span<const std::string_view>(kUnarySecondary)
                                                          : std::span<const std::string_view>(kBinarySecondary);
        auto pick = [&](std::span<const std::string_view> family) {
            std::vector<const Operation*> out;
            for (auto name : family) {
                if (ctx_.op_allowed(name)) out.push_back(&lookup(name));
            }
            return out;
        };
        auto ops = pick(secondary_ ? secondary : primary);
        if (ops.empty()) ops = pick(secondary_ ? primary : secondary);
        if (ops.empty()) {
            for (const auto& op : operation_registry()) {
                if (op.arity == arity && ctx_.op_allowed(op.name)) ops.push_back(&op);
            }
        }
        return ops;
    }

    double noise_floor() const {
        return 3.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(ctx_.view->labels.size(), 1)));
    }

    // After a bad step, drop what it added unless it carries label signal.
    // Once some generated feature clears the noise floor, prune the generated
    // columns that do not.
    void plan_drops() {
        const double floor = noise_floor();
        const auto& names = ctx_.view->names;
        std::vector<double> strength(names.size());
        for (std::size_t i = 0; i < names.size(); ++i) strength[i] = pair_score(column(i));
        auto index_of = [&](const std::string& n) {
            return static_cast<std::size_t>(std::find(names.begin(), names.end(), n) - names.begin());
        };
        if (secondary_) {
            for (const auto& n : ctx_.last_added) {
                const auto i = index_of(n);
                if (i < names.size() && !ctx_.original_columns.count(n) && !(strength[i] > floor)) drops_.push_back(n);
            }
        }
        bool anchored = false;
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (ctx_.original_columns.count(names[i]) || strength[i] <= floor) continue;
            if (std::find(drops_.begin(), drops_.end(), names[i]) == drops_.end()) anchored = true;
        }
        if (!anchored) return;
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (strength[i] > floor || ctx_.original_columns.count(names[i])) continue;
            if (std::find(drops_.begin(), drops_.end(), names[i]) == drops_.end()) drops_.push_back(names[i]);
        }
    }

    const std::vector<double>& column(std::size_t i) const { return ctx_.view->columns[i]; }
    const std::string& name(std::size_t i) const { return ctx_.view->names[i]; }

    double score(std::span<const double> values) const {
        return class_association(values, ctx_.view->labels, ctx_.view->n_classes);
    }

    // Products and ratios are heavy-tailed, so pairs are ranked on ranks.
    double pair_score(std::span<const double> values) const {
        return rank_association(values, ctx_.view->labels, ctx_.view->n_classes);
    }

    std::uint64_t tiebreak(const std::string& candidate) const {
        return mix_seed(seed_ ^ fnv1a(candidate), ctx_.iteration);
    }

    static bool better(const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.tiebreak < b.tiebreak;
    }

    // Unary action on the highest-variance feature that still yields a new,
    // in-domain column.
    std::optional<Candidate> next_unary() {
        const auto ops = ops_for(1);
        if (ops.empty()) return std::nullopt;
        std::vector<std::pair<double, std::size_t>> by_variance;
        for (auto i : eligible_) {
            const auto& col = column(i);
            const double mean = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(col.size());
            double ss = 0.0;
            for (double v : col) ss += (v - mean) * (v - mean);
            by_variance.emplace_back(ss / static_cast<double>(col.size()), i);
        }
        std::stable_sort(by_variance.begin(), by_variance.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (const auto& [var, i] : by_variance) {
            if (unary_used_.count(i)) continue;
            std::optional<Candidate> best;
            for (const Operation* op : ops) {
                Candidate c;
                c.name = std::string(op->name) + "(" + name(i) + ")";
                if (taken_.count(c.name)) continue;
                try {
                    c.score = score(apply_unary(*op, column(i)));
                } catch (const DomainViolation&) {
                    continue;
                }
                c.action = GenerateAction{std::string(op->name), {name(i)}};
                c.tiebreak = tiebreak(c.name);
                if (!best || better(c, *best)) best = std::move(c);
            }
            if (best) {
                unary_used_.insert(i);
                return best;
            }
        }
        return std::nullopt;
    }

    // Unary op on a generated feature that already carries signal, kept only
    // when it makes that signal more linear (e.g. squashing a ratio's tails).
    std::optional<Candidate> next_refine() {
        const auto ops = ops_for(1);
        const double floor = noise_floor();
        std::optional<Candidate> best;
        std::size_t best_i = 0;
        for (auto i : eligible_) {
            if (unary_used_.count(i) || ctx_.original_columns.count(name(i))) continue;
            if (!(pair_score(column(i)) > floor)) continue;
            const double base = score(column(i));
            for (const Operation* op : ops) {
                Candidate c;
                c.name = std::string(op->name) + "(" + name(i) + ")";
                if (taken_.count(c.name)) continue;
                try {
                    c.score = score(apply_unary(*op, column(i)));
                } catch (const DomainViolation&) {
                    continue;
                }
                if (!(c.score > base)) continue;
                c.action = GenerateAction{std::string(op->name), {name(i)}};
                c.tiebreak = tiebreak(c.name);
                if (!best || better(c, *best)) {
                    best = std::move(c);
                    best_i = i;
                }
            }
        }
        if (best) unary_used_.insert(best_i);
        return best;
    }

    void build_pair_candidates() {
        if (pairs_built_) return;
        pairs_built_ = true;
        const auto ops = ops_for(2);
        std::vector<std::size_t> pool = eligible_;
        if (pool.size() > kMaxPairFeatures) {
            std::vector<std::pair<double, std::size_t>> ranked;
            for (auto i : pool) ranked.emplace_back(pair_score(column(i)), i);
            std::stable_sort(ranked.begin(), ranked.end(),
                             [](const auto& a, const auto& b) { return a.first > b.first; });
            pool.clear();
            for (std::size_t k = 0; k < kMaxPairFeatures; ++k) pool.push_back(ranked[k].second);
            std::sort(pool.begin(), pool.end());
        }
        // A pair qualifies only when the combination separates the classes
        // better than either operand and clears the noise level of a
        // correlation estimated from n rows, with room for many pairs tried.
        const double floor = noise_floor();
        std::map<std::size_t, double> single;
        for (auto i : pool) single[i] = pair_score(column(i));
        for (std::size_t a = 0; a < pool.size(); ++a) {
            for (std::size_t b = a + 1; b < pool.size(); ++b) {
                const double bar = std::max({floor, single[pool[a]], single[pool[b]]});
                for (const Operation* op : ops) {
                    std::vector<std::pair<std::size_t, std::size_t>> orders{{pool[a], pool[b]}};
                    if (op->id == OpId::Divide) orders.emplace_back(pool[b], pool[a]);
                    for (const auto& [l, r] : orders) {
                        const FeatureExpr expr = FeatureExpr::binary(*op, *ctx_.subset.find(name(l)),
                                                                     *ctx_.subset.find(name(r)));
                        if (taken_.count(expr.canonical_name())) continue;
                        Candidate c;
                        try {
                            c.score = pair_score(apply_binary(*op, column(l), column(r)));
                        } catch (const DomainViolation&) {
                            continue;
                        }
                        if (!(c.score > bar)) continue;
                        c.name = expr.canonical_name();
                        c.action = GenerateAction{std::string(op->name), {name(l), name(r)}};
                        c.tiebreak = tiebreak(c.name);
                        pair_candidates_.push_back(std::move(c));
                    }
                }
            }
        }
        std::stable_sort(pair_candidates_.begin(), pair_candidates_.end(), better);
    }

    // Binary action on the best-scoring unused feature pair.
    std::optional<Candidate> next_binary() {
        if (eligible_.size() < 2) return std::nullopt;
        build_pair_candidates();
        for (const auto& c : pair_candidates_) {
            if (taken_.count(c.name)) continue;
            return c;
        }
        return std::nullopt;
    }

    std::string describe(std::size_t generated) const {
        std::string text(strategy_name(tag_));
        text += secondary_ ? " policy, secondary operation family" : " policy, primary operation family";
        if (const auto delta = ctx_.last_delta()) {
            char buf[48];
            std::snprintf(buf, sizeof buf, " (previous delta %+.4f)", *delta);
            text += buf;
        }
        text += ".";
        if (!drops_.empty()) text += " Dropping " + std::to_string(drops_.size()) + " weak feature(s).";
        if (generated == 0) return text + " No new feature qualified.";
        text += " Generated:";
        for (std::size_t i = 0; i < chosen_.size(); ++i) {
            char buf[32];
            std::snprintf(buf, sizeof buf, " (class association %.3f)", chosen_[i].score);
            text += (i ? "; " : " ") + chosen_[i].name + buf;
        }
        return text + ".";
    }

    AgentStrategy tag_;
    std::uint64_t seed_;
    const AgentContext& ctx_;
    bool secondary_ = false;
    std::vector<std::string> drops_;
    std::vector<std::size_t> eligible_;
    std::unordered_set<std::string> taken_;
    std::set<std::size_t> unary_used_;
    bool pairs_built_ = false;
    std::vector<Candidate> pair_candidates_;
    std::vector<Candidate> chosen_;
};

}  // namespace

AgentProposal scripted_propose(AgentStrategy tag, std::uint64_t seed, const AgentContext& ctx) {
    AgentProposal p = Policy(tag, seed, ctx).run();
    validate_proposal(p, ctx);
    return p;
}

}  // namespace lfg
