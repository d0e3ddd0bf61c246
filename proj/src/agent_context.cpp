#include <algorithm>
#include <cmath>
#include <numeric>

#include "lfg/agents.hpp"

namespace lfg {

FeatureView make_feature_view(const FeatureSubset& subset, const Dataset& d, std::span<const std::size_t> rows,
                              EvalCache* cache) {
    FeatureView view;
    view.n_classes = d.n_classes();
    const auto labels = d.labels();
    view.labels.reserve(rows.size());
    for (auto r : rows) view.labels.push_back(labels[r]);
    for (const auto& e : subset.exprs()) {
        std::shared_ptr<const std::vector<double>> full;
        try {
            full = evaluate_cached(e, d, cache);
        } catch (const DomainViolation&) {
            continue;
        }
        std::vector<double> col;
        col.reserve(rows.size());
        for (auto r : rows) col.push_back((*full)[r]);
        view.names.push_back(e.canonical_name());
        view.columns.push_back(std::move(col));
    }
    return view;
}

std::vector<FeatureSummary> summarize(const FeatureView& view, const std::set<std::string>& original_columns) {
    std::vector<FeatureSummary> out;
    for (std::size_t i = 0; i < view.names.size(); ++i) {
        const auto& col = view.columns[i];
        FeatureSummary s;
        s.name = view.names[i];
        s.generated = !original_columns.count(s.name);
        if (!col.empty()) {
            const double n = static_cast<double>(col.size());
            s.mean = std::accumulate(col.begin(), col.end(), 0.0) / n;
            double ss = 0.0;
            for (double v : col) ss += (v - s.mean) * (v - s.mean);
            s.stddev = std::sqrt(ss / n);
            const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
            s.min = *lo;
            s.max = *hi;
        }
        out.push_back(std::move(s));
    }
    return out;
}

bool AgentContext::op_allowed(std::string_view name) const {
    return std::find(allowed_ops.begin(), allowed_ops.end(), name) != allowed_ops.end();
}

std::optional<double> AgentContext::last_delta() const {
    if (feedback.empty()) return std::nullopt;
    return feedback.back().delta;
}

}  // namespace lfg
