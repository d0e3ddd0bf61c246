#include <algorithm>
#include <cstdio>
#include <set>

#include "lfg/error.hpp"
#include "lfg/eval.hpp"

namespace lfg {

std::string_view model_kind_name(ModelKind kind) {
    return kind == ModelKind::Knn ? "knn" : "decision_tree";
}

ModelKind parse_model_kind(std::string_view name) {
    if (name == "knn") return ModelKind::Knn;
    if (name == "decision_tree" || name == "dt") return ModelKind::DecisionTree;
    throw Error(ErrorCode::ConfigError, "unknown model '" + std::string(name) + "'");
}

std::string_view metric_name(Metric m) { return m == Metric::F1 ? "f1" : "accuracy"; }

Metric parse_metric(std::string_view name) {
    if (name == "accuracy") return Metric::Accuracy;
    if (name == "f1") return Metric::F1;
    throw Error(ErrorCode::ConfigError, "unknown metric '" + std::string(name) + "'");
}

std::string ModelSpec::tag() const {
    if (kind == ModelKind::Knn) return "knn(k=" + std::to_string(knn_k) + ")";
    return "decision_tree(depth=" + std::to_string(tree_max_depth) +
           ",min_leaf=" + std::to_string(tree_min_samples_leaf) + ")";
}

MaterializedSplit materialize(const FeatureSubset& subset, const Dataset& d, std::span<const std::size_t> train_rows,
                              std::span<const std::size_t> test_rows, EvalCache* cache) {
    MaterializedSplit out;
    std::vector<std::shared_ptr<const std::vector<double>>> cols;
    for (const auto& e : subset.exprs()) {
        try {
            cols.push_back(evaluate_cached(e, d, cache));
            out.columns.push_back(e.canonical_name());
        } catch (const DomainViolation&) {
            out.excluded.push_back(e.canonical_name());
        }
    }
    if (cols.empty()) {
        throw Error(ErrorCode::EmptyFeatureMatrix, "no feature of the subset could be evaluated");
    }
    auto fill = [&](std::span<const std::size_t> rows, Matrix& m, std::vector<int>& labels) {
        m = Matrix(rows.size(), cols.size());
        labels.resize(rows.size());
        const auto y = d.labels();
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (std::size_t c = 0; c < cols.size(); ++c) m(i, c) = (*cols[c])[rows[i]];
            labels[i] = y[rows[i]];
        }
    };
    fill(train_rows, out.train, out.train_labels);
    fill(test_rows, out.test, out.test_labels);
    return out;
}

MaterializedSplit materialize(const FeatureSubset& subset, const Dataset& d, const SplitSpec& split,
                              EvalCache* cache) {
    return materialize(subset, d, split.train_indices, split.test_indices, cache);
}

namespace {

EvalReport evaluate_rows(const FeatureSubset& subset, const Dataset& d, std::span<const std::size_t> train_rows,
                         std::span<const std::size_t> test_rows, const ModelSpec& model, EvalCache* cache,
                         std::set<std::string>& excluded) {
    auto m = materialize(subset, d, train_rows, test_rows, cache);
    excluded.insert(m.excluded.begin(), m.excluded.end());
    const auto predictions = fit_predict(model, m.train, m.train_labels, m.test);
    auto report = metrics(predictions, m.test_labels, d.n_classes());
    report.model_tag = model.tag();
    return report;
}

std::string split_tag(const SplitSpec& s) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "split(train=%.4g,seed=%llu)", s.train_fraction,
                  static_cast<unsigned long long>(s.seed));
    return buf;
}

}  // namespace

SubsetEvaluation evaluate_subset(const FeatureSubset& subset, const Dataset& d, const Protocol& protocol,
                                 const ModelSpec& model, EvalCache* cache) {
    std::set<std::string> excluded;
    SubsetEvaluation result;
    if (const auto* s = std::get_if<SplitSpec>(&protocol)) {
        result.report = evaluate_rows(subset, d, s->train_indices, s->test_indices, model, cache, excluded);
        result.report.split_tag = split_tag(*s);
    } else {
        const auto& folds = std::get<FoldSpec>(protocol);
        std::vector<EvalReport> reports;
        for (std::size_t f = 0; f < folds.k; ++f) {
            const auto test_rows = folds.fold_rows(f);
            const auto train_rows = folds.rows_outside(f);
            auto r = evaluate_rows(subset, d, train_rows, test_rows, model, cache, excluded);
            r.split_tag = "fold-" + std::to_string(f);
            reports.push_back(std::move(r));
        }
        result.report = mean_report(std::move(reports));
    }
    // Report exclusions in subset order.
    for (const auto& e : subset.exprs()) {
        if (excluded.count(e.canonical_name())) result.excluded.push_back(e.canonical_name());
    }
    return result;
}

DownstreamEvaluator::DownstreamEvaluator(std::shared_ptr<const Dataset> data, Protocol protocol, ModelSpec model)
    : data_(std::move(data)),
      protocol_(std::move(protocol)),
      model_(model),
      cache_(std::make_shared<EvalCache>()) {}

SubsetEvaluation DownstreamEvaluator::evaluate(const FeatureSubset& subset) const {
    subset.check_columns(*data_);
    return evaluate_subset(subset, *data_, protocol_, model_, cache_.get());
}

}  // namespace lfg
