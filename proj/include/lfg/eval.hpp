#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lfg/data.hpp"
#include "lfg/expr.hpp"

namespace lfg {

enum class ModelKind { Knn, DecisionTree };

struct ModelSpec {
    ModelKind kind = ModelKind::Knn;
    std::size_t knn_k = 5;
    std::size_t tree_max_depth = 8;
    std::size_t tree_min_samples_leaf = 5;

    std::string tag() const;
};

std::string_view model_kind_name(ModelKind kind);
// Accepts "knn" and "decision_tree" (alias "dt"). Throws ConfigError.
ModelKind parse_model_kind(std::string_view name);

enum class Metric { Accuracy, F1 };
std::string_view metric_name(Metric m);
Metric parse_metric(std::string_view name);

struct EvalReport {
    double accuracy = 0.0;
    double precision = 0.0;  // macro
    double recall = 0.0;     // macro
    double f1 = 0.0;         // harmonic mean of macro precision and recall
    std::vector<double> per_class_precision;
    std::vector<double> per_class_recall;
    std::string model_tag;
    std::string split_tag;
    std::vector<EvalReport> folds;  // filled in k-fold mode

    double primary(Metric m) const { return m == Metric::F1 ? f1 : accuracy; }
};

// Dense row-major matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct MaterializedSplit {
    Matrix train;
    Matrix test;
    std::vector<int> train_labels;
    std::vector<int> test_labels;
    std::vector<std::string> columns;   // surviving canonical names, subset order
    std::vector<std::string> excluded;  // names rejected by a domain guard
};

// Evaluates every expression and slices rows. Expressions raising
// DomainViolation are excluded and reported; throws EmptyFeatureMatrix when
// none survive.
MaterializedSplit materialize(const FeatureSubset& subset, const Dataset& d, std::span<const std::size_t> train_rows,
                              std::span<const std::size_t> test_rows, EvalCache* cache = nullptr);
MaterializedSplit materialize(const FeatureSubset& subset, const Dataset& d, const SplitSpec& split,
                              EvalCache* cache = nullptr);

// Throws DegenerateTraining when the training labels hold a single class.
std::vector<int> fit_predict(const ModelSpec& model, const Matrix& train, std::span<const int> train_labels,
                             const Matrix& test);

// Throws LengthMismatch.
EvalReport metrics(std::span<const int> predictions, std::span<const int> truth, int n_classes);

// Field-wise mean of fold reports; the folds are attached to the result.
EvalReport mean_report(std::vector<EvalReport> folds);

using Protocol = std::variant<SplitSpec, FoldSpec>;

struct SubsetEvaluation {
    EvalReport report;
    std::vector<std::string> excluded;
};

SubsetEvaluation evaluate_subset(const FeatureSubset& subset, const Dataset& d, const Protocol& protocol,
                                 const ModelSpec& model, EvalCache* cache = nullptr);

// Downstream-task feedback used by the search. Implementations must be safe
// to call concurrently.
class SubsetEvaluator {
public:
    virtual ~SubsetEvaluator() = default;
    virtual SubsetEvaluation evaluate(const FeatureSubset& subset) const = 0;
};

class DownstreamEvaluator final : public SubsetEvaluator {
public:
    DownstreamEvaluator(std::shared_ptr<const Dataset> data, Protocol protocol, ModelSpec model);

    SubsetEvaluation evaluate(const FeatureSubset& subset) const override;

    const Dataset& dataset() const noexcept { return *data_; }
    const Protocol& protocol() const noexcept { return protocol_; }
    const ModelSpec& model() const noexcept { return model_; }
    EvalCache& cache() const noexcept { return *cache_; }

private:
    std::shared_ptr<const Dataset> data_;
    Protocol protocol_;
    ModelSpec model_;
    std::shared_ptr<EvalCache> cache_;
};

}  // namespace lfg
