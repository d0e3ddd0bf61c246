#include <algorithm>
#include <cmath>
#include <numeric>

#include "lfg/error.hpp"
#include "lfg/eval.hpp"

namespace lfg {

namespace {

int majority(std::span<const std::size_t> counts) {
    // max_element returns the first maximum, i.e. the smallest class id on ties.
    return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

int class_count(std::span<const int> labels) { return *std::max_element(labels.begin(), labels.end()) + 1; }

// Euclidean k-NN on columns standardized with training statistics.
std::vector<int> knn_predict(std::size_t k, const Matrix& train, std::span<const int> labels, const Matrix& test) {
    const std::size_t d = train.cols();
    const std::size_t n = train.rows();
    std::vector<double> mean(d, 0.0), scale(d, 0.0);
    for (std::size_t c = 0; c < d; ++c) {
        double s = 0.0;
        for (std::size_t r = 0; r < n; ++r) s += train(r, c);
        mean[c] = s / static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t r = 0; r < n; ++r) ss += (train(r, c) - mean[c]) * (train(r, c) - mean[c]);
        const double sd = std::sqrt(ss / static_cast<double>(n));
        // Constant training columns carry no distance information.
        scale[c] = (sd > 0.0 && std::isfinite(sd)) ? 1.0 / sd : 0.0;
    }
    auto standardized = [&](const Matrix& m) {
        Matrix z(m.rows(), d);
        for (std::size_t r = 0; r < m.rows(); ++r) {
            for (std::size_t c = 0; c < d; ++c) z(r, c) = (m(r, c) - mean[c]) * scale[c];
        }
        return z;
    };
    const Matrix ztrain = standardized(train);
    const Matrix ztest = standardized(test);

    const std::size_t kk = std::min(k, n);
    const auto n_classes = static_cast<std::size_t>(class_count(labels));
    std::vector<int> out(test.rows());
    std::vector<std::pair<double, std::size_t>> dist(n);
    std::vector<std::size_t> votes(n_classes);
    for (std::size_t t = 0; t < ztest.rows(); ++t) {
        const auto q = ztest.row(t);
        for (std::size_t r = 0; r < n; ++r) {
            const auto p = ztrain.row(r);
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = p[c] - q[c];
                s += diff * diff;
            }
            dist[r] = {s, r};
        }
        // (distance, train index) is a total order: ties go to the lower index.
        std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk - 1), dist.end());
        std::fill(votes.begin(), votes.end(), 0);
        for (std::size_t i = 0; i < kk; ++i) ++votes[static_cast<std::size_t>(labels[dist[i].second])];
        out[t] = majority(votes);
    }
    return out;
}

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::size_t left = 0;
    std::size_t right = 0;
    int label = 0;
};

double gini(std::span<const std::size_t> counts, std::size_t total) {
    if (total == 0) return 0.0;
    double sum_sq = 0.0;
    for (auto c : counts) {
        const double p = static_cast<double>(c) / static_cast<double>(total);
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

// Greedy CART with gini impurity. Features are scanned in index order and
// thresholds in ascending order; only strictly better splits replace the
// incumbent, which fixes ties to the lower feature and lower threshold.
class DecisionTree {
public:
    DecisionTree(const ModelSpec& spec, const Matrix& x, std::span<const int> y)
        : spec_(spec), x_(x), y_(y), n_classes_(static_cast<std::size_t>(class_count(y))) {
        std::vector<std::size_t> rows(x.rows());
        std::iota(rows.begin(), rows.end(), 0);
        build(rows, 0);
    }

    int predict(std::span<const double> row) const {
        std::size_t i = 0;
        while (nodes_[i].feature >= 0) {
            const auto& n = nodes_[i];
            i = row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
        }
        return nodes_[i].label;
    }

private:
    std::size_t build(std::vector<std::size_t>& rows, std::size_t depth) {
        const std::size_t id = nodes_.size();
        nodes_.emplace_back();

        std::vector<std::size_t> counts(n_classes_, 0);
        for (auto r : rows) ++counts[static_cast<std::size_t>(y_[r])];
        nodes_[id].label = majority(counts);

        const std::size_t n = rows.size();
        const std::size_t min_leaf = std::max<std::size_t>(spec_.tree_min_samples_leaf, 1);
        const double parent_gini = gini(counts, n);
        if (depth >= spec_.tree_max_depth || n < 2 * min_leaf || parent_gini <= 0.0) return id;

        double best_score = parent_gini - 1e-12;
        int best_feature = -1;
        double best_threshold = 0.0;
        std::vector<std::size_t> order(rows);
        std::vector<std::size_t> left(n_classes_);
        std::vector<std::size_t> right(n_classes_);
        for (std::size_t f = 0; f < x_.cols(); ++f) {
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return x_(a, f) < x_(b, f); });
            std::fill(left.begin(), left.end(), 0);
            right = counts;
            for (std::size_t i = 0; i + 1 < n; ++i) {
                const auto cls = static_cast<std::size_t>(y_[order[i]]);
                ++left[cls];
                --right[cls];
                const double v = x_(order[i], f);
                const double next = x_(order[i + 1], f);
                if (!(v < next)) continue;
                const std::size_t nl = i + 1;
                const std::size_t nr = n - nl;
                if (nl < min_leaf || nr < min_leaf) continue;
                const double score = (static_cast<double>(nl) * gini(left, nl) +
                                      static_cast<double>(nr) * gini(right, nr)) /
                                     static_cast<double>(n);
                if (score < best_score - 1e-15) {
                    best_score = score;
                    best_feature = static_cast<int>(f);
                    best_threshold = v + (next - v) / 2.0;
                }
            }
        }
        if (best_feature < 0) return id;

        std::vector<std::size_t> left_rows, right_rows;
        for (auto r : rows) {
            (x_(r, static_cast<std::size_t>(best_feature)) <= best_threshold ? left_rows : right_rows).push_back(r);
        }
        rows.clear();
        rows.shrink_to_fit();
        nodes_[id].feature = best_feature;
        nodes_[id].threshold = best_threshold;
        const std::size_t l = build(left_rows, depth + 1);
        const std::size_t r = build(right_rows, depth + 1);
        nodes_[id].left = l;
        nodes_[id].right = r;
        return id;
    }

    const ModelSpec& spec_;
    const Matrix& x_;
    std::span<const int> y_;
    std::size_t n_classes_;
    std::vector<TreeNode> nodes_;
};

}  // namespace

std::vector<int> fit_predict(const ModelSpec& model, const Matrix& train, std::span<const int> train_labels,
                             const Matrix& test) {
    if (train.rows() == 0 || test.rows() == 0) {
        throw Error(ErrorCode::PreconditionViolation, "train and test sets must be nonempty");
    }
    if (train.rows() != train_labels.size()) {
        throw Error(ErrorCode::LengthMismatch, "training labels do not match training rows");
    }
    if (train.cols() != test.cols()) throw Error(ErrorCode::LengthMismatch, "train/test column counts differ");
    if (std::any_of(train_labels.begin(), train_labels.end(), [](int y) { return y < 0; })) {
        throw Error(ErrorCode::PreconditionViolation, "negative class label");
    }
    if (std::all_of(train_labels.begin(), train_labels.end(), [&](int y) { return y == train_labels.front(); })) {
        throw Error(ErrorCode::DegenerateTraining, "training split holds a single class");
    }
    switch (model.kind) {
        case ModelKind::Knn:
            if (model.knn_k < 1) throw Error(ErrorCode::PreconditionViolation, "knn k must be >= 1");
            return knn_predict(model.knn_k, train, train_labels, test);
        case ModelKind::DecisionTree: {
            if (model.tree_max_depth < 1) throw Error(ErrorCode::PreconditionViolation, "tree depth must be >= 1");
            const DecisionTree tree(model, train, train_labels);
            std::vector<int> out(test.rows());
            for (std::size_t r = 0; r < test.rows(); ++r) out[r] = tree.predict(test.row(r));
            return out;
        }
    }
    throw Error(ErrorCode::PreconditionViolation, "unknown model kind");
}

}  // namespace lfg
