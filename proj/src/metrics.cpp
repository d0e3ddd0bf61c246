#include <algorithm>

#include "lfg/error.hpp"
#include "lfg/eval.hpp"

namespace lfg {

EvalReport metrics(std::span<const int> predictions, std::span<const int> truth, int n_classes) {
    if (predictions.size() != truth.size()) {
        throw Error(ErrorCode::LengthMismatch, std::to_string(predictions.size()) + " predictions for " +
                                                   std::to_string(truth.size()) + " labels");
    }
    if (n_classes < 1) throw Error(ErrorCode::PreconditionViolation, "n_classes must be positive");
    const auto k = static_cast<std::size_t>(n_classes);
    std::vector<std::size_t> tp(k, 0), predicted(k, 0), actual(k, 0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int p = predictions[i];
        const int t = truth[i];
        if (p < 0 || p >= n_classes || t < 0 || t >= n_classes) {
            throw Error(ErrorCode::PreconditionViolation, "class id out of range");
        }
        ++predicted[static_cast<std::size_t>(p)];
        ++actual[static_cast<std::size_t>(t)];
        if (p == t) {
            ++correct;
            ++tp[static_cast<std::size_t>(t)];
        }
    }

    EvalReport r;
    r.accuracy = truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());
    r.per_class_precision.assign(k, 0.0);
    r.per_class_recall.assign(k, 0.0);
    std::size_t present = 0;
    double p_sum = 0.0;
    double r_sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        if (predicted[c] > 0) r.per_class_precision[c] = static_cast<double>(tp[c]) / static_cast<double>(predicted[c]);
        if (actual[c] > 0) r.per_class_recall[c] = static_cast<double>(tp[c]) / static_cast<double>(actual[c]);
        // Macro averages run over classes seen in either truth or predictions.
        if (predicted[c] > 0 || actual[c] > 0) {
            ++present;
            p_sum += r.per_class_precision[c];
            r_sum += r.per_class_recall[c];
        }
    }
    if (present > 0) {
        r.precision = p_sum / static_cast<double>(present);
        r.recall = r_sum / static_cast<double>(present);
    }
    r.f1 = (r.precision > 0.0 && r.recall > 0.0) ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    return r;
}

EvalReport mean_report(std::vector<EvalReport> folds) {
    if (folds.empty()) throw Error(ErrorCode::PreconditionViolation, "no fold reports to average");
    EvalReport mean;
    const double n = static_cast<double>(folds.size());
    const std::size_t k = folds.front().per_class_precision.size();
    mean.per_class_precision.assign(k, 0.0);
    mean.per_class_recall.assign(k, 0.0);
    for (const auto& f : folds) {
        mean.accuracy += f.accuracy;
        mean.precision += f.precision;
        mean.recall += f.recall;
        mean.f1 += f.f1;
        for (std::size_t c = 0; c < k && c < f.per_class_precision.size(); ++c) {
            mean.per_class_precision[c] += f.per_class_precision[c];
            mean.per_class_recall[c] += f.per_class_recall[c];
        }
    }
    mean.accuracy /= n;
    mean.precision /= n;
    mean.recall /= n;
    mean.f1 /= n;
    for (std::size_t c = 0; c < k; ++c) {
        mean.per_class_precision[c] /= n;
        mean.per_class_recall[c] /= n;
    }
    mean.model_tag = folds.front().model_tag;
    mean.split_tag = "kfold-" + std::to_string(folds.size());
    mean.folds = std::move(folds);
    return mean;
}

}  // namespace lfg
