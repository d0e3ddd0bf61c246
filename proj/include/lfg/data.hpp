#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace lfg {

struct Column {
    std::string name;
    std::vector<double> values;
};

// Immutable columnar table of numeric features plus dense class labels.
// Every instance carries a process-unique id used to key evaluation caches.
class Dataset {
public:
    // Validates the table invariants; throws DegenerateDataset, LengthMismatch
    // or ParseError (non-finite value) on violation.
    Dataset(std::vector<Column> columns, std::vector<int> labels, std::vector<std::string> class_names = {},
            std::size_t dropped_rows = 0);

    std::size_t n_samples() const noexcept { return labels_.size(); }
    std::size_t n_features() const noexcept { return columns_.size(); }
    int n_classes() const noexcept { return n_classes_; }

    const std::vector<Column>& columns() const noexcept { return columns_; }
    const Column& column(std::size_t i) const { return columns_.at(i); }
    // Throws UnknownColumn.
    const Column& column(std::string_view name) const;
    std::optional<std::size_t> find_column(std::string_view name) const;
    std::vector<std::string> column_names() const;

    std::span<const int> labels() const noexcept { return labels_; }
    const std::vector<std::string>& class_names() const noexcept { return class_names_; }

    // Rows dropped by the loader because of empty cells.
    std::size_t dropped_rows() const noexcept { return dropped_rows_; }
    std::uint64_t id() const noexcept { return id_; }

    std::vector<std::size_t> class_counts() const;

private:
    std::vector<Column> columns_;
    std::vector<int> labels_;
    std::vector<std::string> class_names_;
    int n_classes_ = 0;
    std::size_t dropped_rows_ = 0;
    std::uint64_t id_ = 0;
};

using LabelSelector = std::variant<std::string, std::size_t>;

// Column names may not contain whitespace or `(`, `)`, `,` because they are
// embedded in canonical expression names and wire-protocol lines. Offending
// characters are replaced with '_' on load.
bool is_valid_column_name(std::string_view name);
std::string sanitize_column_name(std::string_view name);

Dataset load_csv(const std::filesystem::path& path, const LabelSelector& label_column, bool drop_missing);

struct SplitSpec {
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
    std::uint64_t seed = 0;
    double train_fraction = 0.0;
};

struct FoldSpec {
    std::size_t k = 0;
    std::vector<std::size_t> fold_assignments;
    std::uint64_t seed = 0;

    std::vector<std::size_t> fold_rows(std::size_t fold) const;
    std::vector<std::size_t> rows_outside(std::size_t fold) const;
    std::vector<std::size_t> fold_sizes() const;
};

// Stratified, seeded train/test split. |train| = round(train_fraction * n);
// per-class train counts are the largest-remainder apportionment of that total.
SplitSpec split(const Dataset& d, double train_fraction, std::uint64_t seed);

// Stratified, seeded k-fold assignment. Fold sizes differ by at most one.
FoldSpec kfold(const Dataset& d, std::size_t k, std::uint64_t seed);

// Z-scores with population std; a constant input maps to all zeros.
std::vector<double> standardize(std::span<const double> values);

}  // namespace lfg
