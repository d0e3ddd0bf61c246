#include "lfg/data.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "lfg/error.hpp"
#include "lfg/rng.hpp"

namespace lfg {

namespace {

std::atomic<std::uint64_t> next_dataset_id{1};

constexpr std::size_t kMinRows = 10;

// RFC-4180 records. Quoted fields may contain commas, newlines and doubled quotes.
std::vector<std::vector<std::string>> read_csv_records(std::istream& in) {
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) text.erase(0, 3);

    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t line = 1;

    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        const bool blank = record.size() == 1 && record[0].empty();
        if (!blank) records.push_back(std::move(record));
        record.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                if (field_started && !field.empty()) {
                    throw ParseError(line, record.size(), "quote inside unquoted field");
                }
                in_quotes = true;
                field_started = true;
                break;
            case ',':
                end_field();
                break;
            case '\r':
                break;
            case '\n':
                end_record();
                ++line;
                break;
            default:
                field.push_back(c);
                field_started = true;
        }
    }
    if (in_quotes) throw ParseError(line, record.size(), "unterminated quoted field");
    if (field_started || !field.empty() || !record.empty()) end_record();
    return records;
}

std::string_view trim(std::string_view s) {
    const auto is_space = [](char c) { return c == ' ' || c == '\t'; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::optional<double> parse_number(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return value;
}

}  // namespace

Dataset::Dataset(std::vector<Column> columns, std::vector<int> labels, std::vector<std::string> class_names,
                 std::size_t dropped_rows)
    : columns_(std::move(columns)),
      labels_(std::move(labels)),
      class_names_(std::move(class_names)),
      dropped_rows_(dropped_rows),
      id_(next_dataset_id.fetch_add(1)) {
    if (columns_.empty()) throw Error(ErrorCode::DegenerateDataset, "dataset has no feature columns");
    std::unordered_set<std::string> seen;
    for (std::size_t c = 0; c < columns_.size(); ++c) {
        const Column& col = columns_[c];
        if (!is_valid_column_name(col.name)) {
            throw Error(ErrorCode::ParseError, "invalid column name '" + col.name + "'");
        }
        if (!seen.insert(col.name).second) {
            throw Error(ErrorCode::ParseError, "duplicate column name '" + col.name + "'");
        }
        if (col.values.size() != labels_.size()) {
            throw Error(ErrorCode::LengthMismatch, "column '" + col.name + "' has " +
                                                       std::to_string(col.values.size()) + " values, expected " +
                                                       std::to_string(labels_.size()));
        }
        for (std::size_t r = 0; r < col.values.size(); ++r) {
            if (!std::isfinite(col.values[r])) throw ParseError(r + 1, c, "non-finite value");
        }
    }
    int max_label = -1;
    for (int y : labels_) {
        if (y < 0) throw Error(ErrorCode::DegenerateDataset, "negative class label");
        max_label = std::max(max_label, y);
    }
    n_classes_ = std::max<int>(max_label + 1, static_cast<int>(class_names_.size()));
    if (class_names_.empty()) {
        for (int k = 0; k < n_classes_; ++k) class_names_.push_back(std::to_string(k));
    }
}

const Column& Dataset::column(std::string_view name) const {
    if (auto idx = find_column(name)) return columns_[*idx];
    throw Error(ErrorCode::UnknownColumn, "unknown column '" + std::string(name) + "'");
}

std::optional<std::size_t> Dataset::find_column(std::string_view name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        if (columns_[i].name == name) return i;
    }
    return std::nullopt;
}

std::vector<std::string> Dataset::column_names() const {
    std::vector<std::string> names;
    names.reserve(columns_.size());
    for (const auto& c : columns_) names.push_back(c.name);
    return names;
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes_), 0);
    for (int y : labels_) ++counts[static_cast<std::size_t>(y)];
    return counts;
}

bool is_valid_column_name(std::string_view name) {
    if (name.empty()) return false;
    return std::none_of(name.begin(), name.end(), [](unsigned char c) {
        return std::isspace(c) || c == '(' || c == ')' || c == ',';
    });
}

std::string sanitize_column_name(std::string_view name) {
    std::string out(trim(name));
    for (char& c : out) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isspace(u) || c == '(' || c == ')' || c == ',') c = '_';
    }
    return out;
}

Dataset load_csv(const std::filesystem::path& path, const LabelSelector& label_column, bool drop_missing) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::FileNotFound, "cannot open '" + path.string() + "'");

    auto records = read_csv_records(in);
    if (records.empty()) throw Error(ErrorCode::ParseError, "'" + path.string() + "' has no header row");

    const auto& header = records.front();
    std::size_t label_idx = 0;
    if (const auto* name = std::get_if<std::string>(&label_column)) {
        auto it = std::find_if(header.begin(), header.end(),
                               [&](const std::string& h) { return trim(h) == trim(*name); });
        if (it == header.end()) throw Error(ErrorCode::LabelColumnMissing, "no column named '" + *name + "'");
        label_idx = static_cast<std::size_t>(it - header.begin());
    } else {
        label_idx = std::get<std::size_t>(label_column);
        if (label_idx >= header.size()) {
            throw Error(ErrorCode::LabelColumnMissing, "label index " + std::to_string(label_idx) +
                                                           " out of range for " + std::to_string(header.size()) +
                                                           " columns");
        }
    }

    std::vector<Column> columns;
    std::vector<std::size_t> source_index;
    std::unordered_set<std::string> used_names;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c == label_idx) continue;
        std::string name = sanitize_column_name(header[c]);
        if (name.empty()) name = "col" + std::to_string(c);
        std::string unique = name;
        for (int suffix = 2; used_names.count(unique); ++suffix) unique = name + "_" + std::to_string(suffix);
        used_names.insert(unique);
        columns.push_back(Column{unique, {}});
        source_index.push_back(c);
    }

    std::vector<int> labels;
    std::vector<std::string> class_names;
    std::unordered_map<std::string, int> class_ids;
    std::size_t dropped = 0;

    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.size() != header.size()) {
            throw ParseError(r, std::min(rec.size(), header.size()),
                             "expected " + std::to_string(header.size()) + " fields, found " +
                                 std::to_string(rec.size()));
        }
        std::vector<double> row(columns.size());
        bool missing = trim(rec[label_idx]).empty();
        if (missing && !drop_missing) throw ParseError(r, label_idx, "empty label cell");
        for (std::size_t j = 0; j < columns.size() && !missing; ++j) {
            const std::size_t c = source_index[j];
            if (trim(rec[c]).empty()) {
                if (!drop_missing) throw ParseError(r, c, "empty cell");
                missing = true;
                break;
            }
            auto value = parse_number(rec[c]);
            if (!value) throw ParseError(r, c, "'" + rec[c] + "' is not a number");
            if (!std::isfinite(*value)) throw ParseError(r, c, "non-finite value");
            row[j] = *value;
        }
        if (missing) {
            ++dropped;
            continue;
        }
        const std::string key(trim(rec[label_idx]));
        auto [it, inserted] = class_ids.emplace(key, static_cast<int>(class_names.size()));
        if (inserted) class_names.push_back(key);
        labels.push_back(it->second);
        for (std::size_t j = 0; j < columns.size(); ++j) columns[j].values.push_back(row[j]);
    }

    if (labels.size() < kMinRows) {
        throw Error(ErrorCode::DegenerateDataset,
                    "only " + std::to_string(labels.size()) + " rows after cleaning (need " +
                        std::to_string(kMinRows) + ")");
    }
    if (class_names.size() < 2) {
        throw Error(ErrorCode::DegenerateDataset, "fewer than 2 classes after cleaning");
    }
    return Dataset(std::move(columns), std::move(labels), std::move(class_names), dropped);
}

std::vector<std::size_t> FoldSpec::fold_rows(std::size_t fold) const {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < fold_assignments.size(); ++r) {
        if (fold_assignments[r] == fold) rows.push_back(r);
    }
    return rows;
}

std::vector<std::size_t> FoldSpec::rows_outside(std::size_t fold) const {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < fold_assignments.size(); ++r) {
        if (fold_assignments[r] != fold) rows.push_back(r);
    }
    return rows;
}

std::vector<std::size_t> FoldSpec::fold_sizes() const {
    std::vector<std::size_t> sizes(k, 0);
    for (auto f : fold_assignments) ++sizes[f];
    return sizes;
}

namespace {

// Row indices grouped by class, each group shuffled with the seeded generator.
std::vector<std::vector<std::size_t>> shuffled_class_groups(const Dataset& d, std::mt19937_64& rng) {
    std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(d.n_classes()));
    const auto labels = d.labels();
    for (std::size_t r = 0; r < labels.size(); ++r) groups[static_cast<std::size_t>(labels[r])].push_back(r);
    for (auto& g : groups) seeded_shuffle(std::span<std::size_t>(g), rng);
    return groups;
}

}  // namespace

SplitSpec split(const Dataset& d, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw Error(ErrorCode::PreconditionViolation, "train_fraction must lie in (0,1)");
    }
    for (std::size_t c = 0; const auto count : d.class_counts()) {
        if (count > 0 && count < 2) {
            throw Error(ErrorCode::StratificationImpossible,
                        "class '" + d.class_names()[c] + "' has fewer than 2 members");
        }
        ++c;
    }

    std::mt19937_64 rng(seed);
    auto groups = shuffled_class_groups(d, rng);

    const std::size_t n = d.n_samples();
    const auto total = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));

    // Largest-remainder apportionment of `total` across classes.
    std::vector<std::size_t> quota(groups.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < groups.size(); ++c) {
        const double exact = train_fraction * static_cast<double>(groups[c].size());
        quota[c] = static_cast<std::size_t>(std::floor(exact));
        assigned += quota[c];
        remainders.emplace_back(exact - static_cast<double>(quota[c]), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < total && i < remainders.size(); ++i) {
        const std::size_t c = remainders[i].second;
        if (quota[c] < groups[c].size()) {
            ++quota[c];
            ++assigned;
        }
    }

    SplitSpec spec;
    spec.seed = seed;
    spec.train_fraction = train_fraction;
    for (std::size_t c = 0; c < groups.size(); ++c) {
        for (std::size_t i = 0; i < groups[c].size(); ++i) {
            (i < quota[c] ? spec.train_indices : spec.test_indices).push_back(groups[c][i]);
        }
    }
    std::sort(spec.train_indices.begin(), spec.train_indices.end());
    std::sort(spec.test_indices.begin(), spec.test_indices.end());
    return spec;
}

FoldSpec kfold(const Dataset& d, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw Error(ErrorCode::PreconditionViolation, "k-fold needs k >= 2");
    if (k > d.n_samples()) {
        throw Error(ErrorCode::KTooLarge,
                    "k=" + std::to_string(k) + " exceeds " + std::to_string(d.n_samples()) + " rows");
    }
    std::mt19937_64 rng(seed);
    auto groups = shuffled_class_groups(d, rng);

    // Dealing the class-ordered rows round-robin keeps every class spread
    // evenly and the global fold sizes within one of each other.
    FoldSpec spec;
    spec.k = k;
    spec.seed = seed;
    spec.fold_assignments.assign(d.n_samples(), 0);
    std::size_t dealt = 0;
    for (const auto& g : groups) {
        for (auto r : g) spec.fold_assignments[r] = dealt++ % k;
    }
    return spec;
}

std::vector<double> standardize(std::span<const double> values) {
    if (values.empty()) throw Error(ErrorCode::PreconditionViolation, "standardize needs a nonempty input");
    std::vector<double> out(values.size(), 0.0);
    if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); })) return out;
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / n);
    if (sd == 0.0 || !std::isfinite(sd)) return out;
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - mean) / sd;
    return out;
}

}  // namespace lfg
