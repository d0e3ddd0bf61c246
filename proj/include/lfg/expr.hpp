#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lfg/data.hpp"
#include "lfg/error.hpp"
#include "lfg/ops.hpp"

namespace lfg {

inline constexpr std::size_t kDefaultMaxDepth = 4;

// Immutable expression tree over base columns. Copies share structure.
// Children of commutative operations are stored in canonical-name order, so
// structurally equivalent expressions have identical canonical names.
class FeatureExpr {
public:
    enum class Kind { Base, Unary, Binary };

    static FeatureExpr base(std::string column);
    static FeatureExpr unary(const Operation& op, FeatureExpr child);
    static FeatureExpr binary(const Operation& op, FeatureExpr left, FeatureExpr right);
    // Looks the operation up by name and checks arity; throws UnknownOperation
    // or PreconditionViolation.
    static FeatureExpr apply(std::string_view op_name, std::vector<FeatureExpr> operands);

    Kind kind() const noexcept;
    bool is_base() const noexcept { return kind() == Kind::Base; }
    // Null for base columns.
    const Operation* op() const noexcept;
    // Empty unless this is a base column.
    const std::string& column() const noexcept;
    std::span<const FeatureExpr> children() const noexcept;

    // Fully parenthesized prefix form, e.g. `plus(f1,square(f2))`.
    const std::string& canonical_name() const noexcept;
    std::size_t depth() const noexcept;

    std::set<std::string> base_columns() const;
    std::set<OpId> operations_used() const;

    friend bool operator==(const FeatureExpr& a, const FeatureExpr& b) {
        return a.canonical_name() == b.canonical_name();
    }

private:
    struct Node;
    explicit FeatureExpr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
    std::shared_ptr<const Node> node_;
};

// Inverse of canonical_name. Throws Error(ParseError) on malformed text and
// UnknownOperation on unregistered operation names.
FeatureExpr parse_expr(std::string_view text);

// Memoizes evaluated columns per (dataset id, canonical name). Failed
// evaluations are memoized too so a bad expression is only tried once.
class EvalCache {
public:
    struct Entry {
        std::shared_ptr<const std::vector<double>> values;
        std::optional<DomainViolation> failure;
    };

    std::optional<Entry> find(std::uint64_t dataset_id, const std::string& name) const;
    void insert(std::uint64_t dataset_id, const std::string& name, Entry entry);
    std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::map<std::pair<std::uint64_t, std::string>, Entry> entries_;
};

// Bottom-up evaluation over all rows of `d`. Throws UnknownColumn or
// DomainViolation.
std::vector<double> evaluate(const FeatureExpr& e, const Dataset& d);
std::shared_ptr<const std::vector<double>> evaluate_cached(const FeatureExpr& e, const Dataset& d, EvalCache* cache);

// First occurrence wins; order preserved.
std::vector<FeatureExpr> dedupe(std::span<const FeatureExpr> exprs);

// Derivation of `e`, leaves first, one line per distinct sub-expression.
std::vector<std::string> lineage(const FeatureExpr& e);
// Compact infix rendering, e.g. `(f1+f2)^2`.
std::string infix(const FeatureExpr& e);

class FeatureSubset {
public:
    FeatureSubset() = default;
    // Throws PreconditionViolation if two members share a canonical name.
    explicit FeatureSubset(std::vector<FeatureExpr> exprs, std::int64_t origin = -1);

    static FeatureSubset originals(const Dataset& d);

    const std::vector<FeatureExpr>& exprs() const noexcept { return exprs_; }
    std::size_t size() const noexcept { return exprs_.size(); }
    bool empty() const noexcept { return exprs_.empty(); }
    std::int64_t origin() const noexcept { return origin_; }
    void set_origin(std::int64_t id) noexcept { origin_ = id; }

    bool contains(std::string_view name) const;
    const FeatureExpr* find(std::string_view name) const;
    std::vector<std::string> names() const;

    // Appends unless a member already has the same canonical name.
    bool insert(FeatureExpr e);
    bool erase(std::string_view name);

    // Throws UnknownColumn if a base column is missing from `d`.
    void check_columns(const Dataset& d) const;

private:
    std::vector<FeatureExpr> exprs_;
    std::int64_t origin_ = -1;
};

}  // namespace lfg
