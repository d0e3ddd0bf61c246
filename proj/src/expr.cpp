#include "lfg/expr.hpp"

#include <algorithm>
#include <unordered_set>

#include "lfg/error.hpp"

namespace lfg {

struct FeatureExpr::Node {
    Kind kind = Kind::Base;
    const Operation* op = nullptr;
    std::string column;
    std::vector<FeatureExpr> children;
    std::string name;
    std::size_t depth = 0;
};

namespace {

const std::string kEmpty;

}  // namespace

FeatureExpr FeatureExpr::base(std::string column) {
    if (!is_valid_column_name(column)) {
        throw Error(ErrorCode::UnknownColumn, "invalid column name '" + column + "'");
    }
    auto node = std::make_shared<Node>();
    node->kind = Kind::Base;
    node->name = column;
    node->column = std::move(column);
    return FeatureExpr(std::move(node));
}

FeatureExpr FeatureExpr::unary(const Operation& op, FeatureExpr child) {
    if (op.arity != 1) throw Error(ErrorCode::PreconditionViolation, "'" + std::string(op.name) + "' is not unary");
    auto node = std::make_shared<Node>();
    node->kind = Kind::Unary;
    node->op = &op;
    node->name = std::string(op.name) + "(" + child.canonical_name() + ")";
    node->depth = child.depth() + 1;
    node->children.push_back(std::move(child));
    return FeatureExpr(std::move(node));
}

FeatureExpr FeatureExpr::binary(const Operation& op, FeatureExpr left, FeatureExpr right) {
    if (op.arity != 2) throw Error(ErrorCode::PreconditionViolation, "'" + std::string(op.name) + "' is not binary");
    if (op.commutative && right.canonical_name() < left.canonical_name()) std::swap(left, right);
    auto node = std::make_shared<Node>();
    node->kind = Kind::Binary;
    node->op = &op;
    node->name = std::string(op.name) + "(" + left.canonical_name() + "," + right.canonical_name() + ")";
    node->depth = std::max(left.depth(), right.depth()) + 1;
    node->children.push_back(std::move(left));
    node->children.push_back(std::move(right));
    return FeatureExpr(std::move(node));
}

FeatureExpr FeatureExpr::apply(std::string_view op_name, std::vector<FeatureExpr> operands) {
    const Operation& op = lookup(op_name);
    if (operands.size() != static_cast<std::size_t>(op.arity)) {
        throw Error(ErrorCode::PreconditionViolation, "'" + std::string(op_name) + "' takes " +
                                                          std::to_string(op.arity) + " operand(s), got " +
                                                          std::to_string(operands.size()));
    }
    if (op.arity == 1) return unary(op, std::move(operands[0]));
    return binary(op, std::move(operands[0]), std::move(operands[1]));
}

FeatureExpr::Kind FeatureExpr::kind() const noexcept { return node_->kind; }
const Operation* FeatureExpr::op() const noexcept { return node_->op; }
const std::string& FeatureExpr::column() const noexcept { return node_->kind == Kind::Base ? node_->column : kEmpty; }
std::span<const FeatureExpr> FeatureExpr::children() const noexcept { return node_->children; }
const std::string& FeatureExpr::canonical_name() const noexcept { return node_->name; }
std::size_t FeatureExpr::depth() const noexcept { return node_->depth; }

std::set<std::string> FeatureExpr::base_columns() const {
    std::set<std::string> out;
    if (is_base()) {
        out.insert(column());
        return out;
    }
    for (const auto& c : children()) out.merge(c.base_columns());
    return out;
}

std::set<OpId> FeatureExpr::operations_used() const {
    std::set<OpId> out;
    if (op()) out.insert(op()->id);
    for (const auto& c : children()) out.merge(c.operations_used());
    return out;
}

namespace {

class ExprParser {
public:
    explicit ExprParser(std::string_view text) : text_(text) {}

    FeatureExpr parse() {
        FeatureExpr e = parse_name();
        if (pos_ != text_.size()) fail("trailing characters");
        return e;
    }

private:
    FeatureExpr parse_name() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() && text_[pos_] != '(' && text_[pos_] != ')' && text_[pos_] != ',') ++pos_;
        const std::string_view token = text_.substr(start, pos_ - start);
        if (token.empty()) fail("expected a name");
        if (pos_ == text_.size() || text_[pos_] != '(') return FeatureExpr::base(std::string(token));

        ++pos_;  // '('
        std::vector<FeatureExpr> operands;
        operands.push_back(parse_name());
        while (pos_ < text_.size() && text_[pos_] == ',') {
            ++pos_;
            operands.push_back(parse_name());
        }
        if (pos_ >= text_.size() || text_[pos_] != ')') fail("expected ')'");
        ++pos_;
        return FeatureExpr::apply(token, std::move(operands));
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw Error(ErrorCode::ParseError,
                    "cannot parse expression '" + std::string(text_) + "' at " + std::to_string(pos_) + ": " + what);
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

}  // namespace

FeatureExpr parse_expr(std::string_view text) { return ExprParser(text).parse(); }

std::optional<EvalCache::Entry> EvalCache::find(std::uint64_t dataset_id, const std::string& name) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find({dataset_id, name});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void EvalCache::insert(std::uint64_t dataset_id, const std::string& name, Entry entry) {
    std::lock_guard lock(mutex_);
    entries_.try_emplace({dataset_id, name}, std::move(entry));
}

std::size_t EvalCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

std::shared_ptr<const std::vector<double>> evaluate_cached(const FeatureExpr& e, const Dataset& d, EvalCache* cache) {
    if (e.is_base()) {
        // Base columns are borrowed from the dataset; the aliasing pointer
        // keeps no ownership, the dataset outlives every evaluation.
        const Column& col = d.column(e.column());
        return std::shared_ptr<const std::vector<double>>(std::shared_ptr<void>(), &col.values);
    }
    if (cache) {
        if (auto hit = cache->find(d.id(), e.canonical_name())) {
            if (hit->failure) throw *hit->failure;
            return hit->values;
        }
    }
    try {
        std::shared_ptr<const std::vector<double>> result;
        const auto kids = e.children();
        if (e.kind() == FeatureExpr::Kind::Unary) {
            auto x = evaluate_cached(kids[0], d, cache);
            result = std::make_shared<const std::vector<double>>(apply_unary(*e.op(), *x));
        } else {
            auto x = evaluate_cached(kids[0], d, cache);
            auto y = evaluate_cached(kids[1], d, cache);
            result = std::make_shared<const std::vector<double>>(apply_binary(*e.op(), *x, *y));
        }
        if (cache) cache->insert(d.id(), e.canonical_name(), {result, std::nullopt});
        return result;
    } catch (const DomainViolation& dv) {
        if (cache) cache->insert(d.id(), e.canonical_name(), {nullptr, dv});
        throw;
    }
}

std::vector<double> evaluate(const FeatureExpr& e, const Dataset& d) { return *evaluate_cached(e, d, nullptr); }

std::vector<FeatureExpr> dedupe(std::span<const FeatureExpr> exprs) {
    std::vector<FeatureExpr> out;
    std::unordered_set<std::string> seen;
    for (const auto& e : exprs) {
        if (seen.insert(e.canonical_name()).second) out.push_back(e);
    }
    return out;
}

namespace {

bool needs_parens(const FeatureExpr& e) {
    if (e.kind() == FeatureExpr::Kind::Binary) return true;
    if (e.kind() == FeatureExpr::Kind::Unary) {
        const OpId id = e.op()->id;
        return id == OpId::Square || id == OpId::Cube || id == OpId::Reciprocal;
    }
    return false;
}

std::string wrapped(const FeatureExpr& e) { return needs_parens(e) ? "(" + infix(e) + ")" : infix(e); }

std::string_view binary_symbol(OpId id) {
    switch (id) {
        case OpId::Plus: return "+";
        case OpId::Subtract: return "-";
        case OpId::Multiply: return "*";
        case OpId::Divide: return "/";
        default: return "?";
    }
}

std::string render(const FeatureExpr& e, bool spaced) {
    const auto kids = e.children();
    switch (e.kind()) {
        case FeatureExpr::Kind::Base:
            return e.column();
        case FeatureExpr::Kind::Binary: {
            const std::string sym(binary_symbol(e.op()->id));
            return wrapped(kids[0]) + (spaced ? " " + sym + " " : sym) + wrapped(kids[1]);
        }
        case FeatureExpr::Kind::Unary:
            break;
    }
    switch (e.op()->id) {
        case OpId::Square: return wrapped(kids[0]) + "^2";
        case OpId::Cube: return wrapped(kids[0]) + "^3";
        case OpId::Reciprocal: return "1/" + wrapped(kids[0]);
        default: return std::string(e.op()->name) + "(" + infix(kids[0]) + ")";
    }
}

void collect_lineage(const FeatureExpr& e, std::vector<std::string>& lines, std::unordered_set<std::string>& seen) {
    if (!seen.insert(e.canonical_name()).second) return;
    if (e.is_base()) {
        lines.push_back(e.column() + " (base)");
        return;
    }
    for (const auto& c : e.children()) collect_lineage(c, lines, seen);
    lines.push_back(e.canonical_name() + " = " + render(e, true));
}

}  // namespace

std::string infix(const FeatureExpr& e) { return render(e, false); }

std::vector<std::string> lineage(const FeatureExpr& e) {
    std::vector<std::string> lines;
    std::unordered_set<std::string> seen;
    collect_lineage(e, lines, seen);
    return lines;
}

FeatureSubset::FeatureSubset(std::vector<FeatureExpr> exprs, std::int64_t origin)
    : exprs_(std::move(exprs)), origin_(origin) {
    std::unordered_set<std::string> seen;
    for (const auto& e : exprs_) {
        if (!seen.insert(e.canonical_name()).second) {
            throw Error(ErrorCode::PreconditionViolation, "duplicate feature '" + e.canonical_name() + "' in subset");
        }
    }
}

FeatureSubset FeatureSubset::originals(const Dataset& d) {
    std::vector<FeatureExpr> exprs;
    for (const auto& c : d.columns()) exprs.push_back(FeatureExpr::base(c.name));
    return FeatureSubset(std::move(exprs), 0);
}

bool FeatureSubset::contains(std::string_view name) const { return find(name) != nullptr; }

const FeatureExpr* FeatureSubset::find(std::string_view name) const {
    for (const auto& e : exprs_) {
        if (e.canonical_name() == name) return &e;
    }
    return nullptr;
}

std::vector<std::string> FeatureSubset::names() const {
    std::vector<std::string> out;
    out.reserve(exprs_.size());
    for (const auto& e : exprs_) out.push_back(e.canonical_name());
    return out;
}

bool FeatureSubset::insert(FeatureExpr e) {
    if (contains(e.canonical_name())) return false;
    exprs_.push_back(std::move(e));
    return true;
}

bool FeatureSubset::erase(std::string_view name) {
    auto it = std::find_if(exprs_.begin(), exprs_.end(),
                           [&](const FeatureExpr& e) { return e.canonical_name() == name; });
    if (it == exprs_.end()) return false;
    exprs_.erase(it);
    return true;
}

void FeatureSubset::check_columns(const Dataset& d) const {
    for (const auto& e : exprs_) {
        for (const auto& col : e.base_columns()) {
            if (!d.find_column(col)) throw Error(ErrorCode::UnknownColumn, "unknown column '" + col + "'");
        }
    }
}

}  // namespace lfg
