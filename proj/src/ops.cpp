#include "lfg/ops.hpp"

#include <algorithm>
#include <cmath>

#include "lfg/error.hpp"

namespace lfg {

namespace {

constexpr std::array<Operation, kOperationCount> kRegistry{{
    {OpId::Sqrt, "sqrt", 1, false},
    {OpId::Square, "square", 1, false},
    {OpId::Cos, "cos", 1, false},
    {OpId::Sin, "sin", 1, false},
    {OpId::Tan, "tan", 1, false},
    {OpId::Exp, "exp", 1, false},
    {OpId::Cube, "cube", 1, false},
    {OpId::Log, "log", 1, false},
    {OpId::Reciprocal, "reciprocal", 1, false},
    {OpId::Sigmoid, "sigmoid", 1, false},
    {OpId::Plus, "plus", 2, true},
    {OpId::Subtract, "subtract", 2, false},
    {OpId::Multiply, "multiply", 2, true},
    {OpId::Divide, "divide", 2, false},
}};

double unary_value(OpId id, double x) {
    switch (id) {
        case OpId::Sqrt: return std::sqrt(x);
        case OpId::Square: return x * x;
        case OpId::Cos: return std::cos(x);
        case OpId::Sin: return std::sin(x);
        case OpId::Tan: return std::tan(x);
        case OpId::Exp: return std::exp(x);
        case OpId::Cube: return x * x * x;
        case OpId::Log: return std::log(x);
        case OpId::Reciprocal: return 1.0 / x;
        case OpId::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
        default: break;
    }
    throw Error(ErrorCode::PreconditionViolation, "not a unary operation");
}

double binary_value(OpId id, double x, double y) {
    switch (id) {
        case OpId::Plus: return x + y;
        case OpId::Subtract: return x - y;
        case OpId::Multiply: return x * y;
        case OpId::Divide: return x / y;
        default: break;
    }
    throw Error(ErrorCode::PreconditionViolation, "not a binary operation");
}

}  // namespace

std::span<const Operation> operation_registry() { return kRegistry; }

const Operation& lookup(std::string_view name) {
    for (const auto& op : kRegistry) {
        if (op.name == name) return op;
    }
    throw Error(ErrorCode::UnknownOperation, "unknown operation '" + std::string(name) + "'");
}

const Operation& operation(OpId id) { return kRegistry[static_cast<std::size_t>(id)]; }

bool is_known_operation(std::string_view name) {
    return std::any_of(kRegistry.begin(), kRegistry.end(), [&](const Operation& op) { return op.name == name; });
}

bool unary_accepts(const Operation& op, double x) {
    if (!std::isfinite(x)) return false;
    switch (op.id) {
        case OpId::Sqrt: return x >= 0.0;
        case OpId::Log: return x > 0.0;
        case OpId::Reciprocal: return std::fabs(x) >= kDivEpsilon;
        case OpId::Exp: return x <= kExpCutoff;
        case OpId::Tan: return std::fabs(std::cos(x)) >= kDivEpsilon;
        default: return std::isfinite(unary_value(op.id, x));
    }
}

std::vector<double> apply_unary(const Operation& op, std::span<const double> x) {
    if (op.arity != 1) {
        throw Error(ErrorCode::PreconditionViolation, "'" + std::string(op.name) + "' is not unary");
    }
    std::vector<double> out(x.size());
    std::size_t bad = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!unary_accepts(op, x[i])) {
            ++bad;
            continue;
        }
        out[i] = unary_value(op.id, x[i]);
        if (!std::isfinite(out[i])) ++bad;
    }
    if (bad > 0) throw DomainViolation(std::string(op.name), static_cast<double>(bad) / static_cast<double>(x.size()));
    return out;
}

std::vector<double> apply_binary(const Operation& op, std::span<const double> x, std::span<const double> y) {
    if (op.arity != 2) {
        throw Error(ErrorCode::PreconditionViolation, "'" + std::string(op.name) + "' is not binary");
    }
    if (x.size() != y.size()) {
        throw Error(ErrorCode::LengthMismatch, "operand lengths " + std::to_string(x.size()) + " and " +
                                                   std::to_string(y.size()) + " differ");
    }
    std::vector<double> out(x.size());
    std::size_t bad = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (op.id == OpId::Divide && !(std::fabs(y[i]) >= kDivEpsilon)) {
            ++bad;
            continue;
        }
        out[i] = binary_value(op.id, x[i], y[i]);
        if (!std::isfinite(out[i])) ++bad;
    }
    if (bad > 0) throw DomainViolation(std::string(op.name), static_cast<double>(bad) / static_cast<double>(x.size()));
    return out;
}

}  // namespace lfg
