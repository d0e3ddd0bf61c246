#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lfg {

enum class OpId {
    Sqrt,
    Square,
    Cos,
    Sin,
    Tan,
    Exp,
    Cube,
    Log,
    Reciprocal,
    Sigmoid,
    Plus,
    Subtract,
    Multiply,
    Divide,
};

struct Operation {
    OpId id;
    std::string_view name;
    int arity;
    bool commutative;
};

inline constexpr double kDivEpsilon = 1e-12;
inline constexpr double kExpCutoff = 700.0;
inline constexpr std::size_t kOperationCount = 14;

// The closed operation set, unary ops first, in the order the engine lists
// them in prompts.
std::span<const Operation> operation_registry();

// Throws UnknownOperation.
const Operation& lookup(std::string_view name);
const Operation& operation(OpId id);
bool is_known_operation(std::string_view name);

// Elementwise application. Throws DomainViolation when any element falls
// outside the operation's domain or would produce a non-finite result.
std::vector<double> apply_unary(const Operation& op, std::span<const double> x);
std::vector<double> apply_binary(const Operation& op, std::span<const double> x, std::span<const double> y);

// True when the scalar lies inside the domain of `op` (unary only).
bool unary_accepts(const Operation& op, double x);

}  // namespace lfg
