#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace lfg {

enum class ErrorCode {
    FileNotFound,
    ParseError,
    LabelColumnMissing,
    DegenerateDataset,
    StratificationImpossible,
    KTooLarge,
    PreconditionViolation,
    DomainViolation,
    LengthMismatch,
    UnknownOperation,
    UnknownColumn,
    EmptyFeatureMatrix,
    DegenerateTraining,
    MalformedResponse,
    AgentUnavailable,
    AllAgentsEmpty,
    RootHasNoUcb,
    NothingToSelect,
    IncompleteRun,
    UnknownFeature,
    ConfigError,
    IoError,
};

std::string_view error_code_name(ErrorCode code);

// Errors caused by user input (bad config, bad files, bad names) map to
// CLI exit code 2; everything else is a runtime failure (exit code 3).
bool is_user_error(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }
    std::string_view code_name() const { return error_code_name(code_); }

private:
    ErrorCode code_;
};

class ParseError : public Error {
public:
    ParseError(std::size_t row, std::size_t column, const std::string& message)
        : Error(ErrorCode::ParseError,
                "row " + std::to_string(row) + ", column " + std::to_string(column) + ": " + message),
          row_(row),
          column_(column) {}

    std::size_t row() const noexcept { return row_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t row_;
    std::size_t column_;
};

class DomainViolation : public Error {
public:
    DomainViolation(std::string op, double fraction_bad)
        : Error(ErrorCode::DomainViolation,
                "operation '" + op + "' is undefined on " + std::to_string(fraction_bad * 100.0) +
                    "% of its input"),
          op_(std::move(op)),
          fraction_bad_(fraction_bad) {}

    const std::string& op() const noexcept { return op_; }
    double fraction_bad() const noexcept { return fraction_bad_; }

private:
    std::string op_;
    double fraction_bad_;
};

}  // namespace lfg
