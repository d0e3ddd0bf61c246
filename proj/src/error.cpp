#include "lfg/error.hpp"

namespace lfg {

std::string_view error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::FileNotFound: return "FileNotFound";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::LabelColumnMissing: return "LabelColumnMissing";
        case ErrorCode::DegenerateDataset: return "DegenerateDataset";
        case ErrorCode::StratificationImpossible: return "StratificationImpossible";
        case ErrorCode::KTooLarge: return "KTooLarge";
        case ErrorCode::PreconditionViolation: return "PreconditionViolation";
        case ErrorCode::DomainViolation: return "DomainViolation";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::UnknownOperation: return "UnknownOperation";
        case ErrorCode::UnknownColumn: return "UnknownColumn";
        case ErrorCode::EmptyFeatureMatrix: return "EmptyFeatureMatrix";
        case ErrorCode::DegenerateTraining: return "DegenerateTraining";
        case ErrorCode::MalformedResponse: return "MalformedResponse";
        case ErrorCode::AgentUnavailable: return "AgentUnavailable";
        case ErrorCode::AllAgentsEmpty: return "AllAgentsEmpty";
        case ErrorCode::RootHasNoUcb: return "RootHasNoUcb";
        case ErrorCode::NothingToSelect: return "NothingToSelect";
        case ErrorCode::IncompleteRun: return "IncompleteRun";
        case ErrorCode::UnknownFeature: return "UnknownFeature";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

bool is_user_error(ErrorCode code) {
    switch (code) {
        case ErrorCode::FileNotFound:
        case ErrorCode::ParseError:
        case ErrorCode::LabelColumnMissing:
        case ErrorCode::DegenerateDataset:
        case ErrorCode::StratificationImpossible:
        case ErrorCode::KTooLarge:
        case ErrorCode::IncompleteRun:
        case ErrorCode::UnknownFeature:
        case ErrorCode::ConfigError:
            return true;
        default:
            return false;
    }
}

}  // namespace lfg
