#include "cps/error.hpp"

namespace cps {

namespace {

std::string format_message(ErrorCode code, const std::string& message, std::optional<std::size_t> line) {
    std::string out(to_string(code));
    if (line) {
        out += " (line " + std::to_string(*line) + ")";
    }
    if (!message.empty()) {
        out += ": " + message;
    }
    return out;
}

}  // namespace

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::DuplicateProductId: return "DuplicateProductId";
        case ErrorCode::EmptyTextFields: return "EmptyTextFields";
        case ErrorCode::MalformedRecord: return "MalformedRecord";
        case ErrorCode::ProductNotFound: return "ProductNotFound";
        case ErrorCode::EmptyCorpus: return "EmptyCorpus";
        case ErrorCode::UnknownId: return "UnknownId";
        case ErrorCode::EmptySidSet: return "EmptySidSet";
        case ErrorCode::VocabMismatch: return "VocabMismatch";
        case ErrorCode::EmptyInterval: return "EmptyInterval";
        case ErrorCode::CorruptIndex: return "CorruptIndex";
        case ErrorCode::EmptyAllowedSet: return "EmptyAllowedSet";
        case ErrorCode::RemoteUnavailable: return "RemoteUnavailable";
        case ErrorCode::NonFiniteInput: return "NonFiniteInput";
        case ErrorCode::EmptyScope: return "EmptyScope";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::EmptyBatch: return "EmptyBatch";
        case ErrorCode::EvaluatorUnavailable: return "EvaluatorUnavailable";
        case ErrorCode::SessionNotFound: return "SessionNotFound";
        case ErrorCode::UnresolvedReference: return "UnresolvedReference";
        case ErrorCode::InvalidOverride: return "InvalidOverride";
        case ErrorCode::InvalidCutoff: return "InvalidCutoff";
        case ErrorCode::TooFewProducts: return "TooFewProducts";
        case ErrorCode::DatasetCorpusMismatch: return "DatasetCorpusMismatch";
        case ErrorCode::InvalidParameters: return "InvalidParameters";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message, std::optional<std::size_t> line)
    : std::runtime_error(format_message(code, message, line)), code_(code), line_(line) {}

}  // namespace cps
