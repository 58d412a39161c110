#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cps {

enum class ErrorCode {
    // corpus_store
    DuplicateProductId,
    EmptyTextFields,
    MalformedRecord,
    ProductNotFound,
    // tokenizer
    EmptyCorpus,
    UnknownId,
    // fm_index
    EmptySidSet,
    VocabMismatch,
    EmptyInterval,
    CorruptIndex,
    // lm / decoder / ttr
    EmptyAllowedSet,
    RemoteUnavailable,
    NonFiniteInput,
    EmptyScope,
    EmptyInput,
    EmptyBatch,
    EvaluatorUnavailable,
    // dialogue / service
    SessionNotFound,
    UnresolvedReference,
    InvalidOverride,
    // eval_harness
    InvalidCutoff,
    TooFewProducts,
    DatasetCorpusMismatch,
    InvalidParameters,
    // generic
    IoError,
    InvalidConfig,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure surfaced by the engine. `line` is set for errors tied to a
/// record in a line-delimited input.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::optional<std::size_t> line = std::nullopt);

    ErrorCode code() const noexcept { return code_; }
    std::optional<std::size_t> line() const noexcept { return line_; }

private:
    ErrorCode code_;
    std::optional<std::size_t> line_;
};

}  // namespace cps
