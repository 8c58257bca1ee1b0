#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace merchcast {

// Every failure surfaced by the library carries the owning module and a
// stable error name so the CLI and the HTTP facade can map it without
// parsing message text.
enum class ErrorCode {
    // dataset
    UnknownColumn,
    TypeError,
    DuplicateId,
    EmptyDataset,
    MissingDataRejected,
    AllMissingColumn,
    UnfittedEncoder,
    UnknownCategory,
    InvalidEncoderSpec,
    MissingValue,
    // delphi
    TooFewExperts,
    EmptySampleSet,
    InvalidEpsilon,
    RoundClosed,
    RoundNotOpen,
    UnknownExpert,
    UnknownSample,
    IncompleteSheet,
    DuplicateSheet,
    ScoreOutOfRange,
    MissingSubmissions,
    RoundAlreadyClosed,
    RoundNotClosed,
    SessionIncomplete,
    // learners
    InvalidParams,
    SchemaMismatch,
    // evaluation / ensemble
    UnlabeledRecord,
    TooFewRecords,
    LengthMismatch,
    EmptyInput,
    InvalidWeights,
    InvalidStep,
    // infrastructure
    ParseError,
    IoError,
    StorageFull,
    UsageError,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, std::string_view module, const std::string& detail);

    ErrorCode code() const noexcept { return code_; }
    const std::string& module() const noexcept { return module_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string module_;
    std::string detail_;
};

}  // namespace merchcast
