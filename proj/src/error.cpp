#include "merchcast/error.hpp"

namespace merchcast {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::UnknownColumn: return "UnknownColumn";
        case ErrorCode::TypeError: return "TypeError";
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::EmptyDataset: return "EmptyDataset";
        case ErrorCode::MissingDataRejected: return "MissingDataRejected";
        case ErrorCode::AllMissingColumn: return "AllMissingColumn";
        case ErrorCode::UnfittedEncoder: return "UnfittedEncoder";
        case ErrorCode::UnknownCategory: return "UnknownCategory";
        case ErrorCode::InvalidEncoderSpec: return "InvalidEncoderSpec";
        case ErrorCode::MissingValue: return "MissingValue";
        case ErrorCode::TooFewExperts: return "TooFewExperts";
        case ErrorCode::EmptySampleSet: return "EmptySampleSet";
        case ErrorCode::InvalidEpsilon: return "InvalidEpsilon";
        case ErrorCode::RoundClosed: return "RoundClosed";
        case ErrorCode::RoundNotOpen: return "RoundNotOpen";
        case ErrorCode::UnknownExpert: return "UnknownExpert";
        case ErrorCode::UnknownSample: return "UnknownSample";
        case ErrorCode::IncompleteSheet: return "IncompleteSheet";
        case ErrorCode::DuplicateSheet: return "DuplicateSheet";
        case ErrorCode::ScoreOutOfRange: return "ScoreOutOfRange";
        case ErrorCode::MissingSubmissions: return "MissingSubmissions";
        case ErrorCode::RoundAlreadyClosed: return "RoundAlreadyClosed";
        case ErrorCode::RoundNotClosed: return "RoundNotClosed";
        case ErrorCode::SessionIncomplete: return "SessionIncomplete";
        case ErrorCode::InvalidParams: return "InvalidParams";
        case ErrorCode::SchemaMismatch: return "SchemaMismatch";
        case ErrorCode::UnlabeledRecord: return "UnlabeledRecord";
        case ErrorCode::TooFewRecords: return "TooFewRecords";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::InvalidWeights: return "InvalidWeights";
        case ErrorCode::InvalidStep: return "InvalidStep";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::StorageFull: return "StorageFull";
        case ErrorCode::UsageError: return "UsageError";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, std::string_view module, const std::string& detail)
    : std::runtime_error(std::string(module) + ": " + std::string(to_string(code)) +
                         (detail.empty() ? std::string() : ": " + detail)),
      code_(code),
      module_(module),
      detail_(detail) {}

}  // namespace merchcast
