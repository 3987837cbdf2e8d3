#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cmlrec {

enum class ErrorKind {
    EmptyCorpus,
    NoKnownTokens,
    UnknownMovie,
    NoPositives,
    DimensionMismatch,
    MissingEmbedding,
    DegenerateDataset,
    EmptyEligibleHistory,
    SingleClass,
    EmptySegment,
    InvalidConfig,
    ParseError,
    ConfigError,
    MissingArtifact,
    StaleArtifact,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::NoKnownTokens: return "NoKnownTokens";
    case ErrorKind::UnknownMovie: return "UnknownMovie";
    case ErrorKind::NoPositives: return "NoPositives";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::MissingEmbedding: return "MissingEmbedding";
    case ErrorKind::DegenerateDataset: return "DegenerateDataset";
    case ErrorKind::EmptyEligibleHistory: return "EmptyEligibleHistory";
    case ErrorKind::SingleClass: return "SingleClass";
    case ErrorKind::EmptySegment: return "EmptySegment";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::MissingArtifact: return "MissingArtifact";
    case ErrorKind::StaleArtifact: return "StaleArtifact";
    }
    return "Unknown";
}

/// Process exit code for an error surfaced by the CLI:
/// 2 config error, 3 missing or stale artifact, 4 data error.
inline int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::ConfigError:
    case ErrorKind::InvalidConfig:
        return 2;
    case ErrorKind::MissingArtifact:
    case ErrorKind::StaleArtifact:
        return 3;
    default:
        return 4;
    }
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& detail)
        : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind), detail_(detail) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorKind kind_;
    std::string detail_;
};

}
