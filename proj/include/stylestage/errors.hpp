#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stylestage {

enum class ErrorKind {
    Range,
    Validation,
    Structure,
    Numeric,
    Io,
    Config,
    Integrity,
    Version,
    Truncated,
    Transport,
    Content,
    UnsupportedModality,
};

std::string_view to_string(ErrorKind kind);

// Base for every error the library throws. `kind()` lets callers map
// failures to exit codes without catching each subtype.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

#define STYLESTAGE_DEFINE_ERROR(Name, Kind)                                  \
    class Name : public Error {                                              \
    public:                                                                  \
        explicit Name(const std::string& message) : Error(Kind, message) {}  \
    };

STYLESTAGE_DEFINE_ERROR(RangeError, ErrorKind::Range)
STYLESTAGE_DEFINE_ERROR(ValidationError, ErrorKind::Validation)
STYLESTAGE_DEFINE_ERROR(StructureError, ErrorKind::Structure)
STYLESTAGE_DEFINE_ERROR(NumericError, ErrorKind::Numeric)
STYLESTAGE_DEFINE_ERROR(IoError, ErrorKind::Io)
STYLESTAGE_DEFINE_ERROR(ConfigError, ErrorKind::Config)
STYLESTAGE_DEFINE_ERROR(IntegrityError, ErrorKind::Integrity)
STYLESTAGE_DEFINE_ERROR(VersionError, ErrorKind::Version)
STYLESTAGE_DEFINE_ERROR(TruncatedError, ErrorKind::Truncated)
STYLESTAGE_DEFINE_ERROR(ContentError, ErrorKind::Content)
STYLESTAGE_DEFINE_ERROR(UnsupportedModalityError, ErrorKind::UnsupportedModality)

#undef STYLESTAGE_DEFINE_ERROR

// Network or subprocess failure that may succeed when retried.
class TransportError : public Error {
public:
    TransportError(const std::string& message, int attempts)
        : Error(ErrorKind::Transport, message), attempts_(attempts) {}

    bool retryable() const noexcept { return true; }
    int attempts() const noexcept { return attempts_; }

private:
    int attempts_;
};

}  // namespace stylestage
