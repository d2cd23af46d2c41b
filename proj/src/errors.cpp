#include "stylestage/errors.hpp"

namespace stylestage {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Range: return "range";
        case ErrorKind::Validation: return "validation";
        case ErrorKind::Structure: return "structure";
        case ErrorKind::Numeric: return "numeric";
        case ErrorKind::Io: return "io";
        case ErrorKind::Config: return "config";
        case ErrorKind::Integrity: return "integrity";
        case ErrorKind::Version: return "version";
        case ErrorKind::Truncated: return "truncated";
        case ErrorKind::Transport: return "transport";
        case ErrorKind::Content: return "content";
        case ErrorKind::UnsupportedModality: return "unsupported_modality";
    }
    return "unknown";
}

}  // namespace stylestage
