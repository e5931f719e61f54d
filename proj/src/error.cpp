#include "baq/error.hpp"

namespace baq {

const char * error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument:     return "InvalidArgument";
        case ErrorKind::DimensionMismatch:   return "DimensionMismatch";
        case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
        case ErrorKind::DegenerateRow:       return "DegenerateRow";
        case ErrorKind::InvalidRange:        return "InvalidRange";
        case ErrorKind::BadMagic:            return "BadMagic";
        case ErrorKind::BadVersion:          return "BadVersion";
        case ErrorKind::TruncatedPayload:    return "TruncatedPayload";
        case ErrorKind::CodeOverflow:        return "CodeOverflow";
        case ErrorKind::Io:                  return "Io";
    }
    return "Unknown";
}

} // namespace baq
