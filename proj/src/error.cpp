#include "efc/error.hpp"

namespace efc {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Io: return "io";
        case ErrorKind::Parse: return "parse";
        case ErrorKind::Conflict: return "conflict";
        case ErrorKind::Domain: return "domain";
        case ErrorKind::AxisCollision: return "axis-collision";
        case ErrorKind::EmptyIntersection: return "empty-intersection";
        case ErrorKind::Config: return "config";
        case ErrorKind::Structure: return "structure";
        case ErrorKind::Layer: return "layer";
        case ErrorKind::Coverage: return "coverage";
        case ErrorKind::EvaluationSet: return "evaluation-set";
        case ErrorKind::DegenerateSlice: return "degenerate-slice";
        case ErrorKind::Kind: return "kind";
        case ErrorKind::Alignment: return "alignment";
        case ErrorKind::Fit: return "fit";
        case ErrorKind::Range: return "range";
    }
    return "unknown";
}

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Io:
        case ErrorKind::Parse:
        case ErrorKind::Config:
        case ErrorKind::Domain:
        case ErrorKind::Conflict:
            return 2;
        default:
            return 1;
    }
}

}  // namespace efc
