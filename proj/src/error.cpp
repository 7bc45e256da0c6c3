#include "rppg/error.hpp"

namespace rppg {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::parse: return "parse";
        case ErrorCode::bounds: return "bounds";
        case ErrorCode::insufficient_data: return "insufficient-data";
        case ErrorCode::configuration: return "configuration";
        case ErrorCode::precondition: return "precondition";
        case ErrorCode::time_regression: return "time-regression";
        case ErrorCode::undefined_correlation: return "undefined-correlation";
        case ErrorCode::insufficient_overlap: return "insufficient-overlap";
        case ErrorCode::routing: return "routing";
        case ErrorCode::sequencing: return "sequencing";
        case ErrorCode::incomplete_design: return "incomplete-design";
        case ErrorCode::degenerate_pairs: return "degenerate-pairs";
        case ErrorCode::domain: return "domain";
        case ErrorCode::io: return "io";
        case ErrorCode::startup: return "startup";
    }
    return "unknown";
}

}  // namespace rppg
