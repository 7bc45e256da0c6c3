#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rppg {

enum class ErrorCode {
    parse,
    bounds,
    insufficient_data,
    configuration,
    precondition,
    time_regression,
    undefined_correlation,
    insufficient_overlap,
    routing,
    sequencing,
    incomplete_design,
    degenerate_pairs,
    domain,
    io,
    startup,
};

std::string_view to_string(ErrorCode code);

/// Every failure surfaced by the library carries one of the codes above so
/// callers (and the CLI exit path) can branch without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + " error: " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace rppg
