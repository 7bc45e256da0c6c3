#include "rppg/trace.hpp"

#include <cmath>
#include <string>

#include "rppg/error.hpp"

namespace rppg {

void check_increasing(const Trace& trace) {
    for (std::size_t i = 1; i < trace.samples.size(); ++i) {
        if (!(trace.samples[i].t > trace.samples[i - 1].t)) {
            throw Error(ErrorCode::precondition,
                        "trace timestamps not strictly increasing at sample " + std::to_string(i));
        }
    }
}

void check_increasing(const HrTrace& trace) {
    for (std::size_t i = 1; i < trace.samples.size(); ++i) {
        if (!(trace.samples[i].t > trace.samples[i - 1].t)) {
            throw Error(ErrorCode::precondition,
                        "heart-rate timestamps not strictly increasing at sample " + std::to_string(i));
        }
    }
}

bool is_uniform(const Trace& trace, double fs, double tol) {
    const double dt = 1.0 / fs;
    for (std::size_t i = 1; i < trace.samples.size(); ++i) {
        if (std::abs(trace.samples[i].t - trace.samples[i - 1].t - dt) > tol) return false;
    }
    return true;
}

}  // namespace rppg
