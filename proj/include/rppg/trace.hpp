#pragma once

#include <cstddef>
#include <vector>

namespace rppg {

struct Sample {
    double t = 0.0;  // seconds
    double v = 0.0;
};

/// Time-stamped raw PPG amplitude for one person. Timestamps are strictly
/// increasing; nominal_fs is the rate the source claims to deliver.
struct Trace {
    std::vector<Sample> samples;
    double nominal_fs = 30.0;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
    double span() const { return samples.size() < 2 ? 0.0 : samples.back().t - samples.front().t; }
};

struct HrSample {
    double t = 0.0;           // seconds
    double bpm = 0.0;
    double confidence = 0.0;  // [0, 1]
};

/// Instantaneous heart rate series, BPM in [40, 200].
struct HrTrace {
    std::vector<HrSample> samples;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
};

/// Throws precondition error when timestamps are not strictly increasing.
void check_increasing(const Trace& trace);
void check_increasing(const HrTrace& trace);

/// True when every step equals 1/fs within `tol` seconds.
bool is_uniform(const Trace& trace, double fs, double tol = 1e-9);

}  // namespace rppg
