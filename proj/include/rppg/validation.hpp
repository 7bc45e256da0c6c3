#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rppg/trace.hpp"

namespace rppg::validation {

/// R-peak timestamps in seconds, strictly increasing.
struct RrSeries {
    std::vector<double> beats;
};

inline constexpr double kMinRrSeconds = 60.0 / 200.0;
inline constexpr double kMaxRrSeconds = 60.0 / 40.0;

/// Indices i of intervals beats[i] -> beats[i+1] outside the plausible range.
std::vector<std::size_t> implausible_intervals(const RrSeries& rr);

/// Instantaneous rate 60/interval placed at each interval midpoint, linearly
/// interpolated onto a grid at `fs`. Implausible intervals are skipped.
HrTrace rr_to_hr(const RrSeries& rr, double fs);

/// Sample Pearson correlation. Throws undefined-correlation when either input
/// has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

struct CompareOptions {
    double min_overlap = 30.0;  // seconds
    double max_lag = 0.0;       // seconds; 0 disables the lag search
    double lag_step = 0.25;
};

struct ValidationReport {
    std::optional<double> pearson_r;
    std::string pearson_error;  // set when pearson_r is absent
    double rmse_bpm = 0.0;
    double mean_abs_err_bpm = 0.0;
    std::size_t n_samples = 0;
    std::size_t n_excluded = 0;
    double duration = 0.0;
    double lag = 0.0;
};

/// Resamples both series onto a common 1 Hz grid over their overlap and
/// compares them. Grid points where the estimate has zero confidence are
/// excluded and counted.
ValidationReport align_and_compare(const HrTrace& est, const HrTrace& truth, const CompareOptions& options = {});

std::string to_key_value(const ValidationReport& report);
std::string to_json(const ValidationReport& report);

}  // namespace rppg::validation
