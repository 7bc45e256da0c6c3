#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "rppg/hr.hpp"
#include "rppg/signal.hpp"
#include "rppg/validation.hpp"

namespace rppg::cli {

// Estimates below this confidence count as low-confidence in the summary line.
inline constexpr double kLowConfidence = 0.5;

struct EstimateOptions {
    std::filesystem::path input;   // trace CSV, PPM directory or concatenated PPM file
    std::filesystem::path roi;     // ROI sidecar; selects frame mode
    std::filesystem::path output;
    double fps = 30.0;
    std::string channel = "G";
    bool baseline = false;         // FFT estimator instead of the wavelet ridge
    hr::EstimatorConfig estimator{};
};

struct SimulateOptions {
    signal::SynthSpec spec{};
    std::optional<double> snr_db;  // overrides spec.noise_sigma
    std::filesystem::path trace_out;
    std::filesystem::path truth_out;
};

struct ValidateOptions {
    std::filesystem::path estimate;
    std::filesystem::path truth;   // HR CSV, or beats CSV (detected by header)
    std::filesystem::path output;  // JSON report
    double beats_fs = 4.0;
    validation::CompareOptions compare{};
};

struct AnalyzeOptions {
    std::filesystem::path responses;
    std::filesystem::path mapping;  // empty: placeholder mapping, with a warning
    std::filesystem::path output;   // JSON report; optional
};

// Each throws rppg::Error on failure and writes outputs only on success.
void cmd_estimate(const EstimateOptions& options, std::ostream& out);
void cmd_simulate(const SimulateOptions& options, std::ostream& out);
void cmd_validate(const ValidateOptions& options, std::ostream& out);
void cmd_analyze(const AnalyzeOptions& options, std::ostream& out);
void cmd_serve(const std::filesystem::path& config_path);

/// Parses argv and dispatches; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rppg::cli
