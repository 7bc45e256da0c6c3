#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rppg/trace.hpp"

namespace rppg::signal {

/// Row-major 8-bit RGB image.
struct Frame {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // width * height * 3

    std::uint8_t at(int x, int y, int channel) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + channel];
    }
};

struct Roi {
    int x = 0;
    int y = 0;
    int w = 1;
    int h = 1;
};

enum class Channel { R = 0, G = 1, B = 2 };

Channel parse_channel(const std::string& name);

/// Decodes one binary PPM (P6, maxval 255). Errors name the byte offset.
Frame parse_frame(std::span<const std::uint8_t> bytes);

/// Decodes the PPM starting at `offset` and advances it past the payload, so
/// a concatenated stream of frames can be walked one image at a time.
Frame parse_frame_at(std::span<const std::uint8_t> bytes, std::size_t& offset);

std::vector<std::uint8_t> serialize_frame(const Frame& frame);

/// Arithmetic mean of one channel over the ROI.
double mean_channel(const Frame& frame, const Roi& roi, Channel channel);

/// Linear interpolation between two samples bracketing t.
double interpolate(const Sample& a, const Sample& b, double t);

/// Linear interpolation onto t0, t0 + 1/fs, ... <= t_end.
Trace resample_uniform(const Trace& trace, double fs);

/// Removes the local baseline: each sample minus a centered triangular-weighted
/// moving average spanning `window` seconds. Edges use the truncated window.
Trace detrend(const Trace& trace, double window);

/// Same operation over raw values sampled at `fs`.
std::vector<double> detrend_values(std::span<const double> values, double fs, double window);

struct SynthSpec {
    double duration = 60.0;
    double fs = 30.0;
    double base_bpm = 72.0;
    double modulation_bpm = 0.0;
    double modulation_freq = 0.1;
    double noise_sigma = 0.0;
    double baseline_drift_amp = 0.0;
    double baseline_drift_freq = 0.05;
    std::uint64_t seed = 1;

    /// Noise sigma giving `snr_db` relative to the unit-amplitude pulse
    /// component (power 1/2).
    static double sigma_for_snr(double snr_db);
};

void validate(const SynthSpec& spec);

/// Ground-truth instantaneous rate of the generator, in BPM, at time t.
double synth_bpm_at(const SynthSpec& spec, double t);

/// Frequency-modulated sinusoid plus drift and Gaussian noise, with the exact
/// instantaneous rate on the same grid. Deterministic for a given seed.
std::pair<Trace, HrTrace> synth_ppg(const SynthSpec& spec);

}  // namespace rppg::signal
