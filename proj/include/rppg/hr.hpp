#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "rppg/trace.hpp"

namespace rppg::hr {

inline constexpr double kMorletOmega0 = 6.0;

/// Frequency range searched for the cardiac ridge, in Hz.
struct CardiacBand {
    double f_min = 40.0 / 60.0;
    double f_max = 200.0 / 60.0;

    double min_bpm() const { return 60.0 * f_min; }
    double max_bpm() const { return 60.0 * f_max; }
    double mid_bpm() const { return 30.0 * (f_min + f_max); }
};

void validate(const CardiacBand& band);

struct ScaleSet {
    std::vector<double> freqs;   // Hz, strictly increasing
    std::vector<double> scales;  // seconds, s = omega0 / (2 pi f)
};

/// `n` log-spaced centre frequencies spanning the band (endpoints included).
ScaleSet scales_for_band(double fs, const CardiacBand& band, std::size_t n);

double morlet_scale_for(double freq_hz, double omega0 = kMorletOmega0);

/// Time x frequency power map. Row i is the column of the scalogram at times[i].
struct Scalogram {
    std::vector<double> times;
    std::vector<double> freqs;
    std::vector<double> scales;
    double omega0 = kMorletOmega0;
    std::vector<double> power;         // times.size() * freqs.size(), row-major by time
    std::vector<std::uint8_t> in_coi;  // same shape; 1 inside the cone of influence

    std::size_t n_times() const { return times.size(); }
    std::size_t n_freqs() const { return freqs.size(); }
    double at(std::size_t t, std::size_t f) const { return power[t * freqs.size() + f]; }
    double& at(std::size_t t, std::size_t f) { return power[t * freqs.size() + f]; }
    bool coi(std::size_t t, std::size_t f) const { return in_coi[t * freqs.size() + f] != 0; }
};

/// Precomputed analytic Morlet filters for one signal length, rate and scale
/// set. Convolution is done by frequency-domain multiplication on a padded
/// grid long enough that no output sample wraps around.
class MorletBank {
public:
    MorletBank(std::size_t length, double fs, const ScaleSet& scales, double omega0 = kMorletOmega0);
    ~MorletBank();
    MorletBank(MorletBank&&) noexcept;
    MorletBank& operator=(MorletBank&&) noexcept;

    std::size_t length() const { return length_; }
    double fs() const { return fs_; }
    const ScaleSet& scales() const { return scales_; }

    /// Complex coefficients, row-major [scale][sample].
    std::vector<std::complex<double>> transform(std::span<const double> values) const;

    /// |W|^2 laid out as a Scalogram whose first sample sits at t0.
    Scalogram scalogram(std::span<const double> values, double t0) const;

    /// Half-width (in samples) of the truncated kernel at scale index j.
    std::size_t kernel_half_width(std::size_t j) const;

private:
    struct Impl;
    std::size_t length_;
    double fs_;
    double omega0_;
    ScaleSet scales_;
    std::unique_ptr<Impl> impl_;
};

/// Discrete L2-normalized Morlet kernel value at lag `k` samples, scale s.
std::complex<double> morlet_kernel(double k, double fs, double scale, double omega0 = kMorletOmega0);

/// Gaussian envelope is truncated at this many scale units.
inline constexpr double kKernelSupport = 8.0;

Scalogram morlet_cwt(const Trace& trace, const ScaleSet& scales);

/// Per-column ridge: argmax of scale-rectified power, 2 s median smoothing,
/// peak-to-total confidence zeroed inside the cone of influence.
HrTrace extract_ridge(const Scalogram& scalogram, double smoothing_seconds = 2.0);

struct EstimatorConfig {
    double fs = 30.0;
    CardiacBand band{};
    std::size_t n_scales = 64;
    double detrend_window = 2.0;
    double window = 20.0;
    double hop = 1.0;
    double smoothing = 2.0;
    double min_span = 10.0;
};

void validate(const EstimatorConfig& config);

/// Runs detrend -> CWT -> ridge on fixed-length windows of a uniform signal and
/// reports one HR sample per window, taken `guard` seconds before the window end
/// so the reported column lies outside the cone of influence of every scale.
class WindowAnalyzer {
public:
    WindowAnalyzer(const EstimatorConfig& config, std::size_t window_samples);

    const EstimatorConfig& config() const { return config_; }
    std::size_t window_samples() const { return window_samples_; }
    std::size_t hop_samples() const { return hop_samples_; }
    /// Offset of the reported column from the window start, in samples.
    std::size_t report_offset() const { return report_offset_; }

    /// `report_time` is the timestamp of sample report_offset() in the window.
    HrSample analyze(std::span<const double> window_values, double report_time) const;

private:
    EstimatorConfig config_;
    std::size_t window_samples_;
    std::size_t hop_samples_;
    std::size_t report_offset_;
    MorletBank bank_;
};

/// Batch estimator: resample, then slide WindowAnalyzer with the configured hop.
HrTrace estimate_hr(const Trace& trace, const EstimatorConfig& config = {});

/// Incremental estimator for live streams. Emits exactly the samples that
/// estimate_hr would produce for the same input, as soon as each window fills.
class StreamingEstimator {
public:
    explicit StreamingEstimator(const EstimatorConfig& config = {});

    /// Feed one raw sample (timestamps strictly increasing). Returns any HR
    /// samples completed by it.
    std::vector<HrSample> push(const Sample& sample);

    std::size_t windows_processed() const { return windows_processed_; }

private:
    void emit_ready(std::vector<HrSample>& out);

    EstimatorConfig config_;
    WindowAnalyzer analyzer_;
    std::optional<Sample> last_;
    double t0_ = 0.0;
    std::size_t next_grid_ = 0;      // next uniform grid index to fill
    std::size_t buffer_start_ = 0;   // grid index of uniform_.front()
    std::vector<double> uniform_;
    std::size_t next_window_ = 0;
    std::size_t windows_processed_ = 0;
};

/// Independent periodogram estimator used to cross-check the wavelet path.
HrTrace fft_hr_baseline(const Trace& trace, double window = 20.0, const EstimatorConfig& config = {});

struct BeatPhase {
    double phase = 0.0;  // [0, 1)
    double as_of = 0.0;  // seconds
};

/// Advances the beat phase by the integral of bpm/60 over [as_of, now], with
/// the HR trace held piecewise constant from each sample onward.
BeatPhase advance_phase(const BeatPhase& phase, const HrTrace& hr, double now);

}  // namespace rppg::hr
