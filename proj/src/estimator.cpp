#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "fft.hpp"
#include "rppg/error.hpp"
#include "rppg/hr.hpp"
#include "rppg/signal.hpp"

namespace rppg::hr {

void validate(const EstimatorConfig& config) {
    validate(config.band);
    auto fail = [](const std::string& what) { throw Error(ErrorCode::configuration, what); };
    if (!(config.fs > 0)) fail("sampling rate must be positive");
    if (config.band.f_max >= config.fs / 2.0) fail("cardiac band exceeds Nyquist frequency");
    if (config.n_scales < 2) fail("need at least 2 scales");
    if (!(config.window > 0) || !(config.hop > 0)) fail("window and hop must be positive");
    if (config.hop > config.window) fail("hop longer than window");
    if (!(config.min_span > 0)) fail("minimum span must be positive");
    if (config.detrend_window * config.fs < 3.0) fail("detrend window shorter than 3 samples");
}

namespace {

std::size_t report_offset_for(const EstimatorConfig& config, std::size_t window_samples) {
    // The largest scale has the widest cone of influence; stay a whole number
    // of seconds inside it so reported samples land on the 1 Hz grid.
    const double widest_coi = morlet_scale_for(config.band.f_min) * std::numbers::sqrt2;
    const auto guard = static_cast<std::size_t>(std::lround(std::ceil(widest_coi) * config.fs));
    if (guard >= window_samples / 2) return window_samples / 2;
    return window_samples - guard;
}

}  // namespace

WindowAnalyzer::WindowAnalyzer(const EstimatorConfig& config, std::size_t window_samples)
    : config_(config),
      window_samples_(window_samples),
      hop_samples_(static_cast<std::size_t>(std::max(1L, std::lround(config.hop * config.fs)))),
      report_offset_(report_offset_for(config, window_samples)),
      bank_(window_samples, config.fs, scales_for_band(config.fs, config.band, config.n_scales)) {}

HrSample WindowAnalyzer::analyze(std::span<const double> window_values, double report_time) const {
    const auto detrended = signal::detrend_values(window_values, config_.fs, config_.detrend_window);
    const double t0 = report_time - static_cast<double>(report_offset_) / config_.fs;
    const auto ridge = extract_ridge(bank_.scalogram(detrended, t0), config_.smoothing);
    HrSample out = ridge.samples[report_offset_];
    out.t = report_time;
    out.bpm = std::clamp(out.bpm, config_.band.min_bpm(), config_.band.max_bpm());
    return out;
}

HrTrace estimate_hr(const Trace& trace, const EstimatorConfig& config) {
    validate(config);
    check_increasing(trace);
    if (trace.size() < 2 || trace.span() < config.min_span) {
        throw Error(ErrorCode::insufficient_data, "trace spans " + std::to_string(trace.span()) + " s, need at least " +
                                                      std::to_string(config.min_span) + " s");
    }
    const Trace uniform = signal::resample_uniform(trace, config.fs);
    std::vector<double> values;
    values.reserve(uniform.size());
    for (const auto& s : uniform.samples) values.push_back(s.v);

    const std::size_t n = values.size();
    const auto full = static_cast<std::size_t>(std::lround(config.window * config.fs));
    const WindowAnalyzer analyzer(config, std::min(full, n));
    const std::size_t win = analyzer.window_samples();
    const double t0 = uniform.samples.front().t;

    HrTrace out;
    for (std::size_t start = 0; start + win <= n; start += analyzer.hop_samples()) {
        const double report_time = t0 + static_cast<double>(start + analyzer.report_offset()) / config.fs;
        out.samples.push_back(analyzer.analyze(std::span(values).subspan(start, win), report_time));
    }
    return out;
}

StreamingEstimator::StreamingEstimator(const EstimatorConfig& config)
    : config_((validate(config), config)),
      analyzer_(config, static_cast<std::size_t>(std::lround(config.window * config.fs))) {}

std::vector<HrSample> StreamingEstimator::push(const Sample& sample) {
    std::vector<HrSample> out;
    if (!last_) {
        t0_ = sample.t;
        uniform_.push_back(sample.v);
        next_grid_ = 1;
        last_ = sample;
        return out;
    }
    if (!(sample.t > last_->t)) {
        throw Error(ErrorCode::time_regression, "stream sample at " + std::to_string(sample.t) +
                                                    " s does not follow " + std::to_string(last_->t) + " s");
    }
    for (;;) {
        const double t = t0_ + static_cast<double>(next_grid_) / config_.fs;
        if (t > sample.t) break;
        uniform_.push_back(signal::interpolate(*last_, sample, t));
        ++next_grid_;
    }
    last_ = sample;
    emit_ready(out);
    return out;
}

void StreamingEstimator::emit_ready(std::vector<HrSample>& out) {
    const std::size_t win = analyzer_.window_samples();
    const std::size_t hop = analyzer_.hop_samples();
    for (;;) {
        const std::size_t start = next_window_ * hop;
        if (start + win > next_grid_) break;
        const std::span<const double> view(uniform_.data() + (start - buffer_start_), win);
        const double report_time = t0_ + static_cast<double>(start + analyzer_.report_offset()) / config_.fs;
        out.push_back(analyzer_.analyze(view, report_time));
        ++next_window_;
        ++windows_processed_;

        const std::size_t keep_from = next_window_ * hop;
        const std::size_t drop = std::min(keep_from - buffer_start_, uniform_.size());
        uniform_.erase(uniform_.begin(), uniform_.begin() + static_cast<std::ptrdiff_t>(drop));
        buffer_start_ += drop;
    }
}

HrTrace fft_hr_baseline(const Trace& trace, double window, const EstimatorConfig& config) {
    validate(config);
    if (window < 10.0) throw Error(ErrorCode::configuration, "baseline window must be at least 10 s");
    check_increasing(trace);
    if (trace.size() < 2 || trace.span() < config.min_span) {
        throw Error(ErrorCode::insufficient_data, "trace spans " + std::to_string(trace.span()) + " s, need at least " +
                                                      std::to_string(config.min_span) + " s");
    }
    const Trace uniform = signal::resample_uniform(trace, config.fs);
    std::vector<double> values;
    values.reserve(uniform.size());
    for (const auto& s : uniform.samples) values.push_back(s.v);

    const std::size_t n = values.size();
    const std::size_t win = std::min(static_cast<std::size_t>(std::lround(window * config.fs)), n);
    const auto hop = static_cast<std::size_t>(std::max(1L, std::lround(config.hop * config.fs)));
    const std::size_t nfft = detail::next_pow2(8 * win);
    const detail::Fft fft(nfft);
    const double bin_hz = config.fs / static_cast<double>(nfft);
    const auto k_lo = static_cast<std::size_t>(std::ceil(config.band.f_min / bin_hz));
    const auto k_hi = static_cast<std::size_t>(std::floor(config.band.f_max / bin_hz));
    // Hann main lobe spans +/- 2 native bins.
    const std::size_t lobe = 2 * nfft / win;

    std::vector<double> hann(win);
    for (std::size_t i = 0; i < win; ++i) {
        hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(win - 1));
    }

    const double t0 = uniform.samples.front().t;
    HrTrace out;
    std::vector<detail::cplx> buf(nfft);
    std::vector<double> power(nfft / 2 + 1);
    double carried = config.band.mid_bpm();
    for (std::size_t start = 0; start + win <= n; start += hop) {
        auto seg = signal::detrend_values(std::span(values).subspan(start, win), config.fs, config.detrend_window);
        double mean = 0.0;
        for (double v : seg) mean += v;
        mean /= static_cast<double>(win);

        std::fill(buf.begin(), buf.end(), detail::cplx{});
        for (std::size_t i = 0; i < win; ++i) buf[i] = (seg[i] - mean) * hann[i];
        fft.forward(buf);
        for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(buf[k]);

        double total = 0.0;
        std::size_t peak = k_lo;
        for (std::size_t k = k_lo; k <= k_hi; ++k) {
            total += power[k];
            if (power[k] > power[peak]) peak = k;
        }

        HrSample sample;
        sample.t = t0 + static_cast<double>(start + win / 2) / config.fs;
        if (!(total > 0.0)) {
            sample.bpm = carried;
            sample.confidence = 0.0;
            out.samples.push_back(sample);
            continue;
        }
        double delta = 0.0;
        if (peak > 0 && peak + 1 < power.size()) {
            const double a = power[peak - 1];
            const double b = power[peak];
            const double c = power[peak + 1];
            const double denom = a - 2.0 * b + c;
            if (denom < 0.0) delta = std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
        }
        const double freq = std::clamp((static_cast<double>(peak) + delta) * bin_hz, config.band.f_min,
                                       config.band.f_max);
        double lobe_power = 0.0;
        const std::size_t lo = peak > k_lo + lobe ? peak - lobe : k_lo;
        const std::size_t hi = std::min(k_hi, peak + lobe);
        for (std::size_t k = lo; k <= hi; ++k) lobe_power += power[k];

        sample.bpm = carried = 60.0 * freq;
        sample.confidence = std::clamp(lobe_power / total, 0.0, 1.0);
        out.samples.push_back(sample);
    }
    return out;
}

BeatPhase advance_phase(const BeatPhase& phase, const HrTrace& hr, double now) {
    if (now < phase.as_of) {
        throw Error(ErrorCode::time_regression, "cannot advance phase from " + std::to_string(phase.as_of) +
                                                    " s back to " + std::to_string(now) + " s");
    }
    if (hr.empty()) throw Error(ErrorCode::insufficient_data, "no heart-rate samples to advance phase");

    const auto& s = hr.samples;
    double cycles = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        // Sample i holds from its own time (or -inf for the first) to the next sample.
        const double seg_lo = i == 0 ? -std::numeric_limits<double>::infinity() : s[i].t;
        const double seg_hi = i + 1 < s.size() ? s[i + 1].t : std::numeric_limits<double>::infinity();
        const double lo = std::max(seg_lo, phase.as_of);
        const double hi = std::min(seg_hi, now);
        if (hi > lo) cycles += (hi - lo) * s[i].bpm / 60.0;
    }
    double p = phase.phase + cycles;
    p -= std::floor(p);
    if (p >= 1.0) p = 0.0;
    return {p, now};
}

}  // namespace rppg::hr
