#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "fft.hpp"
#include "rppg/error.hpp"
#include "rppg/hr.hpp"

namespace rppg::hr {

using detail::cplx;

void validate(const CardiacBand& band) {
    if (!(band.f_min > 0) || !(band.f_max > band.f_min)) {
        throw Error(ErrorCode::configuration, "cardiac band requires 0 < f_min < f_max");
    }
}

double morlet_scale_for(double freq_hz, double omega0) { return omega0 / (2.0 * std::numbers::pi * freq_hz); }

ScaleSet scales_for_band(double fs, const CardiacBand& band, std::size_t n) {
    validate(band);
    if (n < 2) throw Error(ErrorCode::configuration, "need at least 2 scales");
    if (!(fs > 0)) throw Error(ErrorCode::configuration, "sampling rate must be positive");
    if (band.f_max >= fs / 2.0) throw Error(ErrorCode::configuration, "cardiac band exceeds Nyquist frequency");

    ScaleSet set;
    set.freqs.resize(n);
    set.scales.resize(n);
    const double log_lo = std::log(band.f_min);
    const double step = (std::log(band.f_max) - log_lo) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        set.freqs[i] = std::exp(log_lo + step * static_cast<double>(i));
    }
    set.freqs.front() = band.f_min;
    set.freqs.back() = band.f_max;
    for (std::size_t i = 0; i < n; ++i) set.scales[i] = morlet_scale_for(set.freqs[i]);
    return set;
}

cplx morlet_kernel(double k, double fs, double scale, double omega0) {
    const double u = k / (scale * fs);
    const double norm = std::sqrt(1.0 / (scale * fs)) * std::pow(std::numbers::pi, -0.25);
    return norm * std::exp(-0.5 * u * u) * cplx(std::cos(omega0 * u), std::sin(omega0 * u));
}

struct MorletBank::Impl {
    std::size_t nfft = 0;
    detail::Fft fft;
    std::vector<std::vector<cplx>> spectra;
    std::vector<std::size_t> half_widths;

    explicit Impl(std::size_t n) : nfft(n), fft(n) {}
};

MorletBank::MorletBank(std::size_t length, double fs, const ScaleSet& scales, double omega0)
    : length_(length), fs_(fs), omega0_(omega0), scales_(scales) {
    if (length == 0) throw Error(ErrorCode::configuration, "wavelet bank needs a positive signal length");
    if (scales.scales.empty()) throw Error(ErrorCode::configuration, "wavelet bank needs at least one scale");

    std::size_t max_half = 0;
    std::vector<std::size_t> halves;
    for (double s : scales.scales) {
        const auto half = static_cast<std::size_t>(std::ceil(kKernelSupport * s * fs));
        halves.push_back(half);
        max_half = std::max(max_half, half);
    }
    // Circular convolution of length N equals the linear one on [0, length)
    // when N >= length + half_width.
    impl_ = std::make_unique<Impl>(detail::next_pow2(length + max_half));
    impl_->half_widths = std::move(halves);

    const std::size_t nfft = impl_->nfft;
    impl_->spectra.reserve(scales.scales.size());
    for (std::size_t j = 0; j < scales.scales.size(); ++j) {
        std::vector<cplx> h(nfft, cplx{});
        const auto half = static_cast<std::ptrdiff_t>(impl_->half_widths[j]);
        for (std::ptrdiff_t m = -half; m <= half; ++m) {
            const auto idx = static_cast<std::size_t>((m % static_cast<std::ptrdiff_t>(nfft) +
                                                       static_cast<std::ptrdiff_t>(nfft)) %
                                                      static_cast<std::ptrdiff_t>(nfft));
            h[idx] += morlet_kernel(static_cast<double>(m), fs, scales.scales[j], omega0);
        }
        impl_->fft.forward(h);
        impl_->spectra.push_back(std::move(h));
    }
}

MorletBank::~MorletBank() = default;
MorletBank::MorletBank(MorletBank&&) noexcept = default;
MorletBank& MorletBank::operator=(MorletBank&&) noexcept = default;

std::size_t MorletBank::kernel_half_width(std::size_t j) const { return impl_->half_widths.at(j); }

std::vector<cplx> MorletBank::transform(std::span<const double> values) const {
    if (values.size() != length_) {
        throw Error(ErrorCode::precondition, "wavelet bank built for " + std::to_string(length_) +
                                                 " samples, got " + std::to_string(values.size()));
    }
    const std::size_t nfft = impl_->nfft;
    std::vector<cplx> spectrum(nfft, cplx{});
    std::copy(values.begin(), values.end(), spectrum.begin());
    impl_->fft.forward(spectrum);

    const std::size_t n_scales = impl_->spectra.size();
    std::vector<cplx> out(n_scales * length_);
    std::vector<cplx> work(nfft);
    const double inv_n = 1.0 / static_cast<double>(nfft);
    for (std::size_t j = 0; j < n_scales; ++j) {
        const auto& h = impl_->spectra[j];
        for (std::size_t k = 0; k < nfft; ++k) work[k] = spectrum[k] * h[k];
        impl_->fft.inverse(work);
        for (std::size_t b = 0; b < length_; ++b) out[j * length_ + b] = work[b] * inv_n;
    }
    return out;
}

Scalogram MorletBank::scalogram(std::span<const double> values, double t0) const {
    const auto coeffs = transform(values);
    const std::size_t n_scales = scales_.scales.size();

    Scalogram sg;
    sg.freqs = scales_.freqs;
    sg.scales = scales_.scales;
    sg.omega0 = omega0_;
    sg.times.resize(length_);
    for (std::size_t i = 0; i < length_; ++i) sg.times[i] = t0 + static_cast<double>(i) / fs_;
    sg.power.resize(length_ * n_scales);
    sg.in_coi.resize(length_ * n_scales);
    const double dt = 1.0 / fs_;
    for (std::size_t j = 0; j < n_scales; ++j) {
        const double coi = scales_.scales[j] * std::numbers::sqrt2;
        for (std::size_t i = 0; i < length_; ++i) {
            sg.power[i * n_scales + j] = std::norm(coeffs[j * length_ + i]);
            const double from_start = static_cast<double>(i) * dt;
            const double from_end = static_cast<double>(length_ - 1 - i) * dt;
            sg.in_coi[i * n_scales + j] = (from_start < coi || from_end < coi) ? 1 : 0;
        }
    }
    return sg;
}

Scalogram morlet_cwt(const Trace& trace, const ScaleSet& scales) {
    if (trace.empty()) throw Error(ErrorCode::insufficient_data, "empty trace");
    if (!is_uniform(trace, trace.nominal_fs, 1e-6)) {
        throw Error(ErrorCode::precondition, "wavelet transform requires a uniformly sampled trace");
    }
    std::vector<double> values;
    values.reserve(trace.size());
    for (const auto& s : trace.samples) values.push_back(s.v);
    const MorletBank bank(values.size(), trace.nominal_fs, scales);
    return bank.scalogram(values, trace.samples.front().t);
}

namespace {

// Peak-to-total ratio of the rectified power a pure tone at mid-band produces
// across the scale set. Used as the "perfectly clean" reference for confidence.
double tone_peak_ratio(const Scalogram& sg) {
    const std::size_t n = sg.n_freqs();
    const double fc = sg.freqs[n / 2];
    double total = 0.0;
    for (double f : sg.freqs) {
        const double d = sg.omega0 * (fc / f - 1.0);
        total += std::exp(-d * d);
    }
    return 1.0 / total;
}

double median_of(std::vector<double>& v) {
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = v[mid];
    if (v.size() % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

}  // namespace

HrTrace extract_ridge(const Scalogram& sg, double smoothing_seconds) {
    const std::size_t n_t = sg.n_times();
    const std::size_t n_f = sg.n_freqs();
    if (n_f == 0 || sg.power.size() != n_t * n_f || sg.in_coi.size() != n_t * n_f) {
        throw Error(ErrorCode::precondition, "degenerate scalogram");
    }
    const double mid_bpm = 30.0 * (sg.freqs.front() + sg.freqs.back());
    const double floor_ratio = 1.0 / static_cast<double>(n_f);
    const double tone_ratio = n_f > 1 ? tone_peak_ratio(sg) : 1.0;

    std::vector<double> raw_bpm(n_t);
    std::vector<double> confidence(n_t, 0.0);
    double carried = mid_bpm;
    for (std::size_t i = 0; i < n_t; ++i) {
        // Dividing |W|^2 by scale (equivalently multiplying by f) removes the
        // low-frequency bias of L2-normalized wavelets on a pure tone.
        double total = 0.0;
        double best = -1.0;
        std::size_t best_j = 0;
        bool all_coi = true;
        for (std::size_t j = 0; j < n_f; ++j) {
            const double p = sg.at(i, j) * sg.freqs[j];
            total += p;
            if (p > best) {
                best = p;
                best_j = j;
            }
            all_coi = all_coi && sg.coi(i, j);
        }
        if (!(total > 0.0)) {
            raw_bpm[i] = carried;
            continue;
        }
        raw_bpm[i] = carried = 60.0 * sg.freqs[best_j];
        if (all_coi) continue;
        const double ratio = best / total;
        confidence[i] =
            n_f > 1 ? std::clamp((ratio - floor_ratio) / (tone_ratio - floor_ratio), 0.0, 1.0) : 1.0;
    }

    std::size_t half = 0;
    if (n_t > 1 && smoothing_seconds > 0) {
        const double fs = 1.0 / (sg.times[1] - sg.times[0]);
        half = static_cast<std::size_t>(std::lround(smoothing_seconds * fs / 2.0));
    }

    HrTrace out;
    out.samples.reserve(n_t);
    std::vector<double> scratch;
    for (std::size_t i = 0; i < n_t; ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(n_t - 1, i + half);
        scratch.assign(raw_bpm.begin() + static_cast<std::ptrdiff_t>(lo),
                       raw_bpm.begin() + static_cast<std::ptrdiff_t>(hi + 1));
        out.samples.push_back({sg.times[i], median_of(scratch), confidence[i]});
    }
    return out;
}

}  // namespace rppg::hr
