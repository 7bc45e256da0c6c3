#include "rppg/signal.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "rppg/error.hpp"

namespace rppg::signal {

namespace {

[[noreturn]] void parse_fail(std::size_t offset, const std::string& what) {
    throw Error(ErrorCode::parse, what + " at offset " + std::to_string(offset));
}

void skip_space_and_comments(std::span<const std::uint8_t> bytes, std::size_t& pos) {
    while (pos < bytes.size()) {
        if (std::isspace(bytes[pos])) {
            ++pos;
        } else if (bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else {
            break;
        }
    }
}

long read_header_int(std::span<const std::uint8_t> bytes, std::size_t& pos, const char* field) {
    skip_space_and_comments(bytes, pos);
    const std::size_t start = pos;
    long value = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
        value = value * 10 + (bytes[pos] - '0');
        if (value > 1'000'000) parse_fail(start, std::string("header ") + field + " too large");
        ++pos;
    }
    if (pos == start) parse_fail(start, std::string("expected header ") + field);
    return value;
}

}  // namespace

Channel parse_channel(const std::string& name) {
    if (name == "R" || name == "r") return Channel::R;
    if (name == "G" || name == "g") return Channel::G;
    if (name == "B" || name == "b") return Channel::B;
    throw Error(ErrorCode::configuration, "unknown channel '" + name + "' (expected R, G or B)");
}

Frame parse_frame_at(std::span<const std::uint8_t> bytes, std::size_t& offset) {
    std::size_t pos = offset;
    if (bytes.size() < pos + 2) parse_fail(pos, "truncated magic");
    if (bytes[pos] != 'P' || bytes[pos + 1] != '6') parse_fail(pos, "unsupported magic");
    pos += 2;
    if (pos >= bytes.size() || !(std::isspace(bytes[pos]) || bytes[pos] == '#')) {
        parse_fail(pos, "unsupported magic");
    }

    const long width = read_header_int(bytes, pos, "width");
    const long height = read_header_int(bytes, pos, "height");
    const std::size_t maxval_pos = pos;
    const long maxval = read_header_int(bytes, pos, "maxval");
    if (width < 1 || height < 1) parse_fail(maxval_pos, "image dimensions must be positive");
    if (maxval != 255) parse_fail(maxval_pos, "maxval " + std::to_string(maxval) + " unsupported (expected 255)");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) parse_fail(pos, "missing whitespace after maxval");
    ++pos;

    const std::size_t payload = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3;
    if (bytes.size() - pos < payload) {
        parse_fail(bytes.size(), "truncated pixel payload (expected " + std::to_string(payload) + " bytes from offset " +
                                     std::to_string(pos) + ")");
    }

    Frame frame;
    frame.width = static_cast<int>(width);
    frame.height = static_cast<int>(height);
    frame.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                        bytes.begin() + static_cast<std::ptrdiff_t>(pos + payload));
    offset = pos + payload;
    return frame;
}

Frame parse_frame(std::span<const std::uint8_t> bytes) {
    std::size_t offset = 0;
    return parse_frame_at(bytes, offset);
}

std::vector<std::uint8_t> serialize_frame(const Frame& frame) {
    const std::string header =
        "P6\n" + std::to_string(frame.width) + " " + std::to_string(frame.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), frame.pixels.begin(), frame.pixels.end());
    return out;
}

double mean_channel(const Frame& frame, const Roi& roi, Channel channel) {
    if (roi.w < 1 || roi.h < 1 || roi.x < 0 || roi.y < 0 || roi.x + roi.w > frame.width ||
        roi.y + roi.h > frame.height) {
        throw Error(ErrorCode::bounds, "ROI (" + std::to_string(roi.x) + "," + std::to_string(roi.y) + "," +
                                           std::to_string(roi.w) + "," + std::to_string(roi.h) +
                                           ") outside frame " + std::to_string(frame.width) + "x" +
                                           std::to_string(frame.height));
    }
    const int c = static_cast<int>(channel);
    std::uint64_t sum = 0;
    for (int y = roi.y; y < roi.y + roi.h; ++y) {
        const std::uint8_t* row = frame.pixels.data() + (static_cast<std::size_t>(y) * frame.width + roi.x) * 3 + c;
        for (int x = 0; x < roi.w; ++x) sum += row[static_cast<std::size_t>(x) * 3];
    }
    return static_cast<double>(sum) / (static_cast<double>(roi.w) * roi.h);
}

double interpolate(const Sample& a, const Sample& b, double t) {
    if (t >= b.t) return b.v;
    if (t <= a.t) return a.v;
    return a.v + (b.v - a.v) * ((t - a.t) / (b.t - a.t));
}

Trace resample_uniform(const Trace& trace, double fs) {
    if (trace.size() < 2) throw Error(ErrorCode::insufficient_data, "resampling needs at least 2 samples");
    if (!(fs > 0)) throw Error(ErrorCode::configuration, "resampling rate must be positive");
    check_increasing(trace);

    const auto& in = trace.samples;
    const double t0 = in.front().t;
    const double t_end = in.back().t;
    const auto n = static_cast<std::size_t>(std::floor((t_end - t0) * fs + 1e-9)) + 1;

    Trace out;
    out.nominal_fs = fs;
    out.samples.reserve(n);
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = t0 + static_cast<double>(i) / fs;
        while (j + 2 < in.size() && in[j + 1].t <= t) ++j;
        out.samples.push_back({t, interpolate(in[j], in[j + 1], t)});
    }
    return out;
}

std::vector<double> detrend_values(std::span<const double> values, double fs, double window) {
    if (!(window * fs >= 3.0)) {
        throw Error(ErrorCode::configuration, "detrend window shorter than 3 samples");
    }
    // Triangle = boxcar(window) convolved with itself; taps span 2L-1 samples.
    // A single boxcar this short would lift 0.667 Hz by ~20%.
    const auto half = std::max<std::ptrdiff_t>(2, std::lround(window * fs));
    const auto n = static_cast<std::ptrdiff_t>(values.size());
    std::vector<double> out(values.size());
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - half + 1);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, i + half - 1);
        double acc = 0.0;
        double weight = 0.0;
        const double center = values[static_cast<std::size_t>(i)];
        // Accumulate deviations from the center sample so constants cancel exactly.
        for (std::ptrdiff_t k = lo; k <= hi; ++k) {
            const auto w = static_cast<double>(half - std::abs(k - i));
            acc += w * (values[static_cast<std::size_t>(k)] - center);
            weight += w;
        }
        out[static_cast<std::size_t>(i)] = -acc / weight;
    }
    return out;
}

Trace detrend(const Trace& trace, double window) {
    if (!is_uniform(trace, trace.nominal_fs, 1e-6)) {
        throw Error(ErrorCode::precondition, "detrend requires a uniformly sampled trace");
    }
    std::vector<double> values;
    values.reserve(trace.size());
    for (const auto& s : trace.samples) values.push_back(s.v);
    const auto out = detrend_values(values, trace.nominal_fs, window);
    Trace result = trace;
    for (std::size_t i = 0; i < out.size(); ++i) result.samples[i].v = out[i];
    return result;
}

double SynthSpec::sigma_for_snr(double snr_db) { return std::sqrt(0.5 / std::pow(10.0, snr_db / 10.0)); }

void validate(const SynthSpec& spec) {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::configuration, what); };
    if (!(spec.duration > 0)) fail("duration must be positive");
    if (!(spec.fs > 0)) fail("sampling rate must be positive");
    if (!(spec.modulation_bpm >= 0)) fail("modulation_bpm must be non-negative");
    if (spec.base_bpm - spec.modulation_bpm < 40.0 || spec.base_bpm + spec.modulation_bpm > 200.0) {
        fail("base_bpm +/- modulation_bpm must stay within [40, 200]");
    }
    if (spec.fs < 4.0 * (spec.base_bpm + spec.modulation_bpm) / 60.0) {
        fail("sampling rate below twice the Nyquist rate of the fastest heart rate");
    }
    if (!(spec.noise_sigma >= 0)) fail("noise_sigma must be non-negative");
    if (!(spec.modulation_freq >= 0) || !(spec.baseline_drift_freq >= 0)) fail("frequencies must be non-negative");
}

double synth_bpm_at(const SynthSpec& spec, double t) {
    return spec.base_bpm + spec.modulation_bpm * std::sin(2.0 * std::numbers::pi * spec.modulation_freq * t);
}

namespace {

// Running integral of the instantaneous frequency, in cycles.
double synth_phase_at(const SynthSpec& spec, double t) {
    double beats = spec.base_bpm * t;
    if (spec.modulation_freq > 0) {
        const double w = 2.0 * std::numbers::pi * spec.modulation_freq;
        beats += spec.modulation_bpm * (1.0 - std::cos(w * t)) / w;
    }
    return beats / 60.0;
}

}  // namespace

std::pair<Trace, HrTrace> synth_ppg(const SynthSpec& spec) {
    validate(spec);
    const auto n = static_cast<std::size_t>(std::llround(spec.duration * spec.fs));
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0 ? spec.noise_sigma : 1.0);

    Trace trace;
    trace.nominal_fs = spec.fs;
    trace.samples.reserve(n);
    HrTrace truth;
    truth.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / spec.fs;
        double v = std::sin(2.0 * std::numbers::pi * synth_phase_at(spec, t));
        v += spec.baseline_drift_amp * std::sin(2.0 * std::numbers::pi * spec.baseline_drift_freq * t);
        if (spec.noise_sigma > 0) v += noise(rng);
        trace.samples.push_back({t, v});
        truth.samples.push_back({t, synth_bpm_at(spec, t), 1.0});
    }
    return {std::move(trace), std::move(truth)};
}

}  // namespace rppg::signal
