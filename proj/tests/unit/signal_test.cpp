#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "rppg/error.hpp"
#include "rppg/signal.hpp"

using namespace rppg;
using namespace rppg::signal;

namespace {

std::vector<std::uint8_t> ppm_bytes(const std::string& header, std::size_t payload, std::uint8_t fill = 0) {
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), payload, fill);
    return out;
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorCode::io;
}

Frame random_frame(int w, int h, std::mt19937& rng) {
    Frame f{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w * h * 3))};
    std::uniform_int_distribution<int> px(0, 255);
    for (auto& p : f.pixels) p = static_cast<std::uint8_t>(px(rng));
    return f;
}

Trace uniform_trace(std::size_t n, double fs, auto&& fn) {
    Trace t;
    for (std::size_t i = 0; i < n; ++i) {
        const double ti = static_cast<double>(i) / fs;
        t.samples.push_back({ti, fn(ti)});
    }
    t.nominal_fs = fs;
    return t;
}

}  // namespace

TEST(ParseFrame, TwoByTwoPayload) {
    std::vector<std::uint8_t> bytes = ppm_bytes("P6\n2 2\n255\n", 0);
    for (int i = 0; i < 4; ++i) bytes.insert(bytes.end(), {10, 20, 30});
    const Frame f = parse_frame(bytes);
    EXPECT_EQ(f.width, 2);
    EXPECT_EQ(f.height, 2);
    ASSERT_EQ(f.pixels.size(), 12u);
    for (int i = 0; i < 4; ++i) {
        EXPECT_EQ(f.pixels[i * 3], 10);
        EXPECT_EQ(f.pixels[i * 3 + 1], 20);
        EXPECT_EQ(f.pixels[i * 3 + 2], 30);
    }
}

TEST(ParseFrame, RejectsP5Magic) {
    const auto bytes = ppm_bytes("P5\n2 2\n255\n", 4);
    try {
        parse_frame(bytes);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::parse);
        EXPECT_NE(std::string(e.what()).find("unsupported magic"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("offset 0"), std::string::npos);
    }
}

TEST(ParseFrame, TruncatedPayloadNamesOffset) {
    const auto bytes = ppm_bytes("P6\n2 2\n255\n", 11);
    try {
        parse_frame(bytes);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::parse);
        EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
    }
}

TEST(ParseFrame, RejectsMaxvalOtherThan255) {
    EXPECT_EQ(code_of([] { parse_frame(ppm_bytes("P6\n1 1\n65535\n", 6)); }), ErrorCode::parse);
    EXPECT_EQ(code_of([] { parse_frame(ppm_bytes("P6\n1 1\n15\n", 3)); }), ErrorCode::parse);
}

TEST(ParseFrame, HeaderCommentsAndRoundTrip) {
    std::mt19937 rng(7);
    const Frame f = random_frame(5, 3, rng);
    const auto bytes = serialize_frame(f);
    EXPECT_EQ(parse_frame(bytes).pixels, f.pixels);

    auto commented = ppm_bytes("P6\n# made by a camera\n1 1\n# depth\n255\n", 0);
    commented.insert(commented.end(), {1, 2, 3});
    EXPECT_EQ(parse_frame(commented).pixels, (std::vector<std::uint8_t>{1, 2, 3}));
}

TEST(ParseFrame, ConcatenatedStream) {
    std::mt19937 rng(8);
    const Frame a = random_frame(3, 2, rng), b = random_frame(2, 4, rng);
    auto bytes = serialize_frame(a);
    const auto tail = serialize_frame(b);
    bytes.insert(bytes.end(), tail.begin(), tail.end());
    std::size_t offset = 0;
    EXPECT_EQ(parse_frame_at(bytes, offset).pixels, a.pixels);
    EXPECT_EQ(parse_frame_at(bytes, offset).pixels, b.pixels);
    EXPECT_EQ(offset, bytes.size());
}

TEST(MeanChannel, ConstantField) {
    Frame f{8, 6, std::vector<std::uint8_t>(8 * 6 * 3, 100)};
    EXPECT_DOUBLE_EQ(mean_channel(f, {1, 2, 5, 3}, Channel::G), 100.0);
    EXPECT_DOUBLE_EQ(mean_channel(f, {0, 0, 8, 6}, Channel::R), 100.0);
}

TEST(MeanChannel, TwoPointMean) {
    Frame f{2, 1, {0, 0, 0, 0, 255, 0}};
    EXPECT_DOUBLE_EQ(mean_channel(f, {0, 0, 2, 1}, Channel::G), 127.5);
}

TEST(MeanChannel, MatchesNaiveLoop) {
    std::mt19937 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const Frame f = random_frame(40, 30, rng);
        const Roi roi{trial % 20, trial % 10, 16, 16};
        for (int c = 0; c < 3; ++c) {
            double sum = 0;
            for (int y = roi.y; y < roi.y + roi.h; ++y) {
                for (int x = roi.x; x < roi.x + roi.w; ++x) sum += f.at(x, y, c);
            }
            EXPECT_DOUBLE_EQ(mean_channel(f, roi, static_cast<Channel>(c)), sum / (16.0 * 16.0));
        }
    }
}

TEST(MeanChannel, InvariantUnderPermutationInsideRoi) {
    std::mt19937 rng(12);
    Frame f = random_frame(20, 20, rng);
    const Roi roi{3, 4, 10, 8};
    const double before = mean_channel(f, roi, Channel::G);
    std::vector<std::uint8_t> inside;
    for (int y = roi.y; y < roi.y + roi.h; ++y) {
        for (int x = roi.x; x < roi.x + roi.w; ++x) inside.push_back(f.at(x, y, 1));
    }
    std::shuffle(inside.begin(), inside.end(), rng);
    std::size_t k = 0;
    for (int y = roi.y; y < roi.y + roi.h; ++y) {
        for (int x = roi.x; x < roi.x + roi.w; ++x) f.pixels[(y * 20 + x) * 3 + 1] = inside[k++];
    }
    EXPECT_DOUBLE_EQ(mean_channel(f, roi, Channel::G), before);
}

TEST(MeanChannel, OutOfBoundsRoi) {
    Frame f{4, 4, std::vector<std::uint8_t>(48, 1)};
    EXPECT_EQ(code_of([&] { mean_channel(f, {2, 2, 3, 1}, Channel::G); }), ErrorCode::bounds);
    EXPECT_EQ(code_of([&] { mean_channel(f, {-1, 0, 2, 2}, Channel::G); }), ErrorCode::bounds);
    EXPECT_EQ(code_of([&] { mean_channel(f, {0, 0, 0, 2}, Channel::G); }), ErrorCode::bounds);
}

TEST(ResampleUniform, FixedPoints) {
    const Trace t = uniform_trace(50, 30.0, [](double x) { return std::sin(3 * x); });
    const Trace r = resample_uniform(t, 30.0);
    ASSERT_EQ(r.size(), t.size());
    for (std::size_t i = 0; i < t.size(); ++i) EXPECT_NEAR(r.samples[i].v, t.samples[i].v, 1e-12);
}

TEST(ResampleUniform, Linearity) {
    Trace t;
    t.samples = {{0, 0}, {1, 10}};
    const Trace r = resample_uniform(t, 4.0);
    ASSERT_EQ(r.size(), 5u);
    const double expected[] = {0, 2.5, 5, 7.5, 10};
    for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(r.samples[i].v, expected[i]);
}

TEST(ResampleUniform, JitteredSineAgainstAnalytic) {
    std::mt19937 rng(5);
    // Millisecond-scale timestamp jitter, as from a camera clock.
    std::uniform_real_distribution<double> jitter(-0.001, 0.001);
    for (double f : {0.7, 1.5, 3.0}) {
        Trace t;
        for (int i = 0; i < 900; ++i) {
            const double ti = i / 30.0 + (i == 0 ? 0.0 : jitter(rng));
            t.samples.push_back({ti, std::sin(2 * std::numbers::pi * f * ti)});
        }
        const Trace r = resample_uniform(t, 30.0);
        double worst = 0;
        for (const auto& s : r.samples) worst = std::max(worst, std::abs(s.v - std::sin(2 * std::numbers::pi * f * s.t)));
        EXPECT_LT(worst, 0.01) << f;
    }
}

TEST(ResampleUniform, GridSpacingExact) {
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> step(0.02, 0.05);
    Trace t;
    double ti = 0.37;
    for (int i = 0; i < 400; ++i, ti += step(rng)) t.samples.push_back({ti, static_cast<double>(i)});
    const Trace r = resample_uniform(t, 30.0);
    for (std::size_t i = 1; i < r.size(); ++i) EXPECT_NEAR(r.samples[i].t - r.samples[i - 1].t, 1.0 / 30.0, 1e-12);
}

TEST(ResampleUniform, TooFewSamples) {
    Trace t;
    t.samples = {{0, 1}};
    EXPECT_EQ(code_of([&] { resample_uniform(t, 30.0); }), ErrorCode::insufficient_data);
}

TEST(Detrend, ConstantBecomesZero) {
    const Trace t = uniform_trace(300, 30.0, [](double) { return 42.5; });
    for (const auto& s : detrend(t, 2.0).samples) EXPECT_EQ(s.v, 0.0);
}

TEST(Detrend, LinearRampInterior) {
    const Trace t = uniform_trace(600, 30.0, [](double x) { return 3.0 + 7.0 * x; });
    const double span = 7.0 * t.samples.back().t;
    const Trace d = detrend(t, 2.0);
    for (std::size_t i = 60; i + 60 < d.size(); ++i) EXPECT_LT(std::abs(d.samples[i].v), 1e-9 * span);
}

TEST(Detrend, KeepsCardiacSine) {
    const double f = 1.2;
    const Trace t = uniform_trace(1800, 30.0, [&](double x) { return std::sin(2 * std::numbers::pi * f * x); });
    const Trace d = detrend(t, 2.0);
    double peak = 0;
    for (std::size_t i = 60; i + 60 < d.size(); ++i) peak = std::max(peak, std::abs(d.samples[i].v));
    EXPECT_NEAR(peak, 1.0, 0.05);
}

TEST(Detrend, LowestCardiacFrequencyAttenuationUnderFivePercent) {
    const double f = 40.0 / 60.0;
    const Trace t = uniform_trace(1800, 30.0, [&](double x) { return std::sin(2 * std::numbers::pi * f * x); });
    const Trace d = detrend(t, 2.0);
    double peak = 0;
    for (std::size_t i = 60; i + 60 < d.size(); ++i) peak = std::max(peak, std::abs(d.samples[i].v));
    EXPECT_NEAR(peak, 1.0, 0.05);
}

TEST(Detrend, IdempotentOnBandLimitedSines) {
    // Frequencies on the zeros of the smoothing kernel's response (k fs / L with
    // L = 60 samples) pass through the filter unchanged.
    for (double f : {1.0, 2.0, 3.0}) {
        const Trace t = uniform_trace(1800, 30.0, [&](double x) { return std::sin(2 * std::numbers::pi * f * x + 0.3); });
        const Trace once = detrend(t, 2.0);
        const Trace twice = detrend(once, 2.0);
        for (std::size_t i = 120; i + 120 < once.size(); ++i) {
            EXPECT_NEAR(twice.samples[i].v, once.samples[i].v, 1e-6 * std::max(1.0, std::abs(once.samples[i].v))) << f;
        }
    }
}

TEST(Detrend, WindowTooShort) {
    const Trace t = uniform_trace(100, 30.0, [](double x) { return x; });
    EXPECT_EQ(code_of([&] { detrend(t, 0.05); }), ErrorCode::configuration);
}

TEST(Detrend, RejectsNonUniform) {
    Trace t = uniform_trace(100, 30.0, [](double x) { return x; });
    t.samples[50].t += 0.01;
    EXPECT_EQ(code_of([&] { detrend(t, 2.0); }), ErrorCode::precondition);
}

TEST(Synth, PureSineZeroCrossings) {
    SynthSpec spec;
    spec.base_bpm = 60;
    spec.duration = 10;
    spec.fs = 1000;
    const auto [trace, truth] = synth_ppg(spec);
    std::vector<double> crossings;
    for (std::size_t i = 1; i < trace.size(); ++i) {
        const auto& a = trace.samples[i - 1];
        const auto& b = trace.samples[i];
        if ((a.v < 0) != (b.v < 0)) crossings.push_back(a.t + (b.t - a.t) * a.v / (a.v - b.v));
    }
    ASSERT_GE(crossings.size(), 18u);
    for (std::size_t i = 1; i < crossings.size(); ++i) EXPECT_NEAR(crossings[i] - crossings[i - 1], 0.5, 1e-6);
    for (const auto& s : truth.samples) EXPECT_DOUBLE_EQ(s.bpm, 60.0);
}

TEST(Synth, Deterministic) {
    SynthSpec spec;
    spec.noise_sigma = 0.3;
    spec.seed = 99;
    const auto a = synth_ppg(spec).first;
    const auto b = synth_ppg(spec).first;
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.samples[i].v, b.samples[i].v);
    spec.seed = 100;
    EXPECT_NE(synth_ppg(spec).first.samples[5].v, a.samples[5].v);
}

TEST(Synth, ModulatedGroundTruth) {
    SynthSpec spec;
    spec.base_bpm = 70;
    spec.modulation_bpm = 8;
    spec.modulation_freq = 0.1;
    spec.duration = 60;
    const auto truth = synth_ppg(spec).second;
    double lo = 1e9, hi = -1e9;
    for (const auto& s : truth.samples) {
        lo = std::min(lo, s.bpm);
        hi = std::max(hi, s.bpm);
        // 10 s period
        EXPECT_NEAR(synth_bpm_at(spec, s.t + 10.0), s.bpm, 1e-9);
    }
    EXPECT_NEAR(lo, 62.0, 1e-3);
    EXPECT_NEAR(hi, 78.0, 1e-3);
}

TEST(Synth, BoundedWithoutNoise) {
    SynthSpec spec;
    spec.baseline_drift_amp = 0.7;
    spec.modulation_bpm = 10;
    for (const auto& s : synth_ppg(spec).first.samples) EXPECT_LE(std::abs(s.v), 1.0 + 0.7 + 1e-12);
}

TEST(Synth, RejectsInvalidSpecs) {
    SynthSpec spec;
    spec.base_bpm = 195;
    spec.modulation_bpm = 10;
    EXPECT_EQ(code_of([&] { synth_ppg(spec); }), ErrorCode::configuration);
    spec = {};
    spec.base_bpm = 180;
    spec.fs = 10;
    EXPECT_EQ(code_of([&] { synth_ppg(spec); }), ErrorCode::configuration);
    spec = {};
    spec.noise_sigma = -1;
    EXPECT_EQ(code_of([&] { synth_ppg(spec); }), ErrorCode::configuration);
}

TEST(Synth, SnrDefinition) {
    SynthSpec spec;
    spec.duration = 600;
    spec.noise_sigma = SynthSpec::sigma_for_snr(10.0);
    const auto noisy = synth_ppg(spec).first;
    spec.noise_sigma = 0;
    const auto clean = synth_ppg(spec).first;
    double ps = 0, pn = 0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        ps += clean.samples[i].v * clean.samples[i].v;
        const double n = noisy.samples[i].v - clean.samples[i].v;
        pn += n * n;
    }
    EXPECT_NEAR(10 * std::log10(ps / pn), 10.0, 0.2);
}
