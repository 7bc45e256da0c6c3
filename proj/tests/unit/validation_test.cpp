#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <json.hpp>

#include "oracles.hpp"
#include "rppg/error.hpp"
#include "rppg/hr.hpp"
#include "rppg/signal.hpp"
#include "rppg/validation.hpp"

using namespace rppg;
using namespace rppg::validation;

namespace {

HrTrace series(double t0, double t1, double dt, auto&& bpm) {
    HrTrace h;
    for (double t = t0; t <= t1 + 1e-9; t += dt) h.samples.push_back({t, bpm(t), 1.0});
    return h;
}

}  // namespace

TEST(RrToHr, OneSecondBeats) {
    const auto hr = rr_to_hr({{0, 1, 2, 3}}, 4.0);
    ASSERT_FALSE(hr.empty());
    for (const auto& s : hr.samples) EXPECT_DOUBLE_EQ(s.bpm, 60.0);
}

TEST(RrToHr, HalfSecondBeats) {
    const auto hr = rr_to_hr({{0, 0.5, 1.0}}, 4.0);
    for (const auto& s : hr.samples) EXPECT_DOUBLE_EQ(s.bpm, 120.0);
}

TEST(RrToHr, AlternatingIntervalsAtMidpoints) {
    RrSeries rr;
    double t = 0;
    rr.beats.push_back(t);
    for (int i = 0; i < 10; ++i) rr.beats.push_back(t += (i % 2 == 0 ? 0.8 : 1.0));
    // Choose a grid rate that lands on every midpoint: midpoints are at
    // 0.4, 1.3, 2.2, ... so a 10 Hz grid from 0.4 hits them all.
    const auto hr = rr_to_hr(rr, 10.0);
    for (std::size_t i = 0; i + 1 < rr.beats.size(); ++i) {
        const double mid = 0.5 * (rr.beats[i] + rr.beats[i + 1]);
        const double expected = 60.0 / (rr.beats[i + 1] - rr.beats[i]);
        bool found = false;
        for (const auto& s : hr.samples) {
            if (std::abs(s.t - mid) < 1e-9) {
                EXPECT_NEAR(s.bpm, expected, 1e-9);
                found = true;
            }
        }
        EXPECT_TRUE(found) << mid;
    }
}

TEST(RrToHr, TooFewBeats) {
    try {
        rr_to_hr({{0, 1}}, 4.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::insufficient_data);
    }
}

TEST(RrToHr, ImplausibleIntervalsFlaggedAndSkipped) {
    const RrSeries rr{{0, 1, 2, 2.1, 3, 4, 5}};
    const auto bad = implausible_intervals(rr);
    ASSERT_EQ(bad.size(), 1u);
    EXPECT_EQ(bad[0], 2u);
    for (const auto& s : rr_to_hr(rr, 4.0).samples) {
        EXPECT_GE(s.bpm, 40.0);
        EXPECT_LE(s.bpm, 200.0);
    }
}

TEST(Pearson, SelfAndAntiCorrelation) {
    std::mt19937 rng(1);
    std::normal_distribution<double> n(0, 1);
    std::vector<double> x(100), neg(100);
    for (auto& v : x) v = n(rng);
    for (std::size_t i = 0; i < x.size(); ++i) neg[i] = -x[i] + 12.5;
    EXPECT_NEAR(pearson(x, x), 1.0, 1e-12);
    EXPECT_NEAR(pearson(x, neg), -1.0, 1e-12);
}

TEST(Pearson, MatchesTwoPassOracle) {
    std::mt19937 rng(2);
    std::normal_distribution<double> n(0, 1);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> a(200), b(200);
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = n(rng) * 5 + 1000;
            b[i] = 0.3 * a[i] + n(rng);
        }
        EXPECT_NEAR(pearson(a, b), oracle::two_pass_pearson(a, b), 1e-10);
    }
}

TEST(Pearson, AffineInvariance) {
    std::mt19937 rng(3);
    std::normal_distribution<double> n(0, 1);
    std::vector<double> a(50), b(50), a2(50), b2(50);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = n(rng);
        b[i] = a[i] + n(rng);
        a2[i] = 3.0 * a[i] - 7.0;
        b2[i] = 0.01 * b[i] + 100.0;
    }
    EXPECT_NEAR(pearson(a, b), pearson(a2, b2), 1e-12);
}

TEST(Pearson, ZeroVarianceIsAnError) {
    const std::vector<double> flat(10, 3.0), x = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    for (auto [a, b] : {std::pair{flat, x}, std::pair{x, flat}}) {
        try {
            pearson(a, b);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::undefined_correlation);
        }
    }
}

TEST(AlignAndCompare, Identity) {
    const auto h = series(0, 60, 1.0, [](double t) { return 70 + 5 * std::sin(t / 3); });
    const auto r = align_and_compare(h, h);
    ASSERT_TRUE(r.pearson_r);
    EXPECT_NEAR(*r.pearson_r, 1.0, 1e-12);
    EXPECT_NEAR(r.rmse_bpm, 0.0, 1e-12);
    EXPECT_NEAR(r.mean_abs_err_bpm, 0.0, 1e-12);
}

TEST(AlignAndCompare, ConstantTruthReportsUndefinedCorrelation) {
    const auto truth = series(0, 60, 1.0, [](double) { return 70.0; });
    // +/-0.5 alternating jitter: RMS 0.5.
    const auto est = series(0, 60, 1.0, [](double t) { return 70.0 + (static_cast<long>(std::lround(t)) % 2 ? 0.5 : -0.5); });
    const auto r = align_and_compare(est, truth);
    EXPECT_FALSE(r.pearson_r);
    EXPECT_NE(r.pearson_error.find("undefined-correlation"), std::string::npos);
    EXPECT_NEAR(r.rmse_bpm, 0.5, 1e-12);
    EXPECT_GE(r.rmse_bpm, r.mean_abs_err_bpm);
}

TEST(AlignAndCompare, SynthSessionTracks) {
    signal::SynthSpec s;
    s.base_bpm = 70;
    s.modulation_bpm = 8;
    s.modulation_freq = 0.1;
    s.duration = 120;
    s.noise_sigma = signal::SynthSpec::sigma_for_snr(10);
    const auto [trace, truth] = signal::synth_ppg(s);
    const auto r = align_and_compare(hr::estimate_hr(trace), truth);
    ASSERT_TRUE(r.pearson_r);
    EXPECT_GE(*r.pearson_r, 0.8);
    EXPECT_GE(r.duration, 30.0);
}

TEST(AlignAndCompare, ShortOverlap) {
    const auto a = series(0, 20, 1.0, [](double t) { return 60 + t; });
    try {
        align_and_compare(a, a);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::insufficient_overlap);
    }
}

TEST(AlignAndCompare, ZeroConfidenceExcluded) {
    auto est = series(0, 60, 1.0, [](double t) { return 60 + t; });
    const auto truth = est;
    for (std::size_t i = 10; i < 15; ++i) {
        est.samples[i].confidence = 0.0;
        est.samples[i].bpm = 150;
    }
    const auto r = align_and_compare(est, truth);
    EXPECT_GT(r.n_excluded, 0u);
    EXPECT_NEAR(r.rmse_bpm, 0.0, 1e-12);
}

TEST(AlignAndCompare, LagSearchFindsDelay) {
    const auto truth = series(0, 120, 1.0, [](double t) { return 70 + 8 * std::sin(2 * std::numbers::pi * 0.1 * t); });
    const auto est = series(0, 120, 1.0, [](double t) { return 70 + 8 * std::sin(2 * std::numbers::pi * 0.1 * (t - 1.5)); });
    CompareOptions o;
    o.max_lag = 2.0;
    const auto r = align_and_compare(est, truth, o);
    EXPECT_NEAR(r.lag, 1.5, 1e-9);
    EXPECT_GT(*r.pearson_r, *align_and_compare(est, truth).pearson_r);
}

TEST(AlignAndCompare, RmseNeverBelowMae) {
    std::mt19937 rng(8);
    std::normal_distribution<double> n(0, 4);
    for (int trial = 0; trial < 50; ++trial) {
        auto est = series(0, 60, 1.0, [](double t) { return 80 + t / 4; });
        for (auto& s : est.samples) s.bpm += n(rng);
        const auto r = align_and_compare(est, series(0, 60, 1.0, [](double t) { return 80 + t / 4; }));
        EXPECT_GE(r.rmse_bpm, r.mean_abs_err_bpm);
        EXPECT_GE(r.mean_abs_err_bpm, 0.0);
    }
}

TEST(Report, KeyValueAndJson) {
    const auto h = series(0, 60, 1.0, [](double t) { return 70 + t / 10; });
    const auto r = align_and_compare(h, h);
    const auto kv = to_key_value(r);
    EXPECT_NE(kv.find("pearson_r=1"), std::string::npos);
    EXPECT_NE(kv.find("rmse_bpm=0"), std::string::npos);
    const auto j = nlohmann::json::parse(to_json(r));
    EXPECT_NEAR(j["pearson_r"].get<double>(), 1.0, 1e-12);
    EXPECT_EQ(j["n_samples"].get<int>(), 61);
}
