#include "rppg/validation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "rppg/error.hpp"

namespace rppg::validation {

std::vector<std::size_t> implausible_intervals(const RrSeries& rr) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i + 1 < rr.beats.size(); ++i) {
        const double gap = rr.beats[i + 1] - rr.beats[i];
        if (gap < kMinRrSeconds || gap > kMaxRrSeconds) out.push_back(i);
    }
    return out;
}

HrTrace rr_to_hr(const RrSeries& rr, double fs) {
    if (rr.beats.size() < 3) throw Error(ErrorCode::insufficient_data, "need at least 3 beats");
    if (!(fs > 0)) throw Error(ErrorCode::configuration, "grid rate must be positive");
    for (std::size_t i = 1; i < rr.beats.size(); ++i) {
        if (!(rr.beats[i] > rr.beats[i - 1])) {
            throw Error(ErrorCode::precondition, "beat times not strictly increasing at beat " + std::to_string(i));
        }
    }

    std::vector<HrSample> mids;
    for (std::size_t i = 0; i + 1 < rr.beats.size(); ++i) {
        const double gap = rr.beats[i + 1] - rr.beats[i];
        if (gap < kMinRrSeconds || gap > kMaxRrSeconds) continue;
        mids.push_back({0.5 * (rr.beats[i] + rr.beats[i + 1]), 60.0 / gap, 1.0});
    }
    if (mids.size() < 2) throw Error(ErrorCode::insufficient_data, "fewer than 2 plausible RR intervals");

    HrTrace out;
    const double t0 = mids.front().t;
    const auto n = static_cast<std::size_t>(std::floor((mids.back().t - t0) * fs + 1e-9)) + 1;
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = t0 + static_cast<double>(i) / fs;
        while (j + 2 < mids.size() && mids[j + 1].t <= t) ++j;
        const auto& a = mids[j];
        const auto& b = mids[j + 1];
        const double frac = std::clamp((t - a.t) / (b.t - a.t), 0.0, 1.0);
        out.samples.push_back({t, a.bpm + (b.bpm - a.bpm) * frac, 1.0});
    }
    return out;
}

double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error(ErrorCode::precondition, "pearson inputs differ in length");
    if (a.size() < 2) throw Error(ErrorCode::insufficient_data, "pearson needs at least 2 pairs");
    const auto n = static_cast<double>(a.size());
    double ma = 0.0;
    double mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double saa = 0.0;
    double sbb = 0.0;
    double sab = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    if (saa == 0.0 || sbb == 0.0) {
        throw Error(ErrorCode::undefined_correlation, "zero variance in input");
    }
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

namespace {

struct GridValue {
    double bpm = 0.0;
    bool usable = true;
};

// Linear interpolation of an HR trace at t; `usable` is false when either
// bracketing sample carries zero confidence.
GridValue sample_at(const std::vector<HrSample>& s, double t) {
    auto it = std::lower_bound(s.begin(), s.end(), t, [](const HrSample& x, double v) { return x.t < v; });
    if (it != s.end() && it->t == t) return {it->bpm, it->confidence > 0.0};
    if (it == s.begin()) return {it->bpm, it->confidence > 0.0};
    if (it == s.end()) return {s.back().bpm, s.back().confidence > 0.0};
    const auto& b = *it;
    const auto& a = *(it - 1);
    const double frac = (t - a.t) / (b.t - a.t);
    return {a.bpm + (b.bpm - a.bpm) * frac, a.confidence > 0.0 && b.confidence > 0.0};
}

ValidationReport compare_at_lag(const HrTrace& est, const HrTrace& truth, double lag, double min_overlap) {
    const auto& e = est.samples;
    const auto& g = truth.samples;
    const double lo = std::max(e.front().t - lag, g.front().t);
    const double hi = std::min(e.back().t - lag, g.back().t);
    if (!(hi - lo >= min_overlap)) {
        throw Error(ErrorCode::insufficient_overlap,
                    "series overlap " + std::to_string(std::max(0.0, hi - lo)) + " s, need " +
                        std::to_string(min_overlap) + " s");
    }

    ValidationReport report;
    report.duration = hi - lo;
    report.lag = lag;
    std::vector<double> xs;
    std::vector<double> ys;
    const auto n = static_cast<std::size_t>(std::floor(hi - lo + 1e-9)) + 1;
    double sq = 0.0;
    double abs_sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = lo + static_cast<double>(k);
        const GridValue ev = sample_at(e, t + lag);
        if (!ev.usable) {
            ++report.n_excluded;
            continue;
        }
        const double gv = sample_at(g, t).bpm;
        xs.push_back(ev.bpm);
        ys.push_back(gv);
        sq += (ev.bpm - gv) * (ev.bpm - gv);
        abs_sum += std::abs(ev.bpm - gv);
    }
    report.n_samples = xs.size();
    if (!xs.empty()) {
        report.rmse_bpm = std::sqrt(sq / static_cast<double>(xs.size()));
        report.mean_abs_err_bpm = abs_sum / static_cast<double>(xs.size());
        // Power-mean inequality; equality can be broken only by rounding.
        report.rmse_bpm = std::max(report.rmse_bpm, report.mean_abs_err_bpm);
    }
    try {
        report.pearson_r = pearson(xs, ys);
    } catch (const Error& err) {
        report.pearson_error = err.what();
    }
    return report;
}

}  // namespace

ValidationReport align_and_compare(const HrTrace& est, const HrTrace& truth, const CompareOptions& options) {
    if (est.empty() || truth.empty()) throw Error(ErrorCode::insufficient_overlap, "empty heart-rate series");
    check_increasing(est);
    check_increasing(truth);
    if (!(options.max_lag > 0)) return compare_at_lag(est, truth, 0.0, options.min_overlap);

    std::optional<ValidationReport> best;
    const auto steps = static_cast<long>(std::floor(options.max_lag / options.lag_step + 1e-9));
    for (long i = -steps; i <= steps; ++i) {
        const double lag = static_cast<double>(i) * options.lag_step;
        ValidationReport candidate;
        try {
            candidate = compare_at_lag(est, truth, lag, options.min_overlap);
        } catch (const Error& err) {
            if (err.code() == ErrorCode::insufficient_overlap) continue;
            throw;
        }
        const bool better = !best || (candidate.pearson_r && (!best->pearson_r || *candidate.pearson_r > *best->pearson_r));
        if (better) best = candidate;
    }
    if (!best) return compare_at_lag(est, truth, 0.0, options.min_overlap);
    return *best;
}

std::string to_key_value(const ValidationReport& r) {
    std::ostringstream os;
    os.precision(6);
    if (r.pearson_r) {
        os << "pearson_r=" << *r.pearson_r << '\n';
    } else {
        os << "pearson_r=undefined\n" << "pearson_error=" << r.pearson_error << '\n';
    }
    os << "rmse_bpm=" << r.rmse_bpm << '\n'
       << "mean_abs_err_bpm=" << r.mean_abs_err_bpm << '\n'
       << "n_samples=" << r.n_samples << '\n'
       << "n_excluded=" << r.n_excluded << '\n'
       << "duration_s=" << r.duration << '\n'
       << "lag_s=" << r.lag << '\n';
    return os.str();
}

std::string to_json(const ValidationReport& r) {
    nlohmann::ordered_json j;
    j["pearson_r"] = r.pearson_r ? nlohmann::ordered_json(*r.pearson_r) : nlohmann::ordered_json(nullptr);
    if (!r.pearson_r) j["pearson_error"] = r.pearson_error;
    j["rmse_bpm"] = r.rmse_bpm;
    j["mean_abs_err_bpm"] = r.mean_abs_err_bpm;
    j["n_samples"] = r.n_samples;
    j["n_excluded"] = r.n_excluded;
    j["duration_s"] = r.duration;
    j["lag_s"] = r.lag;
    return j.dump(2) + "\n";
}

}  // namespace rppg::validation
