#include "rppg/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <sstream>
#include <utility>

#include <boost/math/special_functions/gamma.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "rppg/error.hpp"

namespace rppg::stats {

std::string_view to_string(Subscale subscale) {
    switch (subscale) {
        case Subscale::empathy: return "empathy";
        case Subscale::negative_feelings: return "negative_feelings";
        case Subscale::behavioral_engagement: return "behavioral_engagement";
    }
    return "empathy";
}

Subscale parse_subscale(std::string_view name) {
    for (auto s : kSubscales) {
        if (to_string(s) == name) return s;
    }
    throw Error(ErrorCode::configuration, "unknown subscale '" + std::string(name) + "'");
}

SpgqMapping make_mapping(std::span<const MappingRow> rows) {
    SpgqMapping mapping;
    std::array<bool, kSpgqItems> seen{};
    for (const auto& row : rows) {
        if (row.item < 1 || row.item > static_cast<int>(kSpgqItems)) {
            throw Error(ErrorCode::configuration, "mapping item " + std::to_string(row.item) + " outside 1..21");
        }
        const auto idx = static_cast<std::size_t>(row.item - 1);
        if (seen[idx]) throw Error(ErrorCode::configuration, "mapping lists item " + std::to_string(row.item) + " twice");
        seen[idx] = true;
        mapping.subscale[idx] = row.subscale;
        mapping.reversed[idx] = row.reversed;
    }
    for (std::size_t i = 0; i < kSpgqItems; ++i) {
        if (!seen[i]) throw Error(ErrorCode::configuration, "mapping misses item " + std::to_string(i + 1));
    }
    for (auto s : kSubscales) {
        if (std::find(mapping.subscale.begin(), mapping.subscale.end(), s) == mapping.subscale.end()) {
            throw Error(ErrorCode::configuration, "subscale " + std::string(to_string(s)) + " has no items");
        }
    }
    return mapping;
}

SpgqMapping placeholder_mapping() {
    std::vector<MappingRow> rows;
    for (int item = 1; item <= static_cast<int>(kSpgqItems); ++item) {
        const Subscale s = item <= 7    ? Subscale::empathy
                           : item <= 13 ? Subscale::negative_feelings
                                        : Subscale::behavioral_engagement;
        rows.push_back({item, s, false});
    }
    return make_mapping(rows);
}

double SubscaleScores::get(Subscale s) const {
    switch (s) {
        case Subscale::empathy: return empathy;
        case Subscale::negative_feelings: return negative_feelings;
        case Subscale::behavioral_engagement: return behavioral_engagement;
    }
    return 0.0;
}

SubscaleScores score_spgq(const SpgqResponse& response, const SpgqMapping& mapping) {
    std::array<double, 3> sum{};
    std::array<int, 3> count{};
    for (std::size_t i = 0; i < kSpgqItems; ++i) {
        const int v = response.items[i];
        if (v < 0 || v > kLikertMax) {
            throw Error(ErrorCode::domain, "item " + std::to_string(i + 1) + " value " + std::to_string(v) +
                                               " outside 0..4");
        }
        const auto s = static_cast<std::size_t>(mapping.subscale[i]);
        sum[s] += mapping.reversed[i] ? kLikertMax - v : v;
        ++count[s];
    }
    auto mean = [&](Subscale s) {
        const auto i = static_cast<std::size_t>(s);
        return count[i] > 0 ? sum[i] / count[i] : 0.0;
    };
    return {mean(Subscale::empathy), mean(Subscale::negative_feelings), mean(Subscale::behavioral_engagement)};
}

std::vector<double> midranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

namespace {

// Sum of t^3 - t over tie groups.
double tie_term(std::span<const double> values) {
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    double term = 0.0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        std::size_t j = i;
        while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
        const auto t = static_cast<double>(j - i + 1);
        term += t * t * t - t;
        i = j + 1;
    }
    return term;
}

}  // namespace

double chi_square_sf(double x, double df) {
    if (!(x > 0)) return 1.0;
    return boost::math::gamma_q(df / 2.0, x / 2.0);
}

TestResult friedman(const std::vector<std::vector<double>>& matrix) {
    const std::size_t n = matrix.size();
    if (n < 2) throw Error(ErrorCode::incomplete_design, "friedman needs at least 2 rows");
    const std::size_t k = matrix.front().size();
    if (k < 2) throw Error(ErrorCode::incomplete_design, "friedman needs at least 2 conditions");
    for (std::size_t r = 0; r < n; ++r) {
        if (matrix[r].size() != k) throw Error(ErrorCode::incomplete_design, "row " + std::to_string(r) + " incomplete");
        for (double v : matrix[r]) {
            if (std::isnan(v)) throw Error(ErrorCode::incomplete_design, "missing cell in row " + std::to_string(r));
        }
    }

    std::vector<double> rank_sums(k, 0.0);
    double ties = 0.0;
    for (const auto& row : matrix) {
        const auto ranks = midranks(row);
        for (std::size_t j = 0; j < k; ++j) rank_sums[j] += ranks[j];
        ties += tie_term(row);
    }
    const auto nd = static_cast<double>(n);
    const auto kd = static_cast<double>(k);
    double ss = 0.0;
    for (double r : rank_sums) ss += r * r;
    const double raw = 12.0 / (nd * kd * (kd + 1.0)) * ss - 3.0 * nd * (kd + 1.0);
    const double correction = 1.0 - ties / (nd * kd * (kd * kd - 1.0));

    TestResult result;
    result.label = "friedman";
    result.method = "chi-square";
    result.statistic = correction > 1e-12 ? std::max(0.0, raw / correction) : 0.0;
    result.p_raw = chi_square_sf(result.statistic, kd - 1.0);
    return result;
}

namespace {

struct SignedRanks {
    std::vector<long> doubled;  // 2 * midrank, exact integers
    long w_plus2 = 0;           // 2 * W+
    long total2 = 0;
};

SignedRanks signed_ranks(std::span<const double> d) {
    std::vector<double> mag(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) mag[i] = std::abs(d[i]);
    const auto ranks = midranks(mag);
    SignedRanks sr;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const long r2 = std::lround(2.0 * ranks[i]);
        sr.doubled.push_back(r2);
        sr.total2 += r2;
        if (d[i] > 0) sr.w_plus2 += r2;
    }
    return sr;
}

}  // namespace

double wilcoxon_exact_p(std::span<const double> d) {
    const auto sr = signed_ranks(d);
    // Subset-sum counts of doubled ranks over all 2^m sign assignments.
    std::vector<double> ways(static_cast<std::size_t>(sr.total2) + 1, 0.0);
    ways[0] = 1.0;
    long reach = 0;
    for (long r : sr.doubled) {
        for (long s = reach; s >= 0; --s) {
            if (ways[static_cast<std::size_t>(s)] != 0.0) ways[static_cast<std::size_t>(s + r)] += ways[static_cast<std::size_t>(s)];
        }
        reach += r;
    }
    const long observed = std::min(sr.w_plus2, sr.total2 - sr.w_plus2);
    double extreme = 0.0;
    double all = 0.0;
    for (long s = 0; s <= sr.total2; ++s) {
        const double w = ways[static_cast<std::size_t>(s)];
        all += w;
        if (std::min(s, sr.total2 - s) <= observed) extreme += w;
    }
    return std::min(1.0, extreme / all);
}

double wilcoxon_normal_p(std::span<const double> d) {
    const auto sr = signed_ranks(d);
    const auto m = static_cast<double>(d.size());
    std::vector<double> mag(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) mag[i] = std::abs(d[i]);
    const double mean = m * (m + 1.0) / 4.0;
    const double var = m * (m + 1.0) * (2.0 * m + 1.0) / 24.0 - tie_term(mag) / 48.0;
    if (!(var > 0)) return 1.0;
    const double deviation = std::max(0.0, std::abs(0.5 * static_cast<double>(sr.w_plus2) - mean) - 0.5);
    const double z = deviation / std::sqrt(var);
    return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

TestResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error(ErrorCode::precondition, "wilcoxon inputs differ in length");
    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        if (diff != 0.0) d.push_back(diff);
    }
    if (d.empty()) throw Error(ErrorCode::degenerate_pairs, "all paired differences are zero");

    const auto sr = signed_ranks(d);
    TestResult result;
    result.label = "wilcoxon";
    result.statistic = 0.5 * static_cast<double>(std::min(sr.w_plus2, sr.total2 - sr.w_plus2));
    if (d.size() <= kExactWilcoxonMax) {
        result.method = "exact";
        result.p_raw = wilcoxon_exact_p(d);
    } else {
        result.method = "normal";
        result.p_raw = wilcoxon_normal_p(d);
    }
    return result;
}

std::vector<double> fdr_adjust(std::span<const double> p_values) {
    for (double p : p_values) {
        if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::domain, "p-value " + std::to_string(p) + " outside [0,1]");
    }
    const std::size_t m = p_values.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return p_values[x] < p_values[y]; });
    std::vector<double> q(m);
    double running = 1.0;
    for (std::size_t r = m; r-- > 0;) {
        const std::size_t idx = order[r];
        // m / rank >= 1 first, so rounding can never push q below p.
        const double candidate = p_values[idx] * (static_cast<double>(m) / static_cast<double>(r + 1));
        running = std::min(running, candidate);
        q[idx] = std::min(1.0, running);
    }
    return q;
}

namespace {

ConditionStats describe(std::span<const double> xs) {
    ConditionStats s;
    if (xs.empty()) return s;
    s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return s;
}

std::size_t condition_column(session::Condition c) {
    for (std::size_t i = 0; i < kReportConditions.size(); ++i) {
        if (kReportConditions[i] == c) return i;
    }
    return 0;
}

}  // namespace

ConditionReport condition_report(std::span<const SpgqResponse> responses, const SpgqMapping& mapping) {
    // participant -> per-condition scores
    std::map<std::pair<std::string, std::string>, std::array<std::optional<SubscaleScores>, 3>> table;
    for (const auto& r : responses) {
        auto& row = table[{r.group, r.participant}];
        auto& cell = row[condition_column(r.condition)];
        if (cell) {
            throw Error(ErrorCode::incomplete_design, "participant " + r.group + "/" + r.participant +
                                                          " has two responses for " +
                                                          std::string(session::to_string(r.condition)));
        }
        cell = score_spgq(r, mapping);
    }
    for (const auto& [key, row] : table) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (!row[c]) {
                throw Error(ErrorCode::incomplete_design, "participant " + key.first + "/" + key.second +
                                                              " lacks a response for " +
                                                              std::string(session::to_string(kReportConditions[c])));
            }
        }
    }
    if (table.size() < 2) throw Error(ErrorCode::incomplete_design, "need responses from at least 2 participants");

    ConditionReport report;
    report.n_participants = table.size();
    static constexpr std::array<std::pair<std::size_t, std::size_t>, 3> kPairs = {{{0, 1}, {0, 2}, {1, 2}}};

    for (auto subscale : kSubscales) {
        std::array<std::vector<double>, 3> columns;
        std::vector<std::vector<double>> matrix;
        for (const auto& [key, row] : table) {
            std::vector<double> values;
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = row[c]->get(subscale);
                columns[c].push_back(v);
                values.push_back(v);
            }
            matrix.push_back(std::move(values));
        }

        SubscaleReport sub;
        sub.subscale = subscale;
        for (std::size_t c = 0; c < 3; ++c) sub.by_condition[c] = describe(columns[c]);
        sub.friedman = friedman(matrix);

        std::vector<double> raw;
        for (auto [i, j] : kPairs) {
            PairwiseResult pr{kReportConditions[i], kReportConditions[j], {}, false};
            try {
                pr.test = wilcoxon_signed_rank(columns[i], columns[j]);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::degenerate_pairs) throw;
                pr.test.method = "degenerate";
                pr.test.statistic = 0.0;
                pr.test.p_raw = 1.0;
            }
            pr.test.label = std::string(session::to_string(pr.a)) + " vs " + std::string(session::to_string(pr.b));
            raw.push_back(pr.test.p_raw);
            sub.pairs.push_back(std::move(pr));
        }
        const auto adjusted = fdr_adjust(raw);
        for (std::size_t p = 0; p < sub.pairs.size(); ++p) {
            sub.pairs[p].test.p_adjusted = adjusted[p];
            sub.pairs[p].tendency = adjusted[p] < kTendencyThreshold;
        }
        report.subscales.push_back(std::move(sub));
    }
    return report;
}

std::string format_comparison(const ConditionStats& a, const ConditionStats& b) {
    return fmt::format("{:.2f} vs {:.2f} (SD: {:.2f} vs {:.2f})", a.mean, b.mean, a.sd, b.sd);
}

std::string to_text(const ConditionReport& report) {
    std::string out = fmt::format("participants: {}\n", report.n_participants);
    for (const auto& sub : report.subscales) {
        out += fmt::format("\n[{}]\n", to_string(sub.subscale));
        for (std::size_t c = 0; c < 3; ++c) {
            out += fmt::format("  {:<10} mean {:.2f}  SD {:.2f}\n", session::to_string(kReportConditions[c]),
                               sub.by_condition[c].mean, sub.by_condition[c].sd);
        }
        out += fmt::format("  friedman chi2 = {:.3f}, p = {:.4f}\n", sub.friedman.statistic, sub.friedman.p_raw);
        for (const auto& pr : sub.pairs) {
            const auto& sa = sub.by_condition[condition_column(pr.a)];
            const auto& sb = sub.by_condition[condition_column(pr.b)];
            out += fmt::format("  {:<22} {}  W = {:.1f}, p = {:.4f}, p_fdr = {:.4f}{}\n", pr.test.label,
                               format_comparison(sa, sb), pr.test.statistic, pr.test.p_raw, *pr.test.p_adjusted,
                               pr.tendency ? " +" : "");
        }
    }
    return out;
}

std::string to_json(const ConditionReport& report) {
    using json = nlohmann::ordered_json;
    json j;
    j["n_participants"] = report.n_participants;
    json subs = json::array();
    for (const auto& sub : report.subscales) {
        json s;
        s["subscale"] = to_string(sub.subscale);
        json conds = json::object();
        for (std::size_t c = 0; c < 3; ++c) {
            conds[std::string(session::to_string(kReportConditions[c]))] = {{"mean", sub.by_condition[c].mean},
                                                                            {"sd", sub.by_condition[c].sd}};
        }
        s["conditions"] = std::move(conds);
        s["friedman"] = {{"statistic", sub.friedman.statistic}, {"p", sub.friedman.p_raw}};
        json pairs = json::array();
        for (const auto& pr : sub.pairs) {
            pairs.push_back({{"a", session::to_string(pr.a)},
                             {"b", session::to_string(pr.b)},
                             {"method", pr.test.method},
                             {"statistic", pr.test.statistic},
                             {"p_raw", pr.test.p_raw},
                             {"p_adjusted", *pr.test.p_adjusted},
                             {"tendency", pr.tendency}});
        }
        s["pairwise"] = std::move(pairs);
        subs.push_back(std::move(s));
    }
    j["subscales"] = std::move(subs);
    return j.dump(2) + "\n";
}

}  // namespace rppg::stats
