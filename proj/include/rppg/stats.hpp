#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rppg/session.hpp"

namespace rppg::stats {

// ---------------------------------------------------------------------------
// Questionnaire scoring

inline constexpr std::size_t kSpgqItems = 21;
inline constexpr int kLikertMax = 4;

enum class Subscale { empathy, negative_feelings, behavioral_engagement };
inline constexpr std::array<Subscale, 3> kSubscales = {Subscale::empathy, Subscale::negative_feelings,
                                                       Subscale::behavioral_engagement};

std::string_view to_string(Subscale subscale);
Subscale parse_subscale(std::string_view name);

struct SpgqResponse {
    std::string group;
    std::string participant;
    session::Condition condition = session::Condition::hr_none;
    std::array<int, kSpgqItems> items{};  // each 0..4
};

struct MappingRow {
    int item = 0;  // 1-based
    Subscale subscale = Subscale::empathy;
    bool reversed = false;
};

struct SpgqMapping {
    std::array<Subscale, kSpgqItems> subscale{};
    std::array<bool, kSpgqItems> reversed{};
};

/// Validates that every item 1..21 appears exactly once.
SpgqMapping make_mapping(std::span<const MappingRow> rows);

/// NON-CANONICAL placeholder: items 1-7 empathy, 8-13 negative feelings,
/// 14-21 behavioral engagement, nothing reversed. The validated instrument's
/// item assignment must be supplied as a mapping file.
SpgqMapping placeholder_mapping();

struct SubscaleScores {
    double empathy = 0.0;
    double negative_feelings = 0.0;
    double behavioral_engagement = 0.0;

    double get(Subscale s) const;
};

SubscaleScores score_spgq(const SpgqResponse& response, const SpgqMapping& mapping);

// ---------------------------------------------------------------------------
// Tests

struct TestResult {
    double statistic = 0.0;
    double p_raw = 1.0;
    std::optional<double> p_adjusted;
    std::string label;
    std::string method;  // "chi-square", "exact", "normal", "degenerate"
};

/// Mid-ranks (1-based) of `values`, ties sharing the average rank.
std::vector<double> midranks(std::span<const double> values);

/// Friedman omnibus test over an n x k matrix (rows = participants). Tie
/// corrected; p from chi-square with k-1 degrees of freedom.
TestResult friedman(const std::vector<std::vector<double>>& matrix);

inline constexpr std::size_t kExactWilcoxonMax = 12;

/// Two-sided Wilcoxon signed-rank test on paired samples. Zero differences are
/// dropped; exact null distribution for up to 12 non-zero pairs, normal
/// approximation with tie and continuity corrections above that.
TestResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);

/// Exact two-sided p for the signed ranks of non-zero differences `d`.
double wilcoxon_exact_p(std::span<const double> d);
/// Normal-approximation two-sided p for the same.
double wilcoxon_normal_p(std::span<const double> d);

/// Benjamini-Hochberg adjusted p-values, in input order.
std::vector<double> fdr_adjust(std::span<const double> p_values);

double chi_square_sf(double x, double df);

// ---------------------------------------------------------------------------
// Study report

inline constexpr double kTendencyThreshold = 0.1;

/// Column order of the report: control first, as in the study's results.
inline constexpr std::array<session::Condition, 3> kReportConditions = {
    session::Condition::hr_none, session::Condition::hr_others, session::Condition::hr_all};

struct ConditionStats {
    double mean = 0.0;
    double sd = 0.0;
};

struct PairwiseResult {
    session::Condition a;
    session::Condition b;
    TestResult test;
    bool tendency = false;
};

struct SubscaleReport {
    Subscale subscale;
    std::array<ConditionStats, 3> by_condition;  // kReportConditions order
    TestResult friedman;
    std::vector<PairwiseResult> pairs;
};

struct ConditionReport {
    std::size_t n_participants = 0;
    std::vector<SubscaleReport> subscales;
};

ConditionReport condition_report(std::span<const SpgqResponse> responses, const SpgqMapping& mapping);

std::string to_text(const ConditionReport& report);
std::string to_json(const ConditionReport& report);

/// "1.19 vs 1.06 (SD: 0.87 vs 0.64)"
std::string format_comparison(const ConditionStats& a, const ConditionStats& b);

}  // namespace rppg::stats
