#pragma once

#include <array>
#include <cstddef>
#include <deque>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "rppg/hr.hpp"
#include "rppg/trace.hpp"

namespace rppg::session {

enum class Condition { hr_all, hr_others, hr_none };

std::string_view to_string(Condition condition);
Condition parse_condition(std::string_view name);

inline constexpr std::size_t kSeatCount = 3;
using SeatId = std::size_t;

/// Whether `viewer` sees the heart rate of `subject` under `condition`.
bool visible(Condition condition, SeatId viewer, SeatId subject);

using Ordering = std::array<Condition, 3>;

struct ConditionSchedule {
    std::vector<Ordering> orderings;  // one per group
};

/// Two complementary 3x3 Latin squares, repeated: groups 0-2 take the cyclic
/// square, groups 3-5 the reversed one, so six groups see all six orders.
ConditionSchedule schedule_conditions(std::size_t n_groups);

/// BPM history in 1 s buckets covering the last 20 s.
class HistogramState {
public:
    static constexpr std::size_t kBins = 20;

    struct Bin {
        long bucket;  // floor(t)
        double bpm;
    };

    const std::deque<Bin>& bins() const { return bins_; }
    std::optional<long> newest_bucket() const {
        return bins_.empty() ? std::nullopt : std::optional<long>(bins_.back().bucket);
    }

    /// The 20 slots ending at `bucket`, oldest first; empty slots are nullopt.
    std::array<std::optional<double>, kBins> slots_ending(long bucket) const;

private:
    friend HistogramState push_bpm(HistogramState hist, double t, double bpm);
    std::deque<Bin> bins_;
};

/// Places bpm in the bucket containing t (overwriting it) and evicts buckets
/// more than 20 s older than t.
HistogramState push_bpm(HistogramState hist, double t, double bpm);

struct Seat {
    SeatId id = 0;
    std::string player_name;
    std::string stream_id;
};

struct SeatState {
    std::optional<hr::BeatPhase> phase;
    HistogramState hist;
    std::optional<double> bpm;
    std::optional<double> confidence;
};

struct SessionState {
    std::array<Seat, kSeatCount> seats;
    std::array<SeatState, kSeatCount> seat_state;
    Condition condition = Condition::hr_none;
    bool game_running = false;
    ConditionSchedule schedule;
    std::size_t group = 0;          // row of the schedule this session follows
    std::size_t schedule_step = 0;  // conditions applied so far, 0..3
    double now = 0.0;               // session clock, seconds
};

SessionState make_session(const std::array<std::string, kSeatCount>& names, ConditionSchedule schedule,
                          std::size_t group);

/// Routes one estimator sample to a seat: latest value, beat phase, histogram.
SessionState ingest_estimate(SessionState state, SeatId seat, const HrSample& sample);

/// Moves the session clock forward; earlier times are ignored.
SessionState advance_clock(SessionState state, double now);

struct Viewer {
    bool is_operator = false;
    SeatId seat = 0;

    static Viewer operator_view() { return {true, 0}; }
    static Viewer seat_view(SeatId seat) { return {false, seat}; }
};

struct SeatView {
    SeatId seat = 0;
    std::string label;
    bool idle = true;
    // Present only when !idle and the seat has received an estimate.
    std::optional<double> bpm;
    std::optional<double> confidence;
    std::optional<double> phase;
    std::optional<std::array<std::optional<double>, HistogramState::kBins>> hist;
};

struct ScheduleView {
    std::size_t group = 0;
    std::size_t position = 0;
    std::size_t length = 3;
    Ordering ordering{};
};

struct RenderedState {
    Viewer viewer;
    long long t_ms = 0;
    Condition condition = Condition::hr_none;
    std::vector<SeatView> seats;
    bool game_running = false;
    std::optional<ScheduleView> schedule;  // operator only
};

/// Viewer-scoped display state. Seats hidden from the viewer carry only the
/// idle marker; their physiological fields are absent, not zeroed.
RenderedState render_state(const SessionState& state, Viewer viewer);

/// One compact JSON object (no trailing newline), keys in protocol order.
std::string serialize(const RenderedState& rendered);

struct SetCondition {
    Condition condition;
};
struct AdvanceSchedule {};
struct StartGame {};
struct EndGame {};
struct SetName {
    SeatId seat;
    std::string name;
};

using OperatorCommand = std::variant<SetCondition, AdvanceSchedule, StartGame, EndGame, SetName>;

struct CommandOutcome {
    SessionState state;
    std::optional<std::string> notice;
};

inline constexpr std::string_view kScheduleComplete = "schedule complete";

/// Condition changes are only accepted between games.
CommandOutcome apply_operator_command(const SessionState& state, const OperatorCommand& command);

/// Parses a client->server `{"type":"cmd",...}` line.
OperatorCommand parse_command(std::string_view line);

}  // namespace rppg::session
