#include "rppg/session.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <json.hpp>

#include "rppg/error.hpp"

namespace rppg::session {

using json = nlohmann::ordered_json;

std::string_view to_string(Condition condition) {
    switch (condition) {
        case Condition::hr_all: return "hr_all";
        case Condition::hr_others: return "hr_others";
        case Condition::hr_none: return "hr_none";
    }
    return "hr_none";
}

Condition parse_condition(std::string_view name) {
    if (name == "hr_all") return Condition::hr_all;
    if (name == "hr_others") return Condition::hr_others;
    if (name == "hr_none") return Condition::hr_none;
    throw Error(ErrorCode::parse, "unknown condition '" + std::string(name) + "'");
}

namespace {

void check_seat(SeatId seat) {
    if (seat >= kSeatCount) throw Error(ErrorCode::routing, "no seat " + std::to_string(seat));
}

}  // namespace

bool visible(Condition condition, SeatId viewer, SeatId subject) {
    check_seat(viewer);
    check_seat(subject);
    switch (condition) {
        case Condition::hr_all: return true;
        case Condition::hr_others: return viewer != subject;
        case Condition::hr_none: return false;
    }
    return false;
}

ConditionSchedule schedule_conditions(std::size_t n_groups) {
    if (n_groups == 0 || n_groups % 3 != 0) {
        throw Error(ErrorCode::configuration, "group count must be a positive multiple of 3, got " +
                                                  std::to_string(n_groups));
    }
    using enum Condition;
    static constexpr std::array<Ordering, 6> kSquares = {{
        {hr_all, hr_others, hr_none},
        {hr_others, hr_none, hr_all},
        {hr_none, hr_all, hr_others},
        {hr_all, hr_none, hr_others},
        {hr_others, hr_all, hr_none},
        {hr_none, hr_others, hr_all},
    }};
    ConditionSchedule schedule;
    for (std::size_t g = 0; g < n_groups; ++g) schedule.orderings.push_back(kSquares[g % kSquares.size()]);
    return schedule;
}

std::array<std::optional<double>, HistogramState::kBins> HistogramState::slots_ending(long bucket) const {
    std::array<std::optional<double>, kBins> slots{};
    const long first = bucket - static_cast<long>(kBins) + 1;
    for (const auto& bin : bins_) {
        if (bin.bucket >= first && bin.bucket <= bucket) slots[static_cast<std::size_t>(bin.bucket - first)] = bin.bpm;
    }
    return slots;
}

HistogramState push_bpm(HistogramState hist, double t, double bpm) {
    const auto bucket = static_cast<long>(std::floor(t));
    auto& bins = hist.bins_;
    if (!bins.empty() && bucket < bins.back().bucket) {
        throw Error(ErrorCode::time_regression, "histogram push at " + std::to_string(t) +
                                                    " s precedes newest bucket " + std::to_string(bins.back().bucket));
    }
    if (!bins.empty() && bins.back().bucket == bucket) {
        bins.back().bpm = bpm;
    } else {
        bins.push_back({bucket, bpm});
    }
    const long oldest_kept = bucket - static_cast<long>(HistogramState::kBins) + 1;
    while (!bins.empty() && bins.front().bucket < oldest_kept) bins.pop_front();
    return hist;
}

SessionState make_session(const std::array<std::string, kSeatCount>& names, ConditionSchedule schedule,
                          std::size_t group) {
    if (schedule.orderings.empty()) throw Error(ErrorCode::configuration, "empty condition schedule");
    if (group >= schedule.orderings.size()) {
        throw Error(ErrorCode::configuration, "group " + std::to_string(group) + " outside schedule of " +
                                                  std::to_string(schedule.orderings.size()) + " groups");
    }
    SessionState state;
    for (SeatId i = 0; i < kSeatCount; ++i) {
        state.seats[i].id = i;
        state.seats[i].player_name = names[i];
        state.seats[i].stream_id = "seat" + std::to_string(i);
    }
    state.schedule = std::move(schedule);
    state.group = group;
    return state;
}

SessionState ingest_estimate(SessionState state, SeatId seat, const HrSample& sample) {
    check_seat(seat);
    auto& s = state.seat_state[seat];
    if (!s.phase) {
        s.phase = hr::BeatPhase{0.0, sample.t};
    } else {
        HrTrace held;
        held.samples.push_back({s.phase->as_of, *s.bpm, 1.0});
        s.phase = hr::advance_phase(*s.phase, held, sample.t);
    }
    s.hist = push_bpm(std::move(s.hist), sample.t, sample.bpm);
    s.bpm = sample.bpm;
    s.confidence = sample.confidence;
    state.now = std::max(state.now, sample.t);
    return state;
}

SessionState advance_clock(SessionState state, double now) {
    state.now = std::max(state.now, now);
    return state;
}

RenderedState render_state(const SessionState& state, Viewer viewer) {
    if (!viewer.is_operator) check_seat(viewer.seat);

    RenderedState out;
    out.viewer = viewer;
    out.t_ms = std::llround(state.now * 1000.0);
    out.condition = state.condition;
    out.game_running = state.game_running;
    const auto now_bucket = static_cast<long>(std::floor(state.now));

    for (SeatId subject = 0; subject < kSeatCount; ++subject) {
        SeatView view;
        view.seat = subject;
        const bool self = !viewer.is_operator && viewer.seat == subject;
        view.label = self ? "me" : state.seats[subject].player_name;
        view.idle = viewer.is_operator ? false : !visible(state.condition, viewer.seat, subject);
        const auto& s = state.seat_state[subject];
        if (!view.idle && s.bpm) {
            view.bpm = s.bpm;
            view.confidence = s.confidence;
            HrTrace held;
            held.samples.push_back({s.phase->as_of, *s.bpm, 1.0});
            view.phase = hr::advance_phase(*s.phase, held, std::max(state.now, s.phase->as_of)).phase;
            view.hist = s.hist.slots_ending(now_bucket);
        }
        out.seats.push_back(std::move(view));
    }
    if (viewer.is_operator) {
        ScheduleView sv;
        sv.group = state.group;
        sv.position = state.schedule_step;
        sv.length = 3;
        sv.ordering = state.schedule.orderings[state.group];
        out.schedule = sv;
    }
    return out;
}

std::string serialize(const RenderedState& r) {
    json j;
    j["type"] = "state";
    if (r.viewer.is_operator) {
        j["viewer"] = "operator";
    } else {
        j["viewer"] = r.viewer.seat;
    }
    j["t_ms"] = r.t_ms;
    j["condition"] = to_string(r.condition);
    json seats = json::array();
    for (const auto& v : r.seats) {
        json s;
        s["seat"] = v.seat;
        s["label"] = v.label;
        s["idle"] = v.idle;
        if (!v.idle && v.bpm) {
            s["bpm"] = *v.bpm;
            s["confidence"] = *v.confidence;
            s["phase"] = *v.phase;
            json hist = json::array();
            for (const auto& slot : *v.hist) hist.push_back(slot ? json(*slot) : json(nullptr));
            s["hist"] = std::move(hist);
        }
        seats.push_back(std::move(s));
    }
    j["seats"] = std::move(seats);
    if (r.schedule) {
        j["game_running"] = r.game_running;
        json order = json::array();
        for (auto c : r.schedule->ordering) order.push_back(to_string(c));
        j["schedule"] = {{"group", r.schedule->group},
                         {"position", r.schedule->position},
                         {"length", r.schedule->length},
                         {"ordering", std::move(order)}};
    }
    return j.dump();
}

namespace {

struct CommandVisitor {
    const SessionState& before;

    CommandOutcome operator()(const SetCondition& cmd) const {
        if (before.game_running) {
            throw Error(ErrorCode::sequencing, "cannot change condition during a game");
        }
        SessionState next = before;
        next.condition = cmd.condition;
        return {std::move(next), std::nullopt};
    }

    CommandOutcome operator()(const AdvanceSchedule&) const {
        if (before.game_running) {
            throw Error(ErrorCode::sequencing, "cannot change condition during a game");
        }
        const auto& ordering = before.schedule.orderings.at(before.group);
        if (before.schedule_step >= ordering.size()) return {before, std::string(kScheduleComplete)};
        SessionState next = before;
        next.condition = ordering[next.schedule_step];
        ++next.schedule_step;
        return {std::move(next), std::nullopt};
    }

    CommandOutcome operator()(const StartGame&) const {
        if (before.game_running) throw Error(ErrorCode::sequencing, "a game is already running");
        SessionState next = before;
        next.game_running = true;
        return {std::move(next), std::nullopt};
    }

    CommandOutcome operator()(const EndGame&) const {
        if (!before.game_running) throw Error(ErrorCode::sequencing, "no game is running");
        SessionState next = before;
        next.game_running = false;
        return {std::move(next), std::nullopt};
    }

    CommandOutcome operator()(const SetName& cmd) const {
        check_seat(cmd.seat);
        SessionState next = before;
        next.seats[cmd.seat].player_name = cmd.name;
        return {std::move(next), std::nullopt};
    }
};

}  // namespace

CommandOutcome apply_operator_command(const SessionState& state, const OperatorCommand& command) {
    return std::visit(CommandVisitor{state}, command);
}

OperatorCommand parse_command(std::string_view line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::parse, std::string("malformed command: ") + e.what());
    }
    if (!j.is_object() || j.value("type", "") != "cmd" || !j.contains("cmd") || !j["cmd"].is_string()) {
        throw Error(ErrorCode::parse, "expected {\"type\":\"cmd\",\"cmd\":...}");
    }
    const auto cmd = j["cmd"].get<std::string>();
    try {
        if (cmd == "set_condition") return SetCondition{parse_condition(j.at("condition").get<std::string>())};
        if (cmd == "advance_schedule") return AdvanceSchedule{};
        if (cmd == "start_game") return StartGame{};
        if (cmd == "end_game") return EndGame{};
        if (cmd == "set_name") return SetName{j.at("seat").get<SeatId>(), j.at("name").get<std::string>()};
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse, "command '" + cmd + "': " + e.what());
    }
    throw Error(ErrorCode::parse, "unknown command '" + cmd + "'");
}

}  // namespace rppg::session
