#include "rppg/server.hpp"

#include <charconv>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <thread>
#include <variant>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "rppg/error.hpp"
#include "rppg/io.hpp"

namespace rppg::server {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::configuration, std::string("config key '") + key + "': " + e.what());
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    if (path.is_relative() && !base.empty()) path = base / path;
    return path;
}

SourceConfig parse_source(const json& j, const std::filesystem::path& base) {
    if (!j.is_object()) throw Error(ErrorCode::configuration, "seat source must be an object");
    SourceConfig src;
    const auto type = get_or<std::string>(j, "type", "synthetic");
    if (type == "synthetic") {
        src.kind = SourceConfig::Kind::synthetic;
        auto& s = src.synth;
        s.duration = get_or(j, "duration", 600.0);
        s.fs = get_or(j, "fs", s.fs);
        s.base_bpm = get_or(j, "base_bpm", s.base_bpm);
        s.modulation_bpm = get_or(j, "modulation_bpm", s.modulation_bpm);
        s.modulation_freq = get_or(j, "modulation_freq", s.modulation_freq);
        s.baseline_drift_amp = get_or(j, "drift_amp", s.baseline_drift_amp);
        s.baseline_drift_freq = get_or(j, "drift_freq", s.baseline_drift_freq);
        s.seed = get_or<std::uint64_t>(j, "seed", s.seed);
        s.noise_sigma = j.contains("snr_db") ? signal::SynthSpec::sigma_for_snr(get_or(j, "snr_db", 0.0))
                                             : get_or(j, "noise_sigma", 0.0);
        signal::validate(s);
    } else if (type == "trace_csv" || type == "frames") {
        if (!j.contains("path")) throw Error(ErrorCode::configuration, type + " source needs a path");
        src.path = resolve(base, get_or<std::string>(j, "path", ""));
        if (type == "frames") {
            src.kind = SourceConfig::Kind::frames;
            if (!j.contains("roi")) throw Error(ErrorCode::configuration, "frames source needs an roi sidecar");
            src.roi = resolve(base, get_or<std::string>(j, "roi", ""));
            src.fps = get_or(j, "fps", 30.0);
            src.channel = signal::parse_channel(get_or<std::string>(j, "channel", "G"));
            src.live = get_or(j, "live", false);
            if (!(src.fps > 0)) throw Error(ErrorCode::configuration, "fps must be positive");
        } else {
            src.kind = SourceConfig::Kind::trace_csv;
        }
    } else {
        throw Error(ErrorCode::configuration, "unknown source type '" + type + "'");
    }
    return src;
}

std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
    const auto colon = endpoint.rfind(':');
    if (colon == std::string::npos) throw Error(ErrorCode::configuration, "listen address '" + endpoint + "' needs host:port");
    std::string host = endpoint.substr(0, colon);
    if (host.empty()) host = "0.0.0.0";
    return {host, endpoint.substr(colon + 1)};
}

std::string error_message(const Error& e) {
    json j;
    j["type"] = "error";
    j["code"] = to_string(e.code());
    j["message"] = e.what();
    return j.dump();
}

std::string notice_message(const std::string& text) {
    json j;
    j["type"] = "notice";
    j["message"] = text;
    return j.dump();
}

std::string ack_message(const session::OperatorCommand& cmd) {
    static constexpr const char* kNames[] = {"set_condition", "advance_schedule", "start_game", "end_game", "set_name"};
    json j;
    j["type"] = "ack";
    j["cmd"] = kNames[cmd.index()];
    return j.dump();
}

// Index into the per-broadcast frame array: seats 0..2, operator 3.
std::size_t frame_slot(const session::Viewer& v) { return v.is_operator ? session::kSeatCount : v.seat; }

}  // namespace

ServerConfig parse_server_config(const std::string& text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::parse, std::string("session config: ") + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::configuration, "session config must be a JSON object");

    ServerConfig c;
    if (!j.contains("seats") || !j["seats"].is_array()) throw Error(ErrorCode::configuration, "config needs a seats array");
    if (j["seats"].size() != session::kSeatCount) {
        throw Error(ErrorCode::configuration,
                    "exactly 3 seats required, got " + std::to_string(j["seats"].size()));
    }
    for (std::size_t i = 0; i < j["seats"].size(); ++i) {
        const auto& s = j["seats"][i];
        SeatConfig seat;
        seat.name = get_or<std::string>(s, "name", "player " + std::to_string(i + 1));
        seat.source = parse_source(s.contains("source") ? s["source"] : json::object(), base_dir);
        c.seats.push_back(std::move(seat));
    }
    c.group = get_or<std::size_t>(j, "group", c.group);
    c.n_groups = get_or<std::size_t>(j, "n_groups", c.n_groups);
    c.broadcast_hz = get_or(j, "broadcast_hz", c.broadcast_hz);
    c.listen = get_or<std::string>(j, "listen", c.listen);
    c.ws_listen = get_or<std::string>(j, "ws_listen", c.ws_listen);
    c.operator_token = get_or<std::string>(j, "operator_token", c.operator_token);
    c.speed = get_or(j, "speed", c.speed);
    c.prefill = get_or(j, "prefill", c.prefill);
    if (j.contains("estimator")) {
        const auto& e = j["estimator"];
        auto& est = c.estimator;
        est.fs = get_or(e, "fs", est.fs);
        est.n_scales = get_or<std::size_t>(e, "n_scales", est.n_scales);
        est.window = get_or(e, "window", est.window);
        est.hop = get_or(e, "hop", est.hop);
        est.detrend_window = get_or(e, "detrend_window", est.detrend_window);
        est.smoothing = get_or(e, "smoothing", est.smoothing);
        est.band.f_min = get_or(e, "min_bpm", est.band.min_bpm()) / 60.0;
        est.band.f_max = get_or(e, "max_bpm", est.band.max_bpm()) / 60.0;
    }
    if (!(c.broadcast_hz > 0) || c.broadcast_hz > 200) throw Error(ErrorCode::configuration, "broadcast_hz must be in (0, 200]");
    if (!(c.speed > 0)) throw Error(ErrorCode::configuration, "speed must be positive");
    hr::validate(c.estimator);
    session::schedule_conditions(c.n_groups);
    if (c.group >= c.n_groups) throw Error(ErrorCode::configuration, "group outside 0.." + std::to_string(c.n_groups - 1));
    return c;
}

void apply_env_overrides(ServerConfig& config) {
    if (const char* v = std::getenv("RPPG_LISTEN"); v && *v) config.listen = v;
    if (const char* v = std::getenv("RPPG_WS_LISTEN"); v) config.ws_listen = v;
}

// ---------------------------------------------------------------------------

struct Client {
    virtual ~Client() = default;
    virtual void deliver(std::shared_ptr<const std::string> msg) = 0;
    std::optional<session::Viewer> viewer;
};

struct Server::Impl {
    ServerConfig config;

    // Session core (single writer: the core thread).
    mutable std::mutex state_mu;
    session::SessionState state;

    struct Ingest {
        std::size_t seat;
        HrSample sample;
    };
    struct Command {
        session::OperatorCommand cmd;
        std::function<void(std::string)> reply;
    };
    std::mutex queue_mu;
    std::condition_variable queue_cv;
    std::deque<std::variant<Ingest, Command>> queue;

    std::mutex stop_mu;
    std::condition_variable stop_cv;
    std::atomic<bool> stopping{false};

    mutable std::mutex stats_mu;
    std::vector<StreamStats> stats;

    std::vector<Trace> traces;  // replay sources, shifted to start at 0
    Clock::time_point started;
    double clock_base = 0.0;

    asio::io_context io;
    std::optional<tcp::acceptor> tcp_acceptor;
    std::optional<tcp::acceptor> ws_acceptor;
    std::optional<asio::signal_set> signals;
    std::vector<std::weak_ptr<Client>> clients;             // io thread only
    std::array<std::shared_ptr<const std::string>, 4> latest;  // io thread only

    std::thread io_thread;
    std::thread core_thread;
    std::vector<std::thread> workers;
    bool started_flag = false;
    bool shut_down = false;

    explicit Impl(ServerConfig c) : config(std::move(c)) {}

    double session_now() const {
        const std::chrono::duration<double> elapsed = Clock::now() - started;
        return clock_base + elapsed.count() * config.speed;
    }

    Clock::time_point wall_time_for(double t) const {
        const double dt = std::max(0.0, (t - clock_base) / config.speed);
        return started + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(dt));
    }

    void enqueue(std::variant<Ingest, Command> ev) {
        {
            std::lock_guard lk(queue_mu);
            queue.push_back(std::move(ev));
        }
        queue_cv.notify_one();
    }

    void request_stop() {
        {
            std::lock_guard lk(stop_mu);
            stopping = true;
        }
        stop_cv.notify_all();
        queue_cv.notify_all();
    }

    // Waits up to `d`; returns true when stopping.
    template <typename Duration>
    bool sleep_for(Duration d) {
        std::unique_lock lk(stop_mu);
        return stop_cv.wait_for(lk, d, [&] { return stopping.load(); });
    }

    void record_latency(std::size_t seat, double ms) {
        std::lock_guard lk(stats_mu);
        auto& s = stats[seat];
        ++s.windows;
        s.last_latency_ms = ms;
        s.max_latency_ms = std::max(s.max_latency_ms, ms);
    }

    void load_sources() {
        for (std::size_t i = 0; i < config.seats.size(); ++i) {
            const auto& src = config.seats[i].source;
            Trace trace;
            try {
                switch (src.kind) {
                    case SourceConfig::Kind::synthetic:
                        trace = signal::synth_ppg(src.synth).first;
                        break;
                    case SourceConfig::Kind::trace_csv:
                        trace = io::parse_trace_csv(io::read_file(src.path), src.path.string());
                        break;
                    case SourceConfig::Kind::frames:
                        if (!std::filesystem::exists(src.path) || !std::filesystem::exists(src.roi)) {
                            throw Error(ErrorCode::io, "cannot reach " + src.path.string() + " / " + src.roi.string());
                        }
                        if (!src.live) {
                            trace = io::trace_from_frames(io::load_frames(src.path),
                                                          io::parse_roi_csv(io::read_file(src.roi), src.roi.string()),
                                                          src.fps, src.channel);
                        }
                        break;
                }
            } catch (const Error& e) {
                throw Error(ErrorCode::startup, "seat " + std::to_string(i) + " source: " + e.what());
            }
            if (!trace.empty()) {
                const double t0 = trace.samples.front().t;
                for (auto& s : trace.samples) s.t -= t0;
            }
            traces.push_back(std::move(trace));
        }
    }

    tcp::acceptor bind(const std::string& endpoint) {
        const auto [host, port] = split_endpoint(endpoint);
        try {
            tcp::resolver resolver(io);
            const auto results = resolver.resolve(host, port);
            tcp::acceptor acceptor(io);
            const tcp::endpoint ep = *results.begin();
            acceptor.open(ep.protocol());
            acceptor.set_option(tcp::acceptor::reuse_address(true));
            acceptor.bind(ep);
            acceptor.listen();
            return acceptor;
        } catch (const boost::system::system_error& e) {
            throw Error(ErrorCode::startup, "cannot listen on " + endpoint + ": " + e.what());
        }
    }

    // -- workers -----------------------------------------------------------

    void replay_worker(std::size_t seat) {
        hr::StreamingEstimator estimator(config.estimator);
        const auto& samples = traces[seat].samples;
        std::size_t idx = 0;
        while (!stopping && idx < samples.size()) {
            const double now = session_now();
            while (idx < samples.size() && samples[idx].t <= now) {
                const auto due = wall_time_for(samples[idx].t);
                for (const auto& est : estimator.push(samples[idx])) {
                    const std::chrono::duration<double, std::milli> lat = Clock::now() - due;
                    record_latency(seat, lat.count());
                    enqueue(Ingest{seat, est});
                }
                ++idx;
            }
            if (idx < samples.size()) {
                const auto wake = std::min(wall_time_for(samples[idx].t), Clock::now() + std::chrono::milliseconds(50));
                if (sleep_for(wake - Clock::now())) break;
            }
        }
        spdlog::debug("seat {} source exhausted after {} samples", seat, idx);
    }

    void live_frames_worker(std::size_t seat) {
        const auto& src = config.seats[seat].source;
        hr::StreamingEstimator estimator(config.estimator);
        std::map<long, signal::Roi> rois;
        try {
            rois = io::parse_roi_csv(io::read_file(src.roi), src.roi.string());
            std::ifstream in(src.path, std::ios::binary);
            std::optional<signal::Roi> roi;
            for (long index = 0; !stopping; ++index) {
                auto frame = io::read_frame(in);
                if (!frame) break;
                if (auto it = rois.find(index); it != rois.end()) roi = it->second;
                if (!roi) throw Error(ErrorCode::precondition, "no ROI for frame " + std::to_string(index));
                const auto start = Clock::now();
                const Sample s{io::frame_time(index, src.fps), signal::mean_channel(*frame, *roi, src.channel)};
                for (const auto& est : estimator.push(s)) {
                    const std::chrono::duration<double, std::milli> lat = Clock::now() - start;
                    record_latency(seat, lat.count());
                    enqueue(Ingest{seat, est});
                }
            }
        } catch (const Error& e) {
            spdlog::error("seat {} live source stopped: {}", seat, e.what());
        }
    }

    // -- core --------------------------------------------------------------

    void core_loop() {
        const auto period = std::chrono::duration_cast<Clock::duration>(
            std::chrono::duration<double>(1.0 / config.broadcast_hz));
        auto next_tick = Clock::now();
        auto next_log = Clock::now() + std::chrono::seconds(1);
        while (!stopping) {
            std::deque<std::variant<Ingest, Command>> batch;
            {
                std::unique_lock lk(queue_mu);
                queue_cv.wait_until(lk, next_tick, [&] { return !queue.empty() || stopping.load(); });
                batch.swap(queue);
            }
            bool commanded = false;
            // Replies wait until the new state is published, so an ack is never ahead of snapshot().
            std::vector<std::pair<Command*, std::string>> replies;
            session::SessionState next;
            {
                std::lock_guard lk(state_mu);
                next = state;
            }
            for (auto& ev : batch) {
                if (auto* in = std::get_if<Ingest>(&ev)) {
                    next = session::ingest_estimate(std::move(next), in->seat, in->sample);
                } else {
                    auto& c = std::get<Command>(ev);
                    commanded = true;
                    try {
                        auto outcome = session::apply_operator_command(next, c.cmd);
                        next = std::move(outcome.state);
                        replies.emplace_back(&c, outcome.notice ? notice_message(*outcome.notice) : ack_message(c.cmd));
                    } catch (const Error& e) {
                        replies.emplace_back(&c, error_message(e));
                    }
                }
            }
            const auto now = Clock::now();
            const bool tick = now >= next_tick;
            if (tick || commanded) next = session::advance_clock(std::move(next), session_now());
            {
                std::lock_guard lk(state_mu);
                state = next;
            }
            for (auto& [c, msg] : replies) c->reply(std::move(msg));
            if (tick || commanded) {
                broadcast(next);
                if (tick) {
                    next_tick += period;
                    if (next_tick < now) next_tick = now + period;
                }
            }
            if (now >= next_log) {
                log_latency();
                next_log += std::chrono::seconds(1);
            }
        }
    }

    void log_latency() {
        std::lock_guard lk(stats_mu);
        for (std::size_t i = 0; i < stats.size(); ++i) {
            spdlog::info("stream seat{}: windows={} latency_ms={:.2f} max_ms={:.2f}", i, stats[i].windows,
                         stats[i].last_latency_ms, stats[i].max_latency_ms);
        }
    }

    void broadcast(const session::SessionState& s) {
        std::array<std::shared_ptr<const std::string>, 4> frames;
        for (session::SeatId v = 0; v < session::kSeatCount; ++v) {
            frames[v] = std::make_shared<const std::string>(session::serialize(session::render_state(s, session::Viewer::seat_view(v))));
        }
        frames[3] = std::make_shared<const std::string>(session::serialize(session::render_state(s, session::Viewer::operator_view())));
        asio::post(io, [this, frames = std::move(frames)] {
            latest = frames;
            std::erase_if(clients, [](const auto& w) { return w.expired(); });
            for (const auto& w : clients) {
                if (auto c = w.lock(); c && c->viewer) c->deliver(frames[frame_slot(*c->viewer)]);
            }
        });
    }

    // -- connections (io thread) -------------------------------------------

    std::optional<session::Viewer> authorize(const std::string& who, const std::string& token, std::string& why) const {
        if (who == "operator") {
            if (!config.operator_token.empty() && token != config.operator_token) {
                why = "operator token rejected";
                return std::nullopt;
            }
            return session::Viewer::operator_view();
        }
        std::size_t seat = 0;
        const auto [ptr, ec] = std::from_chars(who.data(), who.data() + who.size(), seat);
        if (ec != std::errc() || ptr != who.data() + who.size() || seat >= session::kSeatCount) {
            why = "no seat '" + who + "'";
            return std::nullopt;
        }
        return session::Viewer::seat_view(seat);
    }

    void attach(const std::shared_ptr<Client>& c) {
        clients.push_back(c);
        if (auto& f = latest[frame_slot(*c->viewer)]) c->deliver(f);
    }

    // Parses and submits an operator command line; replies go back to `client`.
    void handle_line(const std::shared_ptr<Client>& client, const std::string& line) {
        if (line.empty()) return;
        auto reply_now = [&](const std::string& msg) { client->deliver(std::make_shared<const std::string>(msg)); };
        if (!client->viewer->is_operator) {
            reply_now(error_message(Error(ErrorCode::routing, "commands require an operator connection")));
            return;
        }
        session::OperatorCommand cmd;
        try {
            cmd = session::parse_command(line);
        } catch (const Error& e) {
            reply_now(error_message(e));
            return;
        }
        std::weak_ptr<Client> weak = client;
        enqueue(Command{std::move(cmd), [this, weak](std::string msg) {
                            asio::post(io, [weak, m = std::make_shared<const std::string>(std::move(msg))] {
                                if (auto c = weak.lock()) c->deliver(m);
                            });
                        }});
    }

    void accept_tcp();
    void accept_ws();
};

namespace {

constexpr std::size_t kMaxQueued = 64;

class TcpClient : public Client, public std::enable_shared_from_this<TcpClient> {
public:
    TcpClient(Server::Impl& server, tcp::socket socket) : server_(server), socket_(std::move(socket)) {}

    void start() { read_line(); }

    void deliver(std::shared_ptr<const std::string> msg) override {
        if (out_.size() >= kMaxQueued) return;  // slow reader; the next frame supersedes this one
        out_.push_back(std::move(msg));
        if (out_.size() == 1) write_next();
    }

private:
    void read_line() {
        asio::async_read_until(socket_, buf_, '\n', [self = shared_from_this()](boost::system::error_code ec, std::size_t n) {
            if (ec) return;
            std::string line(asio::buffers_begin(self->buf_.data()), asio::buffers_begin(self->buf_.data()) + n);
            self->buf_.consume(n);
            while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.pop_back();
            if (!self->viewer) {
                if (!self->hello(line)) return;
            } else {
                self->server_.handle_line(self, line);
            }
            self->read_line();
        });
    }

    bool hello(const std::string& line) {
        std::string why = "expected {\"type\":\"hello\",\"viewer\":...}";
        try {
            const auto j = json::parse(line);
            if (j.value("type", "") == "hello" && j.contains("viewer")) {
                const auto& v = j["viewer"];
                const std::string who = v.is_string() ? v.get<std::string>() : v.dump();
                viewer = server_.authorize(who, j.value("token", ""), why);
            }
        } catch (const json::exception&) {
        }
        if (!viewer) {
            closing_ = true;
            deliver(std::make_shared<const std::string>(error_message(Error(ErrorCode::routing, why))));
            return false;
        }
        server_.attach(shared_from_this());
        return true;
    }

    void write_next() {
        std::array<asio::const_buffer, 2> bufs = {asio::buffer(*out_.front()), asio::buffer("\n", 1)};
        asio::async_write(socket_, bufs, [self = shared_from_this()](boost::system::error_code ec, std::size_t) {
            if (ec) return;
            self->out_.pop_front();
            if (!self->out_.empty()) {
                self->write_next();
            } else if (self->closing_) {
                boost::system::error_code ignored;
                self->socket_.shutdown(tcp::socket::shutdown_both, ignored);
            }
        });
    }

    Server::Impl& server_;
    tcp::socket socket_;
    asio::streambuf buf_;
    std::deque<std::shared_ptr<const std::string>> out_;
    bool closing_ = false;
};

class WsClient : public Client, public std::enable_shared_from_this<WsClient> {
public:
    WsClient(Server::Impl& server, tcp::socket socket) : server_(server), ws_(std::move(socket)) {}

    void start() {
        beast::http::async_read(ws_.next_layer(), buf_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec || !websocket::is_upgrade(self->req_)) return;
            self->ws_.async_accept(self->req_, [self](beast::error_code ec2) {
                if (ec2) return;
                self->ws_.text(true);
                self->on_open();
            });
        });
    }

    void deliver(std::shared_ptr<const std::string> msg) override {
        if (out_.size() >= kMaxQueued) return;
        out_.push_back(std::move(msg));
        if (out_.size() == 1) write_next();
    }

private:
    // Targets: /seat/<n> or /operator?token=<t>
    void on_open() {
        const std::string target(req_.target());
        std::string why = "unknown path '" + target + "'";
        std::string path = target, query;
        if (const auto q = target.find('?'); q != std::string::npos) {
            path = target.substr(0, q);
            query = target.substr(q + 1);
        }
        if (path == "/operator") {
            std::string token;
            if (query.rfind("token=", 0) == 0) token = query.substr(6);
            viewer = server_.authorize("operator", token, why);
        } else if (path.rfind("/seat/", 0) == 0) {
            viewer = server_.authorize(path.substr(6), "", why);
        }
        if (!viewer) {
            closing_ = true;
            deliver(std::make_shared<const std::string>(error_message(Error(ErrorCode::routing, why))));
            return;
        }
        server_.attach(shared_from_this());
        read_next();
    }

    void read_next() {
        ws_.async_read(in_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) return;
            auto line = beast::buffers_to_string(self->in_.data());
            self->in_.consume(self->in_.size());
            while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.pop_back();
            self->server_.handle_line(self, line);
            self->read_next();
        });
    }

    void write_next() {
        ws_.async_write(asio::buffer(*out_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) return;
            self->out_.pop_front();
            if (!self->out_.empty()) {
                self->write_next();
            } else if (self->closing_) {
                self->ws_.async_close(websocket::close_code::policy_error, [self](beast::error_code) {});
            }
        });
    }

    Server::Impl& server_;
    websocket::stream<tcp::socket> ws_;
    beast::flat_buffer buf_;
    beast::flat_buffer in_;
    beast::http::request<beast::http::string_body> req_;
    std::deque<std::shared_ptr<const std::string>> out_;
    bool closing_ = false;
};

}  // namespace

void Server::Impl::accept_tcp() {
    tcp_acceptor->async_accept([this](boost::system::error_code ec, tcp::socket socket) {
        if (ec) return;
        std::make_shared<TcpClient>(*this, std::move(socket))->start();
        accept_tcp();
    });
}

void Server::Impl::accept_ws() {
    ws_acceptor->async_accept([this](boost::system::error_code ec, tcp::socket socket) {
        if (ec) return;
        std::make_shared<WsClient>(*this, std::move(socket))->start();
        accept_ws();
    });
}

// ---------------------------------------------------------------------------

Server::Server(ServerConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {
    if (impl_->config.seats.size() != session::kSeatCount) {
        throw Error(ErrorCode::configuration,
                    "exactly 3 seats required, got " + std::to_string(impl_->config.seats.size()));
    }
    std::array<std::string, session::kSeatCount> names;
    for (std::size_t i = 0; i < names.size(); ++i) names[i] = impl_->config.seats[i].name;
    impl_->state = session::make_session(names, session::schedule_conditions(impl_->config.n_groups), impl_->config.group);
    impl_->stats.resize(session::kSeatCount);
}

Server::~Server() {
    try {
        shutdown();
    } catch (...) {
    }
}

void Server::start() {
    auto& m = *impl_;
    if (m.started_flag) throw Error(ErrorCode::sequencing, "server already started");
    m.load_sources();
    m.tcp_acceptor.emplace(m.bind(m.config.listen));
    if (!m.config.ws_listen.empty()) m.ws_acceptor.emplace(m.bind(m.config.ws_listen));
    m.accept_tcp();
    if (m.ws_acceptor) m.accept_ws();
    spdlog::info("listening on tcp port {}{}", tcp_port(),
                 m.ws_acceptor ? ", websocket port " + std::to_string(ws_port()) : std::string());

    m.clock_base = m.config.prefill ? m.config.estimator.window : 0.0;
    m.started = Clock::now();
    m.started_flag = true;
    m.io_thread = std::thread([&m] {
        auto guard = asio::make_work_guard(m.io);
        m.io.run();
    });
    m.core_thread = std::thread([&m] { m.core_loop(); });
    for (std::size_t i = 0; i < session::kSeatCount; ++i) {
        const bool live = m.config.seats[i].source.kind == SourceConfig::Kind::frames && m.config.seats[i].source.live;
        m.workers.emplace_back([&m, i, live] { live ? m.live_frames_worker(i) : m.replay_worker(i); });
    }
}

void Server::install_signal_handlers() {
    auto& m = *impl_;
    m.signals.emplace(m.io, SIGINT, SIGTERM);
    m.signals->async_wait([&m](const boost::system::error_code& ec, int sig) {
        if (ec) return;
        spdlog::info("signal {} received, shutting down", sig);
        m.request_stop();
    });
}

void Server::wait() {
    std::unique_lock lk(impl_->stop_mu);
    impl_->stop_cv.wait(lk, [&] { return impl_->stopping.load(); });
}

void Server::request_stop() { impl_->request_stop(); }

void Server::shutdown() {
    auto& m = *impl_;
    if (!m.started_flag || m.shut_down) return;
    m.shut_down = true;
    m.request_stop();
    for (auto& w : m.workers) {
        if (w.joinable()) w.join();
    }
    if (m.core_thread.joinable()) m.core_thread.join();
    m.io.stop();
    if (m.io_thread.joinable()) m.io_thread.join();
    m.log_latency();
    spdlog::info("final state: {}", session::serialize(session::render_state(snapshot(), session::Viewer::operator_view())));
}

std::uint16_t Server::tcp_port() const {
    return impl_->tcp_acceptor ? impl_->tcp_acceptor->local_endpoint().port() : 0;
}

std::uint16_t Server::ws_port() const {
    return impl_->ws_acceptor ? impl_->ws_acceptor->local_endpoint().port() : 0;
}

session::SessionState Server::snapshot() const {
    std::lock_guard lk(impl_->state_mu);
    return impl_->state;
}

std::vector<StreamStats> Server::stream_stats() const {
    std::lock_guard lk(impl_->stats_mu);
    return impl_->stats;
}

}  // namespace rppg::server
