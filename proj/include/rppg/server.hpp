#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "rppg/hr.hpp"
#include "rppg/session.hpp"
#include "rppg/signal.hpp"

namespace rppg::server {

struct SourceConfig {
    enum class Kind { synthetic, trace_csv, frames };
    Kind kind = Kind::synthetic;
    signal::SynthSpec synth{};
    std::filesystem::path path;  // trace CSV, frame directory/file, or pipe
    std::filesystem::path roi;   // ROI sidecar for frames
    double fps = 30.0;
    signal::Channel channel = signal::Channel::G;
    bool live = false;           // frames arrive on a pipe at their own pace
};

struct SeatConfig {
    std::string name;
    SourceConfig source;
};

struct ServerConfig {
    std::vector<SeatConfig> seats;
    std::size_t group = 0;
    std::size_t n_groups = 6;
    double broadcast_hz = 20.0;
    std::string listen = "127.0.0.1:8765";     // newline-delimited JSON over TCP
    std::string ws_listen = "127.0.0.1:8766";  // WebSocket; empty disables
    std::string operator_token;
    double speed = 1.0;   // replay speed multiplier for recorded/synthetic sources
    bool prefill = true;  // start with one estimator window of backlog already available
    hr::EstimatorConfig estimator{};
};

/// Parses the JSON session config. Relative paths resolve against `base_dir`.
/// Requires exactly three seats.
ServerConfig parse_server_config(const std::string& text, const std::filesystem::path& base_dir = {});

/// Environment overrides: RPPG_LISTEN, RPPG_WS_LISTEN.
void apply_env_overrides(ServerConfig& config);

struct StreamStats {
    std::size_t windows = 0;
    double max_latency_ms = 0.0;
    double last_latency_ms = 0.0;
};

/// Live biofeedback server. Estimator samples and operator commands are
/// serialized through one queue into the session core; every broadcast tick
/// renders one viewer-scoped snapshot per seat plus the operator view.
class Server {
public:
    explicit Server(ServerConfig config);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Loads sources and binds listeners; throws startup error on failure.
    void start();
    /// Blocks until request_stop() (or a signal, when installed) fires.
    void wait();
    void request_stop();
    /// Joins all threads; logs the final state snapshot.
    void shutdown();

    /// Handle SIGINT/SIGTERM by requesting a stop.
    void install_signal_handlers();

    std::uint16_t tcp_port() const;
    std::uint16_t ws_port() const;
    session::SessionState snapshot() const;
    std::vector<StreamStats> stream_stats() const;

    struct Impl;

private:
    std::unique_ptr<Impl> impl_;
};

}  // namespace rppg::server
