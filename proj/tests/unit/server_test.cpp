#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <fstream>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <json.hpp>

#include "rppg/error.hpp"
#include "rppg/server.hpp"
#include "temp_dir.hpp"

using namespace rppg;
using json = nlohmann::json;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;
using Clock = std::chrono::steady_clock;

namespace {

const char* kThreeSeats = R"({
  "listen": "127.0.0.1:0", "ws_listen": "127.0.0.1:0", "operator_token": "secret", "broadcast_hz": 20,
  "seats": [
    {"name": "Ann", "source": {"type": "synthetic", "base_bpm": 66, "snr_db": 10, "seed": 1, "duration": 120}},
    {"name": "Bo",  "source": {"type": "synthetic", "base_bpm": 78, "snr_db": 10, "seed": 2, "duration": 120}},
    {"name": "Cy",  "source": {"type": "synthetic", "base_bpm": 90, "snr_db": 10, "seed": 3, "duration": 120}}
  ]})";

// Line-oriented TCP client with a receive deadline.
class LineClient {
public:
    explicit LineClient(std::uint16_t port) : socket_(io_) {
        socket_.connect({asio::ip::make_address("127.0.0.1"), port});
    }

    void send(const std::string& line) { asio::write(socket_, asio::buffer(line + "\n")); }

    std::optional<json> next(std::chrono::milliseconds timeout = std::chrono::milliseconds(3000)) {
        std::optional<json> out;
        bool done = false;
        asio::async_read_until(socket_, buf_, '\n', [&](boost::system::error_code ec, std::size_t n) {
            done = true;
            if (ec) return;
            std::string line(asio::buffers_begin(buf_.data()), asio::buffers_begin(buf_.data()) + n);
            buf_.consume(n);
            out = json::parse(line);
        });
        io_.restart();
        io_.run_for(timeout);
        if (!done) {
            socket_.cancel();
            io_.restart();
            io_.run();
        }
        return out;
    }

    // First message of the given type, skipping state frames when looking for replies.
    std::optional<json> next_of(const std::string& type) {
        const auto deadline = Clock::now() + std::chrono::seconds(5);
        while (Clock::now() < deadline) {
            auto m = next();
            if (!m) return std::nullopt;
            if ((*m)["type"] == type) return m;
        }
        return std::nullopt;
    }

private:
    asio::io_context io_;
    tcp::socket socket_;
    asio::streambuf buf_;
};

server::ServerConfig three_seats() { return server::parse_server_config(kThreeSeats); }

void expect_no_leak(const json& state) {
    if (state["viewer"] == "operator") return;
    const auto viewer = state["viewer"].get<std::size_t>();
    const auto cond = state["condition"].get<std::string>();
    for (const auto& seat : state["seats"]) {
        const auto subject = seat["seat"].get<std::size_t>();
        const bool vis = cond == "hr_all" || (cond == "hr_others" && subject != viewer);
        EXPECT_EQ(seat["idle"].get<bool>(), !vis);
        if (!vis) {
            EXPECT_FALSE(seat.contains("bpm"));
            EXPECT_FALSE(seat.contains("phase"));
            EXPECT_FALSE(seat.contains("hist"));
            EXPECT_FALSE(seat.contains("confidence"));
        }
    }
}

}  // namespace

TEST(ServerConfig, RequiresExactlyThreeSeats) {
    auto text = json::parse(kThreeSeats);
    text["seats"].erase(2);
    try {
        server::parse_server_config(text.dump());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::configuration);
        EXPECT_NE(std::string(e.what()).find("exactly 3 seats"), std::string::npos);
    }
    server::ServerConfig c = three_seats();
    c.seats.pop_back();
    EXPECT_THROW(server::Server{c}, Error);
}

TEST(ServerConfig, PathsAndOverrides) {
    auto text = json::parse(kThreeSeats);
    text["seats"][2]["source"] = {{"type", "trace_csv"}, {"path", "data/t.csv"}};
    const auto c = server::parse_server_config(text.dump(), "/srv/session");
    EXPECT_EQ(c.seats[2].source.path, std::filesystem::path("/srv/session/data/t.csv"));
    EXPECT_EQ(c.seats[0].name, "Ann");
    EXPECT_EQ(c.operator_token, "secret");

    ::setenv("RPPG_LISTEN", "127.0.0.1:9999", 1);
    auto copy = c;
    server::apply_env_overrides(copy);
    ::unsetenv("RPPG_LISTEN");
    EXPECT_EQ(copy.listen, "127.0.0.1:9999");

    text["group"] = 7;
    EXPECT_THROW(server::parse_server_config(text.dump()), Error);
    EXPECT_THROW(server::parse_server_config("{not json"), Error);
}

TEST(Server, UnreachableSourceIsStartupError) {
    auto text = json::parse(kThreeSeats);
    text["seats"][1]["source"] = {{"type", "trace_csv"}, {"path", "/nonexistent/trace.csv"}};
    server::Server srv(server::parse_server_config(text.dump()));
    try {
        srv.start();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::startup);
    }
}

TEST(Server, BindFailureIsStartupError) {
    server::Server first(three_seats());
    first.start();
    auto c = three_seats();
    c.listen = "127.0.0.1:" + std::to_string(first.tcp_port());
    server::Server second(c);
    try {
        second.start();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::startup);
    }
    first.shutdown();
}

TEST(Server, OperatorSeesThreeSeatsWithinTwoSeconds) {
    server::Server srv(three_seats());
    const auto t0 = Clock::now();
    srv.start();
    LineClient op(srv.tcp_port());
    op.send(R"({"type":"hello","viewer":"operator","token":"secret"})");
    bool seen = false;
    while (!seen && Clock::now() - t0 < std::chrono::seconds(2)) {
        const auto m = op.next(std::chrono::milliseconds(500));
        if (!m || (*m)["type"] != "state") continue;
        ASSERT_EQ((*m)["seats"].size(), 3u);
        seen = true;
        for (const auto& seat : (*m)["seats"]) seen = seen && seat.contains("bpm");
        if (seen) {
            EXPECT_EQ((*m)["seats"][1]["label"], "Bo");
            EXPECT_TRUE(m->contains("schedule"));
        }
    }
    EXPECT_TRUE(seen);
    srv.shutdown();
}

TEST(Server, ScriptedSessionNeverLeaks) {
    server::Server srv(three_seats());
    srv.start();
    LineClient op(srv.tcp_port());
    op.send(R"({"type":"hello","viewer":"operator","token":"secret"})");
    std::vector<std::unique_ptr<LineClient>> seats;
    for (int v = 0; v < 3; ++v) {
        seats.push_back(std::make_unique<LineClient>(srv.tcp_port()));
        seats.back()->send(R"({"type":"hello","viewer":)" + std::to_string(v) + "}");
    }
    auto drain = [&](int frames) {
        for (int i = 0; i < frames; ++i) {
            for (auto& c : seats) {
                const auto m = c->next();
                ASSERT_TRUE(m);
                if ((*m)["type"] == "state") expect_no_leak(*m);
            }
        }
    };
    drain(10);
    for (int step = 0; step < 3; ++step) {
        op.send(R"({"type":"cmd","cmd":"advance_schedule"})");
        ASSERT_TRUE(op.next_of("ack"));
        op.send(R"({"type":"cmd","cmd":"start_game"})");
        ASSERT_TRUE(op.next_of("ack"));
        op.send(R"({"type":"cmd","cmd":"set_condition","condition":"hr_all"})");
        const auto err = op.next_of("error");
        ASSERT_TRUE(err);
        EXPECT_EQ((*err)["code"], "sequencing");
        EXPECT_NE((*err)["message"].get<std::string>().find("cannot change condition during a game"), std::string::npos);
        drain(10);
        op.send(R"({"type":"cmd","cmd":"end_game"})");
        ASSERT_TRUE(op.next_of("ack"));
    }
    op.send(R"({"type":"cmd","cmd":"advance_schedule"})");
    const auto notice = op.next_of("notice");
    ASSERT_TRUE(notice);
    EXPECT_EQ((*notice)["message"], "schedule complete");

    // Seat connections may not issue commands.
    seats[0]->send(R"({"type":"cmd","cmd":"start_game"})");
    const auto denied = seats[0]->next_of("error");
    ASSERT_TRUE(denied);
    EXPECT_EQ((*denied)["code"], "routing");
    EXPECT_FALSE(srv.snapshot().game_running);
    srv.shutdown();
}

TEST(Server, RejectsBadHello) {
    server::Server srv(three_seats());
    srv.start();
    for (const char* hello : {R"({"type":"hello","viewer":"operator","token":"wrong"})",
                              R"({"type":"hello","viewer":7})", "garbage"}) {
        LineClient c(srv.tcp_port());
        c.send(hello);
        const auto m = c.next();
        ASSERT_TRUE(m) << hello;
        EXPECT_EQ((*m)["type"], "error");
    }
    srv.shutdown();
}

TEST(Server, WebSocketSeatView) {
    namespace beast = boost::beast;
    server::Server srv(three_seats());
    srv.start();
    asio::io_context io;
    beast::websocket::stream<tcp::socket> ws(io);
    ws.next_layer().connect({asio::ip::make_address("127.0.0.1"), srv.ws_port()});
    ws.handshake("127.0.0.1", "/seat/1");
    beast::flat_buffer buf;
    ws.read(buf);
    const auto m = json::parse(beast::buffers_to_string(buf.data()));
    EXPECT_EQ(m["type"], "state");
    EXPECT_EQ(m["viewer"], 1);
    EXPECT_EQ(m["seats"][1]["label"], "me");
    expect_no_leak(m);
    ws.close(beast::websocket::close_code::normal);

    beast::websocket::stream<tcp::socket> op(io);
    op.next_layer().connect({asio::ip::make_address("127.0.0.1"), srv.ws_port()});
    op.handshake("127.0.0.1", "/operator?token=secret");
    op.write(asio::buffer(std::string(R"({"type":"cmd","cmd":"set_condition","condition":"hr_others"})")));
    bool acked = false;
    for (int i = 0; i < 50 && !acked; ++i) {
        buf.clear();
        op.read(buf);
        acked = json::parse(beast::buffers_to_string(buf.data()))["type"] == "ack";
    }
    EXPECT_TRUE(acked);
    EXPECT_EQ(srv.snapshot().condition, session::Condition::hr_others);
    srv.shutdown();
}

TEST(Server, CleanShutdownKeepsFinalState) {
    server::Server srv(three_seats());
    srv.start();
    std::this_thread::sleep_for(std::chrono::milliseconds(300));
    std::thread stopper([&] { srv.request_stop(); });
    srv.wait();
    stopper.join();
    const auto t0 = Clock::now();
    srv.shutdown();
    EXPECT_LT(Clock::now() - t0, std::chrono::seconds(2));
    const auto snap = srv.snapshot();
    for (const auto& s : snap.seat_state) EXPECT_TRUE(s.bpm);
    for (const auto& st : srv.stream_stats()) {
        EXPECT_GT(st.windows, 0u);
        EXPECT_LT(st.max_latency_ms, 1000.0);
    }
}
