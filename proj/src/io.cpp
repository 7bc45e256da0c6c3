#include "rppg/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <system_error>

#include <fmt/format.h>

#include "rppg/error.hpp"

namespace rppg::io {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const fs::path& path, std::string_view content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::io, "cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error(ErrorCode::io, "write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error(ErrorCode::io, "cannot rename onto " + path.string());
    }
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

struct Row {
    std::size_t line = 0;
    std::vector<std::string_view> cells;
};

// Splits non-blank lines into comma-separated cells.
std::vector<Row> split_csv(std::string_view text) {
    std::vector<Row> rows;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        line = trim(line);
        if (line.empty()) continue;
        Row row;
        row.line = line_no;
        std::size_t start = 0;
        for (;;) {
            const auto comma = line.find(',', start);
            row.cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? comma : comma - start)));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

[[noreturn]] void fail_at(const std::string& source, std::size_t line, const std::string& what) {
    throw Error(ErrorCode::parse, source + ":" + std::to_string(line) + ": " + what);
}

std::vector<Row> rows_with_header(std::string_view text, const std::string& source,
                                  const std::vector<std::string_view>& header) {
    auto rows = split_csv(text);
    if (rows.empty()) fail_at(source, 1, "empty input, expected header row");
    const auto& first = rows.front();
    bool ok = first.cells.size() == header.size();
    for (std::size_t i = 0; ok && i < header.size(); ++i) ok = first.cells[i] == header[i];
    if (!ok) {
        std::string expected;
        for (auto h : header) expected += (expected.empty() ? "" : ",") + std::string(h);
        fail_at(source, first.line, "expected header '" + expected + "'");
    }
    rows.erase(rows.begin());
    for (const auto& r : rows) {
        if (r.cells.size() != header.size()) {
            fail_at(source, r.line, "expected " + std::to_string(header.size()) + " columns, got " +
                                        std::to_string(r.cells.size()));
        }
    }
    return rows;
}

template <typename T>
T parse_number(std::string_view cell, const std::string& source, std::size_t line, const char* field) {
    T value{};
    const auto* end = cell.data() + cell.size();
    const auto [ptr, ec] = std::from_chars(cell.data(), end, value);
    if (ec != std::errc() || ptr != end || cell.empty()) {
        fail_at(source, line, std::string("invalid ") + field + " '" + std::string(cell) + "'");
    }
    if constexpr (std::is_floating_point_v<T>) {
        if (!std::isfinite(value)) fail_at(source, line, std::string("non-finite ") + field);
    }
    return value;
}

long long to_ms(double t) { return std::llround(t * 1000.0); }

}  // namespace

std::string csv_header(std::string_view text) {
    const auto rows = split_csv(text);
    if (rows.empty() || rows.front().cells.empty()) return {};
    return std::string(rows.front().cells.front());
}

Trace parse_trace_csv(std::string_view text, const std::string& source) {
    Trace trace;
    for (const auto& r : rows_with_header(text, source, {"t_ms", "value"})) {
        const auto t_ms = parse_number<long long>(r.cells[0], source, r.line, "t_ms");
        const auto v = parse_number<double>(r.cells[1], source, r.line, "value");
        const double t = static_cast<double>(t_ms) / 1000.0;
        if (!trace.samples.empty() && !(t > trace.samples.back().t)) {
            fail_at(source, r.line, "timestamps must be strictly increasing");
        }
        trace.samples.push_back({t, v});
    }
    if (trace.samples.empty()) fail_at(source, 2, "no samples");
    if (trace.size() >= 2) trace.nominal_fs = static_cast<double>(trace.size() - 1) / trace.span();
    return trace;
}

std::string format_trace_csv(const Trace& trace) {
    std::string out = "t_ms,value\n";
    for (const auto& s : trace.samples) out += fmt::format("{},{}\n", to_ms(s.t), s.v);
    return out;
}

HrTrace parse_hr_csv(std::string_view text, const std::string& source) {
    HrTrace trace;
    for (const auto& r : rows_with_header(text, source, {"t_ms", "bpm", "confidence"})) {
        const auto t_ms = parse_number<long long>(r.cells[0], source, r.line, "t_ms");
        const auto bpm = parse_number<double>(r.cells[1], source, r.line, "bpm");
        const auto conf = parse_number<double>(r.cells[2], source, r.line, "confidence");
        const double t = static_cast<double>(t_ms) / 1000.0;
        if (!trace.samples.empty() && !(t > trace.samples.back().t)) {
            fail_at(source, r.line, "timestamps must be strictly increasing");
        }
        if (conf < 0.0 || conf > 1.0) fail_at(source, r.line, "confidence outside [0,1]");
        trace.samples.push_back({t, bpm, conf});
    }
    if (trace.samples.empty()) fail_at(source, 2, "no samples");
    return trace;
}

std::string format_hr_csv(const HrTrace& trace) {
    std::string out = "t_ms,bpm,confidence\n";
    for (const auto& s : trace.samples) out += fmt::format("{},{:.4f},{:.4f}\n", to_ms(s.t), s.bpm, s.confidence);
    return out;
}

validation::RrSeries parse_beats_csv(std::string_view text, const std::string& source) {
    validation::RrSeries rr;
    for (const auto& r : rows_with_header(text, source, {"beat_t_ms"})) {
        const auto t_ms = parse_number<long long>(r.cells[0], source, r.line, "beat_t_ms");
        const double t = static_cast<double>(t_ms) / 1000.0;
        if (!rr.beats.empty() && !(t > rr.beats.back())) fail_at(source, r.line, "beat times must be strictly increasing");
        rr.beats.push_back(t);
    }
    return rr;
}

std::map<long, signal::Roi> parse_roi_csv(std::string_view text, const std::string& source) {
    std::map<long, signal::Roi> rois;
    for (const auto& r : rows_with_header(text, source, {"frame_index", "x", "y", "w", "h"})) {
        const auto idx = parse_number<long>(r.cells[0], source, r.line, "frame_index");
        signal::Roi roi{parse_number<int>(r.cells[1], source, r.line, "x"),
                        parse_number<int>(r.cells[2], source, r.line, "y"),
                        parse_number<int>(r.cells[3], source, r.line, "w"),
                        parse_number<int>(r.cells[4], source, r.line, "h")};
        if (roi.w < 1 || roi.h < 1) fail_at(source, r.line, "ROI extents must be >= 1");
        if (!rois.emplace(idx, roi).second) fail_at(source, r.line, "duplicate frame_index");
    }
    return rois;
}

std::vector<stats::MappingRow> parse_mapping_csv(std::string_view text, const std::string& source) {
    std::vector<stats::MappingRow> rows;
    for (const auto& r : rows_with_header(text, source, {"item", "subscale", "reversed"})) {
        stats::MappingRow row;
        row.item = parse_number<int>(r.cells[0], source, r.line, "item");
        try {
            row.subscale = stats::parse_subscale(r.cells[1]);
        } catch (const Error& e) {
            fail_at(source, r.line, e.what());
        }
        const auto rev = r.cells[2];
        if (rev == "1" || rev == "true") {
            row.reversed = true;
        } else if (rev == "0" || rev == "false") {
            row.reversed = false;
        } else {
            fail_at(source, r.line, "reversed must be 0/1/true/false");
        }
        rows.push_back(row);
    }
    return rows;
}

std::vector<stats::SpgqResponse> parse_responses_csv(std::string_view text, const std::string& source) {
    std::vector<std::string> names = {"group", "participant", "condition"};
    for (std::size_t i = 1; i <= stats::kSpgqItems; ++i) names.push_back("item_" + std::to_string(i));
    const std::vector<std::string_view> header(names.begin(), names.end());

    std::vector<stats::SpgqResponse> out;
    for (const auto& r : rows_with_header(text, source, header)) {
        stats::SpgqResponse resp;
        resp.group = std::string(r.cells[0]);
        resp.participant = std::string(r.cells[1]);
        try {
            resp.condition = session::parse_condition(r.cells[2]);
        } catch (const Error& e) {
            fail_at(source, r.line, e.what());
        }
        for (std::size_t i = 0; i < stats::kSpgqItems; ++i) {
            const int v = parse_number<int>(r.cells[3 + i], source, r.line, "item");
            if (v < 0 || v > stats::kLikertMax) fail_at(source, r.line, "item value outside 0..4");
            resp.items[i] = v;
        }
        out.push_back(std::move(resp));
    }
    return out;
}

double frame_time(long index, double fps) {
    return static_cast<double>(std::llround(static_cast<double>(index) * 1000.0 / fps)) / 1000.0;
}

Trace trace_from_frames(const std::vector<signal::Frame>& frames, const std::map<long, signal::Roi>& rois,
                        double fps, signal::Channel channel) {
    if (!(fps > 0)) throw Error(ErrorCode::configuration, "frame rate must be positive");
    Trace trace;
    trace.nominal_fs = fps;
    std::optional<signal::Roi> current;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (auto it = rois.find(static_cast<long>(i)); it != rois.end()) current = it->second;
        if (!current) {
            throw Error(ErrorCode::configuration, "no ROI known for frame " + std::to_string(i));
        }
        trace.samples.push_back({frame_time(static_cast<long>(i), fps), signal::mean_channel(frames[i], *current, channel)});
    }
    return trace;
}

std::optional<signal::Frame> read_frame(std::istream& in) {
    // Collect the header bytes (magic, width, height, maxval and one
    // whitespace byte), then hand header + payload to the span parser.
    std::string header;
    int c = in.get();
    while (c != EOF && std::isspace(c)) c = in.get();
    if (c == EOF) return std::nullopt;
    int fields = 0;
    bool in_token = false;
    bool in_comment = false;
    while (c != EOF) {
        header.push_back(static_cast<char>(c));
        if (header.size() > 4096) throw Error(ErrorCode::parse, "PPM header too long");
        if (in_comment) {
            if (c == '\n') in_comment = false;
        } else if (c == '#' && !in_token) {
            in_comment = true;
        } else if (std::isspace(c)) {
            if (in_token) {
                in_token = false;
                if (++fields == 4) break;
            }
        } else {
            in_token = true;
        }
        c = in.get();
    }
    if (fields < 4) throw Error(ErrorCode::parse, "truncated PPM header");
    std::vector<std::uint8_t> bytes(header.begin(), header.end());
    // Validate the header before trusting its dimensions.
    std::size_t width = 0;
    std::size_t height = 0;
    {
        std::istringstream hs(header.substr(2));
        if (header.rfind("P6", 0) != 0) throw Error(ErrorCode::parse, "unsupported magic at offset 0");
        std::string tok;
        std::vector<std::size_t> vals;
        while (hs >> tok && vals.size() < 3) {
            if (tok[0] == '#') {
                std::getline(hs, tok);
                continue;
            }
            std::size_t v = 0;
            const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (ec != std::errc() || ptr != tok.data() + tok.size()) {
                throw Error(ErrorCode::parse, "invalid PPM header field '" + tok + "'");
            }
            vals.push_back(v);
        }
        if (vals.size() < 3) throw Error(ErrorCode::parse, "truncated PPM header");
        width = vals[0];
        height = vals[1];
        if (width == 0 || height == 0 || width > 100000 || height > 100000) {
            throw Error(ErrorCode::parse, "implausible PPM dimensions");
        }
    }
    const std::size_t payload = width * height * 3;
    const std::size_t header_size = bytes.size();
    bytes.resize(header_size + payload);
    in.read(reinterpret_cast<char*>(bytes.data() + header_size), static_cast<std::streamsize>(payload));
    if (static_cast<std::size_t>(in.gcount()) != payload) {
        throw Error(ErrorCode::parse, "truncated pixel payload at offset " +
                                          std::to_string(header_size + static_cast<std::size_t>(in.gcount())));
    }
    return signal::parse_frame(bytes);
}

std::vector<signal::Frame> load_frames(const fs::path& path) {
    std::vector<signal::Frame> frames;
    auto load_stream = [&](const fs::path& file) {
        const std::string bytes = read_file(file);
        const std::span<const std::uint8_t> view(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size());
        std::size_t offset = 0;
        try {
            while (offset < view.size()) {
                frames.push_back(signal::parse_frame_at(view, offset));
                while (offset < view.size() && std::isspace(view[offset])) ++offset;
            }
        } catch (const Error& e) {
            throw Error(ErrorCode::parse, file.string() + ": " + e.what());
        }
        if (bytes.empty()) throw Error(ErrorCode::parse, file.string() + ": empty frame file");
    };

    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(path)) {
            if (entry.is_regular_file() && entry.path().extension() == ".ppm") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) throw Error(ErrorCode::parse, path.string() + ": no .ppm frames");
        for (const auto& f : files) load_stream(f);
    } else {
        load_stream(path);
    }
    return frames;
}

}  // namespace rppg::io
