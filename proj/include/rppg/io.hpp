#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rppg/signal.hpp"
#include "rppg/stats.hpp"
#include "rppg/trace.hpp"
#include "rppg/validation.hpp"

namespace rppg::io {

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// `source` names the input in error messages ("file:line: ...").

/// `t_ms,value`
Trace parse_trace_csv(std::string_view text, const std::string& source = "<trace>");
std::string format_trace_csv(const Trace& trace);

/// `t_ms,bpm,confidence`
HrTrace parse_hr_csv(std::string_view text, const std::string& source = "<hr>");
std::string format_hr_csv(const HrTrace& trace);

/// `beat_t_ms`
validation::RrSeries parse_beats_csv(std::string_view text, const std::string& source = "<beats>");

/// `frame_index,x,y,w,h`
std::map<long, signal::Roi> parse_roi_csv(std::string_view text, const std::string& source = "<roi>");

/// `item,subscale,reversed`
std::vector<stats::MappingRow> parse_mapping_csv(std::string_view text, const std::string& source = "<mapping>");

/// `group,participant,condition,item_1..item_21`
std::vector<stats::SpgqResponse> parse_responses_csv(std::string_view text,
                                                     const std::string& source = "<responses>");

/// First header cell of a CSV text, trimmed (empty when there is none).
std::string csv_header(std::string_view text);

/// Frame timestamps are whole milliseconds, matching the trace CSV resolution.
double frame_time(long index, double fps);

/// Per-frame ROI means. Frames without a sidecar row reuse the last known ROI.
Trace trace_from_frames(const std::vector<signal::Frame>& frames, const std::map<long, signal::Roi>& rois,
                        double fps, signal::Channel channel);

/// Reads the next PPM image from a byte stream (e.g. a pipe); nullopt at a
/// clean end of stream.
std::optional<signal::Frame> read_frame(std::istream& in);

/// Loads `*.ppm` files of a directory in name order, or every concatenated
/// image of a single file.
std::vector<signal::Frame> load_frames(const std::filesystem::path& path);

}  // namespace rppg::io
