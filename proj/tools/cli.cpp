#include "cli.hpp"

#include <cstdlib>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "rppg/error.hpp"
#include "rppg/io.hpp"
#include "rppg/server.hpp"
#include "rppg/stats.hpp"

namespace rppg::cli {

namespace fs = std::filesystem;

namespace {

bool frame_input(const EstimateOptions& o) { return !o.roi.empty(); }

Trace load_trace(const EstimateOptions& o) {
    if (frame_input(o)) {
        const auto rois = io::parse_roi_csv(io::read_file(o.roi), o.roi.string());
        return io::trace_from_frames(io::load_frames(o.input), rois, o.fps, signal::parse_channel(o.channel));
    }
    return io::parse_trace_csv(io::read_file(o.input), o.input.string());
}

void add_estimator_options(CLI::App& cmd, hr::EstimatorConfig& c, double& min_bpm, double& max_bpm) {
    cmd.add_option("--fs", c.fs, "Analysis sampling rate (Hz)")->capture_default_str();
    cmd.add_option("--window", c.window, "Analysis window (s)")->capture_default_str();
    cmd.add_option("--hop", c.hop, "Window hop (s)")->capture_default_str();
    cmd.add_option("--scales", c.n_scales, "Number of wavelet scales")->capture_default_str();
    cmd.add_option("--min-bpm", min_bpm, "Lower edge of the cardiac band")->capture_default_str();
    cmd.add_option("--max-bpm", max_bpm, "Upper edge of the cardiac band")->capture_default_str();
    cmd.add_option("--detrend", c.detrend_window, "Detrend window (s)")->capture_default_str();
    cmd.add_option("--smoothing", c.smoothing, "Ridge median smoothing (s)")->capture_default_str();
}

}  // namespace

void cmd_estimate(const EstimateOptions& o, std::ostream& out) {
    const Trace trace = load_trace(o);
    const HrTrace hr = o.baseline ? hr::fft_hr_baseline(trace, o.estimator.window, o.estimator)
                                  : hr::estimate_hr(trace, o.estimator);
    double sum = 0.0;
    std::size_t low = 0;
    for (const auto& s : hr.samples) {
        sum += s.bpm;
        if (s.confidence < kLowConfidence) ++low;
    }
    const double n = static_cast<double>(hr.samples.size());
    io::write_file_atomic(o.output, io::format_hr_csv(hr));
    out << fmt::format("mean_bpm={:.2f} samples={} low_confidence={:.1f}%\n", n > 0 ? sum / n : 0.0,
                       hr.samples.size(), n > 0 ? 100.0 * static_cast<double>(low) / n : 0.0);
}

void cmd_simulate(const SimulateOptions& o, std::ostream& out) {
    auto spec = o.spec;
    if (o.snr_db) spec.noise_sigma = signal::SynthSpec::sigma_for_snr(*o.snr_db);
    const auto [trace, truth] = signal::synth_ppg(spec);
    const auto trace_csv = io::format_trace_csv(trace);
    const auto truth_csv = io::format_hr_csv(truth);
    io::write_file_atomic(o.trace_out, trace_csv);
    io::write_file_atomic(o.truth_out, truth_csv);
    out << fmt::format("samples={} duration={:g}s base_bpm={:g} noise_sigma={:.6g}\n", trace.size(), spec.duration,
                       spec.base_bpm, spec.noise_sigma);
}

void cmd_validate(const ValidateOptions& o, std::ostream& out) {
    const HrTrace est = io::parse_hr_csv(io::read_file(o.estimate), o.estimate.string());
    const auto truth_text = io::read_file(o.truth);
    HrTrace truth;
    if (io::csv_header(truth_text) == "beat_t_ms") {
        truth = validation::rr_to_hr(io::parse_beats_csv(truth_text, o.truth.string()), o.beats_fs);
    } else {
        truth = io::parse_hr_csv(truth_text, o.truth.string());
    }
    const auto report = validation::align_and_compare(est, truth, o.compare);
    if (!o.output.empty()) io::write_file_atomic(o.output, validation::to_json(report));
    out << validation::to_key_value(report);
}

void cmd_analyze(const AnalyzeOptions& o, std::ostream& out) {
    const auto responses = io::parse_responses_csv(io::read_file(o.responses), o.responses.string());
    stats::SpgqMapping mapping;
    if (o.mapping.empty()) {
        spdlog::warn("no item mapping given; using the non-canonical placeholder mapping");
        mapping = stats::placeholder_mapping();
    } else {
        const auto rows = io::parse_mapping_csv(io::read_file(o.mapping), o.mapping.string());
        mapping = stats::make_mapping(rows);
    }
    const auto report = stats::condition_report(responses, mapping);
    if (!o.output.empty()) io::write_file_atomic(o.output, stats::to_json(report));
    out << stats::to_text(report);
}

void cmd_serve(const fs::path& config_path) {
    auto config = server::parse_server_config(io::read_file(config_path), config_path.parent_path());
    server::apply_env_overrides(config);
    server::Server srv(std::move(config));
    srv.install_signal_handlers();
    srv.start();
    srv.wait();
    srv.shutdown();
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    if (const char* level = std::getenv("RPPG_LOG_LEVEL"); level && *level) {
        spdlog::set_level(spdlog::level::from_str(level));
    }

    CLI::App app{"Remote photoplethysmography pipeline and biofeedback session server", "rppg"};
    app.require_subcommand(1);
    std::string log_level;
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off (env RPPG_LOG_LEVEL)");

    EstimateOptions est;
    double est_min = est.estimator.band.min_bpm(), est_max = est.estimator.band.max_bpm();
    auto* estimate = app.add_subcommand("estimate", "Heart rate from a color trace or a frame sequence");
    estimate->add_option("input", est.input, "Trace CSV, or PPM directory/file with --roi")
        ->required()
        ->check(CLI::ExistingPath);
    estimate->add_option("-o,--output", est.output, "Heart-rate CSV to write")->required();
    estimate->add_option("--roi", est.roi, "ROI sidecar CSV (frame input)")->check(CLI::ExistingFile);
    estimate->add_option("--fps", est.fps, "Frame rate of frame input")->capture_default_str();
    estimate->add_option("--channel", est.channel, "Color channel of frame input (R, G, B)")->capture_default_str();
    estimate->add_flag("--baseline", est.baseline, "Use the FFT peak estimator");
    add_estimator_options(*estimate, est.estimator, est_min, est_max);

    SimulateOptions sim;
    double noise_sigma = 0.0;
    double snr_db = 0.0;
    auto* simulate = app.add_subcommand("simulate", "Synthetic pulse trace with ground truth");
    simulate->add_option("--trace", sim.trace_out, "Trace CSV to write")->required();
    simulate->add_option("--truth", sim.truth_out, "Ground-truth heart-rate CSV to write")->required();
    simulate->add_option("--duration", sim.spec.duration, "Seconds")->capture_default_str();
    simulate->add_option("--fs", sim.spec.fs, "Sampling rate (Hz)")->capture_default_str();
    simulate->add_option("--bpm", sim.spec.base_bpm, "Base heart rate")->capture_default_str();
    simulate->add_option("--mod-bpm", sim.spec.modulation_bpm, "Modulation depth (BPM)")->capture_default_str();
    simulate->add_option("--mod-freq", sim.spec.modulation_freq, "Modulation frequency (Hz)")->capture_default_str();
    auto* snr_opt = simulate->add_option("--snr-db", snr_db, "Noise level as SNR in dB");
    simulate->add_option("--noise-sigma", noise_sigma, "Noise standard deviation")->excludes(snr_opt);
    simulate->add_option("--drift-amp", sim.spec.baseline_drift_amp, "Baseline drift amplitude")->capture_default_str();
    simulate->add_option("--drift-freq", sim.spec.baseline_drift_freq, "Baseline drift frequency (Hz)")->capture_default_str();
    simulate->add_option("--seed", sim.spec.seed, "Noise seed")->capture_default_str();

    ValidateOptions val;
    auto* validate = app.add_subcommand("validate", "Compare an estimate against a reference");
    validate->add_option("estimate", val.estimate, "Estimated heart-rate CSV")->required()->check(CLI::ExistingFile);
    validate->add_option("truth", val.truth, "Reference heart-rate CSV or beats CSV")->required()->check(CLI::ExistingFile);
    validate->add_option("-o,--output", val.output, "JSON report to write");
    validate->add_option("--max-lag", val.compare.max_lag, "Lag search range (s); 0 disables")->capture_default_str();
    validate->add_option("--lag-step", val.compare.lag_step, "Lag search step (s)")->capture_default_str();
    validate->add_option("--min-overlap", val.compare.min_overlap, "Required overlap (s)")->capture_default_str();
    validate->add_option("--beats-fs", val.beats_fs, "Grid rate for beat-derived reference (Hz)")->capture_default_str();

    AnalyzeOptions ana;
    auto* analyze = app.add_subcommand("analyze", "Questionnaire statistics across conditions");
    analyze->add_option("responses", ana.responses, "Responses CSV")->required()->check(CLI::ExistingFile);
    analyze->add_option("--mapping", ana.mapping, "Item mapping CSV")->check(CLI::ExistingFile);
    analyze->add_option("-o,--output", ana.output, "JSON report to write");

    fs::path config_path;
    auto* serve = app.add_subcommand("serve", "Run the live biofeedback session server");
    serve->add_option("config", config_path, "Session config JSON")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }
    if (!log_level.empty()) spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*estimate) {
            est.estimator.band.f_min = est_min / 60.0;
            est.estimator.band.f_max = est_max / 60.0;
            cmd_estimate(est, out);
        } else if (*simulate) {
            if (snr_opt->count() > 0) sim.snr_db = snr_db;
            else sim.spec.noise_sigma = noise_sigma;
            cmd_simulate(sim, out);
        } else if (*validate) {
            cmd_validate(val, out);
        } else if (*analyze) {
            cmd_analyze(ana, out);
        } else if (*serve) {
            cmd_serve(config_path);
        }
    } catch (const Error& e) {
        err << "rppg: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "rppg: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace rppg::cli
