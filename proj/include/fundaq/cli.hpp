#pragma once

#include <csignal>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fundaq/annotate/service.hpp"
#include "fundaq/config.hpp"
#include "fundaq/csv.hpp"
#include "fundaq/dataset.hpp"
#include "fundaq/image.hpp"
#include "fundaq/metrics.hpp"
#include "fundaq/nn/train.hpp"
#include "fundaq/nn/weights.hpp"
#include "fundaq/png_io.hpp"
#include "fundaq/report.hpp"
#include "fundaq/rubric.hpp"
#include "fundaq/synth.hpp"

namespace fundaq::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Bad or missing input data; maps to exit code 2.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline const char* kWeightsFile = "model.fq8w";

// ---- shared stage helpers --------------------------------------------------

inline const std::string& require_path(const std::string& value, const std::string& key, bool must_exist = true) {
    if (value.empty()) throw config::ConfigError(key, "required by this subcommand");
    if (must_exist && !fs::exists(value)) throw config::ConfigError(key, "path does not exist: " + value);
    return value;
}

inline fs::path prepare_output(const config::RunConfig& cfg) {
    const fs::path out(cfg.paths.output);
    fs::create_directories(out);
    csv::write_file((out / "config.json").string(), config::dump(cfg));
    return out;
}

inline void write_reports(const fs::path& dir, const std::string& stem, const config::RunConfig& cfg,
                          const std::function<std::string(report::Format)>& emit, std::ostream& out) {
    for (auto f : cfg.report_formats) {
        const auto bytes = emit(f);
        csv::write_file((dir / (stem + (f == report::Format::text ? ".txt" : ".csv"))).string(), bytes);
        if (f == report::Format::text) out << bytes;
    }
}

/// Brings a stored image to the network's input geometry: square images are
/// resized, others padded to square first. Black-border cropping is the job
/// of the preprocess stage.
inline ModelInput load_model_input(const std::string& path, std::size_t side, const ChannelNorm& norm, Rgb fill) {
    auto img = read_png(path);
    if (img.width() != img.height()) img = pad_to_square(img, fill);
    return to_model_input(resize_bilinear(img, static_cast<int>(side)), norm);
}

struct PredictionRow {
    std::string image_path;
    double target;
    double predicted;
};

inline std::string serialize_predictions(const std::vector<PredictionRow>& rows) {
    std::string out = csv::join({"image_path", "target", "predicted"});
    for (const auto& r : rows) out += csv::join({r.image_path, csv::full_precision(r.target), csv::full_precision(r.predicted)});
    return out;
}

inline std::vector<PredictionRow> parse_predictions(std::string_view bytes) {
    const auto rows = csv::split_rows(bytes);
    const std::vector<std::string> names = {"image_path", "target", "predicted"};
    if (rows.empty()) throw csv::ParseError(0, names[0], "missing header");
    const auto cols = csv::require_columns(rows.front(), names);
    std::vector<PredictionRow> out;
    for (std::size_t r = 1; r < rows.size(); ++r)
        out.push_back({csv::cell(rows[r], cols[0], r, names[0]), csv::to_real(csv::cell(rows[r], cols[1], r, names[1]), r, names[1]),
                       csv::to_real(csv::cell(rows[r], cols[2], r, names[2]), r, names[2])});
    return out;
}

/// Entries of the manifest grouped by split, in manifest order.
inline std::array<std::vector<dataset::ManifestEntry>, 3> partition(const std::vector<dataset::ManifestEntry>& manifest,
                                                                    const dataset::SplitAssignment& split) {
    std::array<std::vector<dataset::ManifestEntry>, 3> parts;
    for (const auto& e : manifest) {
        const auto it = split.find(e.image_path);
        if (it == split.end()) throw DataError("split file has no entry for " + e.image_path);
        parts[static_cast<std::size_t>(it->second)].push_back(e);
    }
    return parts;
}

inline std::vector<nn::Example> load_examples(const std::vector<dataset::ManifestEntry>& entries, const config::RunConfig& cfg) {
    std::vector<nn::Example> out;
    out.reserve(entries.size());
    for (const auto& e : entries)
        out.push_back({load_model_input(e.image_path, cfg.network.input_side, cfg.norm, cfg.preprocess.fill), e.score.value()});
    return out;
}

template <typename T>
std::vector<PredictionRow> predict_entries(nn::ResNet<T>& net, const std::vector<dataset::ManifestEntry>& entries, const config::RunConfig& cfg) {
    std::vector<PredictionRow> rows;
    for (const auto& e : entries) {
        const auto in = load_model_input(e.image_path, cfg.network.input_side, cfg.norm, cfg.preprocess.fill);
        rows.push_back({e.image_path, e.score.value(), nn::predict(net, in).value()});
    }
    return rows;
}

inline metrics::RegressionReport score_predictions(const std::vector<PredictionRow>& rows) {
    if (rows.empty()) throw DataError("no predictions to evaluate");
    std::vector<double> p, t;
    for (const auto& r : rows) {
        p.push_back(r.predicted);
        t.push_back(r.target);
    }
    return metrics::regression_metrics(p, t);
}

inline dataset::SplitAssignment load_or_make_split(const config::RunConfig& cfg, const std::vector<dataset::ManifestEntry>& manifest) {
    if (!cfg.paths.split.empty()) return dataset::parse_split(csv::read_file(require_path(cfg.paths.split, "paths.split")));
    return dataset::stratified_split(manifest, cfg.split);
}

// ---- subcommands -------------------------------------------------------------

inline int cmd_preprocess(const config::RunConfig& cfg, std::ostream& out) {
    const auto& in_dir = require_path(cfg.paths.images, "paths.images");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(in_dir))
        if (e.is_regular_file() && dataset::is_image_file(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    const auto dir = prepare_output(cfg);
    fs::create_directories(dir / "images");
    std::size_t skipped = 0;
    for (const auto& f : files) {
        try {
            write_png((dir / "images" / f.filename()).string(), preprocess(read_png(f.string()), cfg.preprocess));
        } catch (const NoRetinaFound& e) {
            std::cerr << "warning: " << f.string() << ": " << e.what() << "\n";
            ++skipped;
        }
    }
    out << "preprocessed " << files.size() - skipped << " images (" << skipped << " without retina) into " << (dir / "images").string() << "\n";
    return kExitOk;
}

inline int cmd_synth(const config::RunConfig& cfg, std::ostream& out) {
    const auto dir = prepare_output(cfg);
    fs::create_directories(dir / "images");
    Rng rng(cfg.seed);
    std::vector<LabelRecord> labels;
    for (std::size_t i = 0; i < cfg.synth.count; ++i) {
        const auto params = synth::sample_params(rng);
        const auto sample = synth::synth_generate(params, cfg.synth.side);
        char id[32];
        std::snprintf(id, sizeof id, "synth_%05zu", i);
        write_png((dir / "images" / (std::string(id) + ".png")).string(), sample.image);
        labels.push_back({id, "synthetic", 0, sample.sheet});
    }
    csv::write_file((dir / "labels.csv").string(), serialize_labels(labels));
    out << "wrote " << labels.size() << " synthetic images and labels.csv to " << dir.string() << "\n";
    return kExitOk;
}

inline int cmd_split(const config::RunConfig& cfg, std::ostream& out) {
    std::vector<dataset::ManifestEntry> manifest;
    std::vector<std::string> warnings;
    if (!cfg.paths.manifest.empty()) {
        manifest = dataset::parse_manifest(csv::read_file(require_path(cfg.paths.manifest, "paths.manifest")));
    } else {
        const auto& labels = require_path(cfg.paths.labels, "paths.labels");
        const auto& images = require_path(cfg.paths.images, "paths.images");
        auto m = dataset::build_manifest(images, aggregate_labels(parse_labels(csv::read_file(labels))));
        manifest = std::move(m.entries);
        warnings = std::move(m.warnings);
    }
    const auto dir = prepare_output(cfg);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    const auto assignment = dataset::stratified_split(manifest, cfg.split);
    const auto rep = dataset::verify_split(manifest, assignment, cfg.split);
    csv::write_file((dir / "manifest.csv").string(), dataset::serialize_manifest(manifest));
    csv::write_file((dir / "split.csv").string(), dataset::serialize_split(assignment));
    out << "split " << manifest.size() << " entries: train " << rep.totals[0] << ", val " << rep.totals[1] << ", test " << rep.totals[2]
        << (rep.ok() ? "" : " (some strata deviate by more than one item)") << "\n";
    return kExitOk;
}

template <typename T>
int train_with(const config::RunConfig& cfg, std::ostream& out) {
    const auto manifest = dataset::parse_manifest(csv::read_file(require_path(cfg.paths.manifest, "paths.manifest")));
    const auto assignment = load_or_make_split(cfg, manifest);
    const auto dir = prepare_output(cfg);
    const auto parts = partition(manifest, assignment);
    if (parts[0].empty() || parts[1].empty()) throw DataError("training and validation splits must be non-empty");

    const auto train_set = load_examples(parts[0], cfg);
    const auto val_set = load_examples(parts[1], cfg);
    out << "training on " << train_set.size() << " images, validating on " << val_set.size() << "\n";
    auto result = nn::train<T>(train_set, val_set, cfg.network, cfg.train, [&](const nn::EpochRecord& r) {
        out << "epoch " << r.epoch << " train_mse " << report::fixed4(r.train_mse) << " val_mse " << report::fixed4(r.val_mse) << "\n";
    });
    csv::write_file((dir / kWeightsFile).string(), nn::save_weights(result.net));
    csv::write_file((dir / "history.csv").string(), nn::serialize_history(result.history));
    out << "best epoch " << result.best_epoch << (result.stopped_early ? " (stopped early)" : "") << "\n";

    if (!parts[2].empty()) {
        const auto rows = predict_entries(result.net, parts[2], cfg);
        csv::write_file((dir / "predictions.csv").string(), serialize_predictions(rows));
        const auto rep = score_predictions(rows);
        write_reports(dir, "test_metrics", cfg, [&](report::Format f) { return report::emit_report(rep, f); }, out);
    }
    return kExitOk;
}

template <typename T>
std::vector<PredictionRow> predict_test_split(const config::RunConfig& cfg) {
    const auto manifest = dataset::parse_manifest(csv::read_file(require_path(cfg.paths.manifest, "paths.manifest")));
    const auto assignment = load_or_make_split(cfg, manifest);
    auto net = nn::load_weights<T>(csv::read_file(require_path(cfg.paths.weights, "paths.weights")), cfg.network.input_side);
    return predict_entries(net, partition(manifest, assignment)[2], cfg);
}

inline int cmd_evaluate(const config::RunConfig& cfg, std::ostream& out) {
    std::vector<PredictionRow> rows;
    if (!cfg.paths.predictions.empty()) {
        rows = parse_predictions(csv::read_file(require_path(cfg.paths.predictions, "paths.predictions")));
    } else {
        require_path(cfg.paths.weights, "paths.weights");
        rows = cfg.precision == "f64" ? predict_test_split<double>(cfg) : predict_test_split<float>(cfg);
    }
    const auto dir = prepare_output(cfg);
    if (cfg.paths.predictions.empty()) csv::write_file((dir / "predictions.csv").string(), serialize_predictions(rows));
    const auto rep = score_predictions(rows);
    write_reports(dir, "regression_metrics", cfg, [&](report::Format f) { return report::emit_report(rep, f); }, out);
    return kExitOk;
}

inline int cmd_compare_eyeq(const config::RunConfig& cfg, std::ostream& out) {
    const auto rows = metrics::parse_eyeq_csv(csv::read_file(require_path(cfg.paths.eyeq, "paths.eyeq")));
    const auto dir = prepare_output(cfg);
    metrics::EyeqComparison cmp;
    try {
        cmp = metrics::compare_eyeq(rows);
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("cannot compare categories: ") + e.what());
    }
    write_reports(dir, "eyeq_statistics", cfg, [&](report::Format f) { return report::emit_report(cmp.stats, f); }, out);
    write_reports(dir, "eyeq_quartiles", cfg, [&](report::Format f) { return report::emit_report(cmp.by_category, f); }, out);
    return kExitOk;
}

inline int cmd_gate_report(const config::RunConfig& cfg, std::ostream& out) {
    const auto rows = metrics::parse_gating_csv(csv::read_file(require_path(cfg.paths.gating, "paths.gating")));
    const auto dir = prepare_output(cfg);
    const auto rep = metrics::gated_report(rows);
    write_reports(dir, "gated_dr_performance", cfg, [&](report::Format f) { return report::emit_report(rep, f); }, out);
    return kExitOk;
}

inline httplib::Server* g_server = nullptr;

inline int cmd_serve(const config::RunConfig& cfg, const std::string& host, int port, std::ostream& out) {
    const auto& images = require_path(cfg.paths.images, "paths.images");
    const auto dir = prepare_output(cfg);
    annotate::AnnotateService svc(images, dir / "labels.log");
    httplib::Server server;
    annotate::mount(server, svc);
    const int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw DataError("cannot bind " + host + ":" + std::to_string(port));
    out << "listening on http://" << host << ":" << bound << " (" << svc.image_count() << " images)" << std::endl;
    g_server = &server;
    std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
    });
    std::signal(SIGTERM, [](int) {
        if (g_server) g_server->stop();
    });
    server.listen_after_bind();
    g_server = nullptr;
    return kExitOk;
}

// ---- entry point ---------------------------------------------------------------

/// Parses argv and runs one subcommand. Exit codes: 0 ok, 1 usage, 2 data.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Fundus image quality toolkit", "fundaq"};
    app.require_subcommand(1);
    std::string config_path;
    bool deterministic = false;
    int port = 8080;
    std::string host = "127.0.0.1";
    std::string image_dir;

    std::map<std::string, CLI::App*> subs;
    const std::vector<std::pair<std::string, std::string>> defs = {
        {"preprocess", "crop black borders, pad to square and resize every image"},
        {"synth", "generate a labeled synthetic fundus dataset"},
        {"split", "build the manifest and a stratified train/val/test split"},
        {"train", "train the quality regression network"},
        {"evaluate", "regression metrics for predictions or a trained model's test split"},
        {"compare-eyeq", "association between predicted scores and categorical quality labels"},
        {"gate-report", "DR grading performance per quality bucket"},
        {"serve", "run the annotation service"},
    };
    for (const auto& [name, help] : defs) {
        auto* s = app.add_subcommand(name, help);
        s->add_option("--config", config_path, "run configuration (JSON)")->required();
        subs[name] = s;
    }
    subs["train"]->add_flag("--deterministic", deterministic, "fixed-order sequential execution (bit-reproducible)");
    subs["serve"]->add_option("--port", port, "listen port, 0 picks a free one")->check(CLI::Range(0, 65535));
    subs["serve"]->add_option("--host", host, "listen address");
    subs["serve"]->add_option("--image-dir", image_dir, "directory of images to grade (overrides paths.images)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        err << app.help();
        return kExitUsage;
    }

    try {
        auto cfg = config::load_config(config_path);
        if (deterministic) cfg.train.deterministic = true;
        if (!image_dir.empty()) cfg.paths.images = image_dir;

        const auto* chosen = app.get_subcommands().front();
        const auto name = chosen->get_name();
        if (name == "preprocess") return cmd_preprocess(cfg, out);
        if (name == "synth") return cmd_synth(cfg, out);
        if (name == "split") return cmd_split(cfg, out);
        if (name == "train") return cfg.precision == "f64" ? train_with<double>(cfg, out) : train_with<float>(cfg, out);
        if (name == "evaluate") return cmd_evaluate(cfg, out);
        if (name == "compare-eyeq") return cmd_compare_eyeq(cfg, out);
        if (name == "gate-report") return cmd_gate_report(cfg, out);
        if (name == "serve") return cmd_serve(cfg, host, port, out);
        err << app.help();
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    }
}

}  // namespace fundaq::cli
