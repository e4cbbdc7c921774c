#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fundaq/csv.hpp"
#include "fundaq/dataset.hpp"
#include "fundaq/image.hpp"
#include "fundaq/nn/resnet.hpp"
#include "fundaq/nn/train.hpp"
#include "fundaq/report.hpp"

namespace fundaq::config {

using Json = nlohmann::ordered_json;

struct ConfigError : std::runtime_error {
    ConfigError(std::string key, const std::string& what) : std::runtime_error("config key '" + key + "': " + what), key(std::move(key)) {}
    std::string key;
};

struct Paths {
    std::string images;
    std::string labels;
    std::string manifest;
    std::string split;
    std::string weights;
    std::string predictions;
    std::string eyeq;
    std::string gating;
    std::string output;  // required
};

struct SynthSettings {
    std::size_t count = 600;
    int side = 64;
};

struct RunConfig {
    std::uint64_t seed = 42;
    Paths paths;
    PreprocessConfig preprocess;
    ChannelNorm norm;
    dataset::SplitConfig split;
    std::string network_profile = "canonical";
    nn::NetworkConfig network = nn::NetworkConfig::canonical();
    nn::TrainConfig train;
    std::string precision = "f32";
    SynthSettings synth;
    std::vector<report::Format> report_formats{report::Format::text, report::Format::csv};
};

namespace detail {

inline std::string join_key(const std::string& parent, const std::string& k) { return parent.empty() ? k : parent + "." + k; }

/// Rejects keys outside `allowed`, naming the first offender.
inline void check_keys(const Json& obj, const std::string& where, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError(where.empty() ? "<root>" : where, "expected an object");
    for (const auto& [k, _] : obj.items())
        if (!allowed.count(k)) throw ConfigError(join_key(where, k), "unknown key");
}

template <typename T>
T get_number(const Json& obj, const std::string& where, const std::string& k, T fallback) {
    if (!obj.contains(k)) return fallback;
    const auto& v = obj.at(k);
    const auto key = join_key(where, k);
    if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError(key, "expected a number");
        return v.get<T>();
    } else if constexpr (std::is_unsigned_v<T>) {
        if (!v.is_number_unsigned()) throw ConfigError(key, "expected a non-negative integer");
        return v.get<T>();
    } else {
        if (!v.is_number_integer()) throw ConfigError(key, "expected an integer");
        return v.get<T>();
    }
}

inline std::string get_string(const Json& obj, const std::string& where, const std::string& k, std::string fallback) {
    if (!obj.contains(k)) return fallback;
    if (!obj.at(k).is_string()) throw ConfigError(join_key(where, k), "expected a string");
    return obj.at(k).get<std::string>();
}

inline bool get_bool(const Json& obj, const std::string& where, const std::string& k, bool fallback) {
    if (!obj.contains(k)) return fallback;
    if (!obj.at(k).is_boolean()) throw ConfigError(join_key(where, k), "expected true or false");
    return obj.at(k).get<bool>();
}

inline std::vector<double> get_reals(const Json& obj, const std::string& where, const std::string& k, std::vector<double> fallback,
                                     std::size_t exact_len = 0) {
    if (!obj.contains(k)) return fallback;
    const auto& v = obj.at(k);
    const auto key = join_key(where, k);
    if (!v.is_array()) throw ConfigError(key, "expected an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
        if (!x.is_number()) throw ConfigError(key, "expected an array of numbers");
        out.push_back(x.get<double>());
    }
    if (exact_len && out.size() != exact_len) throw ConfigError(key, "expected " + std::to_string(exact_len) + " values");
    return out;
}

inline const Json& section(const Json& root, const std::string& k) {
    static const Json empty = Json::object();
    return root.contains(k) ? root.at(k) : empty;
}

template <std::size_t N>
std::array<double, N> to_array(const std::vector<double>& v) {
    std::array<double, N> a{};
    std::copy_n(v.begin(), N, a.begin());
    return a;
}

}  // namespace detail

inline nn::NetworkConfig profile_config(const std::string& profile) {
    if (profile == "canonical") return nn::NetworkConfig::canonical();
    if (profile == "mini") return nn::NetworkConfig::mini();
    throw ConfigError("network.profile", "unknown profile '" + profile + "' (expected canonical or mini)");
}

/// Strict parse: unknown keys and type mismatches are errors naming the key.
/// Absent keys take their defaults.
inline RunConfig from_json(const Json& root) {
    using namespace detail;
    check_keys(root, "", {"seed", "paths", "preprocess", "split", "network", "train", "synth", "report"});
    RunConfig c;
    c.seed = get_number<std::uint64_t>(root, "", "seed", c.seed);

    if (!root.contains("paths")) throw ConfigError("paths", "missing required section");
    const auto& p = root.at("paths");
    check_keys(p, "paths", {"images", "labels", "manifest", "split", "weights", "predictions", "eyeq", "gating", "output"});
    c.paths.images = get_string(p, "paths", "images", "");
    c.paths.labels = get_string(p, "paths", "labels", "");
    c.paths.manifest = get_string(p, "paths", "manifest", "");
    c.paths.split = get_string(p, "paths", "split", "");
    c.paths.weights = get_string(p, "paths", "weights", "");
    c.paths.predictions = get_string(p, "paths", "predictions", "");
    c.paths.eyeq = get_string(p, "paths", "eyeq", "");
    c.paths.gating = get_string(p, "paths", "gating", "");
    c.paths.output = get_string(p, "paths", "output", "");
    if (c.paths.output.empty()) throw ConfigError("paths.output", "missing required path");

    const auto& pre = section(root, "preprocess");
    check_keys(pre, "preprocess", {"luma_threshold", "side", "fill", "mean", "std"});
    c.preprocess.luma_threshold = get_number<int>(pre, "preprocess", "luma_threshold", c.preprocess.luma_threshold);
    c.preprocess.side = get_number<int>(pre, "preprocess", "side", c.preprocess.side);
    if (c.preprocess.luma_threshold < 0 || c.preprocess.luma_threshold > 255) throw ConfigError("preprocess.luma_threshold", "must lie in 0..255");
    if (c.preprocess.side < 1) throw ConfigError("preprocess.side", "must be positive");
    const auto fill = get_reals(pre, "preprocess", "fill", {0, 0, 0}, 3);
    for (double f : fill)
        if (f < 0 || f > 255 || f != std::floor(f)) throw ConfigError("preprocess.fill", "channels must be integers in 0..255");
    c.preprocess.fill = {static_cast<std::uint8_t>(fill[0]), static_cast<std::uint8_t>(fill[1]), static_cast<std::uint8_t>(fill[2])};
    c.norm.mean = to_array<3>(get_reals(pre, "preprocess", "mean", {0.5, 0.5, 0.5}, 3));
    c.norm.std = to_array<3>(get_reals(pre, "preprocess", "std", {0.5, 0.5, 0.5}, 3));
    for (double s : c.norm.std)
        if (!(s > 0.0)) throw ConfigError("preprocess.std", "must be positive");

    const auto& sp = section(root, "split");
    check_keys(sp, "split", {"fractions", "strata_edges"});
    c.split.fractions = to_array<3>(get_reals(sp, "split", "fractions", {0.7, 0.15, 0.15}, 3));
    c.split.strata_edges = get_reals(sp, "split", "strata_edges", dataset::default_strata_edges());
    c.split.seed = c.seed;
    try {
        c.split.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("split", e.what());
    }

    const auto& net = section(root, "network");
    check_keys(net, "network", {"profile", "input_side"});
    c.network_profile = get_string(net, "network", "profile", c.network_profile);
    c.network = profile_config(c.network_profile);
    c.network.input_side = get_number<std::size_t>(net, "network", "input_side", c.network.input_side);
    if (c.network.input_side < 32) throw ConfigError("network.input_side", "must be at least 32");

    const auto& tr = section(root, "train");
    check_keys(tr, "train", {"learning_rate", "weight_decay", "batch_size", "max_epochs", "patience", "min_improvement", "deterministic", "precision"});
    c.train.learning_rate = get_number<double>(tr, "train", "learning_rate", c.train.learning_rate);
    c.train.weight_decay = get_number<double>(tr, "train", "weight_decay", c.train.weight_decay);
    c.train.batch_size = get_number<std::size_t>(tr, "train", "batch_size", c.train.batch_size);
    c.train.max_epochs = get_number<std::size_t>(tr, "train", "max_epochs", c.train.max_epochs);
    c.train.patience = get_number<std::size_t>(tr, "train", "patience", c.train.patience);
    c.train.min_improvement = get_number<double>(tr, "train", "min_improvement", c.train.min_improvement);
    c.train.deterministic = get_bool(tr, "train", "deterministic", c.train.deterministic);
    c.train.seed = c.seed;
    c.precision = get_string(tr, "train", "precision", c.precision);
    if (c.precision != "f32" && c.precision != "f64") throw ConfigError("train.precision", "expected f32 or f64");
    try {
        c.train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("train", e.what());
    }

    const auto& sy = section(root, "synth");
    check_keys(sy, "synth", {"count", "side"});
    c.synth.count = get_number<std::size_t>(sy, "synth", "count", c.synth.count);
    c.synth.side = get_number<int>(sy, "synth", "side", c.synth.side);
    if (c.synth.count == 0) throw ConfigError("synth.count", "must be positive");
    if (c.synth.side < 8) throw ConfigError("synth.side", "must be at least 8");

    const auto& rp = section(root, "report");
    check_keys(rp, "report", {"formats"});
    if (rp.contains("formats")) {
        const auto& f = rp.at("formats");
        if (!f.is_array() || f.empty()) throw ConfigError("report.formats", "expected a non-empty array of \"text\"/\"csv\"");
        c.report_formats.clear();
        for (const auto& x : f) {
            if (!x.is_string()) throw ConfigError("report.formats", "expected strings");
            try {
                c.report_formats.push_back(report::format_from_string(x.get<std::string>()));
            } catch (const std::invalid_argument& e) {
                throw ConfigError("report.formats", e.what());
            }
        }
    }
    return c;
}

/// Every field, defaults included.
inline Json to_json(const RunConfig& c) {
    Json j;
    j["seed"] = c.seed;
    j["paths"] = {{"images", c.paths.images},   {"labels", c.paths.labels},         {"manifest", c.paths.manifest},
                  {"split", c.paths.split},     {"weights", c.paths.weights},       {"predictions", c.paths.predictions},
                  {"eyeq", c.paths.eyeq},       {"gating", c.paths.gating},         {"output", c.paths.output}};
    j["preprocess"] = {{"luma_threshold", c.preprocess.luma_threshold},
                       {"side", c.preprocess.side},
                       {"fill", {c.preprocess.fill.r, c.preprocess.fill.g, c.preprocess.fill.b}},
                       {"mean", c.norm.mean},
                       {"std", c.norm.std}};
    j["split"] = {{"fractions", c.split.fractions}, {"strata_edges", c.split.strata_edges}};
    j["network"] = {{"profile", c.network_profile}, {"input_side", c.network.input_side}};
    j["train"] = {{"learning_rate", c.train.learning_rate}, {"weight_decay", c.train.weight_decay},
                  {"batch_size", c.train.batch_size},       {"max_epochs", c.train.max_epochs},
                  {"patience", c.train.patience},           {"min_improvement", c.train.min_improvement},
                  {"deterministic", c.train.deterministic}, {"precision", c.precision}};
    j["synth"] = {{"count", c.synth.count}, {"side", c.synth.side}};
    Json formats = Json::array();
    for (auto f : c.report_formats) formats.push_back(f == report::Format::text ? "text" : "csv");
    j["report"] = {{"formats", formats}};
    return j;
}

inline RunConfig parse_config(std::string_view text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("<root>", std::string("malformed JSON: ") + e.what());
    }
    return from_json(j);
}

/// FUNDAQ_SEED, when set, replaces the configured seed everywhere it is used.
inline void apply_env_seed(RunConfig& c) {
    const char* s = std::getenv("FUNDAQ_SEED");
    if (!s) return;
    const std::string v(s);
    std::uint64_t seed = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), seed);
    if (ec != std::errc{} || p != v.data() + v.size() || v.empty()) throw ConfigError("FUNDAQ_SEED", "not an unsigned integer: '" + v + "'");
    c.seed = seed;
    c.split.seed = seed;
    c.train.seed = seed;
}

inline RunConfig load_config(const std::string& path) {
    std::string text;
    try {
        text = csv::read_file(path);
    } catch (const std::runtime_error& e) {
        throw ConfigError("<file>", e.what());
    }
    auto c = parse_config(text);
    apply_env_seed(c);
    return c;
}

inline std::string dump(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

}  // namespace fundaq::config
