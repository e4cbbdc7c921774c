#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "fundaq/annotate/label_store.hpp"
#include "fundaq/csv.hpp"
#include "fundaq/dataset.hpp"
#include "fundaq/rubric.hpp"

namespace fundaq::annotate {

using Json = nlohmann::ordered_json;

struct Task {
    std::string image_id;
    std::string image_uri;
    std::size_t remaining_count = 0;  // images still ungraded by this grader, this one included
};

/// Error carrying an HTTP status. `violations` maps attribute name to message.
struct ServiceError : std::runtime_error {
    ServiceError(int status, const std::string& what, std::map<std::string, std::string> violations = {})
        : std::runtime_error(what), status(status), violations(std::move(violations)) {}
    int status;
    std::map<std::string, std::string> violations;
};

struct SubmitResult {
    LabelRecord record;
    QualityScore score;
};

struct GraderProgress {
    std::size_t submitted = 0;  // distinct images
    std::size_t remaining = 0;
};

struct Progress {
    std::map<std::string, GraderProgress> graders;
    std::size_t total_images = 0;
    std::size_t labeled_images = 0;  // images with at least one label
    std::size_t records = 0;         // log entries, resubmissions included
};

inline std::int64_t now_utc_seconds() {
    return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

/// Grading workflow over a fixed image directory and a durable label log.
/// Mutations take an exclusive lock; queries share it.
class AnnotateService {
public:
    AnnotateService(const std::filesystem::path& image_dir, const std::filesystem::path& log_path) : store_(log_path) {
        namespace fs = std::filesystem;
        std::error_code ec;
        if (!fs::is_directory(image_dir, ec)) throw std::runtime_error("image directory not readable: " + image_dir.string());
        for (fs::directory_iterator it(image_dir, ec), end; !ec && it != end; it.increment(ec))
            if (it->is_regular_file() && dataset::is_image_file(it->path())) images_.emplace(it->path().stem().string(), it->path());
        if (ec) throw std::runtime_error("image directory not readable: " + image_dir.string());
        for (const auto& r : store_.records()) index(r);
    }

    std::optional<Task> next_task(const std::string& grader) const {
        std::shared_lock lock(mutex_);
        const auto it = done_.find(grader);
        std::optional<Task> first;
        std::size_t remaining = 0;
        for (const auto& [id, _] : images_) {
            if (it != done_.end() && it->second.count(id)) continue;
            if (!first) first = Task{id, "/api/images/" + id, 0};
            ++remaining;
        }
        if (first) first->remaining_count = remaining;
        return first;
    }

    SubmitResult submit(const std::string& grader, const std::string& image_id, const Fundaq8Sheet& sheet,
                        std::int64_t timestamp = now_utc_seconds()) {
        if (grader.empty()) throw ServiceError(422, "grader id must be non-empty", {{"grader", "required"}});
        if (auto bad = validate_sheet(sheet); !bad.empty()) {
            std::map<std::string, std::string> v;
            for (auto a : bad)
                v[std::string(kAttributeNames[static_cast<std::size_t>(a)])] =
                    "score " + std::to_string(sheet[a]) + " outside {0,1,2}";
            throw ServiceError(422, "invalid sheet", std::move(v));
        }
        std::unique_lock lock(mutex_);
        if (!images_.count(image_id)) throw ServiceError(404, "unknown image_id '" + image_id + "'");
        LabelRecord rec{image_id, grader, timestamp, sheet};
        store_.append(rec);
        index(rec);
        return {rec, normalize_sheet(sheet)};
    }

    Progress progress() const {
        std::shared_lock lock(mutex_);
        Progress p;
        p.total_images = images_.size();
        p.records = store_.records().size();
        std::set<std::string> labeled;
        for (const auto& [g, ids] : done_) {
            auto& gp = p.graders[g];
            for (const auto& id : ids)
                if (images_.count(id)) {
                    ++gp.submitted;
                    labeled.insert(id);
                }
            gp.remaining = images_.size() - gp.submitted;
        }
        p.labeled_images = labeled.size();
        return p;
    }

    std::string export_labels() const {
        std::shared_lock lock(mutex_);
        return serialize_labels(latest_per_pair(store_.records()));
    }

    std::string image_bytes(const std::string& image_id) const {
        std::shared_lock lock(mutex_);
        const auto it = images_.find(image_id);
        if (it == images_.end()) throw ServiceError(404, "unknown image_id '" + image_id + "'");
        return csv::read_file(it->second.string());
    }

    std::size_t image_count() const { return images_.size(); }

private:
    void index(const LabelRecord& r) { done_[r.grader_id].insert(r.image_id); }

    mutable std::shared_mutex mutex_;
    std::map<std::string, std::filesystem::path> images_;  // image_id (file stem) -> file
    LabelStore store_;
    std::map<std::string, std::set<std::string>> done_;  // grader -> submitted image ids
};

inline Json rubric_json() {
    Json attrs = Json::array();
    for (const auto& e : kRubric) {
        Json levels = Json::array();
        for (int s = 0; s <= kMaxAttributeScore; ++s) levels.push_back({{"score", s}, {"description", e.levels[static_cast<std::size_t>(s)]}});
        attrs.push_back({{"name", e.attribute}, {"title", e.title}, {"levels", levels}});
    }
    return {{"attributes", attrs}, {"max_total", kMaxTotal}};
}

inline Json to_json(const Progress& p) {
    Json graders = Json::object();
    for (const auto& [g, gp] : p.graders) graders[g] = {{"submitted", gp.submitted}, {"remaining", gp.remaining}};
    return {{"graders", graders},
            {"overall", {{"images", p.total_images}, {"labeled", p.labeled_images}, {"records", p.records}}}};
}

/// Reads the POST /api/labels body. Every attribute must be present as an integer.
inline std::tuple<std::string, std::string, Fundaq8Sheet> parse_submission(const std::string& body) {
    Json j;
    try {
        j = Json::parse(body);
    } catch (const nlohmann::json::parse_error&) {
        throw ServiceError(400, "request body is not valid JSON");
    }
    if (!j.is_object()) throw ServiceError(400, "request body must be a JSON object");
    std::map<std::string, std::string> v;
    auto str = [&](const char* k) -> std::string {
        if (!j.contains(k) || !j[k].is_string() || j[k].get<std::string>().empty()) {
            v[k] = "required string";
            return {};
        }
        return j[k].get<std::string>();
    };
    const auto grader = str("grader");
    const auto image = str("image_id");
    Fundaq8Sheet sheet;
    if (!j.contains("scores") || !j["scores"].is_object()) {
        v["scores"] = "required object";
    } else {
        const auto& s = j["scores"];
        for (const auto& [k, _] : s.items())
            if (std::find(kAttributeNames.begin(), kAttributeNames.end(), k) == kAttributeNames.end()) v[k] = "unknown attribute";
        for (std::size_t a = 0; a < kAttributeCount; ++a) {
            const std::string name(kAttributeNames[a]);
            if (!s.contains(name)) v[name] = "missing";
            else if (!s[name].is_number_integer()) v[name] = "must be an integer 0, 1 or 2";
            else if (const auto x = s[name].get<long long>(); x < 0 || x > kMaxAttributeScore) v[name] = "score " + std::to_string(x) + " outside {0,1,2}";
            else sheet.scores[a] = static_cast<int>(x);
        }
    }
    if (!v.empty()) throw ServiceError(422, "invalid submission", std::move(v));
    return {grader, image, sheet};
}

inline void send_error(httplib::Response& res, const ServiceError& e) {
    Json body = {{"error", e.what()}};
    if (!e.violations.empty()) body["violations"] = e.violations;
    res.status = e.status;
    res.set_content(body.dump(), "application/json");
}

/// Registers the HTTP API on `server`.
inline void mount(httplib::Server& server, AnnotateService& svc) {
    auto guard = [](httplib::Response& res, auto&& fn) {
        try {
            fn();
        } catch (const ServiceError& e) {
            send_error(res, e);
        } catch (const std::exception& e) {
            send_error(res, ServiceError(500, e.what()));
        }
    };

    server.Get("/api/tasks/next", [&svc, guard](const httplib::Request& req, httplib::Response& res) {
        guard(res, [&] {
            const auto grader = req.get_param_value("grader");
            if (grader.empty()) throw ServiceError(400, "query parameter 'grader' is required");
            const auto t = svc.next_task(grader);
            const Json body = t ? Json{{"image_id", t->image_id}, {"image_uri", t->image_uri}, {"remaining_count", t->remaining_count}}
                                : Json{{"done", true}};
            res.set_content(body.dump(), "application/json");
        });
    });
    server.Get(R"(/api/images/([^/]+))", [&svc, guard](const httplib::Request& req, httplib::Response& res) {
        guard(res, [&] { res.set_content(svc.image_bytes(req.matches[1]), "image/png"); });
    });
    server.Post("/api/labels", [&svc, guard](const httplib::Request& req, httplib::Response& res) {
        guard(res, [&] {
            const auto [grader, image, sheet] = parse_submission(req.body);
            const auto r = svc.submit(grader, image, sheet);
            res.set_content(Json{{"stored", true}, {"score", r.score.value()}}.dump(), "application/json");
        });
    });
    server.Get("/api/progress", [&svc, guard](const httplib::Request&, httplib::Response& res) {
        guard(res, [&] { res.set_content(to_json(svc.progress()).dump(), "application/json"); });
    });
    server.Get("/api/export", [&svc, guard](const httplib::Request&, httplib::Response& res) {
        guard(res, [&] { res.set_content(svc.export_labels(), "text/csv"); });
    });
    server.Get("/api/rubric", [guard](const httplib::Request&, httplib::Response& res) {
        guard(res, [&] { res.set_content(rubric_json().dump(), "application/json"); });
    });
}

}  // namespace fundaq::annotate
