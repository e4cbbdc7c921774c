#pragma once

// Append-only label log. One record per line:
//   <crc32 of json, 8 lowercase hex digits> <space> <json> <newline>
// A record counts as persisted once its line and newline are fsync'ed.

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <array>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fundaq/csv.hpp"
#include "fundaq/rubric.hpp"

namespace fundaq::annotate {

struct StoreError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string crc_hex(std::string_view s) {
    const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(s.size()));
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
    return buf;
}

inline std::string encode_record(const LabelRecord& r) {
    nlohmann::ordered_json j;
    j["image_id"] = r.image_id;
    j["grader_id"] = r.grader_id;
    j["timestamp"] = r.timestamp;
    j["scores"] = r.sheet.scores;
    const auto body = j.dump();
    return crc_hex(body) + " " + body + "\n";
}

/// Decodes one line without its newline; nullopt when the checksum or JSON is bad.
inline std::optional<LabelRecord> decode_record(std::string_view line) {
    if (line.size() < 10 || line[8] != ' ') return std::nullopt;
    const auto body = line.substr(9);
    if (crc_hex(body) != line.substr(0, 8)) return std::nullopt;
    try {
        const auto j = nlohmann::json::parse(body);
        LabelRecord r;
        r.image_id = j.at("image_id").get<std::string>();
        r.grader_id = j.at("grader_id").get<std::string>();
        r.timestamp = j.at("timestamp").get<std::int64_t>();
        r.sheet.scores = j.at("scores").get<std::array<int, kAttributeCount>>();
        if (!validate_sheet(r.sheet).empty()) return std::nullopt;
        return r;
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;
    }
}

struct ReplayResult {
    std::vector<LabelRecord> records;
    std::size_t valid_bytes = 0;   // prefix holding complete, checksummed records
    bool torn_tail = false;        // an incomplete or corrupt final line was dropped
};

/// Replays log bytes. Only the final line may be bad (a write cut short by a
/// crash); damage earlier in the log is reported as an error.
inline ReplayResult replay(std::string_view bytes) {
    ReplayResult out;
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const auto nl = bytes.find('\n', pos);
        if (nl == std::string_view::npos) {
            out.torn_tail = true;
            break;
        }
        auto rec = decode_record(bytes.substr(pos, nl - pos));
        if (!rec) {
            if (nl + 1 != bytes.size()) throw StoreError("label log corrupt at byte " + std::to_string(pos));
            out.torn_tail = true;
            break;
        }
        out.records.push_back(std::move(*rec));
        pos = nl + 1;
        out.valid_bytes = pos;
    }
    return out;
}

/// Single-writer durable store. append() returns only after fsync.
class LabelStore {
public:
    explicit LabelStore(std::filesystem::path path) : path_(std::move(path)) {
        namespace fs = std::filesystem;
        if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
        const bool existed = fs::exists(path_);
        if (existed) {
            const auto r = replay(csv::read_file(path_.string()));
            records_ = r.records;
            if (r.torn_tail) fs::resize_file(path_, r.valid_bytes);
        }
        fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
        if (fd_ < 0) throw StoreError("cannot open label log " + path_.string() + ": " + std::strerror(errno));
        if (!existed) sync_parent();
    }
    ~LabelStore() {
        if (fd_ >= 0) ::close(fd_);
    }
    LabelStore(const LabelStore&) = delete;
    LabelStore& operator=(const LabelStore&) = delete;

    void append(const LabelRecord& r) {
        if (auto bad = validate_sheet(r.sheet); !bad.empty()) throw InvalidSheet(std::move(bad));
        const auto line = encode_record(r);
        std::lock_guard lock(write_mutex_);
        const off_t start = ::lseek(fd_, 0, SEEK_END);
        auto fail = [&](const char* what) {
            const std::string msg = std::string("label log ") + what + " failed: " + std::strerror(errno);
            if (start >= 0 && ::ftruncate(fd_, start) == 0) ::fsync(fd_);  // keep the log free of a torn line
            throw StoreError(msg);
        };
        std::size_t done = 0;
        while (done < line.size()) {
            const auto n = ::write(fd_, line.data() + done, line.size() - done);
            if (n < 0) {
                if (errno == EINTR) continue;
                fail("write");
            }
            done += static_cast<std::size_t>(n);
        }
        if (::fsync(fd_) != 0) fail("fsync");
        records_.push_back(r);
    }

    /// Callers serialize reads against append() themselves.
    const std::vector<LabelRecord>& records() const { return records_; }
    const std::filesystem::path& path() const { return path_; }

private:
    void sync_parent() {
        const auto dir = path_.has_parent_path() ? path_.parent_path() : std::filesystem::path(".");
        const int d = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
        if (d >= 0) {
            ::fsync(d);
            ::close(d);
        }
    }

    std::filesystem::path path_;
    int fd_ = -1;
    std::mutex write_mutex_;
    std::vector<LabelRecord> records_;
};

/// Latest record per (image_id, grader_id), ordered by image then grader.
inline std::vector<LabelRecord> latest_per_pair(const std::vector<LabelRecord>& records) {
    std::map<std::pair<std::string, std::string>, const LabelRecord*> latest;
    for (const auto& r : records) latest[{r.image_id, r.grader_id}] = &r;
    std::vector<LabelRecord> out;
    for (const auto& [_, r] : latest) out.push_back(*r);
    return out;
}

}  // namespace fundaq::annotate
