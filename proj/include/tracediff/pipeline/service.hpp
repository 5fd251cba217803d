#pragma once

// Read-only HTTP view of a bundle directory, plus a grading log.
//
//   GET  /api/cases
//   GET  /api/cases/{id}/meta
//   GET  /api/cases/{id}/image/{source|translated|structure_source|structure_deformed}
//   GET  /api/cases/{id}/field/{forward|inverse}
//   POST /api/cases/{id}/trace    {"direction": "forward"|"inverse", "points": [{"x": .., "y": ..}, ...]}
//   POST /api/cases/{id}/grade    {"progression": 1-5, "realism": 1-5, "traceability": 1-5, "note": "..."}
//   GET  /api/cases/{id}/grades
//
// The case index is built once at construction and never changes.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "tracediff/pipeline/bundle.hpp"

namespace httplib {
class Server;
}

namespace tracediff {

struct HttpResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

class TraceService {
public:
    // grades_path defaults to <bundle_root>/grades.jsonl.
    explicit TraceService(const std::filesystem::path& bundle_root, std::filesystem::path grades_path = {});
    ~TraceService();

    TraceService(const TraceService&) = delete;
    TraceService& operator=(const TraceService&) = delete;

    HttpResponse handle(const std::string& method, const std::string& path, const std::string& body) const;

    // Binds (port 0 picks a free one) and serves on a background thread.
    int start(const std::string& host, int port);
    void stop();
    // Blocks in the calling thread.
    void listen(const std::string& host, int port);

    std::vector<std::string> case_ids() const;

private:
    struct Case {
        TraceBundle bundle;
        std::map<std::string, std::vector<std::uint8_t>> files;
    };

    HttpResponse route_case(const Case& c, const std::string& method, const std::vector<std::string>& rest,
                            const std::string& body) const;
    HttpResponse grade(const Case& c, const std::string& body) const;
    HttpResponse grades(const Case& c) const;
    void install_routes();

    std::map<std::string, Case> cases_;
    std::filesystem::path grades_path_;
    mutable std::mutex grades_mutex_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

}  // namespace tracediff
