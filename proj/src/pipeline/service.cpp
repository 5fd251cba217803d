#include "tracediff/pipeline/service.hpp"

#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "tracediff/grid_io.hpp"

namespace tracediff {

using nlohmann::json;

namespace {

class BadRequest : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

HttpResponse json_response(const json& j, int status = 200) {
    return {status, "application/json", j.dump()};
}

HttpResponse error_response(int status, const std::string& msg) {
    return json_response(json{{"error", msg}}, status);
}

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : path.substr(0, path.find('?'))) {
        if (ch == '/') {
            if (!cur.empty()) parts.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!cur.empty()) parts.push_back(cur);
    return parts;
}

constexpr const char* kGradeKeys[] = {"progression", "realism", "traceability"};

int grade_value(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_number_integer()) throw BadRequest(std::string(key) + " must be an integer");
    const int v = j[key].get<int>();
    if (v < 1 || v > 5) throw BadRequest(std::string(key) + " must be in 1..5");
    return v;
}

}  // namespace

TraceService::TraceService(const std::filesystem::path& bundle_root, std::filesystem::path grades_path)
    : grades_path_(grades_path.empty() ? bundle_root / "grades.jsonl" : std::move(grades_path)) {
    if (!std::filesystem::is_directory(bundle_root)) {
        throw std::invalid_argument("bundle directory not found: " + bundle_root.string());
    }
    for (const auto& entry : std::filesystem::directory_iterator(bundle_root)) {
        if (!entry.is_directory() || !std::filesystem::exists(entry.path() / "meta.txt")) continue;
        Case c;
        c.bundle = read_bundle(entry.path());
        for (const char* name : kBundleImages) {
            c.files[std::string("image/") + name] = read_file_bytes(entry.path() / (std::string(name) + ".pgm"));
        }
        c.files["field/forward"] = read_file_bytes(entry.path() / "forward_field.plsg");
        c.files["field/inverse"] = read_file_bytes(entry.path() / "inverse_field.plsg");
        const std::string id = c.bundle.case_id;
        cases_.emplace(id, std::move(c));
    }
}

TraceService::~TraceService() { stop(); }

std::vector<std::string> TraceService::case_ids() const {
    std::vector<std::string> ids;
    for (const auto& [id, c] : cases_) ids.push_back(id);
    return ids;
}

HttpResponse TraceService::handle(const std::string& method, const std::string& path, const std::string& body) const {
    const std::vector<std::string> parts = split_path(path);
    if (parts.size() < 2 || parts[0] != "api" || parts[1] != "cases") return error_response(404, "not found");
    if (parts.size() == 2) {
        if (method != "GET") return error_response(405, "method not allowed");
        json list = json::array();
        for (const auto& [id, c] : cases_) {
            list.push_back({{"id", id}, {"height", c.bundle.source.height()}, {"width", c.bundle.source.width()}});
        }
        return json_response(json{{"cases", list}});
    }
    auto it = cases_.find(parts[2]);
    if (it == cases_.end()) return error_response(404, "unknown case " + parts[2]);
    try {
        return route_case(it->second, method, {parts.begin() + 3, parts.end()}, body);
    } catch (const BadRequest& e) {
        return error_response(400, e.what());
    } catch (const json::exception& e) {
        return error_response(400, std::string("malformed json: ") + e.what());
    }
}

HttpResponse TraceService::route_case(const Case& c, const std::string& method, const std::vector<std::string>& rest,
                                      const std::string& body) const {
    if (rest.size() == 1 && rest[0] == "meta" && method == "GET") return json_response(json(c.bundle.meta));
    if (rest.size() == 2 && (rest[0] == "image" || rest[0] == "field") && method == "GET") {
        auto f = c.files.find(rest[0] + "/" + rest[1]);
        if (f == c.files.end()) return error_response(404, "unknown " + rest[0] + " " + rest[1]);
        return {200, rest[0] == "image" ? "image/x-portable-graymap" : "application/octet-stream",
                std::string(f->second.begin(), f->second.end())};
    }
    if (rest.size() == 1 && rest[0] == "trace" && method == "POST") {
        const json req = json::parse(body);
        const std::string dir = req.value("direction", "");
        if (dir != "forward" && dir != "inverse") throw BadRequest("direction must be forward or inverse");
        if (!req.contains("points") || !req["points"].is_array()) throw BadRequest("points must be an array");
        const DeformationField& phi = dir == "forward" ? c.bundle.forward_field : c.bundle.inverse_field;
        json out = json::array();
        for (const json& p : req["points"]) {
            if (!p.is_object() || !p.contains("x") || !p.contains("y") || !p["x"].is_number() ||
                !p["y"].is_number()) {
                throw BadRequest("each point must be {x, y}");
            }
            const Point q = phi.map({p["x"].get<double>(), p["y"].get<double>()});
            out.push_back({{"x", q.x}, {"y", q.y}});
        }
        return json_response(json{{"direction", dir}, {"points", out}});
    }
    if (rest.size() == 1 && rest[0] == "grade" && method == "POST") return grade(c, body);
    if (rest.size() == 1 && rest[0] == "grades" && method == "GET") return grades(c);
    return error_response(404, "not found");
}

HttpResponse TraceService::grade(const Case& c, const std::string& body) const {
    const json req = json::parse(body);
    if (!req.is_object()) throw BadRequest("body must be an object");
    json rec{{"case", c.bundle.case_id}, {"note", ""}};
    for (const char* key : kGradeKeys) rec[key] = grade_value(req, key);
    if (req.contains("note")) {
        if (!req["note"].is_string()) throw BadRequest("note must be a string");
        rec["note"] = req["note"];
    }
    std::lock_guard lock(grades_mutex_);
    std::ofstream out(grades_path_, std::ios::app);
    if (!out) return error_response(500, "cannot open grade log");
    out << rec.dump() << '\n';
    out.flush();
    if (!out) return error_response(500, "cannot write grade log");
    return json_response(rec, 201);
}

HttpResponse TraceService::grades(const Case& c) const {
    json list = json::array();
    std::map<std::string, double> sums;
    {
        std::lock_guard lock(grades_mutex_);
        std::ifstream in(grades_path_);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const json rec = json::parse(line, nullptr, false);
            if (rec.is_discarded() || rec.value("case", "") != c.bundle.case_id) continue;
            for (const char* key : kGradeKeys) sums[key] += rec.value(key, 0);
            list.push_back(rec);
        }
    }
    json out{{"case", c.bundle.case_id}, {"grades", list}, {"count", list.size()}};
    if (!list.empty()) {
        json means;
        for (const char* key : kGradeKeys) means[key] = sums[key] / static_cast<double>(list.size());
        out["means"] = means;
    }
    return json_response(out);
}

void TraceService::install_routes() {
    auto forward = [this](const httplib::Request& req, httplib::Response& res) {
        const HttpResponse r = handle(req.method, req.path, req.body);
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    server_->Get(R"(/api/.*)", forward);
    server_->Post(R"(/api/.*)", forward);
}

int TraceService::start(const std::string& host, int port) {
    if (server_) throw std::logic_error("service already started");
    server_ = std::make_unique<httplib::Server>();
    install_routes();
    const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) {
        server_.reset();
        throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    }
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
}

void TraceService::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
    server_.reset();
}

void TraceService::listen(const std::string& host, int port) {
    if (server_) throw std::logic_error("service already started");
    server_ = std::make_unique<httplib::Server>();
    install_routes();
    if (!server_->listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace tracediff
