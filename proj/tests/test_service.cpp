#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <future>

#include <httplib.h>
#include <json.hpp>

#include "tracediff/deformation.hpp"
#include "tracediff/grid_io.hpp"
#include "tracediff/pipeline/service.hpp"
#include "tracediff/rng.hpp"

using namespace tracediff;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path make_bundles() {
    const fs::path root = fs::temp_directory_path() / "tracediff_tests" / "service";
    fs::remove_all(root);
    Rng rng(8);
    for (const char* id : {"A001", "A002"}) {
        TraceBundle b;
        b.case_id = id;
        for (Image2D* img : {&b.source, &b.translated, &b.structure_source, &b.structure_deformed}) {
            *img = Image2D(16, 16);
            for (float& v : img->data()) v = static_cast<float>(rng.uniform());
        }
        VectorField2D v(16, 16);
        for (int r = 0; r < 16; ++r)
            for (int c = 0; c < 16; ++c) {
                v.ux()(r, c) = static_cast<float>(1.5 * std::sin(r / 5.0));
                v.uy()(r, c) = static_cast<float>(std::cos(c / 6.0));
            }
        b.forward_field = integrate(v);
        b.inverse_field = inverse(v);
        write_bundle(root / id, b);
    }
    return root;
}

json body(const HttpResponse& r) { return json::parse(r.body); }

}  // namespace

TEST_CASE("service endpoints") {
    const fs::path root = make_bundles();
    const TraceService svc(root);

    const HttpResponse list = svc.handle("GET", "/api/cases", "");
    CHECK(list.status == 200);
    CHECK(body(list)["cases"].size() == 2);
    CHECK(body(list)["cases"][0]["id"] == "A001");

    const HttpResponse meta = svc.handle("GET", "/api/cases/A001/meta", "");
    CHECK(meta.status == 200);
    CHECK(body(meta)["case_id"] == "A001");

    const HttpResponse img = svc.handle("GET", "/api/cases/A002/image/translated", "");
    CHECK(img.status == 200);
    CHECK(img.content_type == "image/x-portable-graymap");
    const auto pgm_bytes = read_file_bytes(root / "A002" / "translated.pgm");
    CHECK(img.body == std::string(pgm_bytes.begin(), pgm_bytes.end()));
    const HttpResponse field = svc.handle("GET", "/api/cases/A002/field/inverse", "");
    const auto bytes = std::vector<std::uint8_t>(field.body.begin(), field.body.end());
    CHECK(field_from_grid(decode_grid(bytes)) == read_bundle(root / "A002").inverse_field.disp);

    CHECK(svc.handle("GET", "/api/cases/NOPE/meta", "").status == 404);
    CHECK(svc.handle("GET", "/api/cases/A001/image/other", "").status == 404);
    CHECK(svc.handle("GET", "/api/elsewhere", "").status == 404);
}

TEST_CASE("trace queries match in-process field evaluation") {
    const fs::path root = make_bundles();
    const TraceService svc(root);
    const TraceBundle b = read_bundle(root / "A001");
    json req{{"direction", "forward"}, {"points", json::array()}};
    for (double x : {0.0, 3.25, 7.5, 15.0})
        for (double y : {0.0, 4.75, 11.0}) req["points"].push_back({{"x", x}, {"y", y}});
    const HttpResponse fwd = svc.handle("POST", "/api/cases/A001/trace", req.dump());
    REQUIRE(fwd.status == 200);
    const json pts = body(fwd)["points"];
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Point p{req["points"][i]["x"].get<double>(), req["points"][i]["y"].get<double>()};
        const Point q = b.forward_field.map(p);
        CHECK(pts[i]["x"].get<double>() == q.x);
        CHECK(pts[i]["y"].get<double>() == q.y);

        // forward then inverse returns near the start
        json back_req{{"direction", "inverse"}, {"points", json::array({pts[i]})}};
        const json back = body(svc.handle("POST", "/api/cases/A001/trace", back_req.dump()))["points"][0];
        if (p.x > 0 && p.x < 15 && p.y > 0 && p.y < 15) {
            CHECK(std::hypot(back["x"].get<double>() - p.x, back["y"].get<double>() - p.y) < 0.5);
        }
    }

    // identity field traces to itself
    TraceBundle id = b;
    id.case_id = "ID";
    id.forward_field = id.inverse_field = DeformationField::identity(16, 16);
    write_bundle(root / "ID", id);
    const TraceService svc2(root);
    const json same = body(svc2.handle("POST", "/api/cases/ID/trace",
                                       R"({"direction":"forward","points":[{"x":3.5,"y":9.25}]})"))["points"][0];
    CHECK(same["x"] == 3.5);
    CHECK(same["y"] == 9.25);

    CHECK(svc.handle("POST", "/api/cases/A001/trace", "{not json").status == 400);
    CHECK(svc.handle("POST", "/api/cases/A001/trace", R"({"direction":"sideways","points":[]})").status == 400);
    CHECK(svc.handle("POST", "/api/cases/A001/trace", R"({"direction":"forward","points":[[1,2]]})").status == 400);
    CHECK(svc.handle("POST", "/api/cases/A001/trace", R"({"direction":"forward"})").status == 400);
    CHECK(svc.handle("POST", "/api/cases/ZZZ/trace", R"({"direction":"forward","points":[]})").status == 404);
}

TEST_CASE("grades append and average") {
    const fs::path root = make_bundles();
    const TraceService svc(root);
    const int scores[3][3] = {{4, 5, 3}, {2, 4, 5}, {3, 3, 4}};
    for (const auto& s : scores) {
        json g{{"progression", s[0]}, {"realism", s[1]}, {"traceability", s[2]}, {"note", "ok"}};
        CHECK(svc.handle("POST", "/api/cases/A002/grade", g.dump()).status == 201);
    }
    const json all = body(svc.handle("GET", "/api/cases/A002/grades", ""));
    CHECK(all["count"] == 3);
    CHECK(all["means"]["progression"].get<double>() == doctest::Approx(3.0));
    CHECK(all["means"]["realism"].get<double>() == doctest::Approx(4.0));
    CHECK(all["means"]["traceability"].get<double>() == doctest::Approx(4.0));
    CHECK(body(svc.handle("GET", "/api/cases/A001/grades", ""))["count"] == 0);

    CHECK(svc.handle("POST", "/api/cases/A002/grade", R"({"progression":6,"realism":1,"traceability":1})").status == 400);
    CHECK(svc.handle("POST", "/api/cases/A002/grade", R"({"progression":2.5,"realism":1,"traceability":1})").status == 400);
    CHECK(svc.handle("POST", "/api/cases/A002/grade", R"({"realism":1,"traceability":1})").status == 400);
    CHECK(body(svc.handle("GET", "/api/cases/A002/grades", ""))["count"] == 3);
}

TEST_CASE("HTTP server answers concurrent identical requests identically") {
    const fs::path root = make_bundles();
    TraceService svc(root);
    const int port = svc.start("127.0.0.1", 0);
    REQUIRE(port > 0);
    const std::string req = R"({"direction":"forward","points":[{"x":2.5,"y":7.0},{"x":9.0,"y":1.0}]})";
    std::vector<std::future<std::string>> futures;
    for (int i = 0; i < 8; ++i) {
        futures.push_back(std::async(std::launch::async, [&] {
            httplib::Client cli("127.0.0.1", port);
            auto res = cli.Post("/api/cases/A001/trace", req, "application/json");
            return res ? std::to_string(res->status) + res->body : std::string("no response");
        }));
    }
    const std::string first = futures[0].get();
    CHECK(first.rfind("200", 0) == 0);
    for (std::size_t i = 1; i < futures.size(); ++i) CHECK(futures[i].get() == first);

    httplib::Client cli("127.0.0.1", port);
    auto missing = cli.Get("/api/cases/NOPE/meta");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    auto pgm = cli.Get("/api/cases/A001/image/source");
    REQUIRE(pgm);
    CHECK(pgm->body.rfind("P5", 0) == 0);
    svc.stop();
}
