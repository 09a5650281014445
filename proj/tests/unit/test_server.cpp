#include <doctest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "ovce/error.hpp"
#include "ovce/overlay.hpp"
#include "ovce/server.hpp"

#include <httplib.h>

using namespace ovce;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::array<std::uint8_t, 4> kBlue{30, 144, 255, 128}, kOrange{255, 140, 0, 128}, kMixed{143, 142, 128, 255},
    kClear{0, 0, 0, 0};

std::array<std::uint8_t, 4> px(const RgbaImage& img, int x, int y) {
    const auto* p = &img.pixels[(static_cast<std::size_t>(y) * img.width + x) * 4];
    return {p[0], p[1], p[2], p[3]};
}

json get_json(httplib::Client& c, const std::string& path, int want = 200) {
    auto res = c.Get(path);
    REQUIRE(res);
    CHECK(res->status == want);
    CHECK(res->get_header_value("Content-Type") == "application/json");
    return json::parse(res->body);
}

struct Served {
    fs::path dir;
    fs::path run;
    std::unique_ptr<Server> server;
    int port = 0;
    SynthWorld world;

    Served() : dir(oracle::temp_dir("server")), world(generate(fixture::refinement_spec())) {
        run = run_probe(load_run_config(fixture::write_probe_inputs(dir, world, "base")));
        server = std::make_unique<Server>(run);
        port = server->start("127.0.0.1", 0);
    }
    ~Served() {
        server.reset();
        fs::remove_all(dir);
    }
};

} // namespace

TEST_CASE("overlay colours") {
    BinaryMask a(2, 2), f(2, 2);
    a.set(0, 0);
    a.set(1, 1);
    f.set(1, 0);
    f.set(1, 1);
    const auto img = render_overlay(a.view(), f.view(), 2);
    CHECK(img.width == 4);
    CHECK(img.height == 4);
    CHECK(px(img, 0, 0) == kBlue);
    CHECK(px(img, 1, 1) == kBlue);
    CHECK(px(img, 2, 0) == kOrange);
    CHECK(px(img, 3, 3) == kMixed);
    CHECK(px(img, 0, 3) == kClear);
    CHECK(decode_png(encode_png(img)) == img);
    // PNG signature
    CHECK(encode_png(img).substr(1, 3) == "PNG");
    CHECK_THROWS_AS(decode_png("not a png"), ParseError);
    CHECK_THROWS_AS(render_overlay(a.view(), BinaryMask(3, 2).view()), ShapeMismatch);
}

TEST_CASE("read endpoints") {
    Served s;
    httplib::Client c("127.0.0.1", s.port);
    const Run run = load_run(s.run);

    const auto runs = get_json(c, "/api/runs");
    CHECK(runs["root"] == "base");
    REQUIRE(runs["runs"].size() == 1);
    CHECK(runs["runs"][0]["record_count"] == 20);
    CHECK(runs["runs"][0]["parent"].is_null());

    CHECK(get_json(c, "/api/concepts")["registry"] == run.registry.to_json());

    const auto neurons = get_json(c, "/api/neurons");
    REQUIRE(neurons["neurons"].size() == 4);
    for (const auto& n : neurons["neurons"]) {
        CHECK(n["ranges"].size() == 5);
        double best = 0;
        for (const auto& r : n["ranges"]) best = std::max(best, r["iou"].get<double>());
        CHECK(n["best_iou"] == best);
    }

    const auto n0 = get_json(c, "/api/neurons/0");
    CHECK(n0["records"].size() == 5);
    const auto r5 = get_json(c, "/api/neurons/0/ranges/5");
    REQUIRE(r5["records"].size() == 1);
    const auto rec = record_from_json(r5["records"][0]);
    CHECK(to_json(rec) == r5["records"][0]);
    CHECK(rec.formula_text == run.records[4].formula_text);

    SUBCASE("overlay matches the masks pixel by pixel") {
        const auto acts = binarize_all(run.activations, run.archive.width(), run.archive.height(), run.settings);
        const auto& bin = acts.at(0).binarized.at(4);
        for (std::size_t sample : {0u, 3u, 11u}) {
            auto res = c.Get("/api/neurons/0/ranges/5/overlay?sample=" + std::to_string(sample) + "&scale=3");
            REQUIRE(res);
            CHECK(res->status == 200);
            CHECK(res->get_header_value("Content-Type") == "image/png");
            const auto img = decode_png(res->body);
            REQUIRE(img.width == run.archive.width() * 3);
            for (int y = 0; y < img.height; ++y)
                for (int x = 0; x < img.width; ++x) {
                    const bool a = bin.mask.sample(sample).get(x / 3, y / 3);
                    const bool f = oracle::eval_pixel(rec.formula, run.archive, sample, x / 3, y / 3);
                    CHECK(px(img, x, y) == (a && f ? kMixed : a ? kBlue : f ? kOrange : kClear));
                }
        }
    }
    SUBCASE("errors come back as JSON") {
        CHECK(get_json(c, "/api/neurons/99", 404)["error"] == "UnknownNeuron");
        CHECK(get_json(c, "/api/neurons/abc", 400)["error"] == "BadRequest");
        CHECK(get_json(c, "/api/neurons/0/ranges/9", 404)["error"] == "UnknownRange");
        CHECK(get_json(c, "/api/neurons/0/ranges/5/overlay", 400)["error"] == "BadRequest");
        CHECK(get_json(c, "/api/neurons/0/ranges/5/overlay?sample=500", 404)["error"] == "UnknownSample");
        CHECK(get_json(c, "/api/neurons/0/ranges/5/overlay?sample=0&scale=0", 400)["error"] == "BadRequest");
        CHECK(get_json(c, "/api/neurons?run=other", 404)["error"] == "UnknownRun");
        CHECK(get_json(c, "/api/neurons?run=..", 404)["error"] == "UnknownRun");
        CHECK(get_json(c, "/api/jobs/job-77", 404)["error"] == "UnknownJob");
        auto bad = c.Post("/api/refine", "{oops", "application/json");
        REQUIRE(bad);
        CHECK(bad->status == 400);
        CHECK(json::parse(bad->body)["error"] == "BadRequest");
        auto arr = c.Post("/api/refine", "[1]", "application/json");
        REQUIRE(arr);
        CHECK(arr->status == 400);
    }
}

TEST_CASE("refine jobs") {
    Served s;
    httplib::Client c("127.0.0.1", s.port);
    auto res = c.Post("/api/refine", R"({"add":[{"subset":"parts","name":"window shop"}]})", "application/json");
    REQUIRE(res);
    CHECK(res->status == 202);
    const auto job = json::parse(res->body);
    CHECK(job["source_run"] == "base");
    s.server->drain_jobs();
    const auto done = get_json(c, "/api/jobs/" + job["id"].get<std::string>());
    CHECK(done["status"] == "done");
    CHECK(done["run"] == "base-r1");
    CHECK(done["error"].is_null());

    const auto runs = get_json(c, "/api/runs");
    REQUIRE(runs["runs"].size() == 2);
    CHECK(runs["runs"][1]["id"] == "base-r1");
    CHECK(runs["runs"][1]["parent"] == "base");
    const auto r5 = get_json(c, "/api/neurons/0/ranges/5?run=base-r1");
    CHECK(r5["records"][0]["metrics"]["iou"] == 1.0);
    // the served run itself is unchanged
    CHECK(get_json(c, "/api/neurons/0/ranges/5")["records"][0]["metrics"]["iou"] < 1.0);

    auto bad = c.Post("/api/refine", R"({"remove":["no such concept"]})", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 202);
    s.server->drain_jobs();
    const auto failed = get_json(c, "/api/jobs/" + json::parse(bad->body)["id"].get<std::string>());
    CHECK(failed["status"] == "failed");
    CHECK(failed["error"]["kind"] == "UnknownConceptId");
    CHECK(failed["run"].is_null());
}

TEST_CASE("binding") {
    Served s;
    Server other(s.run);
    CHECK_THROWS_AS(other.start("127.0.0.1", s.port), PortInUse);
    CHECK_THROWS_AS(Server(s.dir / "nowhere"), ConfigError);
    s.server->stop();
    httplib::Client c("127.0.0.1", s.port);
    c.set_connection_timeout(1);
    CHECK_FALSE(c.Get("/api/runs"));
}
