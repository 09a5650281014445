#include <doctest.h>

#include "fixtures.hpp"
#include "oracles.hpp"

#include <httplib.h>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <arpa/inet.h>
#include <netinet/in.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

using namespace ovce;
namespace fs = std::filesystem;
using nlohmann::json;

extern char** environ;

namespace {

std::string cli() {
    const char* p = std::getenv("OVCE_CLI");
    REQUIRE_MESSAGE(p, "OVCE_CLI must point at the ovce binary");
    return p;
}

struct Out {
    int status = -1;
    std::string out;
};

std::string quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return q + "'";
}

Out run(const std::vector<std::string>& args) {
    std::string cmd = quote(cli());
    for (const auto& a : args) cmd += " " + quote(a);
    cmd += " 2>/dev/null";
    Out o;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p);
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) o.out.append(buf, n);
    const int st = pclose(p);
    o.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return o;
}

std::string last_line(std::string s) {
    while (!s.empty() && s.back() == '\n') s.pop_back();
    const auto nl = s.rfind('\n');
    return nl == std::string::npos ? s : s.substr(nl + 1);
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

} // namespace

TEST_CASE("synth, probe and refine from the command line") {
    const auto dir = oracle::temp_dir("cli");
    write(dir / "spec.json", to_json(fixture::refinement_spec()).dump());
    const auto synth = run({"synth", "--spec", (dir / "spec.json").string(), "--out", (dir / "world").string()});
    REQUIRE(synth.status == 0);
    CHECK(last_line(synth.out) == (dir / "world").string());
    CHECK(fs::exists(dir / "world" / "world.json"));

    json cfg{{"concepts", "world/concepts.json"},
             {"masks", "world/masks.ovcemsk"},
             {"activations", "world/activations.ovceact"},
             {"output", "base"},
             {"settings", to_json(fixture::quick_settings())},
             {"annotator", {{"type", "synth"}, {"world", "world/world.json"}}}};
    write(dir / "run.json", cfg.dump());
    const auto probe = run({"--workers", "2", "probe", "--config", (dir / "run.json").string()});
    REQUIRE(probe.status == 0);
    CHECK(fs::exists(dir / "base" / "run.json"));
    const Run base = load_run(dir / "base");
    CHECK(base.settings.workers == 2);
    CHECK(base.records.size() == 20);

    write(dir / "edits.json", R"({"add":[{"subset":"parts","name":"window shop"}]})");
    const auto refine = run({"refine", "--run", (dir / "base").string(), "--edits", (dir / "edits.json").string()});
    REQUIRE(refine.status == 0);
    CHECK(last_line(refine.out) == (dir / "base-r1").string());
    const Run child = load_run(dir / "base-r1");
    CHECK(child.parent == "base");

    SUBCASE("analyze") {
        const auto ov = run({"analyze", "overlap", "--a", (dir / "base").string(), "--b", (dir / "base").string()});
        REQUIRE(ov.status == 0);
        const auto j = json::parse(ov.out);
        CHECK(j["share_by_range"].size() == 5);
        for (const auto& [k, v] : j["share_by_range"].items()) CHECK(v == 1.0);

        // different registries, same keys
        const auto ov2 = run({"analyze", "--out", (dir / "ov.json").string(), "overlap", "--a",
                              (dir / "base").string(), "--b", (dir / "base-r1").string()});
        REQUIRE(ov2.status == 0);
        std::ifstream in(dir / "ov.json");
        const auto j2 = json::parse(in);
        CHECK(j2["a"] == "base");
        CHECK(j2["b"] == "base-r1");

        const auto iso = run({"analyze", "isolate", "--run", (dir / "base-r1").string(), "--neuron", "0", "--range",
                              "5", "--concept", "window shop", "-m", "3"});
        REQUIRE(iso.status == 0);
        const auto ij = json::parse(iso.out);
        CHECK(ij["concept"] == "window shop");
        CHECK(ij["supporting"].size() <= 3);
        CHECK(ij["unexplained"].size() <= 3);
        CHECK_FALSE(ij["supporting"].empty());

        const auto co = run({"analyze", "cooccur", "--run", (dir / "base-r1").string(), "--neuron", "0", "--range",
                             "5", "--first", "window shop", "--second", "objects_0"});
        REQUIRE(co.status == 0);
        const auto cj = json::parse(co.out);
        CHECK(cj["category"] == std::string(cooccurrence_name(categorize_rate(cj["rate"].get<double>()))));

        const auto not_in = run({"analyze", "isolate", "--run", (dir / "base").string(), "--neuron", "0", "--range",
                                 "5", "--concept", "parts_2"});
        if (!load_run(dir / "base").records[4].formula.contains(base.registry.id_of("parts_2")))
            CHECK(not_in.status == 2);
    }
    SUBCASE("errors exit with status 2") {
        CHECK(run({"probe", "--config", (dir / "run.json").string()}).status == 2);  // output exists
        CHECK(run({"probe", "--config", (dir / "absent.json").string()}).status == 2);
        write(dir / "bad-edits.json", R"({"remove":["nope"]})");
        CHECK(run({"refine", "--run", (dir / "base").string(), "--edits", (dir / "bad-edits.json").string()}).status ==
              2);
        write(dir / "bad-spec.json", R"({"samples":0,"subsets":[]})");
        CHECK(run({"synth", "--spec", (dir / "bad-spec.json").string(), "--out", (dir / "w2").string()}).status == 2);
        CHECK(run({"analyze", "isolate", "--run", (dir / "base").string(), "--neuron", "0", "--range", "9",
                   "--concept", "objects_0"})
                  .status == 2);
        CHECK(run({}).status != 0);
        CHECK(run({"probe"}).status != 0);
        CHECK(run({"nonsense"}).status != 0);
    }
    fs::remove_all(dir);
}

TEST_CASE("misalignment from the command line") {
    const auto dir = oracle::temp_dir("cli-mis");
    const auto ours = generate(fixture::misalignment_spec(1));
    run_probe(load_run_config(fixture::write_probe_inputs(dir, ours, "ours")));

    // the reference run sees the same scenes through its own concept names
    SynthWorld ref = ours;
    ref.registry = fixture::reference_registry();
    SynthScene scene = ours.scene;
    for (auto& items : scene.items)
        for (auto& it : items)
            if (it.concept_name == "truck" || it.concept_name == "car") it.concept_name = "motor vehicle";
    ref.archive = paint_scene(scene, ref.registry);
    run_probe(load_run_config(fixture::write_probe_inputs(dir / "refside", ref, "reference")));

    write(dir / "hyper.tsv", fixture::kHypernyms);
    const auto r = run({"analyze", "misalign", "--run", (dir / "ours").string(), "--reference",
                        (dir / "refside" / "reference").string(), "--hypernyms", (dir / "hyper.tsv").string()});
    REQUIRE(r.status == 0);
    const auto j = json::parse(r.out);
    CHECK(j["fixpoint"] == true);
    CHECK(j["rounds"].size() <= 3);
    REQUIRE_FALSE(j["rounds"].empty());
    bool merged = false;
    for (const auto& e : j["rounds"][0]["entries"])
        if (e["ancestor"] == "motor vehicle") merged = true;
    CHECK(merged);

    write(dir / "cyclic.tsv", "a\tb\nb\ta\n");
    CHECK(run({"analyze", "misalign", "--run", (dir / "ours").string(), "--reference",
               (dir / "refside" / "reference").string(), "--hypernyms", (dir / "cyclic.tsv").string()})
              .status == 2);
    fs::remove_all(dir);
}

TEST_CASE("serve answers until terminated") {
    const auto dir = oracle::temp_dir("cli-serve");
    const auto w = generate(oracle::search_spec(5, 4));
    const auto run_dir = run_probe(load_run_config(fixture::write_probe_inputs(dir, w, "run")));

    // find a free port, then hand it to the child
    int port = 0;
    {
        const int fd = socket(AF_INET, SOCK_STREAM, 0);
        sockaddr_in a{};
        a.sin_family = AF_INET;
        a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        REQUIRE(bind(fd, reinterpret_cast<sockaddr*>(&a), sizeof a) == 0);
        socklen_t len = sizeof a;
        getsockname(fd, reinterpret_cast<sockaddr*>(&a), &len);
        port = ntohs(a.sin_port);
        close(fd);
    }
    const std::string bin = cli(), ps = std::to_string(port), rd = run_dir.string();
    std::vector<char*> argv{const_cast<char*>(bin.c_str()), const_cast<char*>("serve"),
                            const_cast<char*>("--run"),      const_cast<char*>(rd.c_str()),
                            const_cast<char*>("--port"),     const_cast<char*>(ps.c_str()),
                            nullptr};
    pid_t pid = 0;
    REQUIRE(posix_spawn(&pid, bin.c_str(), nullptr, nullptr, argv.data(), environ) == 0);

    httplib::Client c("127.0.0.1", port);
    c.set_connection_timeout(1);
    httplib::Result res;
    for (int i = 0; i < 100 && !res; ++i) {
        int st = 0;
        REQUIRE_MESSAGE(waitpid(pid, &st, WNOHANG) == 0, "server exited early with status " << st);
        res = c.Get("/api/runs");
        if (!res) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(json::parse(res->body)["root"] == "run");

    // a second server on the same port fails cleanly
    CHECK(run({"serve", "--run", rd, "--port", ps}).status == 2);

    kill(pid, SIGTERM);
    int st = 0;
    waitpid(pid, &st, 0);
    CHECK(WIFEXITED(st));
    CHECK(WEXITSTATUS(st) == 0);
    fs::remove_all(dir);
}
