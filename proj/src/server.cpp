#include "ovce/server.hpp"

#include "ovce/error.hpp"
#include "ovce/overlay.hpp"

#include <httplib.h>

#include <sys/socket.h>

#include <condition_variable>
#include <deque>
#include <fstream>
#include <mutex>
#include <thread>

namespace ovce {

namespace fs = std::filesystem;

namespace {

struct HttpError {
    int status;
    std::string kind;
    std::string message;
};

[[noreturn]] void fail(int status, std::string kind, std::string message) {
    throw HttpError{status, std::move(kind), std::move(message)};
}

void send_json(httplib::Response& res, const nlohmann::json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
}

std::size_t parse_index(const std::string& s, const char* what) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        fail(400, "BadRequest", std::string("bad ") + what + " '" + s + "'");
    }
}

struct Job {
    std::string id;
    std::string status = "queued";
    std::string source_run;
    nlohmann::json edits;
    std::optional<std::string> result_run;
    std::optional<std::pair<std::string, std::string>> error;

    nlohmann::json to_json() const {
        nlohmann::json j{{"id", id}, {"status", status}, {"source_run", source_run}};
        j["run"] = result_run ? nlohmann::json(*result_run) : nlohmann::json(nullptr);
        j["error"] = error ? nlohmann::json{{"kind", error->first}, {"message", error->second}} : nlohmann::json(nullptr);
        return j;
    }
};

} // namespace

struct Server::Impl {
    fs::path root;
    std::string root_id;
    std::unique_ptr<Annotator> annotator;
    httplib::Server http;
    std::thread listener;

    std::mutex runs_mu;
    std::map<std::string, std::shared_ptr<const Run>> runs;

    std::mutex jobs_mu;
    std::condition_variable jobs_cv;
    std::map<std::string, Job> jobs;
    std::deque<std::string> queue;
    int next_job = 1;
    bool busy = false;
    bool stopping = false;
    std::thread worker;

    explicit Impl(fs::path dir, std::unique_ptr<Annotator> a)
        : root(fs::absolute(std::move(dir)).lexically_normal()), annotator(std::move(a)) {
        if (!root.has_filename()) root = root.parent_path();
        if (!fs::exists(root / "run.json")) throw ConfigError("not a run directory: " + root.string());
        std::ifstream in(root / "run.json");
        nlohmann::json j;
        in >> j;
        root_id = j.at("id").get<std::string>();
        // SO_REUSEPORT would let a second server share the port silently
        http.set_socket_options([](socket_t sock) {
            int yes = 1;
            setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
        });
        routes();
        worker = std::thread([this] { work(); });
    }

    ~Impl() {
        {
            std::lock_guard lock(jobs_mu);
            stopping = true;
        }
        jobs_cv.notify_all();
        if (worker.joinable()) worker.join();
        http.stop();
        if (listener.joinable()) listener.join();
    }

    /// Runs are the served directory and its siblings.
    fs::path dir_of(const std::string& id) const {
        if (id == root_id) return root;
        if (id.empty() || id.find('/') != std::string::npos || id == "." || id == "..")
            fail(404, "UnknownRun", "no run '" + id + "'");
        const fs::path p = root.parent_path() / id;
        if (!fs::exists(p / "run.json")) fail(404, "UnknownRun", "no run '" + id + "'");
        return p;
    }

    std::shared_ptr<const Run> run(const std::string& id) {
        const fs::path dir = dir_of(id);
        std::lock_guard lock(runs_mu);
        auto it = runs.find(id);
        if (it != runs.end()) return it->second;
        auto r = std::make_shared<const Run>(load_run(dir));
        runs.emplace(id, r);
        return r;
    }

    std::shared_ptr<const Run> run_for(const httplib::Request& req) {
        return run(req.has_param("run") ? req.get_param_value("run") : root_id);
    }

    std::vector<nlohmann::json> run_summaries() {
        std::vector<nlohmann::json> out;
        const std::string prefix = root.filename().string() + "-r";
        std::vector<fs::path> dirs{root};
        for (const auto& e : fs::directory_iterator(root.parent_path())) {
            const std::string name = e.path().filename().string();
            if (e.is_directory() && name.rfind(prefix, 0) == 0 && fs::exists(e.path() / "run.json"))
                dirs.push_back(e.path());
        }
        std::sort(dirs.begin() + 1, dirs.end());
        for (const auto& d : dirs) {
            std::ifstream in(d / "run.json");
            nlohmann::json j;
            in >> j;
            out.push_back({{"id", j.at("id")},
                           {"parent", j.at("parent")},
                           {"created", j.value("created", "")},
                           {"record_count", j.value("record_count", 0)},
                           {"registry_hash", j.value("registry_hash", "")}});
        }
        return out;
    }

    static nlohmann::json neuron_summary(std::size_t neuron, const std::vector<const ExplanationRecord*>& recs) {
        nlohmann::json ranges = nlohmann::json::array();
        double best = 0;
        for (const ExplanationRecord* r : recs) {
            ranges.push_back({{"range_id", r->range_id},
                              {"granularity", r->granularity},
                              {"formula", r->formula_text},
                              {"iou", r->metrics.iou}});
            best = std::max(best, r->metrics.iou);
        }
        return {{"neuron_id", neuron}, {"best_iou", best}, {"ranges", std::move(ranges)}};
    }

    static std::vector<const ExplanationRecord*> records_of(const Run& r, std::size_t neuron,
                                                            std::optional<int> range = std::nullopt) {
        std::vector<const ExplanationRecord*> out;
        for (const auto& rec : r.records)
            if (rec.neuron_id == neuron && (!range || rec.range_id == *range)) out.push_back(&rec);
        return out;
    }

    template <class F>
    auto guarded(F f) {
        return [this, f](const httplib::Request& req, httplib::Response& res) {
            try {
                f(req, res);
            } catch (const HttpError& e) {
                send_json(res, {{"error", e.kind}, {"message", e.message}}, e.status);
            } catch (const Error& e) {
                send_json(res, {{"error", e.kind()}, {"message", e.message()}}, 500);
            } catch (const std::exception& e) {
                send_json(res, {{"error", "InternalError"}, {"message", e.what()}}, 500);
            }
        };
    }

    void routes() {
        http.Get("/api/runs", guarded([this](const httplib::Request&, httplib::Response& res) {
                     send_json(res, {{"root", root_id}, {"runs", run_summaries()}});
                 }));

        http.Get("/api/concepts", guarded([this](const httplib::Request& req, httplib::Response& res) {
                     auto r = run_for(req);
                     send_json(res, {{"run", r->id}, {"registry", r->registry.to_json()}});
                 }));

        http.Get("/api/neurons", guarded([this](const httplib::Request& req, httplib::Response& res) {
                     auto r = run_for(req);
                     std::map<std::size_t, std::vector<const ExplanationRecord*>> by_neuron;
                     for (const auto& rec : r->records) by_neuron[rec.neuron_id].push_back(&rec);
                     nlohmann::json list = nlohmann::json::array();
                     for (const auto& [n, recs] : by_neuron) list.push_back(neuron_summary(n, recs));
                     send_json(res, {{"run", r->id}, {"neurons", std::move(list)}});
                 }));

        http.Get(R"(/api/neurons/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                     auto r = run_for(req);
                     const std::size_t n = parse_index(req.matches[1], "neuron id");
                     const auto recs = records_of(*r, n);
                     if (recs.empty()) fail(404, "UnknownNeuron", "no records for neuron " + std::to_string(n));
                     nlohmann::json list = nlohmann::json::array();
                     for (const auto* rec : recs) list.push_back(to_json(*rec));
                     send_json(res, {{"run", r->id}, {"neuron_id", n}, {"records", std::move(list)}});
                 }));

        http.Get(R"(/api/neurons/([^/]+)/ranges/([^/]+))",
                 guarded([this](const httplib::Request& req, httplib::Response& res) {
                     auto r = run_for(req);
                     const std::size_t n = parse_index(req.matches[1], "neuron id");
                     const int range = static_cast<int>(parse_index(req.matches[2], "range id"));
                     const auto recs = records_of(*r, n, range);
                     if (recs.empty())
                         fail(404, "UnknownRange",
                              "no record for neuron " + std::to_string(n) + " range " + std::to_string(range));
                     nlohmann::json list = nlohmann::json::array();
                     for (const auto* rec : recs) list.push_back(to_json(*rec));
                     send_json(res, {{"run", r->id}, {"neuron_id", n}, {"range_id", range}, {"records", std::move(list)}});
                 }));

        http.Get(R"(/api/neurons/([^/]+)/ranges/([^/]+)/overlay)",
                 guarded([this](const httplib::Request& req, httplib::Response& res) { overlay(req, res); }));

        http.Post("/api/refine", guarded([this](const httplib::Request& req, httplib::Response& res) {
                      nlohmann::json body;
                      try {
                          body = nlohmann::json::parse(req.body);
                      } catch (const nlohmann::json::exception& e) {
                          fail(400, "BadRequest", std::string("body is not JSON: ") + e.what());
                      }
                      if (!body.is_object()) fail(400, "BadRequest", "body must be a JSON object");
                      const std::string source = body.value("run", root_id);
                      dir_of(source);
                      std::lock_guard lock(jobs_mu);
                      Job j;
                      j.id = "job-" + std::to_string(next_job++);
                      j.source_run = source;
                      j.edits = body;
                      queue.push_back(j.id);
                      const nlohmann::json out = j.to_json();
                      jobs.emplace(j.id, std::move(j));
                      jobs_cv.notify_all();
                      send_json(res, out, 202);
                  }));

        http.Get(R"(/api/jobs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                     std::lock_guard lock(jobs_mu);
                     auto it = jobs.find(req.matches[1]);
                     if (it == jobs.end()) fail(404, "UnknownJob", "no job '" + std::string(req.matches[1]) + "'");
                     send_json(res, it->second.to_json());
                 }));
    }

    void overlay(const httplib::Request& req, httplib::Response& res) {
        auto r = run_for(req);
        const std::size_t n = parse_index(req.matches[1], "neuron id");
        const int range = static_cast<int>(parse_index(req.matches[2], "range id"));
        if (!req.has_param("sample")) fail(400, "BadRequest", "overlay needs ?sample=");
        const std::size_t sample = parse_index(req.get_param_value("sample"), "sample");
        const int scale = req.has_param("scale") ? static_cast<int>(parse_index(req.get_param_value("scale"), "scale")) : 1;
        if (scale < 1 || scale > 32) fail(400, "BadRequest", "scale must lie in 1..32");
        const std::string gran = req.has_param("granularity") ? req.get_param_value("granularity") : "all";
        const ExplanationRecord* rec = nullptr;
        for (const auto* x : records_of(*r, n, range))
            if (x->granularity == gran) rec = x;
        if (!rec) fail(404, "UnknownRange", "no record for neuron " + std::to_string(n) + " range " + std::to_string(range));
        if (sample >= r->archive.samples()) fail(404, "UnknownSample", "no sample " + std::to_string(sample));

        const ActivationMap m =
            bilinear_resize(r->activations.map(n, sample), r->archive.width(), r->archive.height());
        const BinaryMask act = binarize_activations(m, rec->range);
        const BinaryMask f = evaluate(rec->formula, r->archive, sample);
        res.set_content(encode_png(render_overlay(act.view(), f.view(), scale)), "image/png");
    }

    void work() {
        for (;;) {
            std::string id;
            {
                std::unique_lock lock(jobs_mu);
                jobs_cv.wait(lock, [this] { return stopping || !queue.empty(); });
                if (queue.empty()) return;
                id = queue.front();
                queue.pop_front();
                jobs.at(id).status = "running";
                busy = true;
            }
            std::optional<std::string> result;
            std::optional<std::pair<std::string, std::string>> error;
            try {
                Job snapshot;
                {
                    std::lock_guard lock(jobs_mu);
                    snapshot = jobs.at(id);
                }
                const fs::path src = dir_of(snapshot.source_run);
                const RegistryEdits edits = edits_from_json(snapshot.edits, run(snapshot.source_run)->registry);
                const fs::path child = run_refine(src, edits, std::nullopt, annotator.get());
                std::ifstream in(child / "run.json");
                nlohmann::json j;
                in >> j;
                result = j.at("id").get<std::string>();
            } catch (const HttpError& e) {
                error = {e.kind, e.message};
            } catch (const Error& e) {
                error = {e.kind(), e.message()};
            } catch (const std::exception& e) {
                error = {"InternalError", e.what()};
            }
            {
                std::lock_guard lock(jobs_mu);
                Job& j = jobs.at(id);
                j.status = error ? "failed" : "done";
                j.result_run = result;
                j.error = error;
                busy = false;
            }
            jobs_cv.notify_all();
        }
    }
};

Server::Server(fs::path run_dir, std::unique_ptr<Annotator> annotator)
    : impl_(std::make_unique<Impl>(std::move(run_dir), std::move(annotator))) {}

Server::~Server() = default;

int Server::start(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
        bound = impl_->http.bind_to_any_port(host);
        if (bound < 0) throw PortInUse("cannot bind " + host);
    } else if (!impl_->http.bind_to_port(host, port)) {
        throw PortInUse(host + ":" + std::to_string(port) + " is not available");
    }
    impl_->listener = std::thread([this] { impl_->http.listen_after_bind(); });
    impl_->http.wait_until_ready();
    return bound;
}

void Server::serve(const std::string& host, int port) {
    if (!impl_->http.bind_to_port(host, port))
        throw PortInUse(host + ":" + std::to_string(port) + " is not available");
    impl_->http.listen_after_bind();
}

void Server::stop() { impl_->http.stop(); }

void Server::drain_jobs() {
    std::unique_lock lock(impl_->jobs_mu);
    impl_->jobs_cv.wait(lock, [this] { return impl_->queue.empty() && !impl_->busy; });
}

} // namespace ovce
