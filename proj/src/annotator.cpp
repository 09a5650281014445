#include "ovce/service.hpp"

#include "ovce/error.hpp"
#include "ovce/synth.hpp"

#include <fstream>
#include <random>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

namespace ovce {

namespace fs = std::filesystem;

SynthAnnotator::SynthAnnotator(fs::path world) : world_(std::move(world)) {}

MaskArchive SynthAnnotator::annotate(const ConceptRegistry& reg, const std::vector<SubsetId>& subsets,
                                     std::size_t samples) {
    std::ifstream in(world_);
    if (!in) throw AnnotatorUnavailable("synth world not readable: " + world_.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(world_.string() + ": " + e.what());
    }
    const SynthScene scene = scene_from_json(j);
    if (scene.samples != samples)
        throw ShapeMismatch("synth world has " + std::to_string(scene.samples) + " samples, run has " +
                            std::to_string(samples));
    return paint_scene(scene, reg, subsets);
}

nlohmann::json SynthAnnotator::describe() const {
    return {{"type", "synth"}, {"world", fs::absolute(world_).lexically_normal().string()}};
}

ExternalAnnotator::ExternalAnnotator(std::vector<std::string> command, nlohmann::json base)
    : command_(std::move(command)), base_(std::move(base)) {
    if (command_.empty()) throw ConfigError("external annotator needs a command");
    if (base_.is_null()) base_ = nlohmann::json::object();
}

nlohmann::json ExternalAnnotator::describe() const {
    return {{"type", "external"}, {"command", command_}, {"config", base_}};
}

namespace {

struct ProcessResult {
    int status = -1;
    std::string out;
};

ProcessResult run_process(const std::vector<std::string>& argv) {
    int pipefd[2];
    if (pipe(pipefd) != 0) throw AnnotatorUnavailable("cannot create pipe");
    const pid_t pid = fork();
    if (pid < 0) {
        close(pipefd[0]);
        close(pipefd[1]);
        throw AnnotatorUnavailable("cannot fork annotator");
    }
    if (pid == 0) {
        dup2(pipefd[1], STDOUT_FILENO);
        close(pipefd[0]);
        close(pipefd[1]);
        std::vector<char*> args;
        for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
        args.push_back(nullptr);
        execvp(args[0], args.data());
        _exit(127);
    }
    close(pipefd[1]);
    ProcessResult r;
    char buf[4096];
    ssize_t n;
    while ((n = read(pipefd[0], buf, sizeof buf)) > 0) r.out.append(buf, static_cast<std::size_t>(n));
    close(pipefd[0]);
    int status = 0;
    waitpid(pid, &status, 0);
    r.status = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

fs::path make_temp_dir() {
    std::random_device rd;
    for (int i = 0; i < 100; ++i) {
        fs::path p = fs::temp_directory_path() / ("ovce-annotate-" + std::to_string(rd()));
        if (fs::create_directory(p)) return p;
    }
    throw IoError("cannot create a temporary directory");
}

} // namespace

MaskArchive ExternalAnnotator::annotate(const ConceptRegistry& reg, const std::vector<SubsetId>& subsets,
                                        std::size_t samples) {
    const fs::path tmp = make_temp_dir();
    struct Cleanup {
        fs::path p;
        ~Cleanup() {
            std::error_code ec;
            fs::remove_all(p, ec);
        }
    } cleanup{tmp};

    save_registry(tmp / "concepts.json", reg);
    nlohmann::json cfg = base_;
    cfg["concepts"] = (tmp / "concepts.json").string();
    cfg["subsets"] = nlohmann::json::array();
    for (SubsetId id : subsets) cfg["subsets"].push_back(reg.subset(id).label);
    cfg["output_dir"] = (tmp / "out").string();
    std::ofstream(tmp / "config.json") << cfg.dump(1);

    std::vector<std::string> argv = command_;
    argv.insert(argv.end(), {"export-masks", "--config", (tmp / "config.json").string()});
    const ProcessResult r = run_process(argv);
    if (r.status == 127) throw AnnotatorUnavailable("cannot run annotator '" + command_.front() + "'");
    if (r.status != 0) throw AnnotatorUnavailable("annotator exited with status " + std::to_string(r.status));

    std::istringstream lines(r.out);
    std::string line, last;
    while (std::getline(lines, line))
        if (line.find_first_not_of(" \t\r") != std::string::npos) last = line;
    while (!last.empty() && (last.back() == '\r' || last.back() == ' ')) last.pop_back();
    if (last.empty()) throw AnnotatorUnavailable("annotator printed no archive path");

    const MaskArchive got = read_archive(last);
    if (got.samples() != samples)
        throw ShapeMismatch("annotator archive has " + std::to_string(got.samples()) + " samples, expected " +
                            std::to_string(samples));
    std::vector<MaskArchive> parts;
    for (SubsetId id : subsets) {
        if (!got.has_subset(id)) throw CorruptArchive("annotator archive lacks subset '" + reg.subset(id).label + "'");
        parts.push_back(got.subset_archive(id));
        const ConceptSubset& want = reg.subset(id);
        const ConceptSubset& have = parts.back().manifest().subset(id);
        if (want.concept_ids != have.concept_ids)
            throw CorruptArchive("annotator archive has other concepts for subset '" + want.label + "'");
    }
    std::vector<const MaskArchive*> ptrs;
    for (const auto& p : parts) ptrs.push_back(&p);
    return MaskArchive::merge(ptrs);
}

std::unique_ptr<Annotator> make_annotator(const nlohmann::json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw ConfigError("annotator config must be an object");
    const std::string type = j.value("type", "");
    if (type == "synth") {
        if (!j.contains("world")) throw ConfigError("synth annotator needs \"world\"");
        fs::path w = j["world"].get<std::string>();
        if (!w.is_absolute()) w = base_dir / w;
        if (!fs::exists(w)) throw ConfigError("synth world not found: " + w.string());
        return std::make_unique<SynthAnnotator>(w);
    }
    if (type == "external") {
        if (!j.contains("command")) throw ConfigError("external annotator needs \"command\"");
        std::vector<std::string> cmd = j["command"].is_string()
                                           ? std::vector<std::string>{j["command"].get<std::string>()}
                                           : j["command"].get<std::vector<std::string>>();
        return std::make_unique<ExternalAnnotator>(std::move(cmd), j.value("config", nlohmann::json::object()));
    }
    throw ConfigError("unknown annotator type '" + type + "'");
}

} // namespace ovce
