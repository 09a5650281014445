#pragma once

#include "ovce/service.hpp"

#include <filesystem>
#include <memory>
#include <string>

namespace ovce {

/// HTTP JSON view over a run directory and its refined siblings, plus a
/// queued refinement endpoint. Read endpoints never touch the disk state.
class Server {
public:
    /// `annotator` overrides the one stored with the run.
    explicit Server(std::filesystem::path run_dir, std::unique_ptr<Annotator> annotator = nullptr);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds and serves on a background thread; port 0 picks a free port.
    /// Returns the bound port. Throws PortInUse.
    int start(const std::string& host, int port);
    /// Binds and serves on the calling thread until stop(). Throws PortInUse.
    void serve(const std::string& host, int port);
    void stop();

    /// Blocks until every queued refinement job has finished.
    void drain_jobs();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace ovce
