#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "tspsens/probes.hpp"
#include "tspsens/representations.hpp"

namespace tspsens::service {

struct ServiceOptions {
    /// Sessions up to this size are solved exactly with no warning.
    std::size_t exact_cap = 16;
    /// Solved tours kept per session (least recently used evicted). 0 disables caching.
    std::size_t cache_size = 256;
    /// Append-only per-session journals; empty disables persistence.
    std::filesystem::path journal_dir;
};

/// HTTP status and JSON body.
struct Response {
    int status = 200;
    std::string body;
};

/// Probe available as method "probe.<name>". Without a cache the probe must
/// take geometry features.
struct LoadedProbe {
    TrainedProbe probe;
    std::optional<ActivationCache> cache;
};

struct Session;

/// Request handling independent of any socket. Every handler returns a JSON
/// body; errors come back as {"error": message} with a 4xx/5xx status.
class Service {
public:
    explicit Service(ServiceOptions options = {});
    ~Service();

    void add_probe(const std::string& name, LoadedProbe probe);

    Response health() const;
    Response create_instance(const std::string& body);
    Response sensitivity(const std::string& session_id, const std::string& task, const std::string& method);
    Response apply(const std::string& session_id, const std::string& body);
    Response undo(const std::string& session_id);
    Response state(const std::string& session_id);

    /// Routes a request by method and path. `query` holds decoded parameters.
    Response handle(const std::string& method, const std::string& path,
                    const std::multimap<std::string, std::string>& query, const std::string& body);

    /// Rebuilds sessions from the journal directory. Returns the number restored.
    std::size_t restore();

    std::size_t session_count() const;

private:
    std::shared_ptr<Session> find(const std::string& id) const;
    std::string next_id();

    ServiceOptions options_;
    mutable std::shared_mutex sessions_mu_;
    std::unordered_map<std::string, std::shared_ptr<Session>> sessions_;
    std::uint64_t counter_ = 0;
    std::map<std::string, LoadedProbe> probes_;
};

/// Called once the socket is bound with the actual port and a function that
/// stops the server from another thread.
using ReadyCallback = std::function<void(int port, std::function<void()> stop)>;

/// Blocks serving `service` on host:port until stopped. Port 0 picks a free
/// port. Returns false if the socket could not be bound.
bool serve(Service& service, const std::string& host, int port, ReadyCallback on_ready = {});

}  // namespace tspsens::service
