#include <httplib.h>

#include <spdlog/spdlog.h>

#include "tspsens/service.hpp"

namespace tspsens::service {

namespace {

void forward(Service& svc, const httplib::Request& req, httplib::Response& res) {
    std::multimap<std::string, std::string> query(req.params.begin(), req.params.end());
    const Response r = svc.handle(req.method, req.path, query, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
    spdlog::debug("{} {} -> {}", req.method, req.path, r.status);
}

}  // namespace

bool serve(Service& service, const std::string& host, int port, ReadyCallback on_ready) {
    httplib::Server server;
    auto handler = [&service](const httplib::Request& req, httplib::Response& res) { forward(service, req, res); };
    server.Get(R"(/api/.*)", handler);
    server.Post(R"(/api/.*)", handler);
    server.Delete(R"(/api/.*)", handler);
    if (port == 0) {
        port = server.bind_to_any_port(host);
        if (port < 0) return false;
    } else if (!server.bind_to_port(host, port)) {
        return false;
    }
    spdlog::info("listening on {}:{}", host, port);
    if (on_ready) on_ready(port, [&server] { server.stop(); });
    return server.listen_after_bind();
}

}  // namespace tspsens::service
