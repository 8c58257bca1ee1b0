#include "merchcast/error.hpp"
#include "merchcast/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>

namespace merchcast::service {

namespace {

Request to_request(const httplib::Request& in) {
    Request out;
    out.method = in.method;
    out.path = in.path;
    out.body = in.body;
    for (const auto& [name, value] : in.headers) {
        std::string lower = name;
        std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
        out.headers[lower] = value;
    }
    return out;
}

}  // namespace

struct HttpServer::Impl {
    httplib::Server server;
};

HttpServer::HttpServer(DelphiService& service) : impl_(std::make_unique<Impl>()) {
    auto handler = [&service](const httplib::Request& in, httplib::Response& out) {
        const auto response = service.handle(to_request(in));
        out.status = response.status;
        for (const auto& [name, value] : response.headers) out.set_header(name, value);
        out.set_content(response.body, response.content_type);
    };
    impl_->server.Get(".*", handler);
    impl_->server.Post(".*", handler);
    impl_->server.Put(".*", handler);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(ErrorCode::IoError, "delphi-service", "cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

void HttpServer::run() {
    if (!impl_->server.listen_after_bind()) throw Error(ErrorCode::IoError, "delphi-service", "server stopped with an error");
}

void HttpServer::stop() {
    if (impl_) impl_->server.stop();
}

}  // namespace merchcast::service
