#include "verifact/transport.hpp"

#include "verifact/errors.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <stdexcept>

namespace verifact {

std::string ParsedUrl::origin() const { return scheme + "://" + host + ":" + std::to_string(port); }

ParsedUrl parse_url(const std::string& url) {
    ParsedUrl out;
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw std::invalid_argument("url without scheme: " + url);
    out.scheme = url.substr(0, scheme_end);
    if (out.scheme != "http" && out.scheme != "https") throw std::invalid_argument("unsupported scheme: " + url);
    auto rest = url.substr(scheme_end + 3);
    auto path_start = rest.find_first_of("/?#");
    auto authority = rest.substr(0, path_start);
    out.path = path_start == std::string::npos ? "/" : rest.substr(path_start);
    if (auto hash = out.path.find('#'); hash != std::string::npos) out.path.erase(hash);
    if (out.path.empty() || out.path.front() != '/') out.path.insert(out.path.begin(), '/');
    if (auto at = authority.rfind('@'); at != std::string::npos) authority = authority.substr(at + 1);
    auto colon = authority.rfind(':');
    if (colon != std::string::npos && authority.find(']') == std::string::npos) {
        out.host = authority.substr(0, colon);
        out.port = std::stoi(authority.substr(colon + 1));
    } else {
        out.host = authority;
        out.port = out.scheme == "https" ? 443 : 80;
    }
    if (out.host.empty()) throw std::invalid_argument("url without host: " + url);
    return out;
}

HttpTransport::HttpTransport(std::string user_agent) : user_agent_(std::move(user_agent)) {}

HttpResponse HttpTransport::send(const HttpRequest& request) {
    ParsedUrl url;
    try {
        url = parse_url(request.url);
    } catch (const std::exception& e) {
        throw NetworkError(e.what());
    }
    httplib::Client client(url.origin());
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(request.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    client.set_follow_location(true);

    httplib::Headers headers{{"User-Agent", user_agent_}};
    std::string content_type = "application/json";
    for (const auto& [k, v] : request.headers) {
        if (k == "Content-Type")
            content_type = v;
        else
            headers.emplace(k, v);
    }

    httplib::Result result = request.method == "GET" ? client.Get(url.path, headers)
                                                     : client.Post(url.path, headers, request.body, content_type);
    if (!result) throw NetworkError("HTTP " + request.method + " " + request.url + " failed: " + httplib::to_string(result.error()));
    HttpResponse response;
    response.status = result->status;
    response.body = result->body;
    response.content_type = result->get_header_value("Content-Type");
    return response;
}

HttpResponse CountingTransport::send(const HttpRequest& request) {
    ++count_;
    if (!inner_) throw NetworkError("network access disabled: " + request.method + " " + request.url);
    return inner_->send(request);
}

}  // namespace verifact
