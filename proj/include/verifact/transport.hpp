#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace verifact {

struct HttpRequest {
    std::string method = "POST";
    std::string url;
    std::vector<std::pair<std::string, std::string>> headers;
    std::string body;
    std::chrono::milliseconds timeout{10'000};
};

struct HttpResponse {
    int status = 0;
    std::string body;
    std::string content_type;
};

/// Blocking HTTP exchange. Implementations throw NetworkError when no
/// response could be obtained; any HTTP status is returned, not thrown.
class Transport {
  public:
    virtual ~Transport() = default;
    virtual HttpResponse send(const HttpRequest& request) = 0;
};

/// cpp-httplib backed transport (http and https).
class HttpTransport final : public Transport {
  public:
    explicit HttpTransport(std::string user_agent = "verifact/0.3");
    HttpResponse send(const HttpRequest& request) override;

  private:
    std::string user_agent_;
};

/// Counts every exchange before forwarding it. With no inner transport it
/// refuses all traffic with NetworkError, which makes it a network-free
/// sentinel for offline and replay runs.
class CountingTransport final : public Transport {
  public:
    explicit CountingTransport(std::shared_ptr<Transport> inner = nullptr) : inner_(std::move(inner)) {}
    HttpResponse send(const HttpRequest& request) override;
    std::size_t count() const noexcept { return count_.load(); }

  private:
    std::shared_ptr<Transport> inner_;
    std::atomic<std::size_t> count_{0};
};

struct ParsedUrl {
    std::string scheme;  // "http" or "https"
    std::string host;
    int port = 0;
    std::string path;  // includes query string, always starts with '/'
    std::string origin() const;
};

/// Throws std::invalid_argument on malformed input.
ParsedUrl parse_url(const std::string& url);

}  // namespace verifact
