#pragma once

#include "verifact/gateway.hpp"
#include "verifact/transport.hpp"

#include <atomic>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace verifact::testing {

/// Recovers template id and bindings from a rendered prompt.
std::optional<std::pair<TemplateId, Bindings>> unrender(const TemplateLibrary& library, std::string_view rendered);

using Responder = std::function<std::optional<std::string>(TemplateId, const Bindings&, const std::string& model)>;

/// Chat-completion endpoint answering from a script. Unscripted prompts get
/// HTTP 400.
class ScriptedLlm final : public Transport {
  public:
    explicit ScriptedLlm(Responder responder, const TemplateLibrary& library = TemplateLibrary::builtin());
    HttpResponse send(const HttpRequest& request) override;

    std::size_t calls() const noexcept { return calls_.load(); }
    std::size_t calls(TemplateId id) const;

    struct Call {
        TemplateId id;
        Bindings bindings;
        std::string model;
    };
    std::vector<Call> log() const;

  private:
    Responder responder_;
    TemplateLibrary library_;
    std::atomic<std::size_t> calls_{0};
    mutable std::mutex mutex_;
    std::map<TemplateId, std::size_t> per_template_;
    std::vector<Call> log_;
};

/// Chat body with one assistant message.
std::string chat_completion_body(const std::string& content);

/// Search endpoint plus static web pages.
class FakeWeb final : public Transport {
  public:
    struct Page {
        int status = 200;
        std::string body;
        std::string content_type = "text/html";
    };

    explicit FakeWeb(std::string search_endpoint = "https://search.test/search");

    void add_page(const std::string& url, Page page);
    /// Results per query; queries without an entry use `search_fn` if set.
    void set_results(const std::string& query, std::vector<std::string> urls);
    std::function<std::vector<std::string>(const std::string&)> search_fn;
    /// Queries answered with HTTP 500.
    std::vector<std::string> failing_queries;

    HttpResponse send(const HttpRequest& request) override;

    std::size_t searches() const noexcept { return searches_.load(); }
    std::size_t fetches() const noexcept { return fetches_.load(); }
    const std::string& search_endpoint() const noexcept { return endpoint_; }

  private:
    std::string endpoint_;
    std::map<std::string, Page> pages_;
    std::map<std::string, std::vector<std::string>> results_;
    std::atomic<std::size_t> searches_{0};
    std::atomic<std::size_t> fetches_{0};
};

}  // namespace verifact::testing
