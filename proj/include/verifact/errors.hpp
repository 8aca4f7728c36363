#pragma once

#include <stdexcept>
#include <string>

namespace verifact {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
  public:
    using Error::Error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

class EmptyInput : public Error {
  public:
    explicit EmptyInput(const std::string& what) : Error("empty input: " + what) {}
};

class LengthMismatch : public Error {
  public:
    LengthMismatch(std::size_t a, std::size_t b)
        : Error("length mismatch: " + std::to_string(a) + " vs " + std::to_string(b)) {}
};

/// Judge output that could not be interpreted. Carries the raw completion.
class ParseError : public Error {
  public:
    ParseError(const std::string& what, std::string raw)
        : Error("parse error: " + what), raw_(std::move(raw)) {}
    const std::string& raw() const noexcept { return raw_; }

  private:
    std::string raw_;
};

// Gateway failures.

class GatewayError : public Error {
  public:
    using Error::Error;
};

class MissingBinding : public GatewayError {
  public:
    explicit MissingBinding(std::string name)
        : GatewayError("missing binding for placeholder '" + name + "'"), name_(std::move(name)) {}
    const std::string& name() const noexcept { return name_; }

  private:
    std::string name_;
};

class NetworkError : public GatewayError {
  public:
    using GatewayError::GatewayError;
};

class CassetteMiss : public GatewayError {
  public:
    explicit CassetteMiss(std::string fingerprint)
        : GatewayError("cassette has no entry for fingerprint " + fingerprint),
          fingerprint_(std::move(fingerprint)) {}
    const std::string& fingerprint() const noexcept { return fingerprint_; }

  private:
    std::string fingerprint_;
};

class ProviderError : public GatewayError {
  public:
    ProviderError(int status, std::string body)
        : GatewayError("provider returned HTTP " + std::to_string(status)), status_(status),
          body_(std::move(body)) {}
    int status() const noexcept { return status_; }
    const std::string& body() const noexcept { return body_; }

  private:
    int status_;
    std::string body_;
};

// Evidence failures.

class SearchApiError : public Error {
  public:
    using Error::Error;
};

class FetchError : public Error {
  public:
    using Error::Error;
};

class SnapshotMiss : public Error {
  public:
    explicit SnapshotMiss(std::string prompt_id)
        : Error("no evidence snapshot for prompt '" + prompt_id + "'"),
          prompt_id_(std::move(prompt_id)) {}
    const std::string& prompt_id() const noexcept { return prompt_id_; }

  private:
    std::string prompt_id_;
};

class CorruptEntry : public Error {
  public:
    explicit CorruptEntry(std::string hash)
        : Error("evidence blob failed verification: " + hash), hash_(std::move(hash)) {}
    const std::string& hash() const noexcept { return hash_; }

  private:
    std::string hash_;
};

}  // namespace verifact
