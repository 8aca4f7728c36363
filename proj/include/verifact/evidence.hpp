#pragma once

#include "verifact/core.hpp"

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace verifact {

struct PageSnapshot {
    std::string url;
    std::string fetched_at;    ///< ISO-8601, may be empty
    std::string content_hash;  ///< SHA-256 of text; filled in by put_page
    std::string text;
    std::size_t raw_size = 0;  ///< bytes of the fetched document before extraction
};

struct ManifestPage {
    std::string hash;
    std::string url;
    std::string fetched_at;
    std::size_t raw_size = 0;
};

/// Evidence set for one prompt. `queries` keeps, per search query, the
/// pages it produced in retrieval order.
struct SnapshotManifest {
    std::string prompt_id;
    std::vector<std::string> page_hashes;
    std::vector<ManifestPage> pages;
    std::vector<std::pair<std::string, std::vector<std::string>>> queries;
    std::string created_at;
    std::string tool_version;
};

void to_json(json& j, const SnapshotManifest& m);
void from_json(const json& j, SnapshotManifest& m);

/// Content-addressed page store:
///   <root>/blobs/<sha256>.txt        extracted page text (UTF-8)
///   <root>/manifests/<prompt>.json   one manifest per prompt
///   <root>/snapshot.json             descriptor with per-prompt counts
/// Blobs are immutable; every write goes through a temp file and a rename.
class EvidenceStore {
  public:
    explicit EvidenceStore(std::filesystem::path root);

    /// Stores the text under its digest and returns the digest. Re-putting
    /// identical text is a no-op. Throws std::invalid_argument on empty text.
    std::string put_page(const PageSnapshot& snapshot);

    bool contains(const std::string& hash) const;
    /// Reads and verifies a blob. Missing or altered blobs raise CorruptEntry.
    std::string read_blob(const std::string& hash) const;

    /// Throws Error if a listed hash does not resolve.
    void write_manifest(const SnapshotManifest& manifest);
    std::optional<SnapshotManifest> find_manifest(const std::string& prompt_id) const;
    /// Throws SnapshotMiss for unknown prompts.
    SnapshotManifest manifest(const std::string& prompt_id) const;
    std::vector<std::string> prompts() const;

    /// Pages in manifest order with bit-exact texts.
    std::vector<PageSnapshot> load_prompt_evidence(const std::string& prompt_id) const;

    json descriptor() const;
    void write_descriptor() const;

    const std::filesystem::path& root() const noexcept { return root_; }
    std::filesystem::path blob_path(const std::string& hash) const;
    std::filesystem::path manifest_path(const std::string& prompt_id) const;

  private:
    std::filesystem::path root_;
};

/// Writes `data` to `path` atomically (temp file in the same directory, then rename).
void write_file_atomic(const std::filesystem::path& path, std::string_view data);
std::string read_file(const std::filesystem::path& path);

/// Collects pages seen during a live verification run and turns them into
/// per-prompt manifests. Thread-safe.
class SnapshotRecorder {
  public:
    explicit SnapshotRecorder(EvidenceStore& store) : store_(store) {}

    /// Records the pages one query produced for a prompt, in retrieval order.
    void record(const std::string& prompt_id, const std::string& query, const std::vector<PageSnapshot>& pages);

    /// Writes (or replaces) the manifests of every prompt recorded so far.
    void flush(const std::string& created_at);

  private:
    EvidenceStore& store_;
    std::mutex mutex_;
    std::map<std::string, SnapshotManifest> manifests_;
};

}  // namespace verifact
