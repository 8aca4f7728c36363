#include "verifact/evidence.hpp"

#include "verifact/digest.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace verifact {

namespace fs = std::filesystem;

namespace {

std::string escape_prompt_id(const std::string& id) {
    static constexpr char hex[] = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : id) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.') {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(hex[c >> 4]);
            out.push_back(hex[c & 0xF]);
        }
    }
    if (out == "." || out == "..") out = "%2E" + out.substr(1);
    return out;
}

bool is_hex_digest(const std::string& s) {
    return s.size() == 64 && std::all_of(s.begin(), s.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)) && !std::isupper(static_cast<unsigned char>(c)); });
}

}  // namespace

void write_file_atomic(const fs::path& path, std::string_view data) {
    static std::atomic<unsigned> counter{0};
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ostringstream suffix;
    suffix << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id()) << '.' << counter++;
    auto tmp = path;
    tmp += suffix.str();
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        if (!out) throw IoError("short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw IoError("cannot rename into " + path.string() + ": " + ec.message());
    }
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void to_json(json& j, const SnapshotManifest& m) {
    json pages = json::array();
    for (const auto& p : m.pages)
        pages.push_back({{"hash", p.hash}, {"url", p.url}, {"fetched_at", p.fetched_at}, {"raw_size", p.raw_size}});
    json queries = json::array();
    for (const auto& [q, hashes] : m.queries) queries.push_back({{"query", q}, {"page_hashes", hashes}});
    j = json{{"prompt_id", m.prompt_id},   {"page_hashes", m.page_hashes}, {"pages", pages},
             {"queries", queries},         {"created_at", m.created_at},   {"tool_version", m.tool_version}};
}

void from_json(const json& j, SnapshotManifest& m) {
    m.prompt_id = j.at("prompt_id").get<std::string>();
    m.page_hashes = j.at("page_hashes").get<std::vector<std::string>>();
    m.pages.clear();
    for (const auto& p : j.value("pages", json::array()))
        m.pages.push_back({p.at("hash").get<std::string>(), p.value("url", std::string{}),
                           p.value("fetched_at", std::string{}), p.value("raw_size", std::size_t{0})});
    m.queries.clear();
    for (const auto& q : j.value("queries", json::array()))
        m.queries.emplace_back(q.at("query").get<std::string>(), q.at("page_hashes").get<std::vector<std::string>>());
    m.created_at = j.value("created_at", std::string{});
    m.tool_version = j.value("tool_version", std::string{});
}

EvidenceStore::EvidenceStore(fs::path root) : root_(std::move(root)) {
    fs::create_directories(root_ / "blobs");
    fs::create_directories(root_ / "manifests");
}

fs::path EvidenceStore::blob_path(const std::string& hash) const { return root_ / "blobs" / (hash + ".txt"); }

fs::path EvidenceStore::manifest_path(const std::string& prompt_id) const {
    return root_ / "manifests" / (escape_prompt_id(prompt_id) + ".json");
}

std::string EvidenceStore::put_page(const PageSnapshot& snapshot) {
    if (snapshot.text.empty()) throw std::invalid_argument("page text must be non-empty");
    auto hash = sha256_hex(snapshot.text);
    auto path = blob_path(hash);
    if (!fs::exists(path)) write_file_atomic(path, snapshot.text);
    return hash;
}

bool EvidenceStore::contains(const std::string& hash) const { return is_hex_digest(hash) && fs::exists(blob_path(hash)); }

std::string EvidenceStore::read_blob(const std::string& hash) const {
    if (!is_hex_digest(hash)) throw CorruptEntry(hash);
    auto path = blob_path(hash);
    if (!fs::exists(path)) throw CorruptEntry(hash);
    auto text = read_file(path);
    if (sha256_hex(text) != hash) throw CorruptEntry(hash);
    return text;
}

void EvidenceStore::write_manifest(const SnapshotManifest& manifest) {
    for (const auto& h : manifest.page_hashes)
        if (!contains(h)) throw Error("manifest for '" + manifest.prompt_id + "' references unknown blob " + h);
    write_file_atomic(manifest_path(manifest.prompt_id), json(manifest).dump(2) + "\n");
}

std::optional<SnapshotManifest> EvidenceStore::find_manifest(const std::string& prompt_id) const {
    auto path = manifest_path(prompt_id);
    if (!fs::exists(path)) return std::nullopt;
    try {
        return json::parse(read_file(path)).get<SnapshotManifest>();
    } catch (const json::exception& e) {
        throw Error("malformed manifest " + path.string() + ": " + e.what());
    }
}

SnapshotManifest EvidenceStore::manifest(const std::string& prompt_id) const {
    auto m = find_manifest(prompt_id);
    if (!m) throw SnapshotMiss(prompt_id);
    return *m;
}

std::vector<std::string> EvidenceStore::prompts() const {
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(root_ / "manifests")) {
        if (entry.path().extension() != ".json") continue;
        try {
            ids.push_back(json::parse(read_file(entry.path())).at("prompt_id").get<std::string>());
        } catch (const json::exception&) {
        }
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::vector<PageSnapshot> EvidenceStore::load_prompt_evidence(const std::string& prompt_id) const {
    auto m = manifest(prompt_id);
    std::vector<PageSnapshot> pages;
    pages.reserve(m.page_hashes.size());
    for (const auto& hash : m.page_hashes) {
        PageSnapshot page;
        page.content_hash = hash;
        page.text = read_blob(hash);
        for (const auto& meta : m.pages) {
            if (meta.hash == hash) {
                page.url = meta.url;
                page.fetched_at = meta.fetched_at;
                page.raw_size = meta.raw_size;
                break;
            }
        }
        pages.push_back(std::move(page));
    }
    return pages;
}

json EvidenceStore::descriptor() const {
    json prompts_json = json::array();
    std::set<std::string> blobs;
    std::size_t total_pages = 0;
    for (const auto& id : prompts()) {
        auto m = manifest(id);
        std::size_t bytes = 0;
        for (const auto& h : m.page_hashes) {
            blobs.insert(h);
            if (contains(h)) bytes += fs::file_size(blob_path(h));
        }
        total_pages += m.page_hashes.size();
        prompts_json.push_back({{"prompt_id", id}, {"pages", m.page_hashes.size()}, {"text_bytes", bytes}});
    }
    return json{{"tool_version", VERIFACT_VERSION},
                {"prompts", prompts_json},
                {"prompt_count", prompts_json.size()},
                {"total_pages", total_pages},
                {"unique_blobs", blobs.size()}};
}

void EvidenceStore::write_descriptor() const { write_file_atomic(root_ / "snapshot.json", descriptor().dump(2) + "\n"); }

void SnapshotRecorder::record(const std::string& prompt_id, const std::string& query,
                              const std::vector<PageSnapshot>& pages) {
    std::vector<std::pair<std::string, PageSnapshot>> stored;
    for (const auto& page : pages) {
        if (page.text.empty()) continue;
        stored.emplace_back(store_.put_page(page), page);
    }
    std::lock_guard lock(mutex_);
    auto& m = manifests_[prompt_id];
    m.prompt_id = prompt_id;
    std::vector<std::string> hashes;
    for (const auto& [hash, page] : stored) {
        hashes.push_back(hash);
        if (std::find(m.page_hashes.begin(), m.page_hashes.end(), hash) != m.page_hashes.end()) continue;
        m.page_hashes.push_back(hash);
        m.pages.push_back({hash, page.url, page.fetched_at, page.raw_size});
    }
    auto existing = std::find_if(m.queries.begin(), m.queries.end(), [&](const auto& q) { return q.first == query; });
    if (existing == m.queries.end()) m.queries.emplace_back(query, std::move(hashes));
}

void SnapshotRecorder::flush(const std::string& created_at) {
    std::lock_guard lock(mutex_);
    for (auto& [id, m] : manifests_) {
        m.created_at = created_at;
        m.tool_version = VERIFACT_VERSION;
        store_.write_manifest(m);
    }
    store_.write_descriptor();
}

}  // namespace verifact
