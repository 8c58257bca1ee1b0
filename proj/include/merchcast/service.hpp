#pragma once

#include "merchcast/delphi.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

namespace merchcast::service {

// --- transport-neutral request/response ---------------------------------------

struct Request {
    std::string method;  // GET, POST, PUT
    std::string path;
    std::map<std::string, std::string> headers;  // lower-case names
    std::string body;
};

struct Response {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
    std::map<std::string, std::string> headers;

    nlohmann::json json() const { return nlohmann::json::parse(body); }
};

// --- persistence -------------------------------------------------------------

/// Append-only per-session event log plus optional snapshots. Writes that
/// cannot be persisted throw StorageFull (out of space) or IoError.
class Store {
public:
    virtual ~Store() = default;
    virtual void append(const std::string& session_id, const nlohmann::json& event) = 0;
    virtual void write_snapshot(const std::string& session_id, const nlohmann::json& snapshot) = 0;
    virtual std::vector<std::string> sessions() const = 0;
    virtual std::vector<nlohmann::json> events(const std::string& session_id) const = 0;
    virtual std::optional<nlohmann::json> snapshot(const std::string& session_id) const = 0;
};

/// `root/<session>/events.jsonl` and `root/<session>/snapshot.json`.
class FileStore : public Store {
public:
    explicit FileStore(std::filesystem::path root);
    void append(const std::string& session_id, const nlohmann::json& event) override;
    void write_snapshot(const std::string& session_id, const nlohmann::json& snapshot) override;
    std::vector<std::string> sessions() const override;
    std::vector<nlohmann::json> events(const std::string& session_id) const override;
    std::optional<nlohmann::json> snapshot(const std::string& session_id) const override;

private:
    std::filesystem::path root_;
};

/// In-memory store; `fail_writes` makes every write throw StorageFull.
class MemoryStore : public Store {
public:
    void append(const std::string& session_id, const nlohmann::json& event) override;
    void write_snapshot(const std::string& session_id, const nlohmann::json& snapshot) override;
    std::vector<std::string> sessions() const override;
    std::vector<nlohmann::json> events(const std::string& session_id) const override;
    std::optional<nlohmann::json> snapshot(const std::string& session_id) const override;

    bool fail_writes = false;

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::vector<nlohmann::json>> events_;
    std::map<std::string, nlohmann::json> snapshots_;
};

// --- service -----------------------------------------------------------------

/// Immutable view of one session; replaced wholesale on every write.
struct SessionState {
    std::string id;
    delphi::Session session;
    std::map<std::string, std::string> token_hashes;  // expert → SHA-256 of token
    std::map<std::int64_t, nlohmann::json> movies;    // sample → record fields
    std::set<std::string> redact;                      // field keys hidden from experts
    std::size_t event_count = 0;

    nlohmann::json to_json() const;
    static SessionState from_json(const nlohmann::json& document);
};

/// Applies one logged event to a state. Throws the engine's errors.
void apply_event(SessionState& state, const nlohmann::json& event);

class DelphiService {
public:
    /// Replays every session already in `store`.
    DelphiService(std::shared_ptr<Store> store, std::string admin_token);

    Response handle(const Request& request);

    /// Snapshot of a session for tests and tooling.
    std::shared_ptr<const SessionState> state(const std::string& session_id) const;

private:
    struct Slot {
        std::mutex writer;
        std::shared_ptr<const SessionState> state;  // accessed with std::atomic_load/store
    };
    struct ExpertRef {
        std::string session_id;
        std::string expert_id;
    };

    Response create_session(const Request& request);
    Response session_status(const std::string& id);
    Response close_round(const std::string& id, int round);
    Response export_labels(const std::string& id);
    Response expert_samples(const ExpertRef& who);
    Response submit_sheets(const ExpertRef& who, int round, const std::string& body);
    Response expert_feedback(const ExpertRef& who, int round);

    std::shared_ptr<Slot> slot(const std::string& id) const;
    std::optional<ExpertRef> expert_for(const std::string& token) const;
    bool is_admin(const std::string& token) const;
    /// Logs `event`, applies it to a copy and publishes the copy.
    std::shared_ptr<const SessionState> commit(Slot& slot, const nlohmann::json& event);

    std::shared_ptr<Store> store_;
    std::string admin_token_hash_;
    mutable std::shared_mutex registry_mutex_;
    std::map<std::string, std::shared_ptr<Slot>> slots_;
    std::map<std::string, ExpertRef> tokens_;  // token hash → expert
};

/// HTTP adapter over DelphiService::handle.
class HttpServer {
public:
    explicit HttpServer(DelphiService& service);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds; port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop().
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace merchcast::service
