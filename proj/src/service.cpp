#include "merchcast/service.hpp"

#include "merchcast/dataset.hpp"
#include "merchcast/error.hpp"
#include "merchcast/pipeline.hpp"

#include <openssl/rand.h>

#include <atomic>
#include <charconv>
#include <cerrno>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <unistd.h>

namespace merchcast::service {

namespace {

constexpr std::string_view kModule = "delphi-service";
namespace fs = std::filesystem;
using nlohmann::json;

std::string random_hex(std::size_t bytes) {
    std::vector<unsigned char> buf(bytes);
    if (RAND_bytes(buf.data(), static_cast<int>(buf.size())) != 1)
        throw Error(ErrorCode::IoError, kModule, "no randomness available for tokens");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned char b : buf) {
        out += kHex[b >> 4];
        out += kHex[b & 0xF];
    }
    return out;
}

std::string token_hash(const std::string& token) { return pipeline::sha256_hex(token); }

Response reply(int status, const json& body) {
    Response r;
    r.status = status;
    r.body = body.dump();
    return r;
}

int status_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::UnknownExpert: return 401;
        case ErrorCode::RoundClosed:
        case ErrorCode::RoundNotOpen:
        case ErrorCode::RoundNotClosed:
        case ErrorCode::RoundAlreadyClosed:
        case ErrorCode::MissingSubmissions:
        case ErrorCode::SessionIncomplete: return 409;
        case ErrorCode::StorageFull: return 503;
        case ErrorCode::IoError: return 500;
        default: return 422;
    }
}

Response error_reply(const Error& e, json extra = json::object()) {
    extra["error"] = std::string(to_string(e.code()));
    extra["module"] = e.module();
    extra["detail"] = e.detail();
    Response r = reply(status_for(e.code()), extra);
    if (e.code() == ErrorCode::StorageFull) {
        r.headers["Retry-After"] = "30";
        json body = r.json();
        body["retry"] = "storage is full; free space and retry the request";
        r.body = body.dump();
    }
    return r;
}

Response plain_error(int status, std::string_view code, const std::string& detail) {
    return reply(status, {{"error", code}, {"module", kModule}, {"detail", detail}});
}

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> parts;
    std::string current;
    for (char ch : path.substr(0, path.find('?'))) {
        if (ch == '/') {
            if (!current.empty()) parts.push_back(std::move(current));
            current.clear();
        } else {
            current += ch;
        }
    }
    if (!current.empty()) parts.push_back(std::move(current));
    return parts;
}

std::optional<int> parse_round(const std::string& text) {
    int value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
    return value;
}

std::string bearer(const Request& request) {
    auto it = request.headers.find("authorization");
    if (it == request.headers.end()) return {};
    const std::string prefix = "Bearer ";
    if (it->second.rfind(prefix, 0) != 0) return {};
    return it->second.substr(prefix.size());
}

json result_to_json(const delphi::RoundResult& r) {
    json j{{"sample_id", r.sample_id}, {"round", r.round_index}, {"mean", r.mean},     {"sigma", r.sigma},
           {"converged", r.converged}, {"forced", r.forced},     {"n_scores", r.n_scores}};
    j["label"] = r.label ? json(*r.label) : json(nullptr);
    return j;
}

json sheet_scores(const delphi::ScoreSheet& s) {
    json j = json::object();
    for (auto c : delphi::kCategories) j[std::string(delphi::category_key(c))] = s.scores[static_cast<std::size_t>(c)];
    return j;
}

/// Field-level validation of a PUT body into engine sheets.
std::vector<delphi::ScoreSheet> parse_sheets(const std::string& body, const std::string& expert, int round) {
    json doc;
    try {
        doc = json::parse(body);
    } catch (const json::exception&) {
        throw Error(ErrorCode::ParseError, kModule, "body is not JSON");
    }
    if (!doc.is_object() || !doc.contains("sheets") || !doc["sheets"].is_array())
        throw Error(ErrorCode::ParseError, kModule, "body must be {\"sheets\": [...]}");
    std::vector<delphi::ScoreSheet> sheets;
    for (std::size_t i = 0; i < doc["sheets"].size(); ++i) {
        const auto& entry = doc["sheets"][i];
        const std::string at = "sheets[" + std::to_string(i) + "]";
        if (!entry.is_object() || !entry.contains("sample_id") || !entry["sample_id"].is_number_integer())
            throw Error(ErrorCode::IncompleteSheet, kModule, at + ".sample_id is required");
        if (!entry.contains("scores") || !entry["scores"].is_object())
            throw Error(ErrorCode::IncompleteSheet, kModule, at + ".scores must be an object of five categories");
        delphi::ScoreSheet sheet{expert, round, entry["sample_id"].get<std::int64_t>(), {}};
        for (auto c : delphi::kCategories) {
            const std::string key(delphi::category_key(c));
            const auto& scores = entry["scores"];
            if (!scores.contains(key) || !scores[key].is_number_integer())
                throw Error(ErrorCode::IncompleteSheet, kModule, at + ".scores." + key + " is required");
            const auto v = scores[key].get<std::int64_t>();
            if (v < 0 || v > delphi::kMaxCategoryScore)
                throw Error(ErrorCode::ScoreOutOfRange, kModule,
                            at + ".scores." + key + "=" + std::to_string(v) + " outside [0,5]");
            sheet.scores[static_cast<std::size_t>(c)] = static_cast<int>(v);
        }
        for (const auto& [key, _] : entry["scores"].items())
            if (!delphi::category_from_key(key))
                throw Error(ErrorCode::IncompleteSheet, kModule, at + ".scores." + key + " is not a category");
        sheets.push_back(sheet);
    }
    return sheets;
}

// Field path of a validation failure, recovered from the detail text.
json field_detail(const Error& e) {
    json extra = json::object();
    const auto& d = e.detail();
    if (d.rfind("sheets[", 0) == 0) {
        const auto end = d.find_first_of(" =");
        extra["field"] = d.substr(0, end);
    }
    if (e.code() == ErrorCode::ScoreOutOfRange) extra["bound"] = {0, delphi::kMaxCategoryScore};
    return extra;
}

SessionState created_state(const json& event) {
    SessionState s;
    s.id = event.at("session_id").get<std::string>();
    s.session = delphi::Session::open(event.at("experts").get<std::vector<std::string>>(),
                                      event.at("samples").get<std::vector<std::int64_t>>(),
                                      event.at("epsilon").get<double>(), event.at("max_rounds").get<int>());
    s.token_hashes = event.at("token_hashes").get<std::map<std::string, std::string>>();
    for (const auto& m : event.value("movies", json::array())) s.movies[m.at("id").get<std::int64_t>()] = m;
    s.redact = event.value("redact", std::set<std::string>{});
    return s;
}

}  // namespace

// --- state -------------------------------------------------------------------

json SessionState::to_json() const {
    json movies_json = json::array();
    for (const auto& [_, m] : movies) movies_json.push_back(m);
    return {{"id", id},           {"session", session.to_json()}, {"token_hashes", token_hashes},
            {"movies", movies_json}, {"redact", redact},          {"event_count", event_count}};
}

SessionState SessionState::from_json(const json& d) {
    SessionState s;
    s.id = d.at("id").get<std::string>();
    s.session = delphi::Session::from_json(d.at("session"));
    s.token_hashes = d.at("token_hashes").get<std::map<std::string, std::string>>();
    for (const auto& m : d.at("movies")) s.movies[m.at("id").get<std::int64_t>()] = m;
    s.redact = d.at("redact").get<std::set<std::string>>();
    s.event_count = d.at("event_count").get<std::size_t>();
    return s;
}

void apply_event(SessionState& state, const json& event) {
    const auto type = event.at("type").get<std::string>();
    if (type == "created") {
        state = created_state(event);
    } else if (type == "submitted") {
        const auto expert = event.at("expert").get<std::string>();
        const int round = event.at("round").get<int>();
        std::vector<delphi::ScoreSheet> sheets;
        for (const auto& s : event.at("sheets"))
            sheets.push_back({expert, round, s.at("sample_id").get<std::int64_t>(),
                              s.at("scores").get<std::array<int, delphi::kCategoryCount>>()});
        state.session.submit_scores(expert, round, sheets);
    } else if (type == "closed") {
        state.session.close_round(event.at("round").get<int>());
    } else {
        throw Error(ErrorCode::ParseError, kModule, "unknown event type " + type);
    }
    ++state.event_count;
}

// --- stores ------------------------------------------------------------------

FileStore::FileStore(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw Error(ErrorCode::IoError, kModule, "cannot create store at " + root_.string());
}

void FileStore::append(const std::string& session_id, const json& event) {
    std::error_code ec;
    fs::create_directories(root_ / session_id, ec);
    const auto path = root_ / session_id / "events.jsonl";
    std::FILE* f = std::fopen(path.c_str(), "ab");
    if (!f) throw Error(errno == ENOSPC ? ErrorCode::StorageFull : ErrorCode::IoError, kModule, "cannot open " + path.string());
    const std::string line = event.dump() + "\n";
    const bool ok = std::fwrite(line.data(), 1, line.size(), f) == line.size() && std::fflush(f) == 0 && ::fsync(fileno(f)) == 0;
    const int err = errno;
    std::fclose(f);
    if (!ok) throw Error(err == ENOSPC ? ErrorCode::StorageFull : ErrorCode::IoError, kModule, "cannot append to " + path.string());
}

void FileStore::write_snapshot(const std::string& session_id, const json& snapshot) {
    const auto path = root_ / session_id / "snapshot.json";
    const auto tmp = root_ / session_id / "snapshot.json.tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << snapshot.dump();
        if (!out.flush()) throw Error(ErrorCode::StorageFull, kModule, "cannot write " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::IoError, kModule, "cannot move snapshot into place: " + ec.message());
}

std::vector<std::string> FileStore::sessions() const {
    std::vector<std::string> out;
    for (const auto& entry : fs::directory_iterator(root_))
        if (entry.is_directory() && fs::exists(entry.path() / "events.jsonl")) out.push_back(entry.path().filename().string());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<json> FileStore::events(const std::string& session_id) const {
    std::ifstream in(root_ / session_id / "events.jsonl", std::ios::binary);
    std::vector<json> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::exception&) {
            break;  // torn final write; everything before it is intact
        }
    }
    return out;
}

std::optional<json> FileStore::snapshot(const std::string& session_id) const {
    std::ifstream in(root_ / session_id / "snapshot.json", std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return json::parse(buf.str());
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

void MemoryStore::append(const std::string& session_id, const json& event) {
    std::lock_guard lock(mutex_);
    if (fail_writes) throw Error(ErrorCode::StorageFull, kModule, "no space left on device");
    events_[session_id].push_back(event);
}

void MemoryStore::write_snapshot(const std::string& session_id, const json& snapshot) {
    std::lock_guard lock(mutex_);
    if (fail_writes) throw Error(ErrorCode::StorageFull, kModule, "no space left on device");
    snapshots_[session_id] = snapshot;
}

std::vector<std::string> MemoryStore::sessions() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, _] : events_) out.push_back(id);
    return out;
}

std::vector<json> MemoryStore::events(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    auto it = events_.find(session_id);
    return it == events_.end() ? std::vector<json>{} : it->second;
}

std::optional<json> MemoryStore::snapshot(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    auto it = snapshots_.find(session_id);
    if (it == snapshots_.end()) return std::nullopt;
    return std::optional<json>(std::in_place, it->second);
}

// --- service -----------------------------------------------------------------

DelphiService::DelphiService(std::shared_ptr<Store> store, std::string admin_token)
    : store_(std::move(store)), admin_token_hash_(admin_token.empty() ? std::string() : token_hash(admin_token)) {
    for (const auto& id : store_->sessions()) {
        const auto events = store_->events(id);
        SessionState state;
        std::size_t from = 0;
        if (auto snap = store_->snapshot(id); snap && snap->at("event_count").get<std::size_t>() <= events.size()) {
            state = SessionState::from_json(*snap);
            from = state.event_count;
        }
        for (std::size_t i = from; i < events.size(); ++i) apply_event(state, events[i]);
        if (state.id.empty()) continue;
        auto s = std::make_shared<Slot>();
        for (const auto& [expert, hash] : state.token_hashes) tokens_[hash] = ExpertRef{id, expert};
        std::atomic_store(&s->state, std::shared_ptr<const SessionState>(std::make_shared<SessionState>(std::move(state))));
        slots_[id] = std::move(s);
    }
}

std::shared_ptr<const SessionState> DelphiService::state(const std::string& session_id) const {
    auto s = slot(session_id);
    return s ? std::atomic_load(&s->state) : nullptr;
}

std::shared_ptr<DelphiService::Slot> DelphiService::slot(const std::string& id) const {
    std::shared_lock lock(registry_mutex_);
    auto it = slots_.find(id);
    return it == slots_.end() ? nullptr : it->second;
}

std::optional<DelphiService::ExpertRef> DelphiService::expert_for(const std::string& token) const {
    if (token.empty()) return std::nullopt;
    std::shared_lock lock(registry_mutex_);
    auto it = tokens_.find(token_hash(token));
    if (it == tokens_.end()) return std::nullopt;
    return it->second;
}

bool DelphiService::is_admin(const std::string& token) const {
    return !token.empty() && !admin_token_hash_.empty() && token_hash(token) == admin_token_hash_;
}

std::shared_ptr<const SessionState> DelphiService::commit(Slot& s, const json& event) {
    auto next = std::make_shared<SessionState>(*std::atomic_load(&s.state));
    apply_event(*next, event);  // engine preconditions are checked before anything is logged
    store_->append(next->id, event);
    std::shared_ptr<const SessionState> published = next;
    std::atomic_store(&s.state, published);
    return published;
}

Response DelphiService::handle(const Request& request) {
    try {
        const auto parts = split_path(request.path);
        if (parts.size() < 2 || parts[0] != "v1") return plain_error(404, "NotFound", "no route for " + request.path);
        const auto token = bearer(request);
        const auto& m = request.method;

        if (parts[1] == "sessions") {
            if (!is_admin(token)) return plain_error(401, "Unauthorized", "admin credential required");
            if (parts.size() == 2 && m == "POST") return create_session(request);
            if (parts.size() == 3 && m == "GET") return session_status(parts[2]);
            if (parts.size() == 4 && parts[3] == "labels" && m == "GET") return export_labels(parts[2]);
            if (parts.size() == 6 && parts[3] == "rounds" && parts[5] == "close" && m == "POST") {
                const auto round = parse_round(parts[4]);
                if (!round) return plain_error(404, "NotFound", "round must be an integer");
                return close_round(parts[2], *round);
            }
            return plain_error(404, "NotFound", "no route for " + m + " " + request.path);
        }
        if (parts[1] == "expert") {
            const auto who = expert_for(token);
            if (!who) return plain_error(401, "Unauthorized", "expert token required");
            if (parts.size() == 3 && parts[2] == "samples" && m == "GET") return expert_samples(*who);
            if (parts.size() == 5 && parts[2] == "rounds") {
                const auto round = parse_round(parts[3]);
                if (!round) return plain_error(404, "NotFound", "round must be an integer");
                if (parts[4] == "sheets" && m == "PUT") return submit_sheets(*who, *round, request.body);
                if (parts[4] == "feedback" && m == "GET") return expert_feedback(*who, *round);
            }
            return plain_error(404, "NotFound", "no route for " + m + " " + request.path);
        }
        return plain_error(404, "NotFound", "no route for " + request.path);
    } catch (const Error& e) {
        return error_reply(e, field_detail(e));
    } catch (const std::exception& e) {
        return plain_error(500, "Internal", e.what());
    }
}

Response DelphiService::create_session(const Request& request) {
    json body;
    try {
        body = json::parse(request.body);
    } catch (const json::exception&) {
        return plain_error(400, "ParseError", "body is not JSON");
    }
    try {
        std::vector<std::int64_t> samples;
        json movies = json::array();
        if (body.contains("movies")) {
            for (const auto& m : body.at("movies")) {
                auto record = record_from_json(m);  // validates field types
                auto cleaned = record_to_json(record);
                cleaned.erase("label");
                cleaned.erase("imputed");
                samples.push_back(record.id);
                movies.push_back(std::move(cleaned));
            }
        } else {
            samples = body.at("samples").get<std::vector<std::int64_t>>();
        }
        const auto experts = body.at("experts").get<std::vector<std::string>>();
        const double epsilon = body.value("epsilon", delphi::Session::kDefaultEpsilon);
        const int max_rounds = body.value("max_rounds", delphi::Session::kDefaultMaxRounds);
        const auto redact = body.value("redact", std::set<std::string>{});
        for (const auto& key : redact)
            if (!field_from_key(key))
                throw Error(ErrorCode::InvalidParams, kModule, "redact names unknown field '" + key + "'");
        (void)delphi::Session::open(experts, samples, epsilon, max_rounds);  // precondition check

        const std::string id = random_hex(8);
        std::map<std::string, std::string> tokens;
        std::map<std::string, std::string> hashes;
        for (const auto& e : experts) {
            tokens[e] = random_hex(24);
            hashes[e] = token_hash(tokens[e]);
        }
        const json event{{"type", "created"}, {"session_id", id},   {"experts", experts},
                         {"samples", samples}, {"epsilon", epsilon}, {"max_rounds", max_rounds},
                         {"token_hashes", hashes}, {"movies", movies}, {"redact", redact}};
        SessionState state;
        apply_event(state, event);
        store_->append(id, event);

        auto s = std::make_shared<Slot>();
        std::atomic_store(&s->state, std::shared_ptr<const SessionState>(std::make_shared<SessionState>(std::move(state))));
        {
            std::unique_lock lock(registry_mutex_);
            slots_[id] = s;
            for (const auto& [expert, hash] : hashes) tokens_[hash] = ExpertRef{id, expert};
        }
        return reply(201, {{"session_id", id}, {"round", 1}, {"tokens", tokens}});
    } catch (const json::exception& e) {
        return plain_error(422, "ParseError", e.what());
    }
}

Response DelphiService::session_status(const std::string& id) {
    auto s = slot(id);
    if (!s) return plain_error(404, "NotFound", "unknown session " + id);
    const auto st = std::atomic_load(&s->state);
    const auto& session = st->session;
    json rounds = json::array();
    for (int r = 1; r <= session.current_round(); ++r) {
        json results = json::array();
        if (session.round_closed(r))
            for (const auto& res : session.results(r)) results.push_back(result_to_json(res));
        rounds.push_back({{"round", r},
                          {"closed", session.round_closed(r)},
                          {"open_samples", session.open_samples(r)},
                          {"results", results}});
    }
    return reply(200, {{"session_id", id},
                       {"round", session.current_round()},
                       {"round_open", session.round_open()},
                       {"complete", session.complete()},
                       {"epsilon", session.epsilon()},
                       {"max_rounds", session.max_rounds()},
                       {"experts", session.experts()},
                       {"open_samples", session.round_open() ? session.open_samples(session.current_round())
                                                              : std::vector<std::int64_t>{}},
                       {"delinquent_experts", session.delinquent_experts()},
                       {"converged", session.labeled_count()},
                       {"total", session.samples().size()},
                       {"rounds", rounds}});
}

Response DelphiService::close_round(const std::string& id, int round) {
    auto s = slot(id);
    if (!s) return plain_error(404, "NotFound", "unknown session " + id);
    std::lock_guard writer(s->writer);
    auto st = std::atomic_load(&s->state);
    if (!st->session.round_closed(round)) {
        try {
            st = commit(*s, {{"type", "closed"}, {"round", round}});
        } catch (const Error& e) {
            if (e.code() == ErrorCode::MissingSubmissions) {
                auto check = std::atomic_load(&s->state);
                return error_reply(e, {{"missing_experts", check->session.delinquent_experts()}});
            }
            throw;
        }
        try {
            store_->write_snapshot(id, st->to_json());
        } catch (const Error&) {
            // The event log alone still replays to this state.
        }
    }
    json results = json::array();
    for (const auto& r : st->session.results(round)) results.push_back(result_to_json(r));
    return reply(200, {{"round", round},
                       {"results", results},
                       {"complete", st->session.complete()},
                       {"next_round", st->session.round_open() ? json(st->session.current_round()) : json(nullptr)}});
}

Response DelphiService::export_labels(const std::string& id) {
    auto s = slot(id);
    if (!s) return plain_error(404, "NotFound", "unknown session " + id);
    const auto st = std::atomic_load(&s->state);
    Response r;
    r.content_type = "text/csv";
    r.body = delphi::labels_to_csv(st->session.export_labels());
    return r;
}

Response DelphiService::expert_samples(const ExpertRef& who) {
    auto s = slot(who.session_id);
    if (!s) return plain_error(401, "Unauthorized", "session no longer exists");
    const auto st = std::atomic_load(&s->state);
    const auto& session = st->session;
    const int round = session.current_round();

    json samples = json::array();
    if (session.round_open()) {
        std::map<std::int64_t, delphi::ScoreSheet> own;
        for (const auto& sheet : session.own_sheets(who.expert_id, round)) own[sheet.sample_id] = sheet;
        for (auto sample : session.open_samples(round)) {
            json movie = json::object();
            if (auto it = st->movies.find(sample); it != st->movies.end()) {
                movie = it->second;
                for (const auto& key : st->redact) movie.erase(key);
            }
            json entry{{"sample_id", sample}, {"movie", movie}};
            if (auto it = own.find(sample); it != own.end()) entry["own_scores"] = sheet_scores(it->second);
            samples.push_back(std::move(entry));
        }
    }
    json labeled = json::array();
    for (auto sample : session.samples())
        if (auto label = session.final_label(sample))
            labeled.push_back({{"sample_id", sample}, {"label", label->label}, {"forced", label->forced}});

    json categories = json::array();
    for (auto c : delphi::kCategories) categories.push_back(delphi::category_key(c));
    return reply(200, {{"session_id", who.session_id},
                       {"expert_id", who.expert_id},
                       {"round", round},
                       {"round_open", session.round_open()},
                       {"submitted", session.round_open() && session.has_submitted(who.expert_id, round)},
                       {"categories", categories},
                       {"score_range", {0, delphi::kMaxCategoryScore}},
                       {"samples", samples},
                       {"labeled", labeled}});
}

Response DelphiService::submit_sheets(const ExpertRef& who, int round, const std::string& body) {
    auto s = slot(who.session_id);
    if (!s) return plain_error(401, "Unauthorized", "session no longer exists");
    const auto sheets = parse_sheets(body, who.expert_id, round);
    json logged = json::array();
    for (const auto& sheet : sheets) logged.push_back({{"sample_id", sheet.sample_id}, {"scores", sheet.scores}});

    std::lock_guard writer(s->writer);
    commit(*s, {{"type", "submitted"}, {"expert", who.expert_id}, {"round", round}, {"sheets", logged}});
    json stored = json::array();
    for (const auto& sheet : sheets) stored.push_back({{"sample_id", sheet.sample_id}, {"total", sheet.total()}});
    return reply(200, {{"round", round}, {"stored", stored}});
}

Response DelphiService::expert_feedback(const ExpertRef& who, int round) {
    auto s = slot(who.session_id);
    if (!s) return plain_error(401, "Unauthorized", "session no longer exists");
    const auto st = std::atomic_load(&s->state);
    return reply(200, delphi::feedback_to_json(st->session.feedback(round, who.expert_id)));
}

}  // namespace merchcast::service
