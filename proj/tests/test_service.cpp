#include "support.hpp"

#include "merchcast/service.hpp"

#include <httplib.h>

#include <filesystem>
#include <thread>

using namespace merchcast;
using namespace merchcast::service;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kAdmin = "admin-secret";
const std::vector<std::string> kPanel = {"alice", "bruno", "chidi"};

Request call(std::string method, std::string path, const std::string& token = {}, json body = nullptr) {
    Request r;
    r.method = std::move(method);
    r.path = std::move(path);
    if (!token.empty()) r.headers["authorization"] = "Bearer " + token;
    if (!body.is_null()) r.body = body.dump();
    return r;
}

json sheet(std::int64_t sample, std::array<int, 5> s) {
    return {{"sample_id", sample},
            {"scores",
             {{"toys", s[0]}, {"stationery", s[1]}, {"daily_use", s[2]}, {"clothes_accessories", s[3]},
              {"luggage_bags", s[4]}}}};
}

struct Fixture {
    std::shared_ptr<MemoryStore> store = std::make_shared<MemoryStore>();
    DelphiService svc{store, kAdmin};
    std::string id;
    std::map<std::string, std::string> tokens;

    explicit Fixture(std::vector<std::int64_t> samples = {1, 2}, double epsilon = 2.0) {
        const auto r = svc.handle(call("POST", "/v1/sessions", kAdmin,
                                       {{"experts", kPanel}, {"samples", samples}, {"epsilon", epsilon}}));
        REQUIRE(r.status == 201);
        const auto body = r.json();
        id = body.at("session_id");
        tokens = body.at("tokens").get<std::map<std::string, std::string>>();
    }

    Response submit(const std::string& expert, int round, const std::vector<json>& sheets) {
        return svc.handle(call("PUT", "/v1/expert/rounds/" + std::to_string(round) + "/sheets", tokens.at(expert),
                               {{"sheets", sheets}}));
    }
    Response close(int round) {
        return svc.handle(call("POST", "/v1/sessions/" + id + "/rounds/" + std::to_string(round) + "/close", kAdmin));
    }
};

}  // namespace

TEST_CASE("creating sessions") {
    Fixture f;
    CHECK(f.tokens.size() == 3);
    for (const auto& [expert, token] : f.tokens) CHECK(token.size() >= 32);

    auto status = f.svc.handle(call("GET", "/v1/sessions/" + f.id, kAdmin)).json();
    CHECK(status.at("round") == 1);
    CHECK(status.at("open_samples") == json::array({1, 2}));
    CHECK(status.at("total") == 2);
    CHECK(status.at("converged") == 0);

    std::vector<std::int64_t> many(441);
    std::iota(many.begin(), many.end(), 1);
    std::vector<std::string> twenty;
    for (int i = 1; i <= 20; ++i) twenty.push_back("expert_" + std::to_string(i));
    const auto big = f.svc.handle(call("POST", "/v1/sessions", kAdmin, {{"experts", twenty}, {"samples", many}}));
    CHECK(big.status == 201);
    CHECK(big.json().at("tokens").size() == 20);

    CHECK(f.svc.handle(call("POST", "/v1/sessions", kAdmin, {{"experts", {"solo"}}, {"samples", {1}}})).status == 422);
    CHECK(f.svc.handle(call("POST", "/v1/sessions", kAdmin, "{not json")).status == 422);
}

TEST_CASE("authorization and routing") {
    Fixture f;
    CHECK(f.svc.handle(call("GET", "/v1/sessions/" + f.id)).status == 401);
    CHECK(f.svc.handle(call("GET", "/v1/sessions/" + f.id, "wrong")).status == 401);
    CHECK(f.svc.handle(call("GET", "/v1/sessions/" + f.id, f.tokens["alice"])).status == 401);
    CHECK(f.svc.handle(call("GET", "/v1/expert/samples", kAdmin)).status == 401);
    CHECK(f.svc.handle(call("GET", "/v1/expert/samples", "forged")).status == 401);
    CHECK(f.svc.handle(call("GET", "/v1/sessions/nope", kAdmin)).status == 404);
    CHECK(f.svc.handle(call("POST", "/v1/sessions/nope/rounds/1/close", kAdmin)).status == 404);
    CHECK(f.svc.handle(call("GET", "/v2/anything", kAdmin)).status == 404);
}

TEST_CASE("expert round trip") {
    Fixture f({1, 2, 3, 4, 5});
    auto view = f.svc.handle(call("GET", "/v1/expert/samples", f.tokens["alice"])).json();
    CHECK(view.at("samples").size() == 5);
    CHECK(view.at("categories").size() == 5);

    std::vector<json> sheets;
    for (int s = 1; s <= 5; ++s) sheets.push_back(sheet(s, {5, 4, 4, 4, 3}));
    const auto ok = f.submit("alice", 1, sheets);
    REQUIRE(ok.status == 200);
    CHECK(ok.json().at("stored")[0].at("total") == 20);

    auto bad = sheets;
    bad[0] = sheet(1, {7, 0, 0, 0, 0});
    const auto r = f.submit("alice", 1, bad);
    CHECK(r.status == 422);
    CHECK(r.json().at("error") == "ScoreOutOfRange");
    CHECK(r.json().at("field") == "sheets[0].scores.toys");
    CHECK(r.json().at("bound") == json::array({0, 5}));

    const auto partial = f.submit("bruno", 1, {sheets[0]});
    CHECK(partial.status == 422);
    CHECK(partial.json().at("error") == "IncompleteSheet");

    // Close is refused until everyone has submitted, and names the missing.
    const auto early = f.close(1);
    CHECK(early.status == 409);
    CHECK(early.json().at("missing_experts") == json::array({"bruno", "chidi"}));

    f.submit("bruno", 1, sheets);
    f.submit("chidi", 1, sheets);
    const auto closed = f.close(1);
    REQUIRE(closed.status == 200);
    CHECK(closed.json().at("complete") == true);
    CHECK(f.close(1).body == closed.body);  // idempotent

    CHECK(f.submit("alice", 1, sheets).status == 409);
    const auto labels = f.svc.handle(call("GET", "/v1/sessions/" + f.id + "/labels", kAdmin));
    CHECK(labels.content_type == "text/csv");
    CHECK(labels.body == "sample_id,label,forced\n1,20,false\n2,20,false\n3,20,false\n4,20,false\n5,20,false\n");
}

TEST_CASE("feedback and anonymity") {
    Fixture f({1});
    CHECK(f.svc.handle(call("GET", "/v1/sessions/" + f.id + "/labels", kAdmin)).status == 409);
    f.submit("alice", 1, {sheet(1, {1, 1, 1, 0, 0})});
    f.submit("bruno", 1, {sheet(1, {1, 1, 1, 0, 0})});

    // Before chidi submits, nobody sees anybody else's scores.
    for (const auto& [expert, token] : f.tokens) {
        const auto body = f.svc.handle(call("GET", "/v1/expert/samples", token)).body;
        for (const auto& other : kPanel)
            if (other != expert) CHECK(body.find(other) == std::string::npos);
    }
    CHECK(f.svc.handle(call("GET", "/v1/expert/rounds/1/feedback", f.tokens["alice"])).status == 409);

    f.submit("chidi", 1, {sheet(1, {1, 1, 0, 0, 0})});
    REQUIRE(f.close(1).status == 200);
    std::string first;
    for (const auto& [expert, token] : f.tokens) {
        const auto r = f.svc.handle(call("GET", "/v1/expert/rounds/1/feedback", token));
        REQUIRE(r.status == 200);
        std::string why;
        CHECK_MESSAGE(delphi::is_anonymous_feedback(r.json(), kPanel, &why), why);
        for (const auto& [_, t] : f.tokens) CHECK(r.body.find(t) == std::string::npos);
        if (first.empty()) first = r.body;
        CHECK(r.body == first);
    }
    const auto fb = json::parse(first);
    CHECK(fb.at("samples")[0].at("mean").get<double>() == doctest::Approx(8.0 / 3.0));
}

TEST_CASE("store failures surface as 503") {
    Fixture f({1});
    f.store->fail_writes = true;
    const auto r = f.submit("alice", 1, {sheet(1, {1, 1, 1, 1, 1})});
    CHECK(r.status == 503);
    CHECK(r.headers.count("Retry-After"));
    CHECK(r.json().contains("retry"));
    f.store->fail_writes = false;
    // The failed write left no trace.
    CHECK_FALSE(f.svc.state(f.id)->session.has_submitted("alice", 1));
    CHECK(f.submit("alice", 1, {sheet(1, {1, 1, 1, 1, 1})}).status == 200);
}

TEST_CASE("replay after restart") {
    const auto root = fs::temp_directory_path() / "merchcast_service_replay";
    fs::remove_all(root);
    std::string id;
    std::map<std::string, std::string> tokens;
    json live_labels;
    {
        DelphiService svc(std::make_shared<FileStore>(root), kAdmin);
        auto created = svc.handle(call("POST", "/v1/sessions", kAdmin,
                                       {{"experts", kPanel}, {"samples", {1, 2}}, {"epsilon", 0.5}})).json();
        id = created.at("session_id");
        tokens = created.at("tokens").get<std::map<std::string, std::string>>();
        for (const auto& [e, t] : tokens)
            svc.handle(call("PUT", "/v1/expert/rounds/1/sheets", t,
                            {{"sheets", {sheet(1, {2, 2, 2, 2, 2}), sheet(2, {e == "alice" ? 0 : 5, 0, 0, 0, 0})}}}));
        REQUIRE(svc.handle(call("POST", "/v1/sessions/" + id + "/rounds/1/close", kAdmin)).status == 200);
        svc.handle(call("PUT", "/v1/expert/rounds/2/sheets", tokens["alice"], {{"sheets", {sheet(2, {3, 0, 0, 0, 0})}}}));
        live_labels = svc.state(id)->to_json();
    }
    {
        // Mid-round restart: round 2 still open with alice's sheet kept.
        DelphiService svc(std::make_shared<FileStore>(root), kAdmin);
        CHECK(svc.state(id)->to_json() == live_labels);
        const auto status = svc.handle(call("GET", "/v1/sessions/" + id, kAdmin)).json();
        CHECK(status.at("round") == 2);
        CHECK(status.at("delinquent_experts") == json::array({"bruno", "chidi"}));
        for (const auto& e : {"bruno", "chidi"})
            svc.handle(call("PUT", "/v1/expert/rounds/2/sheets", tokens[e], {{"sheets", {sheet(2, {3, 0, 0, 0, 0})}}}));
        CHECK(svc.handle(call("POST", "/v1/sessions/" + id + "/rounds/2/close", kAdmin)).status == 200);
        live_labels = json(svc.handle(call("GET", "/v1/sessions/" + id + "/labels", kAdmin)).body);
    }
    {
        DelphiService svc(std::make_shared<FileStore>(root), kAdmin);
        CHECK(json(svc.handle(call("GET", "/v1/sessions/" + id + "/labels", kAdmin)).body) == live_labels);
    }
    fs::remove_all(root);
}

TEST_CASE("concurrent submissions") {
    std::vector<std::string> panel;
    for (int i = 0; i < 16; ++i) panel.push_back("panelist_" + std::string(1, static_cast<char>('a' + i)));
    auto run = [&](bool reverse) {
        auto svc = std::make_unique<DelphiService>(std::make_shared<MemoryStore>(), kAdmin);
        auto created =
            svc->handle(call("POST", "/v1/sessions", kAdmin, {{"experts", panel}, {"samples", {1, 2, 3}}})).json();
        const std::string id = created.at("session_id");
        auto tokens = created.at("tokens").get<std::map<std::string, std::string>>();
        std::vector<std::thread> threads;
        for (std::size_t k = 0; k < panel.size(); ++k) {
            const auto& e = panel[reverse ? panel.size() - 1 - k : k];
            const int t = static_cast<int>(e.back() - 'a') % 6;
            threads.emplace_back([&, e, t] {
                const auto r = svc->handle(call("PUT", "/v1/expert/rounds/1/sheets", tokens[e],
                                                {{"sheets", {sheet(1, {t, 0, 0, 0, 0}), sheet(2, {1, 1, 1, 1, 1}),
                                                             sheet(3, {5, 5, 5, 5, t % 2})}}}));
                CHECK(r.status == 200);
            });
            // Readers race the writers.
            threads.emplace_back([&] { svc->handle(call("GET", "/v1/sessions/" + id, kAdmin)); });
        }
        for (auto& th : threads) th.join();
        return svc->handle(call("POST", "/v1/sessions/" + id + "/rounds/1/close", kAdmin)).json().at("results");
    };
    const auto a = run(false);
    CHECK(a == run(true));
}

TEST_CASE("live http server") {
    auto store = std::make_shared<MemoryStore>();
    DelphiService svc(store, kAdmin);
    HttpServer server(svc);
    const int port = server.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    std::thread loop([&] { server.run(); });

    httplib::Client client("127.0.0.1", port);
    const httplib::Headers admin = {{"Authorization", "Bearer " + kAdmin}};
    auto created = client.Post("/v1/sessions", admin, json{{"experts", kPanel}, {"samples", {7}}}.dump(),
                               "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    const auto tokens = json::parse(created->body).at("tokens");

    auto denied = client.Get("/v1/sessions/whatever");
    REQUIRE(denied);
    CHECK(denied->status == 401);

    const httplib::Headers alice = {{"Authorization", "Bearer " + tokens.at("alice").get<std::string>()}};
    auto put = client.Put("/v1/expert/rounds/1/sheets", alice, json{{"sheets", {sheet(7, {5, 4, 4, 4, 3})}}}.dump(),
                          "application/json");
    REQUIRE(put);
    CHECK(put->status == 200);
    CHECK(json::parse(put->body).at("stored")[0].at("total") == 20);

    server.stop();
    loop.join();
}
