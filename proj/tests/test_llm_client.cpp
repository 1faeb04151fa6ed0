// Chat client: mock fixtures without network, cassette record/replay,
// retry/backoff behavior, response validation, the in-flight cap, and one
// live loopback round-trip against a real local HTTP server.

#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmx/llm_client.hpp"

using lmx::ChatClient;
using lmx::ChatRequest;
using lmx::ClientConfig;
using lmx::ClientMode;
using lmx::ConfigError;
using lmx::FixedClock;
using lmx::HttpRequest;
using lmx::HttpResponse;
using lmx::ProtocolError;
using lmx::TransportError;

namespace {

std::string temp_path(const std::string& name) {
    auto path = (std::filesystem::temp_directory_path() / name).string();
    std::remove(path.c_str());
    return path;
}

std::string ok_body(const std::string& text) {
    nlohmann::json msg;
    msg["content"] = text;
    nlohmann::json choice;
    choice["message"] = msg;
    nlohmann::json out;
    out["choices"] = nlohmann::json::array({choice});
    return out.dump();
}

// Replays a fixed response sequence (last one repeats); records every
// request and tracks the maximum number of concurrent calls.
struct ScriptedTransport : lmx::Transport {
    std::vector<HttpResponse> script;
    int hold_ms = 0;

    std::atomic<int> calls{0};
    std::atomic<int> inflight{0};
    std::atomic<int> peak_inflight{0};
    std::mutex mu;
    std::vector<HttpRequest> seen;

    explicit ScriptedTransport(std::vector<HttpResponse> s)
        : script(std::move(s)) {}

    HttpResponse post(const HttpRequest& request) override {
        int in = ++inflight;
        int prev = peak_inflight.load();
        while (in > prev && !peak_inflight.compare_exchange_weak(prev, in)) {
        }
        if (hold_ms)
            std::this_thread::sleep_for(std::chrono::milliseconds(hold_ms));
        {
            std::lock_guard<std::mutex> lock(mu);
            seen.push_back(request);
        }
        std::size_t i = static_cast<std::size_t>(calls++);
        --inflight;
        return script[std::min(i, script.size() - 1)];
    }
};

struct ThrowingTransport : lmx::Transport {
    HttpResponse post(const HttpRequest&) override {
        throw std::logic_error("transport must not be touched in this mode");
    }
};

ClientConfig live_config(const std::string& endpoint) {
    ClientConfig cfg;
    cfg.mode = ClientMode::kLive;
    cfg.endpoint = endpoint;
    cfg.model = "test-model";
    cfg.retry.max_retries = 2;
    cfg.retry.backoff_base = 1.0;
    return cfg;
}

}  // namespace

TEST_CASE("mock mode answers from fixtures and never touches the wire") {
    ClientConfig cfg;
    cfg.mode = ClientMode::kMock;
    cfg.fixtures["ping"] = "pong";
    ChatClient client(cfg, std::make_shared<ThrowingTransport>(),
                      std::make_shared<FixedClock>());
    CHECK(client.complete_prompt("ping") == "pong");
    CHECK_THROWS_AS(client.complete_prompt("unknown"), ConfigError);
}

TEST_CASE("mock mode falls back to the default fixture when set") {
    ClientConfig cfg;
    cfg.mode = ClientMode::kMock;
    cfg.fixture_default = "canned";
    ChatClient client(cfg, std::make_shared<ThrowingTransport>());
    CHECK(client.complete_prompt("anything at all") == "canned");
}

TEST_CASE("request hash is stable and sensitive to every request field") {
    ChatRequest a;
    a.model = "m";
    a.messages = {{"user", "hello"}};
    ChatRequest b = a;
    CHECK(lmx::chat_request_hash(a) == lmx::chat_request_hash(b));
    CHECK(lmx::hash_hex(lmx::chat_request_hash(a)).size() == 16);

    b.model = "m2";
    CHECK(lmx::chat_request_hash(a) != lmx::chat_request_hash(b));
    b = a;
    b.temperature = 0.5;
    CHECK(lmx::chat_request_hash(a) != lmx::chat_request_hash(b));
    b = a;
    b.max_tokens += 1;
    CHECK(lmx::chat_request_hash(a) != lmx::chat_request_hash(b));
    b = a;
    b.messages[0].content = "hellp";
    CHECK(lmx::chat_request_hash(a) != lmx::chat_request_hash(b));
    b = a;
    b.messages[0].role = "system";
    CHECK(lmx::chat_request_hash(a) != lmx::chat_request_hash(b));
}

TEST_CASE("record then replay returns byte-identical responses offline") {
    auto cassette = temp_path("lmx_cassette_rr.jsonl");

    ClientConfig rec = live_config("http://example.test/v1/chat");
    rec.mode = ClientMode::kRecord;
    rec.cassette_path = cassette;
    auto transport = std::make_shared<ScriptedTransport>(
        std::vector<HttpResponse>{{200, ok_body("first answer"), ""},
                                  {200, ok_body("second answer"), ""}});
    ChatClient recorder(rec, transport, std::make_shared<FixedClock>());
    CHECK(recorder.complete_prompt("q one") == "first answer");
    CHECK(recorder.complete_prompt("q two") == "second answer");

    ClientConfig rep = rec;
    rep.mode = ClientMode::kReplay;
    ChatClient replayer(rep, std::make_shared<ThrowingTransport>(),
                        std::make_shared<FixedClock>());
    CHECK(replayer.complete_prompt("q two") == "second answer");
    CHECK(replayer.complete_prompt("q one") == "first answer");
    CHECK_THROWS_AS(replayer.complete_prompt("q three"), ConfigError);
}

TEST_CASE("cassette loading validates lines and lets later entries win") {
    auto path = temp_path("lmx_cassette_load.jsonl");
    lmx::write_file(path,
                    "{\"request_hash\":\"00000000000000aa\",\"response_text\":"
                    "\"old\"}\n"
                    "\n"
                    "{\"request_hash\":\"00000000000000aa\",\"response_text\":"
                    "\"new\"}\n");
    auto entries = lmx::load_cassette(path);
    CHECK(entries.size() == 1);
    CHECK(entries.at("00000000000000aa") == "new");

    auto bad = temp_path("lmx_cassette_bad.jsonl");
    lmx::write_file(bad, "{\"nope\": 1}\n");
    CHECK_THROWS_AS(lmx::load_cassette(bad), lmx::ParseError);
    CHECK_THROWS_AS(lmx::load_cassette(temp_path("lmx_no_such.jsonl")),
                    ConfigError);

    ClientConfig cfg;
    cfg.mode = ClientMode::kReplay;
    CHECK_THROWS_AS(ChatClient(cfg), ConfigError);  // no cassette path
}

TEST_CASE("429 is retried with jittered exponential backoff") {
    auto transport = std::make_shared<ScriptedTransport>(
        std::vector<HttpResponse>{{429, "slow down", ""},
                                  {200, ok_body("ok now"), ""}});
    auto clock = std::make_shared<FixedClock>();
    ChatClient client(live_config("http://api.test/chat"), transport, clock);
    CHECK(client.complete_prompt("q") == "ok now");
    CHECK(client.last_attempts() == 2);
    REQUIRE(clock->sleeps().size() == 1);
    // base * factor^0 * jitter, jitter in [0.9, 1.1]
    CHECK(clock->sleeps()[0] >= 0.9);
    CHECK(clock->sleeps()[0] <= 1.1);
}

TEST_CASE("persistent server errors exhaust retries") {
    auto transport = std::make_shared<ScriptedTransport>(
        std::vector<HttpResponse>{{503, "down", ""}});
    auto clock = std::make_shared<FixedClock>();
    ChatClient client(live_config("http://api.test/chat"), transport, clock);
    CHECK_THROWS_WITH(client.complete_prompt("q"),
                      Catch::Matchers::ContainsSubstring("3 attempts"));
    CHECK(transport->calls == 3);       // 1 + 2 retries
    CHECK(clock->sleeps().size() == 2); // no sleep after the last attempt
    CHECK(clock->sleeps()[1] > clock->sleeps()[0]);  // factor 2 dominates jitter
}

TEST_CASE("client errors other than 429 fail immediately") {
    auto transport = std::make_shared<ScriptedTransport>(
        std::vector<HttpResponse>{{404, "not here", ""}});
    auto clock = std::make_shared<FixedClock>();
    ChatClient client(live_config("http://api.test/chat"), transport, clock);
    CHECK_THROWS_AS(client.complete_prompt("q"), TransportError);
    CHECK(transport->calls == 1);
    CHECK(clock->sleeps().empty());
}

TEST_CASE("malformed success bodies raise protocol errors") {
    auto check_body = [](const std::string& body) {
        auto transport = std::make_shared<ScriptedTransport>(
            std::vector<HttpResponse>{{200, body, ""}});
        ChatClient client(live_config("http://api.test/chat"), transport,
                          std::make_shared<FixedClock>());
        CHECK_THROWS_AS(client.complete_prompt("q"), ProtocolError);
    };
    check_body("not json at all");
    check_body("{\"choices\": []}");
    check_body("{\"choices\": [{\"message\": {}}]}");
    check_body("{\"choices\": [{\"message\": {\"content\": 7}}]}");
}

TEST_CASE("live requests carry the configured payload and auth header") {
    auto transport = std::make_shared<ScriptedTransport>(
        std::vector<HttpResponse>{{200, ok_body("fine"), ""}});
    ClientConfig cfg = live_config("http://api.test/v1/chat/completions");
    cfg.api_key = "sk-test";
    cfg.temperature = 0.25;
    cfg.max_tokens = 77;
    ChatClient client(cfg, transport, std::make_shared<FixedClock>());
    CHECK(client.complete_prompt("the prompt") == "fine");

    REQUIRE(transport->seen.size() == 1);
    const auto& req = transport->seen[0];
    CHECK(req.url == "http://api.test/v1/chat/completions");
    auto j = nlohmann::json::parse(req.body);
    CHECK(j["model"] == "test-model");
    CHECK(j["temperature"] == 0.25);
    CHECK(j["max_tokens"] == 77);
    CHECK(j["messages"][0]["role"] == "user");
    CHECK(j["messages"][0]["content"] == "the prompt");
    bool has_auth = false;
    for (const auto& [k, v] : req.headers)
        has_auth = has_auth || (k == "Authorization" && v == "Bearer sk-test");
    CHECK(has_auth);
}

TEST_CASE("endpoint falls back to the environment, then fails loudly") {
    unsetenv("LMX_LLM_URL");
    {
        ChatClient client(live_config(""),
                          std::make_shared<ThrowingTransport>(),
                          std::make_shared<FixedClock>());
        CHECK_THROWS_AS(client.complete_prompt("q"), ConfigError);
    }
    setenv("LMX_LLM_URL", "http://env.test/chat", 1);
    auto transport = std::make_shared<ScriptedTransport>(
        std::vector<HttpResponse>{{200, ok_body("via env"), ""}});
    ChatClient client(live_config(""), transport,
                      std::make_shared<FixedClock>());
    CHECK(client.complete_prompt("q") == "via env");
    REQUIRE(transport->seen.size() == 1);
    CHECK(transport->seen[0].url == "http://env.test/chat");
    unsetenv("LMX_LLM_URL");
}

TEST_CASE("in-flight requests never exceed the configured cap") {
    auto transport = std::make_shared<ScriptedTransport>(
        std::vector<HttpResponse>{{200, ok_body("r"), ""}});
    transport->hold_ms = 5;
    ClientConfig cfg = live_config("http://api.test/chat");
    cfg.max_inflight = 2;
    ChatClient client(cfg, transport, std::make_shared<FixedClock>());

    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i)
        threads.emplace_back([&client] { client.complete_prompt("q"); });
    for (auto& t : threads) t.join();

    CHECK(transport->calls == 8);
    CHECK(transport->peak_inflight.load() <= 2);
}

TEST_CASE("URL splitting accepts http(s) and rejects everything else") {
    auto [base1, path1] = lmx::split_url("http://host:8080/a/b");
    CHECK(base1 == "http://host:8080");
    CHECK(path1 == "/a/b");
    auto [base2, path2] = lmx::split_url("https://host");
    CHECK(base2 == "https://host");
    CHECK(path2 == "/");
    CHECK_THROWS_AS(lmx::split_url("ftp://host/x"), ConfigError);
    CHECK_THROWS_AS(lmx::split_url("host/x"), ConfigError);
}

TEST_CASE("mode names parse both ways") {
    using lmx::parse_client_mode;
    CHECK(parse_client_mode("live") == ClientMode::kLive);
    CHECK(parse_client_mode("mock") == ClientMode::kMock);
    CHECK(parse_client_mode("record") == ClientMode::kRecord);
    CHECK(parse_client_mode("replay") == ClientMode::kReplay);
    CHECK_THROWS_AS(parse_client_mode("cassette"), ConfigError);
    CHECK(lmx::client_mode_name(ClientMode::kReplay) == "replay");
}

TEST_CASE("record and replay round-trip through a live loopback server") {
    httplib::Server server;
    server.Post("/v1/chat/completions",
                [](const httplib::Request& req, httplib::Response& res) {
                    auto j = nlohmann::json::parse(req.body);
                    std::string prompt = j["messages"][0]["content"];
                    res.set_content(ok_body("echo: " + prompt),
                                    "application/json");
                });
    int port = server.bind_to_any_port("127.0.0.1");
    if (port <= 0) {
        SKIP("cannot bind a loopback port in this environment");
    }
    std::thread serving([&server] { server.listen_after_bind(); });
    server.wait_until_ready();

    auto cassette = temp_path("lmx_cassette_live.jsonl");
    ClientConfig rec = live_config("http://127.0.0.1:" + std::to_string(port) +
                                   "/v1/chat/completions");
    rec.mode = ClientMode::kRecord;
    rec.cassette_path = cassette;
    {
        ChatClient recorder(rec);  // real transport, real clock
        CHECK(recorder.complete_prompt("loopback hello") ==
              "echo: loopback hello");
    }
    server.stop();
    serving.join();

    ClientConfig rep = rec;
    rep.mode = ClientMode::kReplay;
    ChatClient replayer(rep, std::make_shared<ThrowingTransport>(),
                        std::make_shared<FixedClock>());
    CHECK(replayer.complete_prompt("loopback hello") == "echo: loopback hello");
}
