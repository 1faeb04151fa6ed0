#pragma once

// Chat-completion client with four interchangeable modes:
//   - live:   POST to an OpenAI-style /chat/completions endpoint
//   - mock:   answer from an in-memory prompt->text fixture map (no network)
//   - record: live call, then append {request_hash, response_text} to a
//             JSONL cassette
//   - replay: answer from the cassette by request hash (no network)
// The request hash is fnv1a64 over a canonical serialization of
// (model, temperature, max_tokens, messages), so a recorded cassette replays
// byte-identically for byte-identical requests.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "lmx/common.hpp"
#include "lmx/http_util.hpp"

namespace lmx {

struct ChatMessage {
    std::string role;  // "system" | "user" | "assistant"
    std::string content;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 512;
};

enum class ClientMode { kLive, kMock, kRecord, kReplay };

inline ClientMode parse_client_mode(const std::string& name) {
    if (name == "live") return ClientMode::kLive;
    if (name == "mock") return ClientMode::kMock;
    if (name == "record") return ClientMode::kRecord;
    if (name == "replay") return ClientMode::kReplay;
    throw ConfigError("unknown client mode '" + name +
                      "' (expected live|mock|record|replay)");
}

inline std::string client_mode_name(ClientMode m) {
    switch (m) {
        case ClientMode::kLive: return "live";
        case ClientMode::kMock: return "mock";
        case ClientMode::kRecord: return "record";
        case ClientMode::kReplay: return "replay";
    }
    return "?";  // LCOV_EXCL_LINE
}

struct ClientConfig {
    ClientMode mode = ClientMode::kMock;
    std::string endpoint;            // empty -> $LMX_LLM_URL (live/record)
    std::string api_key;             // empty -> $LMX_API_KEY; may stay empty
    std::string model = "mock-model";
    double temperature = 0.0;
    int max_tokens = 512;
    std::string cassette_path;       // record/replay
    std::map<std::string, std::string> fixtures;  // mock: prompt -> reply
    std::optional<std::string> fixture_default;   // mock fallback reply
    RetryPolicy retry{};
    int max_inflight = 4;
    double timeout_seconds = 30.0;
};

// Canonical request digest used as the cassette key. Unit separators keep
// (role, content) pairs unambiguous; the float format is fixed-width %.17g.
inline std::uint64_t chat_request_hash(const ChatRequest& r) {
    char temp[64];
    std::snprintf(temp, sizeof(temp), "%.17g", r.temperature);
    std::string canon = r.model;
    canon += '\x1e';
    canon += temp;
    canon += '\x1e';
    canon += std::to_string(r.max_tokens);
    canon += '\x1e';
    for (const auto& m : r.messages) {
        canon += m.role;
        canon += '\x1f';
        canon += m.content;
        canon += '\x1e';
    }
    return fnv1a64(canon);
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(h));
    return std::string(buf);
}

// --- cassette -------------------------------------------------------------

// JSONL, one {"request_hash": "<16 hex>", "response_text": "..."} per line.
// Later entries for the same hash win, so re-recording overrides cleanly.
inline std::map<std::string, std::string> load_cassette(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open cassette '" + path + "'");
    std::map<std::string, std::string> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("request_hash") ||
            !j.contains("response_text"))
            throw ParseError("cassette '" + path + "' line " +
                             std::to_string(line_no) + " is not a valid entry");
        entries[j["request_hash"].get<std::string>()] =
            j["response_text"].get<std::string>();
    }
    return entries;
}

inline void append_cassette(const std::string& path, std::uint64_t hash,
                            const std::string& response_text) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw ConfigError("cannot write cassette '" + path + "'");
    nlohmann::json j;
    j["request_hash"] = hash_hex(hash);
    j["response_text"] = response_text;
    out << j.dump() << "\n";
}

// --- real transport ---------------------------------------------------------

// Splits "http://host[:port]/path" into (scheme://host[:port], /path).
inline std::pair<std::string, std::string> split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw ConfigError("URL '" + url + "' has no scheme");
    std::string scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https")
        throw ConfigError("unsupported URL scheme '" + scheme + "'");
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

class HttplibTransport : public Transport {
public:
    explicit HttplibTransport(double timeout_seconds = 30.0)
        : timeout_seconds_(timeout_seconds) {}

    HttpResponse post(const HttpRequest& request) override {
        auto [base, path] = split_url(request.url);
        httplib::Client client(base);
        auto whole = static_cast<time_t>(timeout_seconds_);
        auto micros = static_cast<time_t>((timeout_seconds_ - static_cast<double>(whole)) * 1e6);
        client.set_connection_timeout(whole, micros);
        client.set_read_timeout(whole, micros);
        client.set_write_timeout(whole, micros);
        httplib::Headers headers;
        for (const auto& [k, v] : request.headers) headers.emplace(k, v);
        auto res = client.Post(path, headers, request.body, "application/json");
        if (!res)
            return {0, "", httplib::to_string(res.error())};
        return {res->status, res->body, ""};
    }

private:
    double timeout_seconds_;
};

// --- client -----------------------------------------------------------------

inline ChatRequest make_chat_request(const ClientConfig& cfg,
                                     const std::string& prompt) {
    ChatRequest r;
    r.model = cfg.model;
    r.temperature = cfg.temperature;
    r.max_tokens = cfg.max_tokens;
    r.messages.push_back({"user", prompt});
    return r;
}

class ChatClient {
public:
    explicit ChatClient(ClientConfig config,
                        std::shared_ptr<Transport> transport = nullptr,
                        std::shared_ptr<Clock> clock = nullptr)
        : cfg_(std::move(config)),
          transport_(std::move(transport)),
          clock_(std::move(clock)),
          limiter_(cfg_.max_inflight) {
        if (!clock_) clock_ = std::make_shared<SystemClock>();
        if (cfg_.mode == ClientMode::kReplay) {
            if (cfg_.cassette_path.empty())
                throw ConfigError("replay mode needs a cassette path");
            cassette_ = load_cassette(cfg_.cassette_path);
        }
        if (cfg_.mode == ClientMode::kRecord && cfg_.cassette_path.empty())
            throw ConfigError("record mode needs a cassette path");
    }

    const ClientConfig& config() const { return cfg_; }
    Clock& clock() { return *clock_; }

    // Returns the assistant text for this request. Mock and replay never
    // touch the transport; live and record go through retry + in-flight cap.
    std::string complete(const ChatRequest& request) {
        switch (cfg_.mode) {
            case ClientMode::kMock: return complete_mock(request);
            case ClientMode::kReplay: return complete_replay(request);
            case ClientMode::kLive: return complete_live(request);
            case ClientMode::kRecord: {
                std::uint64_t h = chat_request_hash(request);
                std::string text = complete_live(request);
                std::lock_guard<std::mutex> lock(cassette_mu_);
                append_cassette(cfg_.cassette_path, h, text);
                return text;
            }
        }
        throw ConfigError("invalid client mode");  // LCOV_EXCL_LINE
    }

    std::string complete_prompt(const std::string& prompt) {
        return complete(make_chat_request(cfg_, prompt));
    }

private:
    std::string complete_mock(const ChatRequest& request) {
        if (request.messages.empty())
            throw ArgumentError("chat request has no messages");
        const std::string& key = request.messages.back().content;
        auto it = cfg_.fixtures.find(key);
        if (it != cfg_.fixtures.end()) return it->second;
        if (cfg_.fixture_default) return *cfg_.fixture_default;
        throw ConfigError("mock client has no fixture for prompt starting '" +
                          key.substr(0, 60) + "'");
    }

    std::string complete_replay(const ChatRequest& request) {
        std::string key = hash_hex(chat_request_hash(request));
        auto it = cassette_.find(key);
        if (it == cassette_.end())
            throw ConfigError("cassette '" + cfg_.cassette_path +
                              "' has no entry for request hash " + key);
        return it->second;
    }

    std::string complete_live(const ChatRequest& request) {
        std::string endpoint = cfg_.endpoint;
        if (endpoint.empty()) {
            const char* env = std::getenv("LMX_LLM_URL");
            if (env) endpoint = env;
        }
        if (endpoint.empty())
            throw ConfigError(
                "no chat endpoint configured (flag/config or LMX_LLM_URL)");
        std::string api_key = cfg_.api_key;
        if (api_key.empty()) {
            const char* env = std::getenv("LMX_API_KEY");
            if (env) api_key = env;
        }

        nlohmann::json body;
        body["model"] = request.model;
        body["temperature"] = request.temperature;
        body["max_tokens"] = request.max_tokens;
        body["messages"] = nlohmann::json::array();
        for (const auto& m : request.messages)
            body["messages"].push_back({{"role", m.role}, {"content", m.content}});

        HttpRequest http;
        http.url = endpoint;
        http.body = body.dump();
        if (!api_key.empty())
            http.headers.emplace_back("Authorization", "Bearer " + api_key);

        if (!transport_)
            transport_ = std::make_shared<HttplibTransport>(cfg_.timeout_seconds);

        HttpResponse resp;
        {
            InflightLimiter::Slot slot(limiter_);
            resp = post_with_retry(*transport_, *clock_, http, cfg_.retry,
                                   &last_attempts_);
        }
        if (resp.status != 200)
            throw TransportError("chat endpoint returned HTTP " +
                                 std::to_string(resp.status) + ": " +
                                 resp.body.substr(0, 200));

        nlohmann::json j = nlohmann::json::parse(resp.body, nullptr, false);
        if (j.is_discarded())
            throw ProtocolError("chat endpoint returned non-JSON body");
        if (!j.contains("choices") || !j["choices"].is_array() ||
            j["choices"].empty() || !j["choices"][0].contains("message") ||
            !j["choices"][0]["message"].contains("content") ||
            !j["choices"][0]["message"]["content"].is_string())
            throw ProtocolError(
                "chat response missing choices[0].message.content");
        return j["choices"][0]["message"]["content"].get<std::string>();
    }

public:
    // Attempt count of the most recent live/record call (for diagnostics).
    int last_attempts() const { return last_attempts_; }

private:
    ClientConfig cfg_;
    std::shared_ptr<Transport> transport_;
    std::shared_ptr<Clock> clock_;
    InflightLimiter limiter_;
    std::map<std::string, std::string> cassette_;
    std::mutex cassette_mu_;
    int last_attempts_ = 0;
};

}  // namespace lmx
