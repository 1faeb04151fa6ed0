#pragma once

// Embedding providers: one interface, three interchangeable backends.
//   - synthetic-hash: counter-based pseudorandom vectors, pure function of
//     (string, seed); the desk-scale default, needs no model or files.
//   - file-table: exact lookup in a TSV-ish table exported offline.
//   - remote-http: POST to an embeddings endpoint, with retry and
//     dimension validation.
// Also supplies the pooled input representation consumed by the answer head.

#include <cstdio>
#include <cstdlib>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmx/common.hpp"
#include "lmx/http_util.hpp"
#include "lmx/mlp.hpp"

namespace lmx {

enum class Pooling { kMean, kFirstToken };

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    virtual int dim() const = 0;

    // One vector for one string (token or node label, treated atomically).
    virtual Vector embed(const std::string& text) const = 0;

    std::vector<Vector> embed_tokens(const std::vector<std::string>& tokens) const {
        if (tokens.empty()) throw ArgumentError("token list must be non-empty");
        std::vector<Vector> out;
        out.reserve(tokens.size());
        for (const auto& t : tokens) out.push_back(embed(t));
        return out;
    }

    Vector embed_node(const std::string& label) const { return embed(label); }

    // Pools token embeddings of "question choice" into one vector.
    Vector lm_representation(const std::string& question, const std::string& choice,
                             Pooling pooling = Pooling::kMean) const {
        auto tokens = tokenize(question + " " + choice);
        if (tokens.empty()) throw ArgumentError("input has no tokens");
        if (pooling == Pooling::kFirstToken) return embed(tokens.front());
        Vector acc = Vector::Zero(dim());
        for (const auto& t : tokens) acc += embed(t);
        return acc / static_cast<double>(tokens.size());
    }

    // Mean of token embeddings of arbitrary text (relevance-scoring input).
    Vector pooled_text(const std::string& text) const {
        auto tokens = tokenize(text);
        if (tokens.empty()) throw ArgumentError("input has no tokens");
        Vector acc = Vector::Zero(dim());
        for (const auto& t : tokens) acc += embed(t);
        return acc / static_cast<double>(tokens.size());
    }
};

// ---------------------------------------------------------------------------
// Synthetic-hash backend: e_k = 2 * unit(mix64(h + (k+1)*golden)) - 1 with
// h = fnv1a64(text) ^ seed; entries lie in [-1, 1).
// ---------------------------------------------------------------------------

class SyntheticProvider final : public EmbeddingProvider {
public:
    SyntheticProvider(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
        if (dim < 1) throw ArgumentError("embedding dimension must be >= 1");
    }

    int dim() const override { return dim_; }

    Vector embed(const std::string& text) const override {
        std::uint64_t h = fnv1a64(text) ^ seed_;
        Vector v(dim_);
        for (int k = 0; k < dim_; ++k)
            v[k] = 2.0 * counter_unit(h, static_cast<std::uint64_t>(k)) - 1.0;
        return v;
    }

private:
    int dim_;
    std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// File-table backend. Format: header `dim=<D> count=<N>`, then N lines of
// `label<TAB>v1,v2,...,vD`.
// ---------------------------------------------------------------------------

class FileTableProvider final : public EmbeddingProvider {
public:
    explicit FileTableProvider(const std::string& path) {
        std::istringstream in(read_file(path));
        std::string header;
        if (!std::getline(in, header)) throw ParseError(path + ": missing header");
        int count = 0;
        if (std::sscanf(header.c_str(), "dim=%d count=%d", &dim_, &count) != 2)
            throw ParseError(path + ": header must be `dim=<D> count=<N>`");
        if (dim_ < 1) throw ParseError(path + ": dimension must be positive");
        std::string line;
        std::size_t line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            auto tab = line.find('\t');
            if (tab == std::string::npos)
                throw ParseError(path + " line " + std::to_string(line_no) + ": missing tab");
            std::string label = line.substr(0, tab);
            Vector v(dim_);
            std::istringstream vals(line.substr(tab + 1));
            std::string field;
            int k = 0;
            while (std::getline(vals, field, ',')) {
                if (k >= dim_) break;
                try {
                    v[k++] = std::stod(field);
                } catch (const std::exception&) {
                    throw ParseError(path + " line " + std::to_string(line_no) +
                                     ": bad float: " + field);
                }
            }
            if (k != dim_)
                throw ParseError(path + " line " + std::to_string(line_no) + ": expected " +
                                 std::to_string(dim_) + " values, got " + std::to_string(k));
            table_.emplace(std::move(label), std::move(v));
        }
        if (count >= 0 && static_cast<std::size_t>(count) != table_.size())
            throw IntegrityError(path + ": header count " + std::to_string(count) +
                                 " != record count " + std::to_string(table_.size()));
    }

    int dim() const override { return dim_; }

    Vector embed(const std::string& text) const override {
        auto it = table_.find(text);
        if (it == table_.end()) throw LookupError("no embedding for: " + text);
        return it->second;
    }

private:
    int dim_ = 0;
    std::unordered_map<std::string, Vector> table_;
};

// ---------------------------------------------------------------------------
// Remote backend: chat-embeddings style endpoint.
// POST {"input": [strings], "model": str} -> {"data":[{"embedding":[...]}]}.
// Endpoint/key resolve from LMX_EMBED_URL / LMX_API_KEY when not given.
// ---------------------------------------------------------------------------

struct RemoteEmbeddingConfig {
    std::string endpoint;   // falls back to $LMX_EMBED_URL
    std::string api_key;    // falls back to $LMX_API_KEY
    std::string model = "text-embedding";
    int dim = 0;            // declared dimension, validated against responses
    RetryPolicy retry;
    int max_inflight = 4;
};

class RemoteProvider final : public EmbeddingProvider {
public:
    RemoteProvider(RemoteEmbeddingConfig cfg, std::shared_ptr<Transport> transport,
                   std::shared_ptr<Clock> clock)
        : cfg_(std::move(cfg)),
          transport_(std::move(transport)),
          clock_(std::move(clock)),
          limiter_(cfg_.max_inflight) {
        if (cfg_.endpoint.empty()) {
            const char* env = std::getenv("LMX_EMBED_URL");
            if (env) cfg_.endpoint = env;
        }
        if (cfg_.api_key.empty()) {
            const char* env = std::getenv("LMX_API_KEY");
            if (env) cfg_.api_key = env;
        }
        if (cfg_.endpoint.empty())
            throw ConfigError("remote embedding backend requires an endpoint "
                              "(flag or LMX_EMBED_URL)");
        if (cfg_.dim < 1) throw ConfigError("remote embedding backend requires dim > 0");
    }

    int dim() const override { return cfg_.dim; }

    Vector embed(const std::string& text) const override {
        InflightLimiter::Slot slot(limiter_);
        nlohmann::json body = {{"input", {text}}, {"model", cfg_.model}};
        HttpRequest req;
        req.url = cfg_.endpoint;
        req.body = body.dump();
        if (!cfg_.api_key.empty())
            req.headers.emplace_back("Authorization", "Bearer " + cfg_.api_key);
        HttpResponse resp = post_with_retry(*transport_, *clock_, req, cfg_.retry);
        if (resp.status != 200)
            throw TransportError("embedding endpoint returned HTTP " +
                                 std::to_string(resp.status));
        nlohmann::json parsed;
        try {
            parsed = nlohmann::json::parse(resp.body);
        } catch (const nlohmann::json::exception& e) {
            throw ProtocolError(std::string("embedding response is not JSON: ") + e.what());
        }
        if (!parsed.contains("data") || !parsed["data"].is_array() || parsed["data"].empty() ||
            !parsed["data"][0].contains("embedding"))
            throw ProtocolError("embedding response missing data[0].embedding");
        const auto& arr = parsed["data"][0]["embedding"];
        if (!arr.is_array() || static_cast<int>(arr.size()) != cfg_.dim)
            throw ProtocolError("embedding dimension mismatch: expected " +
                                std::to_string(cfg_.dim) + ", got " +
                                std::to_string(arr.size()));
        Vector v(cfg_.dim);
        for (int k = 0; k < cfg_.dim; ++k) v[k] = arr[static_cast<std::size_t>(k)].get<double>();
        return v;
    }

private:
    RemoteEmbeddingConfig cfg_;
    std::shared_ptr<Transport> transport_;
    std::shared_ptr<Clock> clock_;
    mutable InflightLimiter limiter_;
};

}  // namespace lmx
