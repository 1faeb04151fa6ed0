#pragma once

// Command-line surface over the library: seven subcommands sharing one
// option-resolution scheme. Every option value resolves as
//
//   explicit flag  >  --config file (key=value)  >  LMX_<KEY> environment
//   variable  >  checkpoint echo (infer/explain, pipeline keys only)  >
//   built-in default
//
// Config files use the flag name without dashes as the key (`top-k=50`);
// `#` starts a comment. Environment names upper-snake the key (`LMX_TOP_K`).

#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lmx/common.hpp"
#include "lmx/debugger.hpp"
#include "lmx/eval.hpp"
#include "lmx/explainer.hpp"
#include "lmx/kg.hpp"
#include "lmx/llm_client.hpp"
#include "lmx/pipeline.hpp"
#include "lmx/reasoner.hpp"
#include "lmx/synthetic.hpp"
#include "lmx/text_template.hpp"

namespace lmx::cli {

// ---------------------------------------------------------------------------
// Option resolution
// ---------------------------------------------------------------------------

inline std::string upper_snake(const std::string& key) {
    std::string out;
    for (char c : key)
        out.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(
                                           static_cast<unsigned char>(c))));
    return out;
}

template <class T>
T parse_value(const std::string& text, const std::string& key) {
    if constexpr (std::is_same_v<T, std::string>) {
        return text;
    } else {
        std::istringstream in(text);
        T value{};
        in >> value;
        if (in.fail() || !(in >> std::ws).eof())
            throw ConfigError("bad value for '" + key + "': '" + text + "'");
        return value;
    }
}

// `key=value` lines; `#` starts a comment; keys validated against the set of
// flags registered across all subcommands.
inline std::map<std::string, std::string> load_config_file(
    const std::string& path, const std::set<std::string>& known_keys) {
    std::map<std::string, std::string> out;
    if (path.empty()) return out;
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::string line;
    int line_no = 0;
    auto trim = [](std::string s) {
        auto a = s.find_first_not_of(" \t\r");
        auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config '" + path + "' line " +
                              std::to_string(line_no) + ": expected key=value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config '" + path + "' line " +
                              std::to_string(line_no) + ": empty key");
        if (!known_keys.count(key))
            throw ConfigError("config '" + path + "' line " +
                              std::to_string(line_no) + ": unknown key '" +
                              key + "'");
        out[key] = value;  // later lines win
    }
    return out;
}

// Registers flags on a subcommand and replays file/env values into the bound
// storage after parsing, honouring the precedence order above.
class FlagBinder {
public:
    FlagBinder(CLI::App* cmd, std::set<std::string>* registry)
        : cmd_(cmd), registry_(registry) {}

    template <class T>
    CLI::Option* add(T& var, const std::string& flag, const std::string& help) {
        CLI::Option* opt = cmd_->add_option(flag, var, help)->capture_default_str();
        const std::string key = flag.substr(2);
        if (registry_) registry_->insert(key);
        const std::string env = "LMX_" + upper_snake(key);
        fixups_.push_back([&var, opt, key, env](
                              const std::map<std::string, std::string>& file,
                              std::set<std::string>& satisfied) {
            if (opt->count() > 0) {
                satisfied.insert(key);
                return;
            }
            auto it = file.find(key);
            if (it != file.end()) {
                var = parse_value<T>(it->second, key);
                satisfied.insert(key);
                return;
            }
            if (const char* e = std::getenv(env.c_str())) {
                var = parse_value<T>(e, key);
                satisfied.insert(key);
            }
        });
        return opt;
    }

    // Returns the keys pinned by flag, file, or environment; everything else
    // still holds its default and may be overridden by a checkpoint echo.
    std::set<std::string> resolve(
        const std::map<std::string, std::string>& file) const {
        std::set<std::string> satisfied;
        for (const auto& f : fixups_) f(file, satisfied);
        return satisfied;
    }

private:
    CLI::App* cmd_;
    std::set<std::string>* registry_;
    std::vector<std::function<void(const std::map<std::string, std::string>&,
                                   std::set<std::string>&)>>
        fixups_;
};

template <class T>
void echo_override(const std::set<std::string>& satisfied,
                   const nlohmann::json& echo, const std::string& key, T& var) {
    if (satisfied.count(key)) return;
    if (echo.contains(key)) var = echo.at(key).get<T>();
}

// ---------------------------------------------------------------------------
// Validation helpers
// ---------------------------------------------------------------------------

inline void require_value(const std::string& value, const std::string& flag) {
    if (value.empty()) throw ConfigError(flag + " is required");
}

inline void require_path(const std::string& value, const std::string& flag,
                         const std::string& what) {
    require_value(value, flag);
    if (!std::filesystem::exists(value))
        throw ConfigError(flag + ": " + what + " not found: '" + value + "'");
}

inline ScoreMode parse_score_mode(const std::string& s) {
    if (s == "cosine") return ScoreMode::kCosine;
    if (s == "mlp") return ScoreMode::kMlp;
    throw ConfigError("--score-mode must be cosine|mlp, got '" + s + "'");
}

inline Pooling parse_pooling(const std::string& s) {
    if (s == "mean") return Pooling::kMean;
    if (s == "first") return Pooling::kFirstToken;
    throw ConfigError("--pooling must be mean|first, got '" + s + "'");
}

// ---------------------------------------------------------------------------
// Shared flag groups
// ---------------------------------------------------------------------------

struct GraphFlags {
    std::string kg;
    std::string relations;
    int hops = 2;
    int top_k = 200;
    std::string score_mode = "cosine";
    std::string pooling = "mean";
    std::uint64_t relevance_seed = 0;

    void register_on(FlagBinder& b) {
        b.add(kg, "--kg", "knowledge-graph edge TSV (head<TAB>relation<TAB>tail)");
        b.add(relations, "--relations", "relation vocabulary, one name per line");
        b.add(hops, "--hops", "neighborhood radius around grounded seeds");
        b.add(top_k, "--top-k", "element-graph node budget");
        b.add(score_mode, "--score-mode", "relevance scorer: cosine|mlp");
        b.add(pooling, "--pooling", "token pooling: mean|first");
        b.add(relevance_seed, "--relevance-seed", "mlp scorer init seed");
    }

    GraphBuildConfig build_config() const {
        GraphBuildConfig cfg;
        cfg.hops = hops;
        cfg.top_k = top_k;
        cfg.score_mode = parse_score_mode(score_mode);
        cfg.pooling = parse_pooling(pooling);
        cfg.relevance_seed = relevance_seed;
        return cfg;
    }

    KnowledgeGraph load_kg() const {
        require_path(kg, "--kg", "knowledge-graph file");
        if (!relations.empty())
            require_path(relations, "--relations", "relation vocabulary");
        return KnowledgeGraph::load(kg, relations);
    }
};

struct ProviderFlags {
    std::string provider = "synthetic";
    int embed_dim = 200;
    std::uint64_t embed_seed = 0;
    std::string embed_table;
    std::string embed_endpoint;
    std::string embed_model = "text-embedding";

    void register_on(FlagBinder& b) {
        b.add(provider, "--provider", "embedding backend: synthetic|file|remote");
        b.add(embed_dim, "--embed-dim", "embedding width D");
        b.add(embed_seed, "--embed-seed", "synthetic backend hash seed");
        b.add(embed_table, "--embed-table", "file backend: label<TAB>v1,..,vD table");
        b.add(embed_endpoint, "--embed-endpoint", "remote backend URL");
        b.add(embed_model, "--embed-model", "remote backend model id");
    }

    std::unique_ptr<EmbeddingProvider> make() const {
        if (provider == "synthetic")
            return std::make_unique<SyntheticProvider>(embed_dim, embed_seed);
        if (provider == "file") {
            require_path(embed_table, "--embed-table", "embedding table");
            return std::make_unique<FileTableProvider>(embed_table);
        }
        if (provider == "remote") {
            RemoteEmbeddingConfig rc;
            rc.endpoint = embed_endpoint;
            rc.model = embed_model;
            rc.dim = embed_dim;
            return std::make_unique<RemoteProvider>(
                rc, std::make_shared<HttplibTransport>(),
                std::make_shared<SystemClock>());
        }
        throw ConfigError("--provider must be synthetic|file|remote, got '" +
                          provider + "'");
    }
};

struct ClientFlags {
    std::string mode = "mock";
    std::string endpoint;
    std::string api_key;
    std::string model = "gpt-4";
    double temperature = 0.0;
    int max_tokens = 512;
    std::string cassette;
    std::string fixtures_file;
    std::string fixture_default;
    int retries = 2;
    double backoff_base = 1.0;
    double backoff_factor = 2.0;
    int max_inflight = 4;
    double timeout = 30.0;

    void register_on(FlagBinder& b) {
        b.add(mode, "--client-mode", "chat backend: live|mock|record|replay");
        b.add(endpoint, "--endpoint", "chat completions URL (or LMX_LLM_URL)");
        b.add(api_key, "--api-key", "bearer token (or LMX_API_KEY)");
        b.add(model, "--model", "chat model id sent in requests");
        b.add(temperature, "--temperature", "sampling temperature");
        b.add(max_tokens, "--max-tokens", "completion token cap");
        b.add(cassette, "--cassette", "JSONL request/response tape (record|replay)");
        b.add(fixtures_file, "--fixtures", "mock: JSON object of prompt -> reply");
        b.add(fixture_default, "--fixture-default", "mock: reply for unknown prompts");
        b.add(retries, "--retries", "extra attempts after a failed request");
        b.add(backoff_base, "--backoff-base", "seconds before the first retry");
        b.add(backoff_factor, "--backoff-factor", "retry delay multiplier");
        b.add(max_inflight, "--max-inflight", "concurrent request cap");
        b.add(timeout, "--timeout", "per-request timeout in seconds");
    }

    static std::map<std::string, std::string> load_fixtures(
        const std::string& path) {
        require_path(path, "--fixtures", "fixture file");
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_file(path));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("fixtures '" + path + "': " + e.what());
        }
        if (!j.is_object())
            throw ParseError("fixtures '" + path + "' must be a JSON object");
        std::map<std::string, std::string> out;
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!it.value().is_string())
                throw ParseError("fixtures '" + path +
                                 "': values must be strings");
            out[it.key()] = it.value().get<std::string>();
        }
        return out;
    }

    ChatClient make() const {
        ClientConfig cc;
        cc.mode = parse_client_mode(mode);
        cc.endpoint = endpoint;
        cc.api_key = api_key;
        cc.model = model;
        cc.temperature = temperature;
        cc.max_tokens = max_tokens;
        cc.cassette_path = cassette;
        if (!fixtures_file.empty()) cc.fixtures = load_fixtures(fixtures_file);
        if (!fixture_default.empty()) cc.fixture_default = fixture_default;
        cc.retry.max_retries = retries;
        cc.retry.backoff_base = backoff_base;
        cc.retry.backoff_factor = backoff_factor;
        cc.max_inflight = max_inflight;
        cc.timeout_seconds = timeout;
        // Offline modes get a pinned clock so reruns are byte-identical.
        const bool offline = cc.mode == ClientMode::kMock ||
                             cc.mode == ClientMode::kReplay;
        std::shared_ptr<Clock> clock;
        if (offline)
            clock = std::make_shared<FixedClock>(0);
        else
            clock = std::make_shared<SystemClock>();
        return ChatClient(std::move(cc), nullptr, std::move(clock));
    }
};

struct ModelFlags {
    int feature_dim = 200;
    int layers = 5;
    double dropout = 0.2;
    int type_dim = 16;
    int zeta_dim = 16;
    int score_dim = 16;
    std::uint64_t seed = 0;

    void register_on(FlagBinder& b) {
        b.add(feature_dim, "--feature-dim", "node feature width F");
        b.add(layers, "--layers", "attention layers");
        b.add(dropout, "--dropout", "attention dropout rate (training only)");
        b.add(type_dim, "--type-dim", "node-type embedding width");
        b.add(zeta_dim, "--zeta-dim", "relation embedding width");
        b.add(score_dim, "--score-dim", "relevance-score embedding width");
        b.add(seed, "--seed", "parameter init / shuffle / dropout seed");
    }
};

struct TrainFlags {
    int epochs = 5;
    int batch_size = 64;
    double lr_gnn = 1e-3;
    double lr_provider = 1e-5;
    double weight_decay = 0.01;

    void register_on(FlagBinder& b) {
        b.add(epochs, "--epochs", "passes over the training set");
        b.add(batch_size, "--batch-size", "items per optimizer step");
        b.add(lr_gnn, "--lr-gnn", "network/head learning rate");
        b.add(lr_provider, "--lr-provider", "provider learning rate (reserved)");
        b.add(weight_decay, "--weight-decay", "decoupled weight decay");
    }
};

// Pipeline settings recorded in the checkpoint and replayed at inference
// unless overridden explicitly. Keys match the config-file spelling.
inline nlohmann::json pipeline_echo(const GraphFlags& g, const ProviderFlags& p) {
    return nlohmann::json{{"hops", g.hops},
                          {"top-k", g.top_k},
                          {"score-mode", g.score_mode},
                          {"pooling", g.pooling},
                          {"relevance-seed", g.relevance_seed},
                          {"provider", p.provider},
                          {"embed-dim", p.embed_dim},
                          {"embed-seed", p.embed_seed},
                          {"embed-table", p.embed_table},
                          {"embed-endpoint", p.embed_endpoint},
                          {"embed-model", p.embed_model}};
}

inline void apply_pipeline_echo(const std::set<std::string>& satisfied,
                                const nlohmann::json& echo, GraphFlags& g,
                                ProviderFlags& p) {
    echo_override(satisfied, echo, "hops", g.hops);
    echo_override(satisfied, echo, "top-k", g.top_k);
    echo_override(satisfied, echo, "score-mode", g.score_mode);
    echo_override(satisfied, echo, "pooling", g.pooling);
    echo_override(satisfied, echo, "relevance-seed", g.relevance_seed);
    echo_override(satisfied, echo, "provider", p.provider);
    echo_override(satisfied, echo, "embed-dim", p.embed_dim);
    echo_override(satisfied, echo, "embed-seed", p.embed_seed);
    echo_override(satisfied, echo, "embed-table", p.embed_table);
    echo_override(satisfied, echo, "embed-endpoint", p.embed_endpoint);
    echo_override(satisfied, echo, "embed-model", p.embed_model);
}

// The checkpoint pins the widths the graph and provider must reproduce.
inline void check_checkpoint_compat(Reasoner& reasoner,
                                    const KnowledgeGraph& kg,
                                    const EmbeddingProvider& provider) {
    const GatConfig& cfg = reasoner.network().config();
    if (provider.dim() != cfg.embed_dim)
        throw IntegrityError("checkpoint expects embedding width " +
                             std::to_string(cfg.embed_dim) + " but the provider yields " +
                             std::to_string(provider.dim()));
    if (kg.relation_count() != cfg.relation_count)
        throw IntegrityError("checkpoint was trained with " +
                             std::to_string(cfg.relation_count) +
                             " relations but the graph has " +
                             std::to_string(kg.relation_count()));
}

// ---------------------------------------------------------------------------
// Output + worker helpers
// ---------------------------------------------------------------------------

inline void write_lines(const std::string& out,
                        const std::vector<std::string>& lines,
                        const std::string& what) {
    if (out.empty() || out == "-") {
        for (const auto& l : lines) std::cout << l << '\n';
        return;
    }
    std::ofstream f(out);
    if (!f) throw ConfigError("cannot write " + what + " to '" + out + "'");
    for (const auto& l : lines) f << l << '\n';
    f.flush();
    if (!f) throw ConfigError("failed writing " + what + " to '" + out + "'");
    std::cerr << "wrote " << lines.size() << " " << what << " to " << out << "\n";
}

inline void write_text(const std::string& out, const std::string& text,
                       const std::string& what) {
    if (out.empty() || out == "-") {
        std::cout << text;
        return;
    }
    write_file(out, text);
    std::cerr << "wrote " << what << " to " << out << "\n";
}

// Runs fn(0..n-1) on `jobs` workers; stops issuing new work after the first
// failure and returns {index -> exception} for everything that threw.
template <class Fn>
std::map<int, std::exception_ptr> parallel_for(int n, int jobs, Fn&& fn) {
    if (jobs < 1) throw ConfigError("--jobs must be >= 1");
    std::map<int, std::exception_ptr> errors;
    if (n <= 0) return errors;
    jobs = std::min(jobs, n);
    if (jobs == 1) {
        for (int i = 0; i < n; ++i) {
            try {
                fn(i);
            } catch (...) {
                errors.emplace(i, std::current_exception());
                break;
            }
        }
        return errors;
    }
    std::atomic<int> next{0};
    std::atomic<bool> stop{false};
    std::mutex mu;
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(jobs));
    for (int w = 0; w < jobs; ++w) {
        workers.emplace_back([&] {
            while (!stop.load()) {
                int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mu);
                    errors.emplace(i, std::current_exception());
                    stop.store(true);
                    return;
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    return errors;
}

inline void rethrow_first(std::map<int, std::exception_ptr>& errors) {
    if (!errors.empty()) std::rethrow_exception(errors.begin()->second);
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct GenSyntheticCmd {
    std::string out_dir;
    std::uint64_t seed = 1;
    int train_items = 500;
    int test_items = 100;
    int choices = 4;
    std::string config_path;
    FlagBinder binder;

    GenSyntheticCmd(CLI::App* cmd, std::set<std::string>* registry)
        : binder(cmd, registry) {
        binder.add(out_dir, "--out-dir", "directory for the generated benchmark");
        binder.add(seed, "--seed", "generator seed");
        binder.add(train_items, "--train-items", "training items to emit");
        binder.add(test_items, "--test-items", "held-out items to emit");
        binder.add(choices, "--choices", "answer options per item");
        cmd->add_option("--config", config_path, "key=value config file");
    }

    void run(const std::set<std::string>& registry) {
        binder.resolve(load_config_file(config_path, registry));
        require_value(out_dir, "--out-dir");
        SyntheticConfig cfg;
        cfg.seed = seed;
        cfg.train_items = train_items;
        cfg.test_items = test_items;
        cfg.choices = choices;
        write_synthetic(generate_synthetic(cfg), out_dir);
        std::cout << "wrote kg.tsv relations.txt train.jsonl test.jsonl "
                     "paths.jsonl to "
                  << out_dir << "\n";
    }
};

struct BuildGraphCmd {
    GraphFlags g;
    ProviderFlags p;
    std::string dataset;
    int index = 0;
    int choice = 0;
    std::string out = "-";
    std::string config_path;
    FlagBinder binder;

    BuildGraphCmd(CLI::App* cmd, std::set<std::string>* registry)
        : binder(cmd, registry) {
        g.register_on(binder);
        p.register_on(binder);
        binder.add(dataset, "--dataset", "JSONL items {id, question, choices, answer}");
        binder.add(index, "--index", "dataset row to build");
        binder.add(choice, "--choice", "answer option to place in the answer slot");
        binder.add(out, "--out", "output path, - for stdout");
        cmd->add_option("--config", config_path, "key=value config file");
    }

    void run(const std::set<std::string>& registry) {
        binder.resolve(load_config_file(config_path, registry));
        auto kg = g.load_kg();
        require_path(dataset, "--dataset", "dataset");
        auto items = load_dataset(dataset);
        if (index < 0 || index >= static_cast<int>(items.size()))
            throw ArgumentError("--index " + std::to_string(index) +
                                " out of range; dataset has " +
                                std::to_string(items.size()) + " items");
        auto provider = p.make();
        GraphPipeline pipe(kg, *provider, g.build_config());
        const auto& item = items[static_cast<std::size_t>(index)];
        auto gi = kg.ground(item.question, item.choices);
        auto cand = pipe.build_candidate(item, gi, choice);
        nlohmann::json j;
        j["id"] = item.id;
        j["choice_index"] = choice;
        j["choice_text"] = cand.choice_text;
        j["graph"] = element_graph_to_json(cand.graph, kg);
        write_text(out, j.dump(2) + "\n", "element graph");
    }
};

struct TrainCmd {
    GraphFlags g;
    ProviderFlags p;
    ModelFlags m;
    TrainFlags t;
    std::string dataset;
    std::string dev;
    std::string checkpoint_out;
    std::string metrics;
    std::string config_path;
    FlagBinder binder;

    TrainCmd(CLI::App* cmd, std::set<std::string>* registry)
        : binder(cmd, registry) {
        g.register_on(binder);
        p.register_on(binder);
        m.register_on(binder);
        t.register_on(binder);
        binder.add(dataset, "--dataset", "training items JSONL");
        binder.add(dev, "--dev", "held-out items JSONL for per-epoch accuracy");
        binder.add(checkpoint_out, "--checkpoint-out", "where to save the model");
        binder.add(metrics, "--metrics", "CSV log: epoch,step,loss,train_acc,dev_acc");
        cmd->add_option("--config", config_path, "key=value config file");
    }

    void run(const std::set<std::string>& registry) {
        binder.resolve(load_config_file(config_path, registry));
        require_value(checkpoint_out, "--checkpoint-out");
        auto kg = g.load_kg();
        require_path(dataset, "--dataset", "dataset");
        auto provider = p.make();
        GraphPipeline pipe(kg, *provider, g.build_config());

        auto train_items = pipe.build_items(load_dataset(dataset));
        std::vector<TrainItem> dev_items;
        if (!dev.empty()) {
            require_path(dev, "--dev", "dev dataset");
            dev_items = pipe.build_items(load_dataset(dev));
        }

        GatConfig gc;
        gc.feature_dim = m.feature_dim;
        gc.embed_dim = provider->dim();
        gc.layers = m.layers;
        gc.relation_count = kg.relation_count();
        gc.type_dim = m.type_dim;
        gc.zeta_dim = m.zeta_dim;
        gc.score_dim = m.score_dim;
        gc.dropout = m.dropout;
        gc.seed = m.seed;
        Reasoner reasoner(gc);

        TrainingConfig tc;
        tc.epochs = t.epochs;
        tc.batch_size = t.batch_size;
        tc.lr_gnn = t.lr_gnn;
        tc.lr_provider = t.lr_provider;
        tc.weight_decay = t.weight_decay;
        tc.seed = m.seed;

        std::ofstream metrics_file;
        std::ostream* metrics_out = nullptr;
        if (!metrics.empty()) {
            metrics_file.open(metrics);
            if (!metrics_file)
                throw ConfigError("cannot write metrics to '" + metrics + "'");
            metrics_out = &metrics_file;
        }

        auto stats = reasoner.train(train_items, dev_items, tc, metrics_out);
        reasoner.save(checkpoint_out, pipeline_echo(g, p));
        std::cout << "steps=" << stats.steps << " final_loss=" << stats.final_loss
                  << " train_acc=" << stats.train_accuracy
                  << " dev_acc=" << stats.dev_accuracy << "\n"
                  << "saved checkpoint to " << checkpoint_out << "\n";
    }
};

struct InferCmd {
    GraphFlags g;
    ProviderFlags p;
    std::string dataset;
    std::string checkpoint;
    std::string out = "-";
    int jobs = 1;
    std::string config_path;
    FlagBinder binder;

    InferCmd(CLI::App* cmd, std::set<std::string>* registry)
        : binder(cmd, registry) {
        g.register_on(binder);
        p.register_on(binder);
        binder.add(dataset, "--dataset", "items JSONL to score");
        binder.add(checkpoint, "--checkpoint", "trained model file");
        binder.add(out, "--out", "predictions JSONL, - for stdout");
        binder.add(jobs, "--jobs", "worker threads");
        cmd->add_option("--config", config_path, "key=value config file");
    }

    void run(const std::set<std::string>& registry) {
        auto satisfied = binder.resolve(load_config_file(config_path, registry));
        require_path(checkpoint, "--checkpoint", "checkpoint");
        nlohmann::json echo;
        Reasoner reasoner = Reasoner::load(checkpoint, &echo);
        apply_pipeline_echo(satisfied, echo, g, p);

        auto kg = g.load_kg();
        require_path(dataset, "--dataset", "dataset");
        auto provider = p.make();
        check_checkpoint_compat(reasoner, kg, *provider);
        GraphPipeline pipe(kg, *provider, g.build_config());
        auto items = load_dataset(dataset);

        const int n = static_cast<int>(items.size());
        std::vector<std::string> lines(static_cast<std::size_t>(n));
        std::atomic<int> correct{0};
        auto errors = parallel_for(n, jobs, [&](int i) {
            const auto& item = items[static_cast<std::size_t>(i)];
            auto ti = pipe.build_item(item);
            auto pred = reasoner.predict(ti.candidates);
            if (pred.predicted == item.answer) ++correct;
            nlohmann::json j;
            j["id"] = item.id;
            j["predicted"] = pred.predicted;
            j["display"] = format_choice(
                pred.predicted,
                item.choices[static_cast<std::size_t>(pred.predicted)]);
            j["gold"] = item.answer;
            j["correct"] = pred.predicted == item.answer;
            j["probabilities"] = pred.probabilities;
            lines[static_cast<std::size_t>(i)] = j.dump();
        });
        rethrow_first(errors);
        write_lines(out, lines, "predictions");
        std::cerr << "accuracy=" << (static_cast<double>(correct) / n) << " ("
                  << correct << "/" << n << ")\n";
    }
};

struct ExplainCmd {
    GraphFlags g;
    ProviderFlags p;
    ClientFlags c;
    std::string dataset;
    std::string checkpoint;
    std::string stage1 = "templates/stage1.txt";
    std::string stage2 = "templates/stage2.txt";
    std::string task_type = "multiple-choice question answering";
    int top_w = 5;
    int limit = 0;
    int jobs = 1;
    std::string out = "bundles.jsonl";
    std::string config_path;
    FlagBinder binder;

    ExplainCmd(CLI::App* cmd, std::set<std::string>* registry)
        : binder(cmd, registry) {
        g.register_on(binder);
        p.register_on(binder);
        c.register_on(binder);
        binder.add(dataset, "--dataset", "items JSONL to explain");
        binder.add(checkpoint, "--checkpoint", "trained model file");
        binder.add(stage1, "--stage1-template", "why-this-choice prompt template");
        binder.add(stage2, "--stage2-template", "why-not-the-others prompt template");
        binder.add(task_type, "--task-type", "task description used in prompts");
        binder.add(top_w, "--top-w", "reason elements to keep");
        binder.add(limit, "--limit", "explain only the first N items (0 = all)");
        binder.add(jobs, "--jobs", "worker threads");
        binder.add(out, "--out", "bundles JSONL, - for stdout");
        cmd->add_option("--config", config_path, "key=value config file");
    }

    void run(const std::set<std::string>& registry) {
        auto satisfied = binder.resolve(load_config_file(config_path, registry));
        require_path(checkpoint, "--checkpoint", "checkpoint");
        nlohmann::json echo;
        Reasoner reasoner = Reasoner::load(checkpoint, &echo);
        apply_pipeline_echo(satisfied, echo, g, p);

        auto kg = g.load_kg();
        require_path(dataset, "--dataset", "dataset");
        auto provider = p.make();
        check_checkpoint_compat(reasoner, kg, *provider);
        GraphPipeline pipe(kg, *provider, g.build_config());

        require_path(stage1, "--stage1-template", "template");
        require_path(stage2, "--stage2-template", "template");
        Explainer explainer = Explainer::from_files(stage1, stage2, task_type);
        ChatClient client = c.make();

        auto items = load_dataset(dataset);
        if (limit > 0 && limit < static_cast<int>(items.size()))
            items.resize(static_cast<std::size_t>(limit));

        const int n = static_cast<int>(items.size());
        std::vector<ExplanationBundle> bundles(static_cast<std::size_t>(n));
        auto errors = parallel_for(n, jobs, [&](int i) {
            const auto& item = items[static_cast<std::size_t>(i)];
            auto ti = pipe.build_item(item);
            auto pred = reasoner.predict(ti.candidates);
            auto& b = bundles[static_cast<std::size_t>(i)];
            b.id = item.id;
            b.question = item.question;
            b.choices = item.choices;
            b.predicted = pred.predicted;
            const auto& win =
                ti.candidates[static_cast<std::size_t>(pred.predicted)];
            b.elements = rank_reason_elements(
                win.graph,
                pred.forwards[static_cast<std::size_t>(pred.predicted)]
                    .final_attention(),
                top_w);
            generate_explanations(explainer, client, b);
        });

        if (!errors.empty()) {
            // Keep the finished prefix plus the failing item's partial bundle
            // so a rerun can resume; then surface the original error.
            const int k = errors.begin()->first;
            std::vector<std::string> lines;
            for (int i = 0; i < k; ++i)
                lines.push_back(
                    bundle_to_json(bundles[static_cast<std::size_t>(i)]).dump());
            lines.push_back(
                bundle_to_json(bundles[static_cast<std::size_t>(k)]).dump());
            write_lines(out, lines, "bundles (partial)");
            rethrow_first(errors);
        }

        std::vector<std::string> lines;
        lines.reserve(bundles.size());
        for (const auto& b : bundles)
            lines.push_back(bundle_to_json(b).dump());
        write_lines(out, lines, "bundles");
    }
};

struct DebugCmd {
    ClientFlags c;
    std::string bundles_path;
    std::string tmpl = "templates/debugger.txt";
    std::string model_name = "gpt-4";
    std::string task_type = "multiple-choice question answering";
    int threshold = kDefaultReliabilityThreshold;
    int jobs = 1;
    std::string out = "reports.jsonl";
    std::string config_path;
    FlagBinder binder;

    DebugCmd(CLI::App* cmd, std::set<std::string>* registry)
        : binder(cmd, registry) {
        c.register_on(binder);
        binder.add(bundles_path, "--bundles", "explanation bundles JSONL");
        binder.add(tmpl, "--debugger-template", "review prompt template");
        binder.add(model_name, "--model-name", "model named inside the review prompt");
        binder.add(task_type, "--task-type", "task description used in prompts");
        binder.add(threshold, "--threshold", "reliability cut on min(faithfulness, accuracy)");
        binder.add(jobs, "--jobs", "worker threads");
        binder.add(out, "--out", "reports JSONL, - for stdout");
        cmd->add_option("--config", config_path, "key=value config file");
    }

    void run(const std::set<std::string>& registry) {
        binder.resolve(load_config_file(config_path, registry));
        require_path(bundles_path, "--bundles", "bundles");
        auto bundles = load_bundles(bundles_path);
        require_path(tmpl, "--debugger-template", "template");
        TextTemplate review = TextTemplate::from_file(tmpl);
        ChatClient client = c.make();

        const int n = static_cast<int>(bundles.size());
        std::vector<std::string> lines(static_cast<std::size_t>(n));
        std::atomic<int> reliable{0};
        auto errors = parallel_for(n, jobs, [&](int i) {
            auto report =
                run_debugger(review, client, model_name, task_type,
                             bundles[static_cast<std::size_t>(i)], threshold);
            if (report.reliable) ++reliable;
            lines[static_cast<std::size_t>(i)] = report_to_json(report).dump();
        });
        rethrow_first(errors);
        write_lines(out, lines, "reports");
        std::cerr << "reliable=" << reliable << "/" << n << "\n";
    }
};

struct EvalCmd {
    std::string dataset;
    std::string bundles;
    std::string reports;
    std::string paths;
    std::string likert;
    int top_w = 5;
    std::string out = "-";
    std::string config_path;
    FlagBinder binder;

    EvalCmd(CLI::App* cmd, std::set<std::string>* registry)
        : binder(cmd, registry) {
        binder.add(dataset, "--dataset", "gold items JSONL");
        binder.add(bundles, "--bundles", "explanation bundles JSONL");
        binder.add(reports, "--reports", "debug reports JSONL (reliability matrix)");
        binder.add(paths, "--paths", "planted trails JSONL {id, planted}");
        binder.add(likert, "--likert", "human ratings, one 1..3 integer per line");
        binder.add(top_w, "--top-w", "elements considered for trail recall");
        binder.add(out, "--out", "report JSON, - for stdout");
        cmd->add_option("--config", config_path, "key=value config file");
    }

    void run(const std::set<std::string>& registry) {
        binder.resolve(load_config_file(config_path, registry));
        require_path(dataset, "--dataset", "dataset");
        require_path(bundles, "--bundles", "bundles");
        auto data = load_dataset(dataset);
        auto bs = load_bundles(bundles);
        std::map<std::string, std::vector<std::string>> planted;
        if (!paths.empty()) {
            require_path(paths, "--paths", "paths file");
            planted = load_planted_paths(paths);
        }
        std::map<std::string, bool> verdicts;
        if (!reports.empty()) {
            require_path(reports, "--reports", "reports");
            verdicts = load_verdicts(reports);
        }
        std::vector<int> ratings;
        if (!likert.empty()) {
            require_path(likert, "--likert", "Likert file");
            ratings = load_likert(likert);
        }
        auto result = evaluate_outputs(data, bs, planted, verdicts, ratings, top_w);
        write_text(out, eval_to_json(result).dump(2) + "\n", "eval report");
    }
};

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int run(int argc, char** argv) {
    CLI::App app{"element-graph grounded prediction, explanation, and review"};
    app.require_subcommand(1);
    std::set<std::string> registry;

    auto add = [&]<class Cmd>(const char* name, const char* help,
                              std::type_identity<Cmd>) {
        CLI::App* sub = app.add_subcommand(name, help);
        auto ctx = std::make_shared<Cmd>(sub, &registry);
        sub->callback([ctx, &registry] { ctx->run(registry); });
    };
    add("gen-synthetic", "emit a planted-path benchmark (KG + items + trails)",
        std::type_identity<GenSyntheticCmd>{});
    add("build-graph", "export one pruned element graph as JSON",
        std::type_identity<BuildGraphCmd>{});
    add("train", "fit the attention reasoner on a dataset",
        std::type_identity<TrainCmd>{});
    add("infer", "score items with a trained checkpoint",
        std::type_identity<InferCmd>{});
    add("explain", "predict, rank reason elements, and draft both stages",
        std::type_identity<ExplainCmd>{});
    add("debug", "review bundles on four dimensions and classify reliability",
        std::type_identity<DebugCmd>{});
    add("eval", "aggregate accuracy, trail recall, reliability, and ratings",
        std::type_identity<EvalCmd>{});

    try {
        app.parse(argc, argv);
        return 0;
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const LookupError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const IntegrityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const RenderError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const TransportError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const ProtocolError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const TrainingError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace lmx::cli
