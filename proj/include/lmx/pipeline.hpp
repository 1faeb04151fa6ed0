#pragma once

// Dataset-to-candidates plumbing: load JSONL items, ground them in the
// knowledge graph, and build one element graph per answer choice (that
// choice's matches fill the answer slot; the question/context slots are
// shared across the item's candidates).

#include <fstream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmx/common.hpp"
#include "lmx/element_graph.hpp"
#include "lmx/embedding.hpp"
#include "lmx/kg.hpp"
#include "lmx/reasoner.hpp"

namespace lmx {

struct DatasetItem {
    std::string id;
    std::string question;
    std::vector<std::string> choices;
    int answer = 0;  // gold index
};

// JSONL, one {"id", "question", "choices", "answer"} object per line.
inline std::vector<DatasetItem> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open dataset '" + path + "'");
    std::vector<DatasetItem> items;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where =
            "dataset '" + path + "' line " + std::to_string(line_no);
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw ParseError(where + ": invalid JSON");
        if (!j.contains("id") || !j["id"].is_string() ||
            !j.contains("question") || !j["question"].is_string() ||
            !j.contains("choices") || !j["choices"].is_array() ||
            !j.contains("answer") || !j["answer"].is_number_integer())
            throw ParseError(where +
                             ": expected {id, question, choices, answer}");
        DatasetItem item;
        item.id = j["id"].get<std::string>();
        item.question = j["question"].get<std::string>();
        for (const auto& c : j["choices"]) {
            if (!c.is_string())
                throw ParseError(where + ": choices must be strings");
            item.choices.push_back(c.get<std::string>());
        }
        item.answer = j["answer"].get<int>();
        if (item.choices.size() < 2)
            throw DataError(where + ": need at least 2 choices");
        if (item.answer < 0 ||
            item.answer >= static_cast<int>(item.choices.size()))
            throw DataError(where + ": answer index out of range");
        items.push_back(std::move(item));
    }
    if (items.empty()) throw DataError("dataset '" + path + "' is empty");
    return items;
}

struct GraphBuildConfig {
    int hops = 2;           // neighborhood radius L
    int top_k = 200;        // pruning budget K
    ScoreMode score_mode = ScoreMode::kCosine;
    Pooling pooling = Pooling::kMean;
    std::uint64_t relevance_seed = 0;  // scorer init when score_mode = mlp
};

// Stateless per-item graph builder over one KG + one embedding provider.
class GraphPipeline {
public:
    GraphPipeline(const KnowledgeGraph& kg, const EmbeddingProvider& provider,
                  GraphBuildConfig cfg)
        : kg_(kg), provider_(provider), cfg_(cfg) {
        if (cfg_.hops < 0) throw ArgumentError("hops must be >= 0");
        if (cfg_.top_k < 1) throw ArgumentError("top-k must be >= 1");
        if (cfg_.score_mode == ScoreMode::kMlp)
            mlp_ = std::make_unique<RelevanceMlp>(provider_.dim(),
                                                  cfg_.relevance_seed);
    }

    const GraphBuildConfig& config() const { return cfg_; }

    Candidate build_candidate(const DatasetItem& item, const GroundedInput& gi,
                              int choice) const {
        if (choice < 0 || choice >= static_cast<int>(item.choices.size()))
            throw ArgumentError("choice index out of range");
        SeedSpec seeds;
        seeds.question = gi.question_nodes;
        seeds.answer = gi.choice_nodes[static_cast<std::size_t>(choice)];
        seeds.context = gi.context_nodes;

        std::set<std::int32_t> roots = seeds.question;
        roots.insert(seeds.answer.begin(), seeds.answer.end());
        roots.insert(seeds.context.begin(), seeds.context.end());
        if (roots.empty())
            throw DataError("item '" + item.id +
                            "' grounds to no graph concepts");

        auto gk = kg_.khop_neighborhood(roots, cfg_.hops);
        Vector z = provider_.lm_representation(
            item.question, item.choices[static_cast<std::size_t>(choice)],
            cfg_.pooling);

        Candidate cand;
        cand.choice_text = item.choices[static_cast<std::size_t>(choice)];
        cand.graph = build_element_graph(kg_, seeds, gk, cfg_.top_k, z,
                                         provider_, cfg_.score_mode, mlp_.get());
        cand.h_lm = z;
        return cand;
    }

    TrainItem build_item(const DatasetItem& item) const {
        auto gi = kg_.ground(item.question, item.choices);
        TrainItem ti;
        ti.id = item.id;
        ti.gold = item.answer;
        for (int c = 0; c < static_cast<int>(item.choices.size()); ++c)
            ti.candidates.push_back(build_candidate(item, gi, c));
        return ti;
    }

    std::vector<TrainItem> build_items(
        const std::vector<DatasetItem>& items) const {
        std::vector<TrainItem> out;
        out.reserve(items.size());
        for (const auto& item : items) out.push_back(build_item(item));
        return out;
    }

private:
    const KnowledgeGraph& kg_;
    const EmbeddingProvider& provider_;
    GraphBuildConfig cfg_;
    std::unique_ptr<RelevanceMlp> mlp_;
};

}  // namespace lmx
