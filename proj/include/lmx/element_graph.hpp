#pragma once

// Element-graph construction: score every candidate node's relevance to the
// input, keep the top-K (grounded seed nodes first), type the survivors, and
// induce the retained edges. Scores are frozen at construction; nothing here
// is trainable.

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmx/common.hpp"
#include "lmx/embedding.hpp"
#include "lmx/kg.hpp"
#include "lmx/mlp.hpp"

namespace lmx {

// Order is part of the numeric contract (type-table columns, pooling masks).
enum class NodeType : int { kContext = 0, kQuestion = 1, kAnswer = 2, kKg = 3 };

inline const char* node_type_name(NodeType t) {
    switch (t) {
        case NodeType::kContext: return "context";
        case NodeType::kQuestion: return "question";
        case NodeType::kAnswer: return "answer";
        case NodeType::kKg: return "kg";
    }
    return "kg";
}

inline NodeType node_type_from_name(const std::string& name) {
    if (name == "context") return NodeType::kContext;
    if (name == "question") return NodeType::kQuestion;
    if (name == "answer") return NodeType::kAnswer;
    if (name == "kg") return NodeType::kKg;
    throw ParseError("unknown node type: " + name);
}

struct ElementNode {
    std::int32_t kg_id = -1;   // id in the source knowledge graph
    std::string label;
    NodeType type = NodeType::kKg;
    double score = 0.0;
    Vector v_emb;
};

struct ElementEdge {
    std::int32_t head = 0;      // local node index
    std::int32_t relation = 0;  // knowledge-graph relation id
    std::int32_t tail = 0;      // local node index
};

struct ElementGraph {
    std::vector<ElementNode> nodes;  // ordered by ascending kg_id
    std::vector<ElementEdge> edges;  // induced, source edge order
    int budget = 0;                  // the K used at construction

    int node_count() const { return static_cast<int>(nodes.size()); }

    int local_index(std::int32_t kg_id) const {
        for (int i = 0; i < node_count(); ++i)
            if (nodes[static_cast<std::size_t>(i)].kg_id == kg_id) return i;
        return -1;
    }
};

// ---------------------------------------------------------------------------
// Relevance scoring
// ---------------------------------------------------------------------------

enum class ScoreMode { kCosine, kMlp };

// Fixed-seed two-layer scorer over [input-pool ; node-embedding].
class RelevanceMlp {
public:
    RelevanceMlp(int dim, std::uint64_t seed) : net_("relevance", 2 * dim, 2 * dim, 1) {
        Rng rng(seed);
        net_.init(rng);
    }

    double score(const Vector& z, const Vector& v) const {
        Vector x(z.size() + v.size());
        x << z, v;
        return net_.forward1(x)[0];
    }

private:
    Mlp2 net_;
};

inline double cosine_score(const Vector& z, const Vector& v) {
    double nz = z.norm(), nv = v.norm();
    if (nz < 1e-12 || nv < 1e-12) return 0.0;
    return z.dot(v) / (nz * nv);
}

inline double relevance_score(const Vector& z, const Vector& v, ScoreMode mode,
                              const RelevanceMlp* mlp = nullptr) {
    if (z.size() != v.size()) throw ArgumentError("relevance inputs must share a dimension");
    if (mode == ScoreMode::kCosine) return cosine_score(z, v);
    if (!mlp) throw ArgumentError("mlp scoring mode requires a scorer instance");
    return mlp->score(z, v);
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

// Which grounded nodes get which type. Precedence on overlap:
// answer > question > context (answer anchors must keep their type).
struct SeedSpec {
    std::set<std::int32_t> question;
    std::set<std::int32_t> answer;
    std::set<std::int32_t> context;

    bool contains(std::int32_t id) const {
        return question.count(id) || answer.count(id) || context.count(id);
    }

    NodeType type_of(std::int32_t id) const {
        if (answer.count(id)) return NodeType::kAnswer;
        if (question.count(id)) return NodeType::kQuestion;
        if (context.count(id)) return NodeType::kContext;
        return NodeType::kKg;
    }
};

// Keeps the K best-scored nodes of the neighborhood (seeds first; ties break
// (score desc, id asc)), types them from the seed spec, attaches embeddings
// and scores, and induces the surviving edges.
inline ElementGraph build_element_graph(const KnowledgeGraph& kg, const SeedSpec& seeds,
                                        const KnowledgeGraph::Subgraph& gk, int K,
                                        const Vector& z_emb, const EmbeddingProvider& provider,
                                        ScoreMode mode, const RelevanceMlp* mlp = nullptr) {
    if (K < 1) throw ArgumentError("pruning budget K must be >= 1");
    if (gk.nodes.empty()) throw ArgumentError("neighborhood must be non-empty");

    struct Scored {
        std::int32_t id;
        double score;
        bool seed;
    };
    std::vector<Scored> scored;
    scored.reserve(gk.nodes.size());
    std::vector<Vector> embs;
    embs.reserve(gk.nodes.size());
    for (auto id : gk.nodes) {
        Vector v = provider.embed_node(kg.label(id));
        double s = relevance_score(z_emb, v, mode, mlp);
        scored.push_back({id, s, seeds.contains(id)});
        embs.push_back(std::move(v));
    }

    // Seeds outrank everything; within each class (score desc, id asc).
    std::vector<std::size_t> order(scored.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scored[a].seed != scored[b].seed) return scored[a].seed;
        if (scored[a].score != scored[b].score) return scored[a].score > scored[b].score;
        return scored[a].id < scored[b].id;
    });
    std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(K), order.size());

    std::vector<std::size_t> kept(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
    // Presentation order: ascending kg id, independent of scores.
    std::sort(kept.begin(), kept.end(),
              [&](std::size_t a, std::size_t b) { return scored[a].id < scored[b].id; });

    ElementGraph eg;
    eg.budget = K;
    eg.nodes.reserve(kept.size());
    std::unordered_map<std::int32_t, std::int32_t> local;
    for (auto idx : kept) {
        ElementNode n;
        n.kg_id = scored[idx].id;
        n.label = kg.label(n.kg_id);
        n.type = seeds.type_of(n.kg_id);
        n.score = scored[idx].score;
        n.v_emb = embs[idx];
        local.emplace(n.kg_id, static_cast<std::int32_t>(eg.nodes.size()));
        eg.nodes.push_back(std::move(n));
    }
    for (auto ei : gk.edge_ids) {
        const Edge& e = kg.edge(ei);
        auto h = local.find(e.head);
        auto t = local.find(e.tail);
        if (h != local.end() && t != local.end())
            eg.edges.push_back({h->second, e.relation, t->second});
    }
    return eg;
}

// ---------------------------------------------------------------------------
// JSON export / import (the `build-graph` artifact and test fixture format)
// ---------------------------------------------------------------------------

inline nlohmann::json element_graph_to_json(const ElementGraph& eg,
                                            const KnowledgeGraph& kg) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : eg.nodes)
        nodes.push_back({{"id", n.kg_id},
                         {"label", n.label},
                         {"type", node_type_name(n.type)},
                         {"score", n.score}});
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : eg.edges)
        edges.push_back({{"head", eg.nodes[static_cast<std::size_t>(e.head)].kg_id},
                         {"relation", kg.relation_name(e.relation)},
                         {"tail", eg.nodes[static_cast<std::size_t>(e.tail)].kg_id}});
    return {{"nodes", nodes}, {"edges", edges}};
}

}  // namespace lmx
