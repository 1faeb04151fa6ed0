#pragma once

// Test-side helpers kept deliberately independent of the library internals:
// the BFS oracle below works on a plain adjacency list and never touches
// KnowledgeGraph's traversal code.

#include <cstdint>
#include <deque>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "lmx/common.hpp"
#include "lmx/kg.hpp"

namespace testutil {

struct TripleList {
    std::int32_t node_count = 0;
    std::vector<lmx::Edge> triples;
};

// Random multigraph-ish triple list (duplicates possible on purpose; the
// store is expected to dedupe).
inline TripleList random_triples(lmx::Rng& rng, std::int32_t max_nodes,
                                 std::int32_t max_edges, std::int32_t relations) {
    TripleList t;
    t.node_count = 2 + static_cast<std::int32_t>(rng.next_below(static_cast<std::uint64_t>(max_nodes - 1)));
    auto edges = 1 + static_cast<std::int32_t>(rng.next_below(static_cast<std::uint64_t>(max_edges)));
    for (std::int32_t i = 0; i < edges; ++i) {
        auto h = static_cast<std::int32_t>(rng.next_below(static_cast<std::uint64_t>(t.node_count)));
        auto tl = static_cast<std::int32_t>(rng.next_below(static_cast<std::uint64_t>(t.node_count)));
        auto r = static_cast<std::int32_t>(rng.next_below(static_cast<std::uint64_t>(relations)));
        t.triples.push_back({h, r, tl});
    }
    return t;
}

// Builds a KnowledgeGraph whose node ids coincide with the triple-list ids
// (labels n0..n{N-1} registered up front, relations r0..).
inline lmx::KnowledgeGraph build_graph(const TripleList& t, std::int32_t relations) {
    lmx::KnowledgeGraph g;
    for (std::int32_t i = 0; i < t.node_count; ++i) g.add_node("n" + std::to_string(i));
    for (std::int32_t r = 0; r < relations; ++r) g.add_relation("r" + std::to_string(r));
    for (const auto& e : t.triples) g.add_edge(e.head, e.relation, e.tail);
    return g;
}

// Independent undirected BFS: plain queue over an adjacency set.
inline std::set<std::int32_t> bfs_oracle(const TripleList& t,
                                         const std::set<std::int32_t>& seeds, int hops) {
    std::map<std::int32_t, std::set<std::int32_t>> adj;
    for (const auto& e : t.triples) {
        adj[e.head].insert(e.tail);
        adj[e.tail].insert(e.head);
    }
    std::map<std::int32_t, int> dist;
    std::deque<std::int32_t> q;
    for (auto s : seeds) {
        dist[s] = 0;
        q.push_back(s);
    }
    while (!q.empty()) {
        auto u = q.front();
        q.pop_front();
        if (dist[u] >= hops) continue;
        for (auto v : adj[u]) {
            if (!dist.count(v)) {
                dist[v] = dist[u] + 1;
                q.push_back(v);
            }
        }
    }
    std::set<std::int32_t> out;
    for (auto& [n, d] : dist) out.insert(n);
    return out;
}

}  // namespace testutil
