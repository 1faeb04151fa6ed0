#pragma once

// Knowledge-graph store: TSV loading, label interning, bidirectional
// adjacency, surface-form grounding, and L-hop neighborhood extraction.
// The graph is immutable once loaded; all queries are const.

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lmx/common.hpp"

namespace lmx {

struct Edge {
    std::int32_t head = 0;
    std::int32_t relation = 0;
    std::int32_t tail = 0;

    friend bool operator==(const Edge&, const Edge&) = default;
    friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Where a grounded node came from within the input.
struct GroundedInput {
    std::vector<std::string> tokens;                      // normalized question tokens
    std::set<std::int32_t> question_nodes;                // matched in the question text
    std::vector<std::set<std::int32_t>> choice_nodes;     // one set per answer choice
    std::set<std::int32_t> context_nodes;                 // matched in combined text, unclaimed above

    std::set<std::int32_t> all() const {
        std::set<std::int32_t> out = question_nodes;
        for (const auto& s : choice_nodes) out.insert(s.begin(), s.end());
        out.insert(context_nodes.begin(), context_nodes.end());
        return out;
    }
};

class KnowledgeGraph {
public:
    KnowledgeGraph() = default;

    // ------------------------------------------------------------------
    // Construction
    // ------------------------------------------------------------------

    // Registers (or finds) a node by label. Labels must already be in
    // canonical form: lowercase, underscores for spaces.
    std::int32_t add_node(const std::string& label) {
        if (label.empty()) throw IntegrityError("node label must be non-empty");
        auto it = node_index_.find(label);
        if (it != node_index_.end()) return it->second;
        auto id = static_cast<std::int32_t>(labels_.size());
        labels_.push_back(label);
        node_index_.emplace(label, id);
        out_edges_.emplace_back();
        in_edges_.emplace_back();
        return id;
    }

    std::int32_t add_relation(const std::string& name) {
        if (name.empty()) throw IntegrityError("relation name must be non-empty");
        auto it = relation_index_.find(name);
        if (it != relation_index_.end()) return it->second;
        auto id = static_cast<std::int32_t>(relation_names_.size());
        relation_names_.push_back(name);
        relation_index_.emplace(name, id);
        return id;
    }

    // Adds one directed triple; duplicates are dropped. Returns true if new.
    bool add_edge(std::int32_t head, std::int32_t relation, std::int32_t tail) {
        check_node(head);
        check_node(tail);
        if (relation < 0 || relation >= relation_count())
            throw IntegrityError("unknown relation id " + std::to_string(relation));
        Edge e{head, relation, tail};
        if (!edge_set_.insert(e).second) return false;
        auto idx = static_cast<std::int32_t>(edges_.size());
        edges_.push_back(e);
        out_edges_[static_cast<std::size_t>(head)].push_back(idx);
        in_edges_[static_cast<std::size_t>(tail)].push_back(idx);
        return true;
    }

    // Loads a relation vocabulary (one name per line; line index = id) and an
    // edge TSV (`head<TAB>relation<TAB>tail`). If relation_file is empty,
    // relations are interned in first-appearance order instead.
    static KnowledgeGraph load(const std::string& edge_file,
                               const std::string& relation_file = {}) {
        KnowledgeGraph g;
        bool fixed_relations = !relation_file.empty();
        if (fixed_relations) {
            std::ifstream rin(relation_file);
            if (!rin) throw ConfigError("cannot open relation file: " + relation_file);
            std::string line;
            while (std::getline(rin, line)) {
                if (!line.empty() && line.back() == '\r') line.pop_back();
                if (line.empty()) throw ParseError("empty relation name in " + relation_file);
                if (g.relation_index_.count(line))
                    throw IntegrityError("duplicate relation name: " + line);
                g.add_relation(line);
            }
        }

        std::ifstream in(edge_file);
        if (!in) throw ConfigError("cannot open edge file: " + edge_file);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            auto t1 = line.find('\t');
            auto t2 = (t1 == std::string::npos) ? std::string::npos : line.find('\t', t1 + 1);
            if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos)
                throw ParseError("line " + std::to_string(line_no) +
                                 ": expected head<TAB>relation<TAB>tail");
            std::string head = line.substr(0, t1);
            std::string rel = line.substr(t1 + 1, t2 - t1 - 1);
            std::string tail = line.substr(t2 + 1);
            if (head.empty() || rel.empty() || tail.empty())
                throw ParseError("line " + std::to_string(line_no) + ": empty field");
            std::int32_t rid;
            if (fixed_relations) {
                auto it = g.relation_index_.find(rel);
                if (it == g.relation_index_.end())
                    throw IntegrityError("line " + std::to_string(line_no) +
                                         ": relation not in vocabulary: " + rel);
                rid = it->second;
            } else {
                rid = g.add_relation(rel);
            }
            g.add_edge(g.add_node(head), rid, g.add_node(tail));
        }
        return g;
    }

    // ------------------------------------------------------------------
    // Accessors
    // ------------------------------------------------------------------

    std::int32_t node_count() const { return static_cast<std::int32_t>(labels_.size()); }
    std::int32_t relation_count() const { return static_cast<std::int32_t>(relation_names_.size()); }
    std::size_t edge_count() const { return edges_.size(); }

    const std::string& label(std::int32_t id) const {
        check_node(id);
        return labels_[static_cast<std::size_t>(id)];
    }
    const std::string& relation_name(std::int32_t id) const {
        if (id < 0 || id >= relation_count())
            throw LookupError("unknown relation id " + std::to_string(id));
        return relation_names_[static_cast<std::size_t>(id)];
    }
    const std::vector<Edge>& edges() const { return edges_; }
    const Edge& edge(std::int32_t idx) const { return edges_[static_cast<std::size_t>(idx)]; }

    // -1 when absent.
    std::int32_t find_node(std::string_view label) const {
        auto it = node_index_.find(std::string(label));
        return it == node_index_.end() ? -1 : it->second;
    }
    std::int32_t find_relation(std::string_view name) const {
        auto it = relation_index_.find(std::string(name));
        return it == relation_index_.end() ? -1 : it->second;
    }

    const std::vector<std::int32_t>& out_edge_ids(std::int32_t node) const {
        check_node(node);
        return out_edges_[static_cast<std::size_t>(node)];
    }
    const std::vector<std::int32_t>& in_edge_ids(std::int32_t node) const {
        check_node(node);
        return in_edges_[static_cast<std::size_t>(node)];
    }

    std::size_t degree(std::int32_t node) const {
        return out_edge_ids(node).size() + in_edge_ids(node).size();
    }

    // ------------------------------------------------------------------
    // Grounding: match lowercase n-grams (n <= 3) of each text slot against
    // node labels, longest match wins, left-to-right greedy scan. Tokens of
    // a multi-word label are joined with '_'.
    // ------------------------------------------------------------------

    std::set<std::int32_t> match_ngrams(std::string_view text, int max_n = 3) const {
        std::set<std::int32_t> out;
        std::vector<std::string> toks = tokenize(text);
        std::size_t i = 0;
        while (i < toks.size()) {
            std::size_t used = 0;
            for (int n = max_n; n >= 1; --n) {
                if (i + static_cast<std::size_t>(n) > toks.size()) continue;
                std::string candidate = toks[i];
                for (int k = 1; k < n; ++k) candidate += "_" + toks[i + static_cast<std::size_t>(k)];
                std::int32_t id = find_node(candidate);
                if (id >= 0) {
                    out.insert(id);
                    used = static_cast<std::size_t>(n);
                    break;
                }
            }
            i += used ? used : 1;
        }
        return out;
    }

    GroundedInput ground(const std::string& question,
                         const std::vector<std::string>& choices) const {
        if (question.empty()) throw ArgumentError("question must be non-empty");
        if (choices.size() < 2) throw ArgumentError("need at least 2 choices");
        GroundedInput gi;
        gi.tokens = tokenize(question);
        gi.question_nodes = match_ngrams(question);
        gi.choice_nodes.reserve(choices.size());
        std::set<std::int32_t> claimed = gi.question_nodes;
        for (const auto& c : choices) {
            auto m = match_ngrams(c);
            gi.choice_nodes.push_back(m);
            claimed.insert(m.begin(), m.end());
        }
        // Combined scan can match n-grams spanning slot boundaries; anything
        // not claimed by a dedicated slot lands in the context slot.
        std::string combined = question;
        for (const auto& c : choices) combined += " " + c;
        for (std::int32_t id : match_ngrams(combined))
            if (!claimed.count(id)) gi.context_nodes.insert(id);
        return gi;
    }

    // ------------------------------------------------------------------
    // L-hop neighborhood: nodes within undirected BFS distance <= L of any
    // seed, plus every edge with both endpoints retained.
    // ------------------------------------------------------------------

    struct Subgraph {
        std::vector<std::int32_t> nodes;      // sorted ascending
        std::vector<std::int32_t> edge_ids;   // indexes into edges(), ascending
    };

    Subgraph khop_neighborhood(const std::set<std::int32_t>& seeds, int hops) const {
        if (hops < 0) throw ArgumentError("hop count must be >= 0");
        for (auto s : seeds)
            if (s < 0 || s >= node_count())
                throw ArgumentError("unknown seed node id " + std::to_string(s));

        std::unordered_set<std::int32_t> visited(seeds.begin(), seeds.end());
        std::vector<std::int32_t> frontier(seeds.begin(), seeds.end());
        for (int depth = 0; depth < hops && !frontier.empty(); ++depth) {
            std::vector<std::int32_t> next;
            for (auto u : frontier) {
                for (auto ei : out_edges_[static_cast<std::size_t>(u)]) {
                    auto v = edges_[static_cast<std::size_t>(ei)].tail;
                    if (visited.insert(v).second) next.push_back(v);
                }
                for (auto ei : in_edges_[static_cast<std::size_t>(u)]) {
                    auto v = edges_[static_cast<std::size_t>(ei)].head;
                    if (visited.insert(v).second) next.push_back(v);
                }
            }
            frontier = std::move(next);
        }

        Subgraph sg;
        sg.nodes.assign(visited.begin(), visited.end());
        std::sort(sg.nodes.begin(), sg.nodes.end());
        for (std::size_t i = 0; i < edges_.size(); ++i) {
            const Edge& e = edges_[i];
            if (visited.count(e.head) && visited.count(e.tail))
                sg.edge_ids.push_back(static_cast<std::int32_t>(i));
        }
        return sg;
    }

private:
    void check_node(std::int32_t id) const {
        if (id < 0 || id >= node_count())
            throw LookupError("unknown node id " + std::to_string(id));
    }

    std::vector<std::string> labels_;
    std::unordered_map<std::string, std::int32_t> node_index_;
    std::vector<std::string> relation_names_;
    std::unordered_map<std::string, std::int32_t> relation_index_;
    std::vector<Edge> edges_;
    std::set<Edge> edge_set_;  // dedupe guard
    std::vector<std::vector<std::int32_t>> out_edges_;  // node -> edge indexes
    std::vector<std::vector<std::int32_t>> in_edges_;
};

}  // namespace lmx
