#pragma once

// Planted-path benchmark generator. Every item gets its own KG component:
//
//   probe_<i>_alpha --leads_to--> mid_<i>_one --stems_from--> gold_<i>
//   probe_<i>_beta  --leads_to--> mid_<i>_two --stems_from--> gold_<i>
//
// so the gold answer sits exactly two hops from each question concept, with
// the mid nodes as the verifiable reasoning trail. Distractor answers are
// either fully disconnected gadgets or hang three-plus hops away, so no
// distractor is reachable within the two-hop retrieval radius. A BFS check
// inside the generator enforces both distance guarantees for every item.

#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmx/common.hpp"
#include "lmx/kg.hpp"

namespace lmx {

struct SyntheticConfig {
    std::uint64_t seed = 1;
    int train_items = 500;
    int test_items = 100;
    int choices = 4;
};

struct SyntheticData {
    std::string kg_tsv;
    std::string relations_txt;
    std::string train_jsonl;
    std::string test_jsonl;
    std::string paths_jsonl;  // one {"id", "planted", ...} line per item
};

inline SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
    if (cfg.train_items < 1 || cfg.test_items < 0)
        throw ArgumentError("need at least one training item");
    if (cfg.choices < 2) throw ArgumentError("need at least 2 choices");

    Rng rng(cfg.seed);
    KnowledgeGraph kg;  // in-memory copy used only for distance verification
    const std::int32_t rel_leads = kg.add_relation("leads_to");
    const std::int32_t rel_stems = kg.add_relation("stems_from");
    const std::int32_t rel_related = kg.add_relation("related_to");

    std::ostringstream kg_tsv, train, test, paths;
    auto emit_edge = [&](const std::string& head, std::int32_t rel,
                         const std::string& tail) {
        kg.add_edge(kg.add_node(head), rel, kg.add_node(tail));
        kg_tsv << head << '\t' << kg.relation_name(rel) << '\t' << tail
               << '\n';
    };

    const int total = cfg.train_items + cfg.test_items;
    for (int i = 0; i < total; ++i) {
        const std::string tag = std::to_string(i);
        const std::string q1 = "probe_" + tag + "_alpha";
        const std::string q2 = "probe_" + tag + "_beta";
        const std::string m1 = "mid_" + tag + "_one";
        const std::string m2 = "mid_" + tag + "_two";
        const std::string gold = "gold_" + tag;

        emit_edge(q1, rel_leads, m1);
        emit_edge(m1, rel_stems, gold);
        emit_edge(q2, rel_leads, m2);
        emit_edge(m2, rel_stems, gold);
        if (rng.next_unit() < 0.5) emit_edge(m1, rel_related, m2);

        std::vector<std::string> decoys;
        for (int j = 1; j < cfg.choices; ++j) {
            const std::string d =
                "decoy_" + tag + "_" + std::to_string(j);
            if (j % 2 == 1) {
                // Attached distractor: three hops from the nearest probe.
                const std::string x =
                    "link_" + tag + "_" + std::to_string(j);
                emit_edge(m1, rel_related, x);
                emit_edge(x, rel_related, d);
            } else {
                // Disconnected gadget: unreachable from the probes.
                const std::string t =
                    "tail_" + tag + "_" + std::to_string(j);
                const std::string u =
                    "stub_" + tag + "_" + std::to_string(j);
                emit_edge(d, rel_related, t);
                emit_edge(t, rel_related, u);
            }
            decoys.push_back(d);
        }

        // Distance guarantees, checked on the real retrieval primitive.
        for (const std::string& q : {q1, q2}) {
            auto ball = kg.khop_neighborhood({kg.find_node(q)}, 2);
            std::set<std::int32_t> within(ball.nodes.begin(),
                                          ball.nodes.end());
            if (!within.count(kg.find_node(gold)))
                throw IntegrityError("planted gold beyond 2 hops of " + q);
            for (const auto& d : decoys)
                if (within.count(kg.find_node(d)))
                    throw IntegrityError("distractor " + d +
                                         " within 2 hops of " + q);
        }

        std::vector<std::string> options = decoys;
        options.push_back(gold);
        deterministic_shuffle(options, rng);
        int answer = -1;
        for (int c = 0; c < static_cast<int>(options.size()); ++c)
            if (options[static_cast<std::size_t>(c)] == gold) answer = c;

        const bool is_train = i < cfg.train_items;
        const std::string id =
            (is_train ? "train-" : "test-") +
            std::to_string(is_train ? i : i - cfg.train_items);

        nlohmann::json item;
        item["id"] = id;
        item["question"] =
            "Which concept follows from " + q1 + " and " + q2 + "?";
        item["choices"] = options;
        item["answer"] = answer;
        (is_train ? train : test) << item.dump() << '\n';

        nlohmann::json path;
        path["id"] = id;
        path["planted"] = {m1, m2};
        path["gold_node"] = gold;
        path["question_nodes"] = {q1, q2};
        paths << path.dump() << '\n';
    }

    SyntheticData out;
    out.kg_tsv = kg_tsv.str();
    out.relations_txt = "leads_to\nstems_from\nrelated_to\n";
    out.train_jsonl = train.str();
    out.test_jsonl = test.str();
    out.paths_jsonl = paths.str();
    return out;
}

// File layout consumed by the training/eval commands.
inline void write_synthetic(const SyntheticData& data,
                            const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    write_file(out_dir + "/kg.tsv", data.kg_tsv);
    write_file(out_dir + "/relations.txt", data.relations_txt);
    write_file(out_dir + "/train.jsonl", data.train_jsonl);
    write_file(out_dir + "/test.jsonl", data.test_jsonl);
    write_file(out_dir + "/paths.jsonl", data.paths_jsonl);
}

}  // namespace lmx
