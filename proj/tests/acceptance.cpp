// Acceptance gate: re-verifies the ten load-bearing guarantees of the shipped
// library and CLI from scratch and prints one PASS/FAIL line per criterion.
// Exits non-zero if any criterion fails. Independent oracles (plain BFS,
// sort-and-cut, central finite differences) are reimplemented here rather
// than shared with the library so a library bug cannot hide itself.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmx/cli.hpp"
#include "lmx/debugger.hpp"
#include "lmx/eval.hpp"
#include "lmx/explainer.hpp"
#include "lmx/gat.hpp"
#include "lmx/kg.hpp"
#include "lmx/pipeline.hpp"
#include "lmx/reasoner.hpp"

#include "helpers.hpp"
#include "prompt_fixture.hpp"

using lmx::GatConfig;
using lmx::GatNetwork;
using lmx::Matrix;
using lmx::Vector;

namespace {

// ---------------------------------------------------------------------------
// Harness
// ---------------------------------------------------------------------------

struct Gate {
    int failures = 0;

    // fn returns "" on success or a short failure reason.
    void criterion(int num, const std::string& name,
                   const std::function<std::string()>& fn) {
        auto t0 = std::chrono::steady_clock::now();
        std::string reason;
        try {
            reason = fn();
        } catch (const std::exception& e) {
            reason = std::string("exception: ") + e.what();
        }
        double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        char line[512];
        std::snprintf(line, sizeof(line), "%s %2d %-34s (%.1fs)%s%s",
                      reason.empty() ? "PASS" : "FAIL", num, name.c_str(), secs,
                      reason.empty() ? "" : " -- ", reason.c_str());
        std::cout << line << "\n" << std::flush;
        if (!reason.empty()) ++failures;
    }
};

std::string repo_path(const std::string& rel) {
    return std::string(LMX_REPO_DIR) + "/" + rel;
}

std::string test_path(const std::string& rel) {
    return std::string(LMX_TEST_DIR) + "/" + rel;
}

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run_cli(const std::string& args) {
    std::string cmd = std::string(LMX_CLI_BIN) + " " + args + " 2>&1";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) return {};
    RunResult r;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof(buf), pipe))
        r.output.append(buf, n);
    int status = ::pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string q(const std::string& s) { return "'" + s + "'"; }

template <class T>
std::string fmt(const char* pattern, T value) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), pattern, value);
    return buf;
}

// ---------------------------------------------------------------------------
// Shared random-graph builder (same element-graph shape the network consumes)
// ---------------------------------------------------------------------------

lmx::ElementGraph random_element_graph(lmx::Rng& rng, int n, int max_edges,
                                       int relations, int embed_dim) {
    lmx::ElementGraph g;
    for (int i = 0; i < n; ++i) {
        lmx::ElementNode node;
        node.kg_id = i;
        node.label = "node" + std::to_string(i);
        node.type = static_cast<lmx::NodeType>(rng.next_below(4));
        node.score = rng.next_symmetric();
        node.v_emb = Vector(embed_dim);
        for (int k = 0; k < embed_dim; ++k) node.v_emb[k] = rng.next_symmetric();
        g.nodes.push_back(std::move(node));
    }
    auto n_edges = rng.next_below(static_cast<std::uint64_t>(max_edges) + 1);
    for (std::uint64_t e = 0; e < n_edges; ++e) {
        auto h = static_cast<std::int32_t>(rng.next_below(static_cast<std::uint64_t>(n)));
        auto t = static_cast<std::int32_t>(rng.next_below(static_cast<std::uint64_t>(n)));
        auto r = static_cast<std::int32_t>(
            rng.next_below(static_cast<std::uint64_t>(relations)));
        g.edges.push_back({h, r, t});
    }
    g.budget = n;
    return g;
}

// ---------------------------------------------------------------------------
// 1. Attention rows are probability distributions
// ---------------------------------------------------------------------------

std::string check_attention_normalization() {
    lmx::Rng rng(1001);
    GatConfig cfg;
    cfg.feature_dim = 16;
    cfg.embed_dim = 8;
    cfg.layers = 3;
    cfg.relation_count = 3;
    cfg.type_dim = 4;
    cfg.zeta_dim = 4;
    cfg.score_dim = 4;
    cfg.dropout = 0.0;
    cfg.seed = 17;
    GatNetwork net(cfg);

    double worst = 0.0;
    const int graphs = 100;
    for (int trial = 0; trial < graphs; ++trial) {
        int n = 5 + static_cast<int>(rng.next_below(46));  // 5..50 nodes
        auto g = random_element_graph(rng, n, 3 * n, cfg.relation_count,
                                      cfg.embed_dim);
        auto f = net.forward(g);
        for (int k = 0; k < cfg.layers; ++k) {
            std::vector<double> sums(static_cast<std::size_t>(n), 0.0);
            for (const auto& s : f.attention(k)) {
                if (s.alpha < 0.0 || s.alpha > 1.0)
                    return "weight outside [0,1] at layer " + std::to_string(k);
                sums[static_cast<std::size_t>(s.dst)] += s.alpha;
            }
            for (double total : sums)
                worst = std::max(worst, std::abs(total - 1.0));
        }
    }
    if (worst > 1e-6) return "max |sum - 1| = " + fmt("%.3g", worst);
    return "";
}

// ---------------------------------------------------------------------------
// 2. Manual gradients match central finite differences
// ---------------------------------------------------------------------------

struct ProbeLoss {
    Matrix c1;
    std::vector<double> c2;

    double eval(GatNetwork& net, const lmx::ElementGraph& g) const {
        auto f = net.forward(g);
        double loss = (c1.cwiseProduct(f.features())).sum();
        const auto& alpha = f.trace.layer.back().alpha;
        for (std::size_t s = 0; s < alpha.size(); ++s) loss += c2[s] * alpha[s];
        return loss;
    }
};

std::string check_finite_differences() {
    lmx::Rng rng(2002);
    GatConfig cfg;
    cfg.feature_dim = 8;
    cfg.embed_dim = 8;
    cfg.layers = 2;
    cfg.relation_count = 2;
    cfg.type_dim = 4;
    cfg.zeta_dim = 4;
    cfg.score_dim = 4;
    cfg.dropout = 0.0;
    cfg.seed = 23;
    GatNetwork net(cfg);

    auto g = random_element_graph(rng, 5, 10, cfg.relation_count, cfg.embed_dim);
    auto probe = net.forward(g);

    ProbeLoss loss;
    loss.c1 = Matrix(cfg.feature_dim, g.node_count());
    for (Eigen::Index r = 0; r < loss.c1.rows(); ++r)
        for (Eigen::Index c = 0; c < loss.c1.cols(); ++c)
            loss.c1(r, c) = rng.next_symmetric();
    loss.c2.resize(probe.trace.slots.dst.size());
    for (auto& v : loss.c2) v = rng.next_symmetric();

    double worst = 0.0;
    std::string worst_tensor;
    for (lmx::Tensor* t : net.tensors()) {
        net.zero_grad();
        auto f = net.forward(g);
        net.backward(f, loss.c1, loss.c2);
        Matrix analytic = t->grad;

        const double step = 1e-5;
        Matrix fd(t->value.rows(), t->value.cols());
        for (Eigen::Index r = 0; r < t->value.rows(); ++r) {
            for (Eigen::Index c = 0; c < t->value.cols(); ++c) {
                const double saved = t->value(r, c);
                t->value(r, c) = saved + step;
                const double up = loss.eval(net, g);
                t->value(r, c) = saved - step;
                const double down = loss.eval(net, g);
                t->value(r, c) = saved;
                fd(r, c) = (up - down) / (2.0 * step);
            }
        }
        double scale = std::max(
            {1e-6, analytic.cwiseAbs().maxCoeff(), fd.cwiseAbs().maxCoeff()});
        double rel = (analytic - fd).cwiseAbs().maxCoeff() / scale;
        if (rel > worst) {
            worst = rel;
            worst_tensor = t->name;
        }
    }
    if (worst >= 1e-4)
        return "rel err " + fmt("%.3g", worst) + " on " + worst_tensor;
    return "";
}

// ---------------------------------------------------------------------------
// 3. Retrieval + pruning match independent oracles on 200 random instances
// ---------------------------------------------------------------------------

std::set<std::int32_t> prune_oracle(const std::vector<std::int32_t>& ids,
                                    const std::vector<double>& scores,
                                    const std::set<std::int32_t>& seeds, int K) {
    std::vector<std::size_t> order(ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                         bool sa = seeds.count(ids[a]) > 0;
                         bool sb = seeds.count(ids[b]) > 0;
                         if (sa != sb) return sa;
                         if (scores[a] != scores[b]) return scores[a] > scores[b];
                         return ids[a] < ids[b];
                     });
    std::set<std::int32_t> keep;
    for (std::size_t i = 0; i < order.size() && i < static_cast<std::size_t>(K);
         ++i)
        keep.insert(ids[order[i]]);
    return keep;
}

std::string check_retrieval_oracles() {
    lmx::Rng rng(3003);
    lmx::SyntheticProvider provider(6, 33);

    for (int trial = 0; trial < 200; ++trial) {
        auto triples = testutil::random_triples(rng, 120, 240, 3);
        auto kg = testutil::build_graph(triples, 3);

        std::set<std::int32_t> seed_nodes;
        auto n_seeds = 1 + rng.next_below(3);
        for (std::uint64_t s = 0; s < n_seeds; ++s)
            seed_nodes.insert(static_cast<std::int32_t>(
                rng.next_below(static_cast<std::uint64_t>(triples.node_count))));
        int hops = static_cast<int>(rng.next_below(4));

        auto gk = kg.khop_neighborhood(seed_nodes, hops);
        auto want_nodes = testutil::bfs_oracle(triples, seed_nodes, hops);
        std::set<std::int32_t> got_nodes(gk.nodes.begin(), gk.nodes.end());
        if (got_nodes != want_nodes)
            return "neighborhood mismatch at trial " + std::to_string(trial);

        lmx::SeedSpec seeds;
        seeds.question = seed_nodes;
        int K = 1 + static_cast<int>(rng.next_below(
                        static_cast<std::uint64_t>(gk.nodes.size() + 4)));
        Vector z = provider.pooled_text("probe " + std::to_string(trial));
        auto eg = lmx::build_element_graph(kg, seeds, gk, K, z, provider,
                                           lmx::ScoreMode::kCosine);

        std::vector<double> scores;
        for (auto id : gk.nodes)
            scores.push_back(lmx::cosine_score(z, provider.embed(kg.label(id))));
        auto want_kept = prune_oracle(gk.nodes, scores, seed_nodes, K);
        std::set<std::int32_t> got_kept;
        for (const auto& n : eg.nodes) got_kept.insert(n.kg_id);
        if (got_kept != want_kept)
            return "pruned set mismatch at trial " + std::to_string(trial);

        std::size_t want_edges = 0;
        for (auto ei : gk.edge_ids) {
            const auto& e = kg.edge(ei);
            if (got_kept.count(e.head) && got_kept.count(e.tail)) ++want_edges;
        }
        if (eg.edges.size() != want_edges)
            return "induced edge count mismatch at trial " + std::to_string(trial);
    }
    return "";
}

// ---------------------------------------------------------------------------
// 4. Residual path: zeroed output transforms make every layer the identity
// ---------------------------------------------------------------------------

std::string check_residual_identity() {
    lmx::Rng rng(4004);
    GatConfig cfg;
    cfg.feature_dim = 6;
    cfg.embed_dim = 5;
    cfg.layers = 3;
    cfg.relation_count = 2;
    cfg.type_dim = 3;
    cfg.zeta_dim = 3;
    cfg.score_dim = 3;
    cfg.dropout = 0.0;
    cfg.seed = 41;
    GatNetwork net(cfg);
    for (auto& layer : net.layers()) {
        std::vector<lmx::Tensor*> ts;
        layer.out.collect(ts);
        for (auto* t : ts) t->value.setZero();
    }

    auto g = random_element_graph(rng, 8, 16, cfg.relation_count, cfg.embed_dim);
    auto f = net.forward(g);

    Matrix v(cfg.embed_dim, g.node_count());
    for (int i = 0; i < g.node_count(); ++i)
        v.col(i) = g.nodes[static_cast<std::size_t>(i)].v_emb;
    Matrix h0 = net.input_projection().forward(v);

    double diff = (f.features() - h0).cwiseAbs().maxCoeff();
    if (diff != 0.0) return "max |h_K - h_0| = " + fmt("%.3g", diff);
    return "";
}

// ---------------------------------------------------------------------------
// 5. One training item is driven to near-zero cross-entropy
// ---------------------------------------------------------------------------

std::string check_overfit_one() {
    lmx::Rng rng(5005);
    GatConfig cfg;
    cfg.feature_dim = 8;
    cfg.embed_dim = 8;
    cfg.layers = 2;
    cfg.relation_count = 2;
    cfg.type_dim = 4;
    cfg.zeta_dim = 4;
    cfg.score_dim = 4;
    cfg.dropout = 0.0;
    cfg.seed = 57;
    lmx::Reasoner reasoner(cfg);

    lmx::TrainItem item;
    item.id = "single";
    item.gold = 0;
    for (int c = 0; c < 3; ++c) {
        lmx::Candidate cand;
        cand.choice_text = "option" + std::to_string(c);
        cand.graph = random_element_graph(rng, 6, 12, cfg.relation_count,
                                          cfg.embed_dim);
        cand.h_lm = Vector(cfg.embed_dim);
        for (int k = 0; k < cfg.embed_dim; ++k)
            cand.h_lm[k] = rng.next_symmetric();
        item.candidates.push_back(std::move(cand));
    }

    lmx::TrainingConfig tc;
    tc.epochs = 200;  // one item, batch 1: exactly one step per epoch
    tc.batch_size = 1;
    tc.lr_gnn = 1e-2;
    tc.weight_decay = 0.0;
    tc.seed = 58;
    std::vector<lmx::TrainItem> items{item};
    auto stats = reasoner.train(items, {}, tc, nullptr);

    if (stats.steps > 200) return "took " + std::to_string(stats.steps) + " steps";
    if (!(stats.final_loss < 0.01))
        return "cross-entropy " + fmt("%.4g", stats.final_loss) + " after " +
               std::to_string(stats.steps) + " steps";
    return "";
}

// ---------------------------------------------------------------------------
// 6. End-to-end benchmark: train on the generated corpus, hold-out accuracy
//    and planted-trail recall through the real CLI
// ---------------------------------------------------------------------------

struct BenchDirs {
    std::filesystem::path dir;
    bool trained = false;
};

std::string check_benchmark(BenchDirs& bench) {
    bench.dir = std::filesystem::temp_directory_path() /
                ("lmx_acceptance_" + std::to_string(::getpid()));
    std::filesystem::remove_all(bench.dir);
    std::filesystem::create_directories(bench.dir);
    auto p = [&](const char* f) { return (bench.dir / f).string(); };

    auto gen = run_cli("gen-synthetic --seed 1 --train-items 500 --test-items 100 "
                       "--choices 4 --out-dir " + q(bench.dir.string()));
    if (gen.exit_code != 0) return "gen-synthetic failed: " + gen.output;

    auto t0 = std::chrono::steady_clock::now();
    auto train = run_cli("train --kg " + q(p("kg.tsv")) + " --relations " +
                         q(p("relations.txt")) + " --dataset " +
                         q(p("train.jsonl")) +
                         " --feature-dim 64 --embed-dim 64 --layers 3 --top-k 50"
                         " --epochs 10 --checkpoint-out " + q(p("model.ckpt")) +
                         " --metrics " + q(p("metrics.csv")));
    double train_secs = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
    if (train.exit_code != 0) return "train failed: " + train.output;
    if (train_secs >= 300.0)
        return "training took " + fmt("%.0f", train_secs) + "s (limit 300)";

    auto explain = run_cli("explain --kg " + q(p("kg.tsv")) + " --relations " +
                           q(p("relations.txt")) + " --dataset " +
                           q(p("test.jsonl")) + " --checkpoint " +
                           q(p("model.ckpt")) +
                           " --client-mode mock --fixture-default ok --top-w 5"
                           " --stage1-template " +
                           q(repo_path("templates/stage1.txt")) +
                           " --stage2-template " +
                           q(repo_path("templates/stage2.txt")) + " --out " +
                           q(p("bundles.jsonl")));
    if (explain.exit_code != 0) return "explain failed: " + explain.output;

    auto eval = run_cli("eval --dataset " + q(p("test.jsonl")) + " --bundles " +
                        q(p("bundles.jsonl")) + " --paths " +
                        q(p("paths.jsonl")) + " --top-w 5 --out " +
                        q(p("eval.json")));
    if (eval.exit_code != 0) return "eval failed: " + eval.output;

    auto report = nlohmann::json::parse(lmx::read_file(p("eval.json")));
    double acc = report["accuracy"].get<double>();
    double recall = report["planted_recall"]["mean"].get<double>();
    bench.trained = true;
    if (acc < 0.90) return "held-out accuracy " + fmt("%.3f", acc) + " < 0.90";
    if (recall < 0.60)
        return "mean planted recall " + fmt("%.3f", recall) + " < 0.60";
    return "";
}

// ---------------------------------------------------------------------------
// 7. Shipped review fixtures parse to the expected scores and verdicts
// ---------------------------------------------------------------------------

std::string check_review_fixtures() {
    auto high = lmx::parse_debug_response(
        lmx::read_file(test_path("fixtures/debug_high.txt")));
    if (high.scores.faithfulness != 4 || high.scores.completeness != 4 ||
        high.scores.minimality != 4 || high.scores.accuracy != 4)
        return "high fixture parsed to unexpected scores";
    if (!lmx::classify_reliability(high.scores, 3))
        return "high fixture should be reliable at threshold 3";

    auto low = lmx::parse_debug_response(
        lmx::read_file(test_path("fixtures/debug_low.txt")));
    if (low.scores.faithfulness != 1 || low.scores.completeness != 2 ||
        low.scores.minimality != 1 || low.scores.accuracy != 1)
        return "low fixture parsed to unexpected scores";
    if (lmx::classify_reliability(low.scores, 3))
        return "low fixture should be unreliable at threshold 3";
    if (high.advice.empty() || low.advice.empty())
        return "fixture advice went missing";
    return "";
}

// ---------------------------------------------------------------------------
// 8. Prompt renders match the golden files byte-for-byte; slots verbatim
// ---------------------------------------------------------------------------

std::string check_golden_renders() {
    auto explainer = lmx::Explainer::from_files(repo_path("templates/stage1.txt"),
                                                repo_path("templates/stage2.txt"),
                                                fixture::kTaskType);
    std::string s1 = explainer.render_stage1(fixture::kQuestion,
                                             fixture::choices(), 0,
                                             fixture::elements());
    if (s1 != lmx::read_file(test_path("golden/stage1_example.txt")))
        return "stage-1 render differs from its golden file";
    std::string s2 =
        explainer.render_stage2(fixture::kE0, fixture::choices(), 0);
    if (s2 != lmx::read_file(test_path("golden/stage2_example.txt")))
        return "stage-2 render differs from its golden file";

    lmx::ExplanationBundle b;
    b.id = "fig-example";
    b.question = fixture::kQuestion;
    b.choices = fixture::choices();
    b.predicted = 0;
    b.elements = fixture::elements();
    b.e0 = fixture::kE0;
    b.e1 = fixture::kE1;
    auto tpl = lmx::TextTemplate::from_file(repo_path("templates/debugger.txt"));
    std::string review = lmx::render_debug_prompt(tpl, fixture::kModelName,
                                                  fixture::kTaskType, b);
    if (review != lmx::read_file(test_path("golden/debugger_example.txt")))
        return "review render differs from its golden file";

    // Substituted values must appear verbatim, including brace sequences.
    const std::string tricky = "what about {{this}} literal text?";
    std::string s1b = explainer.render_stage1(tricky, fixture::choices(), 1,
                                              fixture::elements());
    if (s1b.find(tricky) == std::string::npos)
        return "slot value was not inserted verbatim";
    return "";
}

// ---------------------------------------------------------------------------
// 9. Offline explanation runs are byte-identical
// ---------------------------------------------------------------------------

std::string check_deterministic_bundles(const BenchDirs& bench) {
    if (!bench.trained) return "skipped: benchmark checkpoint unavailable";
    auto p = [&](const char* f) { return (bench.dir / f).string(); };
    const std::string cmd =
        "explain --kg " + q(p("kg.tsv")) + " --relations " +
        q(p("relations.txt")) + " --dataset " + q(p("test.jsonl")) +
        " --checkpoint " + q(p("model.ckpt")) +
        " --client-mode mock --fixture-default ok --top-w 5 --limit 25"
        " --stage1-template " + q(repo_path("templates/stage1.txt")) +
        " --stage2-template " + q(repo_path("templates/stage2.txt")) +
        " --out ";
    auto r1 = run_cli(cmd + q(p("rerun_a.jsonl")));
    auto r2 = run_cli(cmd + q(p("rerun_b.jsonl")));
    if (r1.exit_code != 0 || r2.exit_code != 0) return "explain rerun failed";
    if (lmx::read_file(p("rerun_a.jsonl")) != lmx::read_file(p("rerun_b.jsonl")))
        return "reruns differ";
    return "";
}

// ---------------------------------------------------------------------------
// 10. Three-point ratings map onto the unit interval exactly
// ---------------------------------------------------------------------------

std::string check_likert() {
    if (lmx::likert_unit(1) != 0.0 || lmx::likert_unit(2) != 0.5 ||
        lmx::likert_unit(3) != 1.0)
        return "mapping is off";
    for (int bad : {0, 4, -1}) {
        try {
            lmx::likert_unit(bad);
            return "accepted out-of-range score " + std::to_string(bad);
        } catch (const lmx::ArgumentError&) {
        }
    }
    return "";
}

}  // namespace

int main() {
    Gate gate;
    BenchDirs bench;

    gate.criterion(1, "attention rows normalized",
                   check_attention_normalization);
    gate.criterion(2, "gradients vs finite differences",
                   check_finite_differences);
    gate.criterion(3, "retrieval + pruning oracles", check_retrieval_oracles);
    gate.criterion(4, "residual identity", check_residual_identity);
    gate.criterion(5, "single-item overfit", check_overfit_one);
    gate.criterion(6, "synthetic benchmark end-to-end",
                   [&] { return check_benchmark(bench); });
    gate.criterion(7, "review fixtures parse", check_review_fixtures);
    gate.criterion(8, "golden prompt renders", check_golden_renders);
    gate.criterion(9, "offline bundles byte-identical",
                   [&] { return check_deterministic_bundles(bench); });
    gate.criterion(10, "ratings map to unit interval", check_likert);

    if (!bench.dir.empty()) {
        std::error_code ec;
        std::filesystem::remove_all(bench.dir, ec);
    }

    std::cout << "acceptance: " << (10 - gate.failures) << "/10 passed\n";
    return gate.failures == 0 ? 0 : 1;
}
