#pragma once

// Answer scoring and training. Each answer choice gets an independent
// element-graph; a candidate's logit is
//     head([H_lm ; pool(h_K) ; pool(alpha_K)])
// where pool(h_K) is the incoming-attention-mass-weighted feature mean and
// pool(alpha_K) is a fixed 4-summary of the final attention layer:
//     [mean mass of answer-typed nodes, max mass,
//      entropy of the flattened attention distribution, mean mass of kg nodes]
// (masses include self slots here; the explainer's ranking excludes them).
// Probabilities are a softmax over candidate logits; training minimizes
// cross-entropy with AdamW.

#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmx/element_graph.hpp"
#include "lmx/gat.hpp"
#include "lmx/mlp.hpp"

namespace lmx {

struct Candidate {
    std::string choice_text;
    ElementGraph graph;
    Vector h_lm;  // pooled input representation for (question, choice)
};

// ---------------------------------------------------------------------------
// Attention pooling
// ---------------------------------------------------------------------------

struct PoolOutput {
    Vector pooled_h;      // F
    Vector pooled_alpha;  // 4
    std::vector<double> mass;  // per node, self slots included
    int argmax_node = 0;
    std::vector<int> answer_nodes, kg_nodes;
};

inline PoolOutput pool_attention(const GatNetwork::Forward& f) {
    const auto& tr = f.trace;
    const SlotGraph& sg = tr.slots;
    const auto& alpha = tr.layer.back().alpha;
    const Matrix& h = tr.h.back();
    const int n = sg.n;

    PoolOutput p;
    p.mass.assign(static_cast<std::size_t>(n), 0.0);
    double entropy = 0.0;
    for (int s = 0; s < sg.slot_count(); ++s) {
        double a = alpha[static_cast<std::size_t>(s)];
        p.mass[static_cast<std::size_t>(sg.src[static_cast<std::size_t>(s)])] += a;
        double prob = a / n;
        if (prob > 0.0) entropy -= prob * std::log(prob);
    }

    p.pooled_h = Vector::Zero(h.rows());
    for (int j = 0; j < n; ++j) p.pooled_h += p.mass[static_cast<std::size_t>(j)] * h.col(j);
    p.pooled_h /= static_cast<double>(n);

    for (int j = 1; j < n; ++j)
        if (p.mass[static_cast<std::size_t>(j)] > p.mass[static_cast<std::size_t>(p.argmax_node)])
            p.argmax_node = j;

    double answer_sum = 0.0, kg_sum = 0.0;
    for (int j = 0; j < n; ++j) {
        auto t = static_cast<NodeType>(tr.types[static_cast<std::size_t>(j)]);
        if (t == NodeType::kAnswer) {
            p.answer_nodes.push_back(j);
            answer_sum += p.mass[static_cast<std::size_t>(j)];
        } else if (t == NodeType::kKg) {
            p.kg_nodes.push_back(j);
            kg_sum += p.mass[static_cast<std::size_t>(j)];
        }
    }
    p.pooled_alpha = Vector(4);
    p.pooled_alpha[0] =
        p.answer_nodes.empty() ? 0.0 : answer_sum / static_cast<double>(p.answer_nodes.size());
    p.pooled_alpha[1] = p.mass[static_cast<std::size_t>(p.argmax_node)];
    p.pooled_alpha[2] = entropy;
    p.pooled_alpha[3] =
        p.kg_nodes.empty() ? 0.0 : kg_sum / static_cast<double>(p.kg_nodes.size());
    return p;
}

// Distributes gradients w.r.t. the pooled vectors back onto h_K and alpha_K.
inline void pool_backward(const GatNetwork::Forward& f, const PoolOutput& p,
                          const Vector& g_pooled_h, const Vector& g_pooled_alpha,
                          Matrix& g_h, std::vector<double>& g_alpha) {
    const auto& tr = f.trace;
    const SlotGraph& sg = tr.slots;
    const auto& alpha = tr.layer.back().alpha;
    const Matrix& h = tr.h.back();
    const int n = sg.n;
    const double inv_n = 1.0 / static_cast<double>(n);

    g_h = Matrix::Zero(h.rows(), n);
    g_alpha.assign(alpha.size(), 0.0);
    std::vector<double> g_mass(static_cast<std::size_t>(n), 0.0);

    // pooled_h = sum_j mass_j h_j / n
    for (int j = 0; j < n; ++j) {
        g_h.col(j) += p.mass[static_cast<std::size_t>(j)] * inv_n * g_pooled_h;
        g_mass[static_cast<std::size_t>(j)] += inv_n * h.col(j).dot(g_pooled_h);
    }
    // summary[0]: mean mass over answer-typed nodes
    if (!p.answer_nodes.empty()) {
        double w = g_pooled_alpha[0] / static_cast<double>(p.answer_nodes.size());
        for (int j : p.answer_nodes) g_mass[static_cast<std::size_t>(j)] += w;
    }
    // summary[1]: max mass (subgradient at the first argmax)
    g_mass[static_cast<std::size_t>(p.argmax_node)] += g_pooled_alpha[1];
    // summary[3]: mean mass over kg-typed nodes
    if (!p.kg_nodes.empty()) {
        double w = g_pooled_alpha[3] / static_cast<double>(p.kg_nodes.size());
        for (int j : p.kg_nodes) g_mass[static_cast<std::size_t>(j)] += w;
    }
    // summary[2]: entropy of the flattened distribution p_s = alpha_s / n
    for (std::size_t s = 0; s < alpha.size(); ++s) {
        double prob = alpha[s] * inv_n;
        if (prob > 0.0) g_alpha[s] += g_pooled_alpha[2] * (-(std::log(prob) + 1.0) * inv_n);
    }
    // mass_j = sum of alpha over slots with src j
    for (int s = 0; s < sg.slot_count(); ++s)
        g_alpha[static_cast<std::size_t>(s)] +=
            g_mass[static_cast<std::size_t>(sg.src[static_cast<std::size_t>(s)])];
}

// ---------------------------------------------------------------------------
// Reasoner
// ---------------------------------------------------------------------------

struct Prediction {
    std::vector<double> probabilities;
    std::vector<double> logits;
    int predicted = 0;
    // Kept so the explainer can reach the winning candidate's attention.
    std::vector<GatNetwork::Forward> forwards;
};

struct TrainingConfig {
    int epochs = 5;
    int batch_size = 64;
    double lr_gnn = 1e-3;      // network + head learning rate
    double lr_provider = 1e-5; // reserved for trainable providers (none built in)
    double weight_decay = 0.01;
    std::uint64_t seed = 0;    // shuffle + dropout stream
};

struct TrainItem {
    std::string id;
    std::vector<Candidate> candidates;
    int gold = 0;
};

struct TrainStats {
    double final_loss = 0.0;
    double train_accuracy = 0.0;
    double dev_accuracy = 0.0;
    int steps = 0;
};

class Reasoner {
public:
    explicit Reasoner(const GatConfig& cfg)
        : net_(cfg),
          head_("head", cfg.embed_dim + cfg.feature_dim + 4, cfg.feature_dim, 1) {
        // The head continues the network's init stream (declared order).
        Rng rng = net_.init_params();
        head_.init(rng);
    }

    GatNetwork& network() { return net_; }
    Mlp2& head() { return head_; }

    std::vector<Tensor*> tensors() {
        auto out = net_.tensors();
        head_.collect(out);
        return out;
    }

    // ------------------------------------------------------------------
    // Scoring / inference (evaluation mode: no dropout, deterministic)
    // ------------------------------------------------------------------

    struct ScoredCandidate {
        double logit = 0.0;
        GatNetwork::Forward forward;
        PoolOutput pool;
        Mlp2::Trace head_trace;
        Vector head_in;
    };

    ScoredCandidate score_answer(const Candidate& cand, bool training = false,
                                 Rng* dropout_rng = nullptr) {
        if (cand.h_lm.size() != net_.config().embed_dim)
            throw ConfigError("H_lm width != network embed_dim");
        ScoredCandidate sc;
        sc.forward = net_.forward(cand.graph, training, dropout_rng);
        sc.pool = pool_attention(sc.forward);
        sc.head_in = Vector(cand.h_lm.size() + sc.pool.pooled_h.size() + 4);
        sc.head_in << cand.h_lm, sc.pool.pooled_h, sc.pool.pooled_alpha;
        sc.logit = head_.forward(Matrix(sc.head_in), &sc.head_trace)(0, 0);
        return sc;
    }

    Prediction predict(const std::vector<Candidate>& candidates) {
        if (candidates.size() < 2) throw ArgumentError("need at least 2 answer choices");
        Prediction pred;
        pred.logits.reserve(candidates.size());
        for (const auto& cand : candidates) {
            auto sc = score_answer(cand);
            pred.logits.push_back(sc.logit);
            pred.forwards.push_back(std::move(sc.forward));
        }
        pred.probabilities = softmax(pred.logits);
        pred.predicted = 0;
        for (std::size_t i = 1; i < pred.probabilities.size(); ++i)
            if (pred.probabilities[i] > pred.probabilities[static_cast<std::size_t>(pred.predicted)])
                pred.predicted = static_cast<int>(i);
        return pred;
    }

    // ------------------------------------------------------------------
    // Training
    // ------------------------------------------------------------------

    // Cross-entropy forward/backward for one item; gradients accumulate into
    // the tensors scaled by `grad_scale`. Returns (loss, correct).
    std::pair<double, bool> item_backward(const TrainItem& item, double grad_scale,
                                          Rng* dropout_rng) {
        const int n_cand = static_cast<int>(item.candidates.size());
        if (item.gold < 0 || item.gold >= n_cand)
            throw DataError("gold index out of range for item " + item.id);

        std::vector<ScoredCandidate> scored;
        scored.reserve(static_cast<std::size_t>(n_cand));
        std::vector<double> logits;
        for (const auto& cand : item.candidates) {
            scored.push_back(score_answer(cand, dropout_rng != nullptr, dropout_rng));
            logits.push_back(scored.back().logit);
        }
        std::vector<double> probs = softmax(logits);
        double loss = -std::log(std::max(probs[static_cast<std::size_t>(item.gold)], 1e-300));

        int argmax = 0;
        for (int c = 1; c < n_cand; ++c)
            if (probs[static_cast<std::size_t>(c)] > probs[static_cast<std::size_t>(argmax)])
                argmax = c;

        for (int c = 0; c < n_cand; ++c) {
            double g_logit =
                (probs[static_cast<std::size_t>(c)] - (c == item.gold ? 1.0 : 0.0)) * grad_scale;
            ScoredCandidate& sc = scored[static_cast<std::size_t>(c)];
            Matrix g_head_out(1, 1);
            g_head_out(0, 0) = g_logit;
            Matrix g_head_in = head_.backward(sc.head_trace, g_head_out);
            const int D = static_cast<int>(sc.head_in.size()) -
                          static_cast<int>(sc.pool.pooled_h.size()) - 4;
            const int F = static_cast<int>(sc.pool.pooled_h.size());
            Vector g_pooled_h = g_head_in.col(0).segment(D, F);
            Vector g_pooled_alpha = g_head_in.col(0).segment(D + F, 4);
            Matrix g_h;
            std::vector<double> g_alpha;
            pool_backward(sc.forward, sc.pool, g_pooled_h, g_pooled_alpha, g_h, g_alpha);
            net_.backward(sc.forward, g_h, g_alpha);
        }
        return {loss, argmax == item.gold};
    }

    // Mini-batch training; logs one CSV row per optimizer step and one per
    // epoch end (both `epoch,step,loss,train_acc,dev_acc`).
    TrainStats train(std::vector<TrainItem>& items, const std::vector<TrainItem>& dev,
                     const TrainingConfig& cfg, std::ostream* metrics = nullptr) {
        if (items.empty()) throw DataError("training set is empty");
        if (cfg.epochs < 1 || cfg.batch_size < 1)
            throw ArgumentError("epochs and batch size must be positive");

        AdamW::Config opt_cfg;
        opt_cfg.lr = cfg.lr_gnn;
        opt_cfg.weight_decay = cfg.weight_decay;
        AdamW opt(tensors(), opt_cfg);
        Rng shuffle_rng(cfg.seed ^ 0x534855464C45ull);  // distinct stream per purpose
        Rng dropout_rng(cfg.seed ^ 0x44524F504F5554ull);

        if (metrics) *metrics << "epoch,step,loss,train_acc,dev_acc\n";

        TrainStats stats;
        double last_dev = 0.0;
        int step = 0;
        std::vector<std::size_t> order(items.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            deterministic_shuffle(order, shuffle_rng);
            for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
                std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size));
                opt.zero_grad();
                double batch_loss = 0.0;
                int batch_correct = 0;
                double scale = 1.0 / static_cast<double>(end - at);
                for (std::size_t b = at; b < end; ++b) {
                    auto [loss, correct] = item_backward(
                        items[order[b]], scale,
                        net_.config().dropout > 0.0 ? &dropout_rng : nullptr);
                    batch_loss += loss;
                    batch_correct += correct ? 1 : 0;
                }
                batch_loss *= scale;
                if (!std::isfinite(batch_loss))
                    throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                                        " step " + std::to_string(step));
                opt.step();
                ++step;
                double batch_acc = static_cast<double>(batch_correct) /
                                   static_cast<double>(end - at);
                if (metrics)
                    *metrics << epoch << ',' << step << ',' << batch_loss << ',' << batch_acc
                             << ',' << last_dev << '\n';
                stats.final_loss = batch_loss;
                stats.train_accuracy = batch_acc;
            }
            last_dev = dev.empty() ? 0.0 : evaluate(dev);
            stats.dev_accuracy = last_dev;
            if (metrics)
                *metrics << epoch << ',' << step << ',' << stats.final_loss << ','
                         << stats.train_accuracy << ',' << last_dev << '\n';
        }
        stats.steps = step;
        return stats;
    }

    // Fraction of items whose evaluation-mode argmax equals gold.
    double evaluate(const std::vector<TrainItem>& items) {
        if (items.empty()) return 0.0;
        int correct = 0;
        for (const auto& item : items) {
            auto pred = predict(item.candidates);
            if (pred.predicted == item.gold) ++correct;
        }
        return static_cast<double>(correct) / static_cast<double>(items.size());
    }

    // ------------------------------------------------------------------
    // Checkpointing (network + head in one container)
    // ------------------------------------------------------------------

    void save(const std::string& path, const nlohmann::json& config_echo) {
        save_checkpoint(path, net_.config(), tensors(), config_echo);
    }

    static Reasoner load(const std::string& path, nlohmann::json* config_echo = nullptr) {
        CheckpointData data = load_checkpoint(path);
        Reasoner r(data.cfg);
        restore_tensors(data, r.tensors());
        if (config_echo) *config_echo = data.config_echo;
        return r;
    }

private:
    GatNetwork net_;
    Mlp2 head_;
};

}  // namespace lmx
