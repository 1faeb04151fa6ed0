#pragma once

// Typed graph attention network over element-graphs.
//
// Per layer, each node i attends over its in-edge sources plus itself:
//   logit_s = a([h_i ; h_j ; u_i ; zeta(r, u_i, u_j) ; rho(s_i) ; rho(s_j)])
//   alpha   = softmax over i's slots
//   h'_i    = f_sigma( sum_s alpha_s * m([h_j ; u_i ; zeta_s]) ) + h_i
// with u = linear type embedding, zeta = relation MLP (shared across layers),
// rho = score MLP (shared), and dropout on the f_sigma output while training.
//
// The forward pass records a full trace; backward() replays it in reverse and
// produces exact gradients for every parameter tensor (validated against
// central finite differences in the test suite).

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmx/common.hpp"
#include "lmx/element_graph.hpp"
#include "lmx/mlp.hpp"

namespace lmx {

struct GatConfig {
    int feature_dim = 200;    // F: width of node features h
    int embed_dim = 200;      // D: provider embedding width
    int layers = 5;           // number of attention layers
    int relation_count = 0;   // relation vocabulary size (self-loop excluded)
    int type_dim = 16;        // T: type-embedding width
    int zeta_dim = 16;        // Z: relation-embedding width
    int score_dim = 16;       // S: score-embedding width
    double dropout = 0.2;
    std::uint64_t seed = 0;

    int self_relation() const { return relation_count; }
    int onehot_dim() const { return relation_count + 1; }
};

// One attention slot: destination node, source node, and the edge that
// created it (-1 for the synthetic self slot).
struct AttentionSlot {
    int dst = 0;
    int src = 0;
    int edge_id = -1;
    double alpha = 0.0;
};
using AttentionLayer = std::vector<AttentionSlot>;

// Static per-graph attention structure: slots are contiguous per destination,
// in-edges in edge-list order followed by the self slot.
struct SlotGraph {
    int n = 0;
    std::vector<int> dst, src, rel, edge;  // per slot; edge = -1 for self
    std::vector<int> node_begin;           // size n+1

    int slot_count() const { return static_cast<int>(dst.size()); }

    static SlotGraph build(const ElementGraph& g, int self_relation) {
        SlotGraph s;
        s.n = g.node_count();
        std::vector<std::vector<std::array<int, 3>>> incoming(
            static_cast<std::size_t>(s.n));  // (src, rel, edge_id)
        for (int e = 0; e < static_cast<int>(g.edges.size()); ++e) {
            const auto& edge = g.edges[static_cast<std::size_t>(e)];
            incoming[static_cast<std::size_t>(edge.tail)].push_back(
                {edge.head, edge.relation, e});
        }
        s.node_begin.assign(static_cast<std::size_t>(s.n) + 1, 0);
        for (int i = 0; i < s.n; ++i) {
            s.node_begin[static_cast<std::size_t>(i)] = s.slot_count();
            for (const auto& in : incoming[static_cast<std::size_t>(i)]) {
                s.dst.push_back(i);
                s.src.push_back(in[0]);
                s.rel.push_back(in[1]);
                s.edge.push_back(in[2]);
            }
            s.dst.push_back(i);  // self slot, always last
            s.src.push_back(i);
            s.rel.push_back(self_relation);
            s.edge.push_back(-1);
        }
        s.node_begin[static_cast<std::size_t>(s.n)] = s.slot_count();
        return s;
    }
};

class GatNetwork {
public:
    explicit GatNetwork(const GatConfig& cfg)
        : cfg_(cfg),
          proj_("proj", cfg.feature_dim, cfg.embed_dim),
          type_table_("type_table", cfg.type_dim, 4),
          zeta_("zeta", cfg.onehot_dim() + 2 * cfg.type_dim, cfg.zeta_dim, cfg.zeta_dim),
          rho_("rho", 1, cfg.score_dim, cfg.score_dim) {
        if (cfg.feature_dim < 1 || cfg.embed_dim < 1 || cfg.layers < 1)
            throw ArgumentError("network dimensions must be positive");
        if (cfg.dropout < 0.0 || cfg.dropout >= 1.0)
            throw ArgumentError("dropout must lie in [0, 1)");
        layers_.reserve(static_cast<std::size_t>(cfg.layers));
        for (int k = 0; k < cfg.layers; ++k) {
            std::string p = "layer" + std::to_string(k);
            layers_.push_back(Layer{
                Mlp2(p + ".msg", cfg.feature_dim + cfg.type_dim + cfg.zeta_dim,
                     cfg.feature_dim, cfg.feature_dim),
                Mlp2(p + ".att",
                     2 * cfg.feature_dim + cfg.type_dim + cfg.zeta_dim + 2 * cfg.score_dim,
                     cfg.feature_dim, 1),
                Mlp2(p + ".out", cfg.feature_dim, cfg.feature_dim, cfg.feature_dim)});
        }
        init_params();
    }

    const GatConfig& config() const { return cfg_; }

    // Draws parameters from one stream in declared tensor order. Returns the
    // stream so downstream parameter groups (the answer head) can continue it.
    Rng init_params() {
        Rng rng(cfg_.seed);
        proj_.init(rng);
        init_uniform(type_table_, rng);
        zeta_.init(rng);
        rho_.init(rng);
        for (auto& l : layers_) {
            l.msg.init(rng);
            l.att.init(rng);
            l.out.init(rng);
        }
        return rng;
    }

    // Declared order: also the checkpoint, optimizer, and FD-check order.
    std::vector<Tensor*> tensors() {
        std::vector<Tensor*> out;
        proj_.collect(out);
        out.push_back(&type_table_);
        zeta_.collect(out);
        rho_.collect(out);
        for (auto& l : layers_) {
            l.msg.collect(out);
            l.att.collect(out);
            l.out.collect(out);
        }
        return out;
    }

    void zero_grad() {
        for (auto* t : tensors()) t->zero_grad();
    }

    Vector type_embedding(NodeType t) const {
        return type_table_.value.col(static_cast<int>(t));
    }

    // zeta(r, u_i, u_j) on demand (tests; the forward pass batches these).
    Vector relation_embedding(int relation, NodeType dst_type, NodeType src_type) const {
        if (relation < 0 || relation > cfg_.self_relation())
            throw ArgumentError("relation id out of range: " + std::to_string(relation));
        Vector x = Vector::Zero(cfg_.onehot_dim() + 2 * cfg_.type_dim);
        x[relation] = 1.0;
        x.segment(cfg_.onehot_dim(), cfg_.type_dim) = type_embedding(dst_type);
        x.segment(cfg_.onehot_dim() + cfg_.type_dim, cfg_.type_dim) = type_embedding(src_type);
        return zeta_.forward1(x);
    }

    // --------------------------------------------------------------------
    // Forward
    // --------------------------------------------------------------------

    struct LayerTrace {
        Mlp2::Trace att_trace, msg_trace, out_trace;
        std::vector<double> alpha;  // per slot
        Matrix msg_out;             // F x slots
        Matrix drop_mask;           // F x N, scaled; empty in evaluation mode
    };

    struct Trace {
        SlotGraph slots;
        std::vector<int> types;                      // per node
        Matrix v_embs;                               // D x N
        std::vector<std::array<int, 3>> zeta_keys;   // distinct (rel, t_dst, t_src)
        std::vector<int> slot_zeta;                  // slot -> key index
        Mlp2::Trace zeta_trace;
        Matrix zeta_out;                             // Z x keys
        Mlp2::Trace rho_trace;
        Matrix rho_out;                              // S x N
        std::vector<Matrix> h;                       // layers+1 of F x N
        std::vector<LayerTrace> layer;
        bool training = false;
    };

    struct Forward {
        Trace trace;

        const Matrix& features() const { return trace.h.back(); }

        AttentionLayer attention(int layer) const {
            const auto& sg = trace.slots;
            const auto& alpha = trace.layer[static_cast<std::size_t>(layer)].alpha;
            AttentionLayer out;
            out.reserve(alpha.size());
            for (int s = 0; s < sg.slot_count(); ++s)
                out.push_back({sg.dst[static_cast<std::size_t>(s)],
                               sg.src[static_cast<std::size_t>(s)],
                               sg.edge[static_cast<std::size_t>(s)],
                               alpha[static_cast<std::size_t>(s)]});
            return out;
        }

        AttentionLayer final_attention() const {
            return attention(static_cast<int>(trace.layer.size()) - 1);
        }
    };

    Forward forward(const ElementGraph& g, bool training = false,
                    Rng* dropout_rng = nullptr) const {
        if (g.node_count() == 0) throw ArgumentError("element graph must be non-empty");
        const int n = g.node_count();
        const int F = cfg_.feature_dim;
        const int T = cfg_.type_dim;
        const int Z = cfg_.zeta_dim;
        const int S = cfg_.score_dim;

        Forward f;
        Trace& tr = f.trace;
        tr.training = training && cfg_.dropout > 0.0;
        tr.slots = SlotGraph::build(g, cfg_.self_relation());
        const SlotGraph& sg = tr.slots;
        const int n_slots = sg.slot_count();

        tr.types.resize(static_cast<std::size_t>(n));
        tr.v_embs.resize(cfg_.embed_dim, n);
        for (int i = 0; i < n; ++i) {
            const auto& node = g.nodes[static_cast<std::size_t>(i)];
            tr.types[static_cast<std::size_t>(i)] = static_cast<int>(node.type);
            if (node.v_emb.size() != cfg_.embed_dim)
                throw ArgumentError("node embedding width != network embed_dim");
            tr.v_embs.col(i) = node.v_emb;
        }

        // Distinct relation-embedding inputs, one zeta evaluation per key.
        std::map<std::array<int, 3>, int> key_index;
        tr.slot_zeta.resize(static_cast<std::size_t>(n_slots));
        for (int s = 0; s < n_slots; ++s) {
            std::array<int, 3> key = {sg.rel[static_cast<std::size_t>(s)],
                                      tr.types[static_cast<std::size_t>(sg.dst[static_cast<std::size_t>(s)])],
                                      tr.types[static_cast<std::size_t>(sg.src[static_cast<std::size_t>(s)])]};
            auto [it, fresh] = key_index.emplace(key, static_cast<int>(tr.zeta_keys.size()));
            if (fresh) tr.zeta_keys.push_back(key);
            tr.slot_zeta[static_cast<std::size_t>(s)] = it->second;
        }
        Matrix zeta_in = Matrix::Zero(cfg_.onehot_dim() + 2 * T,
                                      static_cast<Eigen::Index>(tr.zeta_keys.size()));
        for (std::size_t k = 0; k < tr.zeta_keys.size(); ++k) {
            const auto& key = tr.zeta_keys[k];
            auto col = static_cast<Eigen::Index>(k);
            zeta_in(key[0], col) = 1.0;
            zeta_in.col(col).segment(cfg_.onehot_dim(), T) = type_table_.value.col(key[1]);
            zeta_in.col(col).segment(cfg_.onehot_dim() + T, T) = type_table_.value.col(key[2]);
        }
        tr.zeta_out = zeta_.forward(zeta_in, &tr.zeta_trace);

        Matrix rho_in(1, n);
        for (int i = 0; i < n; ++i) rho_in(0, i) = g.nodes[static_cast<std::size_t>(i)].score;
        tr.rho_out = rho_.forward(rho_in, &tr.rho_trace);

        tr.h.reserve(static_cast<std::size_t>(cfg_.layers) + 1);
        tr.h.push_back(proj_.forward(tr.v_embs));

        tr.layer.resize(static_cast<std::size_t>(cfg_.layers));
        for (int k = 0; k < cfg_.layers; ++k) {
            const Layer& lp = layers_[static_cast<std::size_t>(k)];
            LayerTrace& lt = tr.layer[static_cast<std::size_t>(k)];
            const Matrix& h = tr.h.back();

            Matrix att_in(2 * F + T + Z + 2 * S, n_slots);
            Matrix msg_in(F + T + Z, n_slots);
            for (int s = 0; s < n_slots; ++s) {
                int i = sg.dst[static_cast<std::size_t>(s)];
                int j = sg.src[static_cast<std::size_t>(s)];
                int ti = tr.types[static_cast<std::size_t>(i)];
                auto zcol = tr.zeta_out.col(tr.slot_zeta[static_cast<std::size_t>(s)]);
                att_in.col(s).segment(0, F) = h.col(i);
                att_in.col(s).segment(F, F) = h.col(j);
                att_in.col(s).segment(2 * F, T) = type_table_.value.col(ti);
                att_in.col(s).segment(2 * F + T, Z) = zcol;
                att_in.col(s).segment(2 * F + T + Z, S) = tr.rho_out.col(i);
                att_in.col(s).segment(2 * F + T + Z + S, S) = tr.rho_out.col(j);
                msg_in.col(s).segment(0, F) = h.col(j);
                msg_in.col(s).segment(F, T) = type_table_.value.col(ti);
                msg_in.col(s).segment(F + T, Z) = zcol;
            }

            Matrix logits = lp.att.forward(att_in, &lt.att_trace);  // 1 x slots
            lt.alpha.resize(static_cast<std::size_t>(n_slots));
            for (int i = 0; i < n; ++i) {
                int b = sg.node_begin[static_cast<std::size_t>(i)];
                int e = sg.node_begin[static_cast<std::size_t>(i) + 1];
                for (int s = b; s < e; ++s) lt.alpha[static_cast<std::size_t>(s)] = logits(0, s);
                softmax_inplace(lt.alpha.data() + b, static_cast<std::size_t>(e - b));
            }

            lt.msg_out = lp.msg.forward(msg_in, &lt.msg_trace);  // F x slots

            Matrix agg = Matrix::Zero(F, n);
            for (int s = 0; s < n_slots; ++s)
                agg.col(sg.dst[static_cast<std::size_t>(s)]) +=
                    lt.alpha[static_cast<std::size_t>(s)] * lt.msg_out.col(s);

            Matrix out = lp.out.forward(agg, &lt.out_trace);

            if (tr.training) {
                if (!dropout_rng)
                    throw ArgumentError("training-mode forward needs a dropout rng");
                double keep = 1.0 - cfg_.dropout;
                lt.drop_mask.resize(F, n);
                for (int c = 0; c < n; ++c)
                    for (int r = 0; r < F; ++r)
                        lt.drop_mask(r, c) =
                            dropout_rng->next_unit() < keep ? 1.0 / keep : 0.0;
                out = out.cwiseProduct(lt.drop_mask);
            }

            tr.h.push_back(out + h);
        }
        return f;
    }

    // --------------------------------------------------------------------
    // Backward: g_final is dL/d h_K (F x N); g_alpha_final is dL/d alpha for
    // the last layer's slots (empty means zero). Gradients accumulate into
    // the tensors' .grad buffers.
    // --------------------------------------------------------------------

    void backward(const Forward& f, const Matrix& g_final,
                  const std::vector<double>& g_alpha_final = {}) {
        const Trace& tr = f.trace;
        const SlotGraph& sg = tr.slots;
        const int n = sg.n;
        const int n_slots = sg.slot_count();
        const int F = cfg_.feature_dim;
        const int T = cfg_.type_dim;
        const int Z = cfg_.zeta_dim;
        const int S = cfg_.score_dim;

        if (g_final.rows() != F || g_final.cols() != n)
            throw ArgumentError("upstream gradient shape mismatch");
        if (!g_alpha_final.empty() &&
            g_alpha_final.size() != static_cast<std::size_t>(n_slots))
            throw ArgumentError("attention gradient length mismatch");

        Matrix gH = g_final;
        Matrix gZeta = Matrix::Zero(Z, static_cast<Eigen::Index>(tr.zeta_keys.size()));
        Matrix gRho = Matrix::Zero(S, n);

        for (int k = cfg_.layers - 1; k >= 0; --k) {
            Layer& lp = layers_[static_cast<std::size_t>(k)];
            const LayerTrace& lt = tr.layer[static_cast<std::size_t>(k)];

            // h_{k+1} = drop(out) + h_k
            Matrix gFsigma =
                tr.training ? gH.cwiseProduct(lt.drop_mask).eval() : gH;
            Matrix gAgg = lp.out.backward(lt.out_trace, gFsigma);

            std::vector<double> gAlpha(static_cast<std::size_t>(n_slots));
            Matrix gMsg(F, n_slots);
            for (int s = 0; s < n_slots; ++s) {
                int d = sg.dst[static_cast<std::size_t>(s)];
                gAlpha[static_cast<std::size_t>(s)] = lt.msg_out.col(s).dot(gAgg.col(d));
                gMsg.col(s) = lt.alpha[static_cast<std::size_t>(s)] * gAgg.col(d);
            }
            if (k == cfg_.layers - 1 && !g_alpha_final.empty())
                for (int s = 0; s < n_slots; ++s)
                    gAlpha[static_cast<std::size_t>(s)] += g_alpha_final[static_cast<std::size_t>(s)];

            // softmax backward per destination group
            Matrix gLogits(1, n_slots);
            for (int i = 0; i < n; ++i) {
                int b = sg.node_begin[static_cast<std::size_t>(i)];
                int e = sg.node_begin[static_cast<std::size_t>(i) + 1];
                double dot = 0.0;
                for (int s = b; s < e; ++s)
                    dot += lt.alpha[static_cast<std::size_t>(s)] * gAlpha[static_cast<std::size_t>(s)];
                for (int s = b; s < e; ++s)
                    gLogits(0, s) = lt.alpha[static_cast<std::size_t>(s)] *
                                    (gAlpha[static_cast<std::size_t>(s)] - dot);
            }

            Matrix gAttIn = lp.att.backward(lt.att_trace, gLogits);
            Matrix gMsgIn = lp.msg.backward(lt.msg_trace, gMsg);

            // scatter into h_k, type table, zeta, rho
            for (int s = 0; s < n_slots; ++s) {
                int i = sg.dst[static_cast<std::size_t>(s)];
                int j = sg.src[static_cast<std::size_t>(s)];
                int ti = tr.types[static_cast<std::size_t>(i)];
                int zk = tr.slot_zeta[static_cast<std::size_t>(s)];
                gH.col(i) += gAttIn.col(s).segment(0, F);
                gH.col(j) += gAttIn.col(s).segment(F, F);
                type_table_.grad.col(ti) += gAttIn.col(s).segment(2 * F, T);
                gZeta.col(zk) += gAttIn.col(s).segment(2 * F + T, Z);
                gRho.col(i) += gAttIn.col(s).segment(2 * F + T + Z, S);
                gRho.col(j) += gAttIn.col(s).segment(2 * F + T + Z + S, S);
                gH.col(j) += gMsgIn.col(s).segment(0, F);
                type_table_.grad.col(ti) += gMsgIn.col(s).segment(F, T);
                gZeta.col(zk) += gMsgIn.col(s).segment(F + T, Z);
            }
        }

        // Shared embeddings: one backward each, after all layers contributed.
        Matrix gZetaIn = zeta_.backward(tr.zeta_trace, gZeta);
        for (std::size_t k = 0; k < tr.zeta_keys.size(); ++k) {
            const auto& key = tr.zeta_keys[k];
            auto col = static_cast<Eigen::Index>(k);
            type_table_.grad.col(key[1]) += gZetaIn.col(col).segment(cfg_.onehot_dim(), T);
            type_table_.grad.col(key[2]) +=
                gZetaIn.col(col).segment(cfg_.onehot_dim() + T, T);
        }
        rho_.backward(tr.rho_trace, gRho);     // score inputs are frozen
        proj_.backward(tr.v_embs, gH);         // provider embeddings are frozen
    }

    // Test/tooling access to the parameter groups.
    Linear& input_projection() { return proj_; }
    Tensor& type_table() { return type_table_; }
    Mlp2& zeta() { return zeta_; }
    Mlp2& rho() { return rho_; }
    struct Layer {
        Mlp2 msg, att, out;
    };
    std::vector<Layer>& layers() { return layers_; }

private:
    GatConfig cfg_;
    Linear proj_;
    Tensor type_table_;
    Mlp2 zeta_, rho_;
    std::vector<Layer> layers_;
};

// ---------------------------------------------------------------------------
// Checkpoint container: magic `LMXG`, version, shape header, dropout, seed,
// config-echo JSON, then every tensor as (rows, cols, row-major f64 LE).
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(out, bits);
}

inline std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw ParseError("checkpoint truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw ParseError("checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline double get_f64(std::istream& in) {
    std::uint64_t bits = get_u64(in);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[4] = {'L', 'M', 'X', 'G'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const GatConfig& cfg,
                            const std::vector<Tensor*>& tensors,
                            const nlohmann::json& config_echo) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, 4);
    detail::put_u32(out, kCheckpointVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(cfg.feature_dim));
    detail::put_u32(out, static_cast<std::uint32_t>(cfg.embed_dim));
    detail::put_u32(out, static_cast<std::uint32_t>(cfg.layers));
    detail::put_u32(out, static_cast<std::uint32_t>(cfg.relation_count));
    detail::put_u32(out, static_cast<std::uint32_t>(cfg.type_dim));
    detail::put_u32(out, static_cast<std::uint32_t>(cfg.zeta_dim));
    detail::put_u32(out, static_cast<std::uint32_t>(cfg.score_dim));
    detail::put_f64(out, cfg.dropout);
    detail::put_u64(out, cfg.seed);
    std::string echo = config_echo.dump();
    detail::put_u32(out, static_cast<std::uint32_t>(echo.size()));
    out.write(echo.data(), static_cast<std::streamsize>(echo.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const Tensor* t : tensors) {
        detail::put_u32(out, static_cast<std::uint32_t>(t->value.rows()));
        detail::put_u32(out, static_cast<std::uint32_t>(t->value.cols()));
        for (Eigen::Index r = 0; r < t->value.rows(); ++r)
            for (Eigen::Index c = 0; c < t->value.cols(); ++c)
                detail::put_f64(out, t->value(r, c));
    }
    if (!out) throw ConfigError("short write on checkpoint: " + path);
}

struct CheckpointData {
    GatConfig cfg;
    nlohmann::json config_echo;
    std::vector<Matrix> tensors;
};

inline CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw ParseError("not a checkpoint file (bad magic): " + path);
    std::uint32_t version = detail::get_u32(in);
    if (version != kCheckpointVersion)
        throw ParseError("unsupported checkpoint version " + std::to_string(version));
    CheckpointData data;
    data.cfg.feature_dim = static_cast<int>(detail::get_u32(in));
    data.cfg.embed_dim = static_cast<int>(detail::get_u32(in));
    data.cfg.layers = static_cast<int>(detail::get_u32(in));
    data.cfg.relation_count = static_cast<int>(detail::get_u32(in));
    data.cfg.type_dim = static_cast<int>(detail::get_u32(in));
    data.cfg.zeta_dim = static_cast<int>(detail::get_u32(in));
    data.cfg.score_dim = static_cast<int>(detail::get_u32(in));
    data.cfg.dropout = detail::get_f64(in);
    data.cfg.seed = detail::get_u64(in);
    std::uint32_t echo_len = detail::get_u32(in);
    std::string echo(echo_len, '\0');
    in.read(echo.data(), echo_len);
    if (!in) throw ParseError("checkpoint truncated in config echo");
    try {
        data.config_echo = nlohmann::json::parse(echo);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint config echo is not JSON: ") + e.what());
    }
    std::uint32_t count = detail::get_u32(in);
    data.tensors.reserve(count);
    for (std::uint32_t t = 0; t < count; ++t) {
        std::uint32_t rows = detail::get_u32(in);
        std::uint32_t cols = detail::get_u32(in);
        Matrix m(rows, cols);
        for (std::uint32_t r = 0; r < rows; ++r)
            for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = detail::get_f64(in);
        data.tensors.push_back(std::move(m));
    }
    return data;
}

// Restores tensor values into an existing network/head tensor list.
inline void restore_tensors(const CheckpointData& data, const std::vector<Tensor*>& tensors) {
    if (data.tensors.size() != tensors.size())
        throw IntegrityError("checkpoint tensor count mismatch: file has " +
                             std::to_string(data.tensors.size()) + ", model expects " +
                             std::to_string(tensors.size()));
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (data.tensors[i].rows() != tensors[i]->value.rows() ||
            data.tensors[i].cols() != tensors[i]->value.cols())
            throw IntegrityError("checkpoint tensor shape mismatch at index " +
                                 std::to_string(i));
        tensors[i]->value = data.tensors[i];
    }
}

}  // namespace lmx
