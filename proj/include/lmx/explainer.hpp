#pragma once

// Explanation assembly: rank the graph nodes the final attention layer leaned
// on, render the two-stage prompt (why this choice, then why not the others),
// drive the chat client, and package everything as a JSON bundle.
//
// Ranking = incoming attention mass per source node, self slots excluded
// (a node should rank by how much the rest of the graph attends to it, not
// by its own residual slot). Ties break toward the lower node index.

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmx/common.hpp"
#include "lmx/element_graph.hpp"
#include "lmx/gat.hpp"
#include "lmx/llm_client.hpp"
#include "lmx/text_template.hpp"

namespace lmx {

struct ReasonElement {
    int node = 0;  // local index in the element graph
    std::string label;
    double mass = 0.0;
    int rank = 0;  // 1-based
};

inline std::vector<ReasonElement> rank_reason_elements(
    const ElementGraph& graph, const AttentionLayer& final_attention,
    int top_w) {
    if (top_w < 1) throw ArgumentError("top_w must be >= 1");
    const int n = graph.node_count();
    if (n == 0) throw ArgumentError("element graph has no nodes");
    std::vector<double> mass(static_cast<std::size_t>(n), 0.0);
    for (const auto& slot : final_attention) {
        if (slot.edge_id < 0) continue;  // self slot
        if (slot.src < 0 || slot.src >= n)
            throw ArgumentError("attention slot source out of range");
        mass[static_cast<std::size_t>(slot.src)] += slot.alpha;
    }
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        double ma = mass[static_cast<std::size_t>(a)];
        double mb = mass[static_cast<std::size_t>(b)];
        if (ma != mb) return ma > mb;
        return a < b;
    });
    int take = std::min(top_w, n);
    std::vector<ReasonElement> out;
    out.reserve(static_cast<std::size_t>(take));
    for (int r = 0; r < take; ++r) {
        int node = order[static_cast<std::size_t>(r)];
        out.push_back({node, graph.nodes[static_cast<std::size_t>(node)].label,
                       mass[static_cast<std::size_t>(node)], r + 1});
    }
    return out;
}

// --- prompt-facing formatting ----------------------------------------------

// "quiet_chattering_mind" -> "Quiet chattering mind"
inline std::string display_label(const std::string& label) {
    std::string out = label;
    for (char& c : out)
        if (c == '_') c = ' ';
    if (!out.empty() && out[0] >= 'a' && out[0] <= 'z')
        out[0] = static_cast<char>(out[0] - 'a' + 'A');
    return out;
}

inline std::string choice_letter(int index) {
    if (index < 0 || index > 25)
        throw ArgumentError("choice index out of letter range: " +
                            std::to_string(index));
    return std::string(1, static_cast<char>('A' + index));
}

// "A. Reading"
inline std::string format_choice(int index, const std::string& text) {
    return choice_letter(index) + ". " + display_label(text);
}

// "A. Reading, B. Meditate, ..."
inline std::string format_choices(const std::vector<std::string>& choices) {
    std::vector<std::string> parts;
    parts.reserve(choices.size());
    for (int i = 0; i < static_cast<int>(choices.size()); ++i)
        parts.push_back(format_choice(i, choices[static_cast<std::size_t>(i)]));
    return join(parts, ", ");
}

// All options except the predicted one, keeping their original letters.
inline std::string format_remaining_choices(
    const std::vector<std::string>& choices, int predicted) {
    std::vector<std::string> parts;
    for (int i = 0; i < static_cast<int>(choices.size()); ++i)
        if (i != predicted)
            parts.push_back(
                format_choice(i, choices[static_cast<std::size_t>(i)]));
    if (parts.empty()) throw RenderError("no remaining choices to explain");
    return join(parts, ", ");
}

// "1. Quiet chattering mind, 2. Not making sound, ..."
inline std::string format_reason_elements(
    const std::vector<ReasonElement>& elements) {
    std::vector<std::string> parts;
    parts.reserve(elements.size());
    for (const auto& e : elements)
        parts.push_back(std::to_string(e.rank) + ". " + display_label(e.label));
    return join(parts, ", ");
}

// --- two-stage rendering + generation ----------------------------------------

class Explainer {
public:
    Explainer(TextTemplate stage1, TextTemplate stage2, std::string task_type)
        : stage1_(std::move(stage1)),
          stage2_(std::move(stage2)),
          task_type_(std::move(task_type)) {
        if (task_type_.empty()) throw ArgumentError("task type must be set");
    }

    static Explainer from_files(const std::string& stage1_path,
                                const std::string& stage2_path,
                                std::string task_type) {
        return Explainer(TextTemplate::from_file(stage1_path),
                         TextTemplate::from_file(stage2_path),
                         std::move(task_type));
    }

    const std::string& task_type() const { return task_type_; }

    std::string render_stage1(const std::string& question,
                              const std::vector<std::string>& choices,
                              int predicted,
                              const std::vector<ReasonElement>& elements) const {
        check_choices(choices, predicted);
        if (elements.empty())
            throw RenderError("no reason elements to explain");
        std::map<std::string, std::string> values{
            {"task_type", task_type_},
            {"question", question},
            {"choices", format_choices(choices)},
            {"prediction",
             format_choice(predicted, choices[static_cast<std::size_t>(predicted)])},
            {"reason_elements", format_reason_elements(elements)},
        };
        return stage1_.render(values);
    }

    std::string render_stage2(const std::string& stage1_explanation,
                              const std::vector<std::string>& choices,
                              int predicted) const {
        check_choices(choices, predicted);
        if (stage1_explanation.empty())
            throw RenderError(
                "stage-2 prompt requires a non-empty stage-1 explanation");
        std::map<std::string, std::string> values{
            {"e0", stage1_explanation},
            {"remaining_choices", format_remaining_choices(choices, predicted)},
        };
        return stage2_.render(values);
    }

private:
    static void check_choices(const std::vector<std::string>& choices,
                              int predicted) {
        if (choices.size() < 2)
            throw ArgumentError("need at least two answer options");
        if (predicted < 0 || predicted >= static_cast<int>(choices.size()))
            throw ArgumentError("predicted index out of range");
    }

    TextTemplate stage1_;
    TextTemplate stage2_;
    std::string task_type_;
};

// --- bundle -------------------------------------------------------------------

struct ExplanationBundle {
    std::string id;
    std::string question;
    std::vector<std::string> choices;
    int predicted = 0;
    std::vector<ReasonElement> elements;
    std::string e0;     // why-choose
    std::string e1;     // why-not-choose
    std::string model;
    std::int64_t ts = 0;
    bool complete = false;
};

inline nlohmann::json bundle_to_json(const ExplanationBundle& b) {
    nlohmann::json j;
    j["id"] = b.id;
    j["question"] = b.question;
    j["choices"] = b.choices;
    j["prediction"] = {
        {"index", b.predicted},
        {"display",
         format_choice(b.predicted,
                       b.choices[static_cast<std::size_t>(b.predicted)])}};
    j["reason_elements"] = nlohmann::json::array();
    for (const auto& e : b.elements)
        j["reason_elements"].push_back(
            {{"label", e.label}, {"mass", e.mass}, {"rank", e.rank}});
    j["e0"] = b.e0;
    j["e1"] = b.e1;
    j["model"] = b.model;
    j["ts"] = b.ts;
    j["complete"] = b.complete;
    return j;
}

inline ExplanationBundle bundle_from_json(const nlohmann::json& j) {
    ExplanationBundle b;
    b.id = j.at("id").get<std::string>();
    b.question = j.at("question").get<std::string>();
    b.choices = j.at("choices").get<std::vector<std::string>>();
    b.predicted = j.at("prediction").at("index").get<int>();
    int rank = 0;
    for (const auto& e : j.at("reason_elements")) {
        ReasonElement re;
        re.label = e.at("label").get<std::string>();
        re.mass = e.at("mass").get<double>();
        re.rank = e.at("rank").get<int>();
        re.node = rank++;  // local index is not persisted
        b.elements.push_back(re);
    }
    b.e0 = j.at("e0").get<std::string>();
    b.e1 = j.at("e1").get<std::string>();
    b.model = j.at("model").get<std::string>();
    b.ts = j.at("ts").get<std::int64_t>();
    b.complete = j.at("complete").get<bool>();
    return b;
}

// Runs stage 1 then stage 2, filling `bundle` as it goes. On a transport (or
// any other) failure the exception propagates and `bundle` is left holding
// whatever completed, flagged incomplete; stage 2 is never attempted when
// stage 1 failed.
inline void generate_explanations(const Explainer& explainer,
                                  ChatClient& client,
                                  ExplanationBundle& bundle) {
    bundle.model = client.config().model;
    bundle.ts = client.clock().now_epoch_seconds();
    bundle.complete = false;
    bundle.e0.clear();
    bundle.e1.clear();

    std::string p1 = explainer.render_stage1(bundle.question, bundle.choices,
                                             bundle.predicted, bundle.elements);
    bundle.e0 = client.complete_prompt(p1);

    std::string p2 =
        explainer.render_stage2(bundle.e0, bundle.choices, bundle.predicted);
    bundle.e1 = client.complete_prompt(p2);
    bundle.complete = true;
}

}  // namespace lmx
