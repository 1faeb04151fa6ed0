#pragma once

// Offline scoring of pipeline outputs: answer accuracy, planted-path recall
// of the surfaced reason elements, the reliability-vs-correctness confusion
// matrix, and 3-point Likert normalization to [0, 1] via (score - 1) / 2.

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmx/common.hpp"
#include "lmx/debugger.hpp"
#include "lmx/explainer.hpp"
#include "lmx/pipeline.hpp"

namespace lmx {

inline double likert_unit(int score) {
    if (score < 1 || score > 3)
        throw ArgumentError("3-point Likert score must be in 1..3, got " +
                            std::to_string(score));
    return static_cast<double>(score - 1) / 2.0;
}

struct EvalResult {
    int items = 0;
    int correct = 0;
    double accuracy = 0.0;

    int recall_items = 0;           // correctly answered items with a planted set
    double mean_planted_recall = 0.0;

    int judged = 0;                 // bundles with a reliability verdict
    int reliable_correct = 0;
    int reliable_incorrect = 0;
    int unreliable_correct = 0;
    int unreliable_incorrect = 0;

    std::vector<int> likert_scores;
    std::vector<double> likert_normalized;
};

// Bundles are joined to gold answers, planted paths, and verdicts by item id.
inline EvalResult evaluate_outputs(
    const std::vector<DatasetItem>& dataset,
    const std::vector<ExplanationBundle>& bundles,
    const std::map<std::string, std::vector<std::string>>& planted,
    const std::map<std::string, bool>& verdicts,
    const std::vector<int>& likert_scores, int top_w) {
    if (top_w < 1) throw ArgumentError("top_w must be >= 1");
    if (bundles.empty()) throw DataError("no bundles to evaluate");

    std::map<std::string, const DatasetItem*> by_id;
    for (const auto& item : dataset) by_id[item.id] = &item;

    EvalResult r;
    double recall_sum = 0.0;
    for (const auto& b : bundles) {
        auto it = by_id.find(b.id);
        if (it == by_id.end())
            throw DataError("bundle id '" + b.id + "' not in the dataset");
        const DatasetItem& item = *it->second;
        if (b.choices != item.choices)
            throw DataError("bundle '" + b.id +
                            "' disagrees with the dataset choices");
        ++r.items;
        const bool is_correct = b.predicted == item.answer;
        if (is_correct) ++r.correct;

        auto path_it = planted.find(b.id);
        if (is_correct && path_it != planted.end() &&
            !path_it->second.empty()) {
            std::set<std::string> want(path_it->second.begin(),
                                       path_it->second.end());
            int hit = 0;
            int used = 0;
            for (const auto& e : b.elements) {
                if (used == top_w) break;
                ++used;
                if (want.count(e.label)) ++hit;
            }
            recall_sum +=
                static_cast<double>(hit) / static_cast<double>(want.size());
            ++r.recall_items;
        }

        auto verdict_it = verdicts.find(b.id);
        if (verdict_it != verdicts.end()) {
            ++r.judged;
            if (verdict_it->second)
                ++(is_correct ? r.reliable_correct : r.reliable_incorrect);
            else
                ++(is_correct ? r.unreliable_correct : r.unreliable_incorrect);
        }
    }
    r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.items);
    if (r.recall_items > 0)
        r.mean_planted_recall =
            recall_sum / static_cast<double>(r.recall_items);

    r.likert_scores = likert_scores;
    r.likert_normalized.reserve(likert_scores.size());
    for (int s : likert_scores) r.likert_normalized.push_back(likert_unit(s));
    return r;
}

inline nlohmann::json eval_to_json(const EvalResult& r) {
    nlohmann::json j;
    j["items"] = r.items;
    j["correct"] = r.correct;
    j["accuracy"] = r.accuracy;
    j["planted_recall"] = {{"items", r.recall_items},
                           {"mean", r.mean_planted_recall}};
    j["reliability_matrix"] = {{"judged", r.judged},
                               {"reliable_correct", r.reliable_correct},
                               {"reliable_incorrect", r.reliable_incorrect},
                               {"unreliable_correct", r.unreliable_correct},
                               {"unreliable_incorrect", r.unreliable_incorrect}};
    j["likert"] = {{"scores", r.likert_scores},
                   {"normalized", r.likert_normalized}};
    return j;
}

// --- sidecar loaders -----------------------------------------------------------

inline std::vector<ExplanationBundle> load_bundles(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open bundles '" + path + "'");
    std::vector<ExplanationBundle> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw ParseError("bundles '" + path + "' line " +
                             std::to_string(line_no) + ": invalid JSON");
        try {
            out.push_back(bundle_from_json(j));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("bundles '" + path + "' line " +
                             std::to_string(line_no) + ": " + e.what());
        }
    }
    if (out.empty()) throw DataError("bundles '" + path + "' is empty");
    return out;
}

inline std::map<std::string, std::vector<std::string>> load_planted_paths(
    const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open paths file '" + path + "'");
    std::map<std::string, std::vector<std::string>> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("id") || !j.contains("planted"))
            throw ParseError("paths '" + path + "' line " +
                             std::to_string(line_no) +
                             ": expected {id, planted}");
        out[j["id"].get<std::string>()] =
            j["planted"].get<std::vector<std::string>>();
    }
    return out;
}

inline std::map<std::string, bool> load_verdicts(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open reports '" + path + "'");
    std::map<std::string, bool> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw ParseError("reports '" + path + "' line " +
                             std::to_string(line_no) + ": invalid JSON");
        try {
            DebugReport r = report_from_json(j);
            out[r.id] = r.reliable;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("reports '" + path + "' line " +
                             std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

inline std::vector<int> load_likert(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open Likert file '" + path + "'");
    std::vector<int> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            std::size_t used = 0;
            int v = std::stoi(line, &used);
            if (used != line.size()) throw std::invalid_argument(line);
            out.push_back(v);
        } catch (const std::exception&) {
            throw ParseError("Likert file '" + path + "' line " +
                             std::to_string(line_no) +
                             ": expected a bare integer");
        }
    }
    return out;
}

}  // namespace lmx
