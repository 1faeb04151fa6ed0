#pragma once

// Explanation quality audit: render the four-dimension review prompt, parse
// the reviewer's scores (markdown-tolerant "<dimension>: <n>/5" lines plus an
// advice paragraph), and classify reliability as
//     min(faithfulness, accuracy) >= threshold       (default threshold 3).

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmx/common.hpp"
#include "lmx/explainer.hpp"
#include "lmx/text_template.hpp"

namespace lmx {

constexpr int kDefaultReliabilityThreshold = 3;

struct DebugScores {
    int faithfulness = 0;
    int completeness = 0;
    int minimality = 0;
    int accuracy = 0;

    int& by_index(int i) {
        switch (i) {
            case 0: return faithfulness;
            case 1: return completeness;
            case 2: return minimality;
            default: return accuracy;
        }
    }
    int by_index(int i) const {
        return const_cast<DebugScores*>(this)->by_index(i);
    }
};

inline const std::array<std::string, 4>& score_dimension_names() {
    static const std::array<std::string, 4> names{
        "faithfulness", "completeness", "minimality", "accuracy"};
    return names;
}

struct DebugReport {
    std::string id;
    DebugScores scores;
    std::string advice;
    bool reliable = false;
    int threshold = kDefaultReliabilityThreshold;
    std::string raw_response;
};

// --- prompt -------------------------------------------------------------------

// The bundle's two explanation stages are reviewed as one text.
inline std::string combined_explanation(const ExplanationBundle& b) {
    if (b.e1.empty()) return b.e0;
    return b.e0 + "\n\n" + b.e1;
}

inline std::string render_debug_prompt(const TextTemplate& tpl,
                                       const std::string& model_name,
                                       const std::string& task_type,
                                       const ExplanationBundle& bundle) {
    if (model_name.empty()) throw ArgumentError("model name must be set");
    std::string expl = combined_explanation(bundle);
    if (expl.empty())
        throw RenderError("bundle has no explanation text to review");
    std::map<std::string, std::string> values{
        {"model_name", model_name},
        {"task_type", task_type},
        {"question", bundle.question},
        {"choices", format_choices(bundle.choices)},
        {"prediction",
         format_choice(bundle.predicted,
                       bundle.choices[static_cast<std::size_t>(bundle.predicted)])},
        {"reason_elements", format_reason_elements(bundle.elements)},
        {"explanation", expl},
    };
    return tpl.render(values);
}

// --- response parsing ----------------------------------------------------------

namespace detail {

// Lowercases and drops markdown emphasis/heading characters so that
// "- **Faithfulness:** 4/5" and "faithfulness: 4/5" match the same way.
inline std::string strip_markup(const std::string& line) {
    std::string out;
    out.reserve(line.size());
    for (char c : line) {
        if (c == '*' || c == '#' || c == '`') continue;
        out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

// Tries to read "<name> ... : <int> / 5" from one stripped line. Returns
// true and the integer when the shape matches; out-of-range values are the
// caller's problem (they must raise, not be ignored).
inline bool parse_score_line(const std::string& stripped,
                             const std::string& name, long* value) {
    auto pos = stripped.find(name);
    if (pos == std::string::npos) return false;
    auto colon = stripped.find(':', pos + name.size());
    if (colon == std::string::npos) return false;
    std::size_t i = colon + 1;
    while (i < stripped.size() &&
           std::isspace(static_cast<unsigned char>(stripped[i])) != 0)
        ++i;
    if (i >= stripped.size() ||
        std::isdigit(static_cast<unsigned char>(stripped[i])) == 0)
        return false;
    std::size_t digits = i;
    while (digits < stripped.size() &&
           std::isdigit(static_cast<unsigned char>(stripped[digits])) != 0)
        ++digits;
    long v = std::stol(stripped.substr(i, digits - i));
    std::size_t j = digits;
    while (j < stripped.size() &&
           std::isspace(static_cast<unsigned char>(stripped[j])) != 0)
        ++j;
    if (j >= stripped.size() || stripped[j] != '/') return false;
    ++j;
    while (j < stripped.size() &&
           std::isspace(static_cast<unsigned char>(stripped[j])) != 0)
        ++j;
    if (j >= stripped.size() || stripped[j] != '5') return false;
    *value = v;
    return true;
}

}  // namespace detail

// Extracts the four dimension scores and the advice paragraph. Raises
// ParseError naming the dimension when a score is missing, duplicated, or
// outside 1..5. Advice is everything after the first "advice...:" heading;
// absent heading yields empty advice.
inline DebugReport parse_debug_response(const std::string& text) {
    DebugReport report;
    report.raw_response = text;

    std::vector<std::string> lines;
    {
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) lines.push_back(line);
    }

    std::array<int, 4> seen{0, 0, 0, 0};
    bool in_advice = false;
    std::string advice;
    for (const auto& raw : lines) {
        std::string stripped = detail::strip_markup(raw);
        if (in_advice) {
            advice += "\n" + raw;
            continue;
        }
        {
            // Advice heading: "advice" followed by a colon on the same line.
            // Index into the raw line (lowercased only, so offsets agree) to
            // keep the advice text's original case and punctuation.
            std::string low = to_lower(raw);
            auto pos = low.find("advice");
            auto colon =
                pos == std::string::npos ? std::string::npos : raw.find(':', pos);
            if (colon != std::string::npos) {
                in_advice = true;
                std::string tail = raw.substr(colon + 1);
                std::size_t start = tail.find_first_not_of("*#` \t");
                advice += start == std::string::npos ? std::string()
                                                     : tail.substr(start);
                continue;
            }
        }
        for (int d = 0; d < 4; ++d) {
            long value = 0;
            if (!detail::parse_score_line(stripped, score_dimension_names()[static_cast<std::size_t>(d)],
                                          &value))
                continue;
            if (seen[static_cast<std::size_t>(d)]++)
                throw ParseError("duplicate score for " +
                                 score_dimension_names()[static_cast<std::size_t>(d)]);
            if (value < 1 || value > 5)
                throw ParseError("score for " +
                                 score_dimension_names()[static_cast<std::size_t>(d)] +
                                 " out of range: " + std::to_string(value));
            report.scores.by_index(d) = static_cast<int>(value);
        }
    }
    for (int d = 0; d < 4; ++d)
        if (!seen[static_cast<std::size_t>(d)])
            throw ParseError("missing score for " +
                             score_dimension_names()[static_cast<std::size_t>(d)]);

    // Trim the advice block.
    std::size_t b = advice.find_first_not_of(" \t\r\n");
    std::size_t e = advice.find_last_not_of(" \t\r\n");
    report.advice =
        b == std::string::npos ? std::string() : advice.substr(b, e - b + 1);
    return report;
}

inline bool classify_reliability(const DebugScores& scores,
                                 int threshold = kDefaultReliabilityThreshold) {
    if (threshold < 1 || threshold > 5)
        throw ArgumentError("reliability threshold must be in 1..5");
    return std::min(scores.faithfulness, scores.accuracy) >= threshold;
}

// Canonical rendering of a report back into response text; parsing it again
// recovers the same scores and advice.
inline std::string canonical_debug_response(const DebugScores& scores,
                                            const std::string& advice) {
    std::ostringstream out;
    out << "Faithfulness: " << scores.faithfulness << "/5\n"
        << "Completeness: " << scores.completeness << "/5\n"
        << "Minimality: " << scores.minimality << "/5\n"
        << "Accuracy: " << scores.accuracy << "/5\n"
        << "Advice: " << advice << "\n";
    return out.str();
}

inline nlohmann::json report_to_json(const DebugReport& r) {
    nlohmann::json j;
    j["id"] = r.id;
    j["scores"] = {{"faithfulness", r.scores.faithfulness},
                   {"completeness", r.scores.completeness},
                   {"minimality", r.scores.minimality},
                   {"accuracy", r.scores.accuracy}};
    j["advice"] = r.advice;
    j["reliable"] = r.reliable;
    j["threshold"] = r.threshold;
    return j;
}

inline DebugReport report_from_json(const nlohmann::json& j) {
    DebugReport r;
    r.id = j.at("id").get<std::string>();
    r.scores.faithfulness = j.at("scores").at("faithfulness").get<int>();
    r.scores.completeness = j.at("scores").at("completeness").get<int>();
    r.scores.minimality = j.at("scores").at("minimality").get<int>();
    r.scores.accuracy = j.at("scores").at("accuracy").get<int>();
    r.advice = j.at("advice").get<std::string>();
    r.reliable = j.at("reliable").get<bool>();
    r.threshold = j.at("threshold").get<int>();
    return r;
}

// Full audit step: render the review prompt, ask the reviewer, parse, classify.
inline DebugReport run_debugger(const TextTemplate& tpl, ChatClient& client,
                                const std::string& model_name,
                                const std::string& task_type,
                                const ExplanationBundle& bundle,
                                int threshold = kDefaultReliabilityThreshold) {
    std::string prompt =
        render_debug_prompt(tpl, model_name, task_type, bundle);
    std::string response = client.complete_prompt(prompt);
    DebugReport report = parse_debug_response(response);
    report.id = bundle.id;
    report.threshold = threshold;
    report.reliable = classify_reliability(report.scores, threshold);
    return report;
}

}  // namespace lmx
