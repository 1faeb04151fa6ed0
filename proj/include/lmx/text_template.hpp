#pragma once

// Minimal prompt templating: "{{slot}}" placeholders over plain text.
//   - slot names are [A-Za-z_][A-Za-z0-9_]*
//   - a literal "{{" is written as "{{{{" in the template source
//   - values are inserted verbatim (rendered output is final text, never
//     re-parsed), so no escaping is applied to them
// Render fails loudly: unknown placeholder, missing value, or empty value
// all raise RenderError so a half-filled prompt can never reach a model.

#include <cctype>
#include <map>
#include <string>
#include <vector>

#include "lmx/common.hpp"

namespace lmx {

class TextTemplate {
 public:
    // Parses and validates the source; malformed placeholder syntax raises
    // ParseError with the byte offset of the problem.
    explicit TextTemplate(std::string source) : source_(std::move(source)) {
        parse();
    }

    static TextTemplate from_file(const std::string& path) {
        return TextTemplate(read_file(path));
    }

    const std::string& source() const { return source_; }

    // Distinct placeholder names in order of first appearance.
    const std::vector<std::string>& slots() const { return slots_; }

    std::string render(const std::map<std::string, std::string>& values) const {
        std::string out;
        out.reserve(source_.size());
        for (const auto& piece : pieces_) {
            if (!piece.is_slot) {
                out += piece.text;
                continue;
            }
            auto it = values.find(piece.text);
            if (it == values.end())
                throw RenderError("no value supplied for slot '" + piece.text +
                                  "'");
            if (it->second.empty())
                throw RenderError("value for slot '" + piece.text +
                                  "' is empty");
            out += it->second;
        }
        return out;
    }

 private:
    struct Piece {
        bool is_slot = false;
        std::string text;  // literal text, or the slot name
    };

    static bool name_start(char c) {
        return std::isalpha(static_cast<unsigned char>(c)) != 0 || c == '_';
    }
    static bool name_char(char c) {
        return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
    }

    void parse() {
        std::string literal;
        std::size_t i = 0;
        const std::size_t n = source_.size();
        while (i < n) {
            if (source_.compare(i, 4, "{{{{") == 0) {
                literal += "{{";
                i += 4;
                continue;
            }
            if (source_.compare(i, 2, "{{") == 0) {
                std::size_t p = i + 2;
                if (p >= n || !name_start(source_[p]))
                    throw ParseError("malformed placeholder at byte " +
                                     std::to_string(i));
                std::size_t q = p;
                while (q < n && name_char(source_[q])) ++q;
                if (source_.compare(q, 2, "}}") != 0)
                    throw ParseError("unterminated placeholder at byte " +
                                     std::to_string(i));
                if (!literal.empty()) {
                    pieces_.push_back({false, literal});
                    literal.clear();
                }
                std::string name = source_.substr(p, q - p);
                pieces_.push_back({true, name});
                bool seen = false;
                for (const auto& s : slots_) seen = seen || s == name;
                if (!seen) slots_.push_back(name);
                i = q + 2;
                continue;
            }
            literal += source_[i];
            ++i;
        }
        if (!literal.empty()) pieces_.push_back({false, literal});
    }

    std::string source_;
    std::vector<Piece> pieces_;
    std::vector<std::string> slots_;
};

}  // namespace lmx
