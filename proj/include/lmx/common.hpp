#pragma once

// Shared utilities: error taxonomy, deterministic hashing/RNG, tokenization,
// small file helpers. Everything here is dependency-free.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lmx {

// ---------------------------------------------------------------------------
// Errors. Each maps to one CLI exit code (see tools/lmx.cpp for the table).
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ArgumentError : Error { using Error::Error; };   // violated precondition
struct ConfigError : Error { using Error::Error; };     // bad configuration / missing files
struct ParseError : Error { using Error::Error; };      // malformed input text
struct IntegrityError : Error { using Error::Error; };  // structurally inconsistent data
struct LookupError : Error { using Error::Error; };     // missing table entry
struct DataError : Error { using Error::Error; };       // dataset schema violations
struct RenderError : Error { using Error::Error; };     // template slot violations
struct TransportError : Error { using Error::Error; };  // network failures after retries
struct ProtocolError : Error { using Error::Error; };   // malformed remote responses
struct TrainingError : Error { using Error::Error; };   // non-finite loss and friends

// ---------------------------------------------------------------------------
// Deterministic hashing and RNG. These are part of the on-disk/test contract
// (synthetic embeddings, parameter init, cassette keys), so they are pinned
// here rather than delegated to implementation-defined std facilities.
// ---------------------------------------------------------------------------

// FNV-1a, 64-bit.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
}

constexpr std::uint64_t kGolden64 = 0x9E3779B97F4A7C15ull;

// Minimal splitmix64 stream. Sequential draws from a 64-bit state.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += kGolden64;
        return mix64(state_);
    }

    // Uniform in [0, 1), 53-bit mantissa.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [-1, 1).
    double next_symmetric() { return 2.0 * next_unit() - 1.0; }

    // Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

private:
    std::uint64_t state_;
};

// Counter-based expansion: value k of the stream keyed by h, no state carried.
inline double counter_unit(std::uint64_t h, std::uint64_t k) {
    return static_cast<double>(mix64(h + (k + 1) * kGolden64) >> 11) * 0x1.0p-53;
}

// In-place Fisher-Yates with a pinned generator (std::shuffle is
// implementation-defined).
template <typename T>
void deterministic_shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(v[i - 1], v[j]);
    }
}

// ---------------------------------------------------------------------------
// Text normalization and tokenization (whitespace tokens, lowercase,
// punctuation stripped). Used by grounding and the built-in tokenizer.
// ---------------------------------------------------------------------------

inline std::string to_lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c) || c == '_') {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// File helpers.
// ---------------------------------------------------------------------------

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write file: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

}  // namespace lmx
