#pragma once

// Shared example inputs used by the prompt-rendering and review-parsing
// tests, plus the explanation strings baked into the golden render files.
// Anything here that also appears inside tests/golden/ must stay in sync
// with those files byte-for-byte.

#include <string>
#include <vector>

#include "lmx/explainer.hpp"

namespace fixture {

inline const char* kQuestion =
    "What is someone doing if he or she is sitting quietly and his or her "
    "eyes are moving?";

inline std::vector<std::string> choices() {
    return {"reading", "meditate", "fall asleep", "bunk", "think"};
}

inline std::vector<lmx::ReasonElement> elements() {
    return {{0, "quiet_chattering_mind", 0.31, 1},
            {1, "not_making_sound", 0.27, 2},
            {2, "mind_focuses", 0.22, 3},
            {3, "glasses_for_people_with_poor_eyesight", 0.11, 4},
            {4, "war", 0.05, 5}};
}

inline const char* kTaskType = "commonsense question answering";
inline const char* kModelName = "gpt-4";

inline const char* kE0 =
    "The model favors A. Reading because the top elements point to a quiet, "
    "visually focused activity: a quiet mind and the absence of sound fit "
    "silent engagement, focused attention matches following a text, and "
    "eyewear points to a visual task, while the last element carries little "
    "weight.";

// No trailing period: the review template closes the explanation slot with
// its own "." and the golden file reflects that single period.
inline const char* kE1 =
    "Meditation and falling asleep imply closed or still eyes, bunking has "
    "no tie to quiet visual focus, and thinking needs no eye movement, so "
    "each matches the scene less well than reading";

}  // namespace fixture
