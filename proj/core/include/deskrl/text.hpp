#pragma once

#include <span>
#include <vector>

#include "deskrl/error.hpp"

namespace deskrl {

// Reserved token ids, present in every task vocabulary. Content tokens
// start at kFirstContent.
namespace tokens {
inline constexpr int kPad = 0;          // left-padding for short contexts
inline constexpr int kEndOfText = 1;    // terminates sampled completions
inline constexpr int kUserMark = 2;     // opens the prompt
inline constexpr int kModelMark = 3;    // separates prompt from answer
inline constexpr int kFirstContent = 4;
}  // namespace tokens

// One training sequence: prompt followed by answer. answer_start is the
// 1-based position of the first answer token, so the prompt occupies
// positions 1..answer_start-1 and is never empty of an answer region.
struct Text {
  std::vector<int> tokens;
  int answer_start = 1;

  int length() const { return static_cast<int>(tokens.size()); }

  std::span<const int> prompt() const {
    return std::span<const int>(tokens).first(static_cast<std::size_t>(answer_start - 1));
  }
  std::span<const int> answer() const {
    return std::span<const int>(tokens).subspan(static_cast<std::size_t>(answer_start - 1));
  }
};

inline void validate_text(const Text& text, int vocab_size) {
  if (text.tokens.empty()) throw InvalidInputError("text must contain at least one token");
  if (text.answer_start < 1 || text.answer_start > text.length()) {
    throw InvalidInputError("answer_start out of range");
  }
  for (int t : text.tokens) {
    if (t < 0 || t >= vocab_size) throw InvalidInputError("token id out of vocabulary");
  }
}

}  // namespace deskrl
