#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace rulesmith::text {

// NFKC followed by per-code-point simple case folding. Input must be UTF-8;
// ill-formed sequences are replaced with U+FFFD.
std::string normalize(std::string_view utf8);

// Number of Unicode scalar values, or npos when the input is not valid UTF-8.
std::size_t scalar_count(std::string_view utf8);

bool is_valid_utf8(std::string_view utf8);

// Splits normalized text into candidate keyword tokens. Runs of letters and
// digits become tokens; runs of CJK ideographs/kana/hangul contribute their
// character bigrams (or the single character for a run of one).
std::vector<std::string> keyword_tokens(std::string_view normalized_utf8);

std::string trim(std::string_view s);

}  // namespace rulesmith::text
