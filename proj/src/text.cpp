#include "rulesmith/text.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/uscript.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <stdexcept>

namespace rulesmith::text {
namespace {

const icu::Normalizer2& nfkc() {
  static const icu::Normalizer2* instance = [] {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* n = icu::Normalizer2::getNFKCInstance(status);
    if (U_FAILURE(status)) {
      throw std::runtime_error(std::string("ICU NFKC unavailable: ") + u_errorName(status));
    }
    return n;
  }();
  return *instance;
}

bool is_cjk(UChar32 c) {
  UErrorCode status = U_ZERO_ERROR;
  switch (uscript_getScript(c, &status)) {
    case USCRIPT_HAN:
    case USCRIPT_HIRAGANA:
    case USCRIPT_KATAKANA:
    case USCRIPT_HANGUL:
      return true;
    default:
      return false;
  }
}

void append_utf8(std::string& out, UChar32 c) {
  char buf[U8_MAX_LENGTH];
  int32_t len = 0;
  U8_APPEND_UNSAFE(reinterpret_cast<uint8_t*>(buf), len, c);
  out.append(buf, static_cast<std::size_t>(len));
}

}  // namespace

std::string normalize(std::string_view utf8) {
  UErrorCode status = U_ZERO_ERROR;
  icu::UnicodeString source = icu::UnicodeString::fromUTF8(
      icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  icu::UnicodeString composed = nfkc().normalize(source, status);
  if (U_FAILURE(status)) {
    throw std::runtime_error(std::string("NFKC normalization failed: ") + u_errorName(status));
  }
  std::string out;
  out.reserve(utf8.size());
  for (int32_t i = 0; i < composed.length();) {
    UChar32 c = composed.char32At(i);
    append_utf8(out, u_foldCase(c, U_FOLD_CASE_DEFAULT));
    i += U16_LENGTH(c);
  }
  return out;
}

std::size_t scalar_count(std::string_view utf8) {
  const auto* s = reinterpret_cast<const uint8_t*>(utf8.data());
  const auto length = static_cast<int32_t>(utf8.size());
  std::size_t count = 0;
  for (int32_t i = 0; i < length;) {
    UChar32 c;
    U8_NEXT(s, i, length, c);
    if (c < 0) return std::string_view::npos;
    ++count;
  }
  return count;
}

bool is_valid_utf8(std::string_view utf8) { return scalar_count(utf8) != std::string_view::npos; }

std::vector<std::string> keyword_tokens(std::string_view normalized_utf8) {
  std::vector<std::string> tokens;
  const auto* s = reinterpret_cast<const uint8_t*>(normalized_utf8.data());
  const auto length = static_cast<int32_t>(normalized_utf8.size());

  std::string word;
  std::vector<UChar32> cjk_run;

  auto flush_word = [&] {
    if (!word.empty()) tokens.push_back(std::move(word));
    word.clear();
  };
  auto flush_cjk = [&] {
    if (cjk_run.size() == 1) {
      std::string t;
      append_utf8(t, cjk_run[0]);
      tokens.push_back(std::move(t));
    }
    for (std::size_t i = 0; i + 1 < cjk_run.size(); ++i) {
      std::string t;
      append_utf8(t, cjk_run[i]);
      append_utf8(t, cjk_run[i + 1]);
      tokens.push_back(std::move(t));
    }
    cjk_run.clear();
  };

  for (int32_t i = 0; i < length;) {
    UChar32 c;
    U8_NEXT(s, i, length, c);
    if (c < 0) {
      flush_word();
      flush_cjk();
      continue;
    }
    if (is_cjk(c)) {
      flush_word();
      cjk_run.push_back(c);
    } else if (u_isalnum(c)) {
      flush_cjk();
      append_utf8(word, c);
    } else {
      flush_word();
      flush_cjk();
    }
  }
  flush_word();
  flush_cjk();
  return tokens;
}

std::string trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto begin = s.find_first_not_of(ws);
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(ws);
  return std::string(s.substr(begin, end - begin + 1));
}

}  // namespace rulesmith::text
