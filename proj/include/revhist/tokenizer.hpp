#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace revhist {

// Recorded in index metadata; bump when token boundaries or folding change.
inline constexpr std::string_view kTokenizerId = "unicode-alnum-simplefold-v1";

// Tokens are maximal runs of Unicode letters, combining marks and numbers,
// each mapped through simple case folding. No stemming, no stopwords.
std::vector<std::string> tokenize(std::string_view text);

// Calls `sink(std::string_view token)` per token; the view is only valid
// during the call.
template <typename Sink>
void for_each_token(std::string_view text, Sink&& sink);

std::string case_fold(std::string_view text);

namespace detail {

bool is_word_char(char32_t cp);
char32_t fold(char32_t cp);

} // namespace detail
} // namespace revhist

#include "revhist/utf8.hpp"

namespace revhist {

template <typename Sink>
void for_each_token(std::string_view text, Sink&& sink)
{
  std::string token;
  std::size_t pos = 0;
  const std::size_t n = text.size();
  while (pos < n) {
    auto c = static_cast<unsigned char>(text[pos]);
    if (c < 0x80) {
      ++pos;
      if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
        token.push_back(static_cast<char>(c));
        continue;
      }
      if (c >= 'A' && c <= 'Z') {
        token.push_back(static_cast<char>(c + ('a' - 'A')));
        continue;
      }
    } else {
      char32_t cp = utf8::decode(text, pos);
      if (detail::is_word_char(cp)) {
        utf8::append(token, detail::fold(cp));
        continue;
      }
    }
    if (!token.empty()) {
      sink(std::string_view{token});
      token.clear();
    }
  }
  if (!token.empty())
    sink(std::string_view{token});
}

} // namespace revhist
