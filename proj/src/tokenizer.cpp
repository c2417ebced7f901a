#include "revhist/tokenizer.hpp"

#include <unicode/uchar.h>

namespace revhist {

namespace detail {

bool is_word_char(char32_t cp)
{
  if (cp == utf8::kReplacement)
    return false;
  auto mask = U_GET_GC_MASK(static_cast<UChar32>(cp));
  return (mask & (U_GC_L_MASK | U_GC_M_MASK | U_GC_N_MASK)) != 0;
}

char32_t fold(char32_t cp)
{
  return static_cast<char32_t>(
    u_foldCase(static_cast<UChar32>(cp), U_FOLD_CASE_DEFAULT));
}

} // namespace detail

std::vector<std::string> tokenize(std::string_view text)
{
  std::vector<std::string> tokens;
  for_each_token(text, [&](std::string_view t) { tokens.emplace_back(t); });
  return tokens;
}

std::string case_fold(std::string_view text)
{
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size())
    utf8::append(out, detail::fold(utf8::decode(text, pos)));
  return out;
}

} // namespace revhist
