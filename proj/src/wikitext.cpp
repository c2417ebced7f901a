#include "revhist/wikitext.hpp"

#include <unicode/uchar.h>

#include "revhist/tokenizer.hpp"
#include "revhist/utf8.hpp"

namespace revhist::wikitext {

namespace {

// Deepest link/markup recursion strip_markup follows.
constexpr int kMaxDepth = 4;

std::string_view trim(std::string_view s)
{
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos)
    return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool starts_with_ci(std::string_view text, std::size_t pos, std::string_view prefix)
{
  if (pos + prefix.size() > text.size())
    return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    char a = text[pos + i];
    if (a >= 'A' && a <= 'Z')
      a = static_cast<char>(a - 'A' + 'a');
    if (a != prefix[i])
      return false;
  }
  return true;
}

bool excluded_namespace(std::string_view target)
{
  auto colon = target.find(':');
  if (colon == std::string_view::npos)
    return false;
  auto ns = trim(target.substr(0, colon));
  auto eq = [&](std::string_view name) {
    return ns.size() == name.size() && starts_with_ci(ns, 0, name);
  };
  return eq("file") || eq("image") || eq("category");
}

// Ends of an HTML comment or nowiki block starting at `pos`, or npos when
// `pos` does not start one. Unclosed comments run to the end of the text.
std::size_t skip_opaque(std::string_view text, std::size_t pos)
{
  if (text.compare(pos, 4, "<!--") == 0) {
    auto end = text.find("-->", pos + 4);
    return end == std::string_view::npos ? text.size() : end + 3;
  }
  if (starts_with_ci(text, pos, "<nowiki>")) {
    for (auto end = text.find("</", pos + 8); end != std::string_view::npos;
         end = text.find("</", end + 2))
      if (starts_with_ci(text, end, "</nowiki>"))
        return end + 9;
  }
  return std::string_view::npos;
}

struct ParsedLink {
  bool valid = false;
  bool excluded = false;
  std::string target;
  std::string anchor;
};

ParsedLink parse_link(std::string_view content)
{
  ParsedLink link;
  auto pipe = content.find('|');
  auto raw_target = trim(content.substr(0, pipe));
  bool leading_colon = !raw_target.empty() && raw_target.front() == ':';
  if (leading_colon)
    raw_target = trim(raw_target.substr(1));
  if (raw_target.find_first_of("<>[]{}\n") != std::string_view::npos)
    return link;
  if (!leading_colon && excluded_namespace(raw_target)) {
    link.valid = true;
    link.excluded = true;
    return link;
  }
  auto target = normalize_title(raw_target.substr(0, raw_target.find('#')));
  if (target.empty())
    return link;
  std::string anchor;
  if (pipe != std::string_view::npos) {
    anchor = std::string(trim(content.substr(content.rfind('|') + 1)));
    if (anchor.empty())
      anchor = std::string(trim(raw_target.substr(0, raw_target.find('#'))));
  } else {
    anchor = std::string(raw_target);
  }
  link.valid = true;
  link.target = std::move(target);
  link.anchor = std::move(anchor);
  return link;
}

std::size_t link_trail(std::string_view text, std::size_t pos)
{
  std::size_t end = pos;
  while (end < text.size() && text[end] >= 'a' && text[end] <= 'z')
    ++end;
  return end;
}

// Matching "]]" for the "[[" at `open`, honoring nested links; npos when
// unclosed.
std::size_t matching_close(std::string_view text, std::size_t open)
{
  int depth = 0;
  for (std::size_t i = open; i + 1 < text.size();) {
    if (text[i] == '[' && text[i + 1] == '[') {
      ++depth;
      i += 2;
    } else if (text[i] == ']' && text[i + 1] == ']') {
      if (--depth == 0)
        return i;
      i += 2;
    } else {
      ++i;
    }
  }
  return std::string_view::npos;
}

// Matching "}}" for the "{{" at `open`; npos when unclosed.
std::size_t matching_template_close(std::string_view text, std::size_t open)
{
  int depth = 0;
  for (std::size_t i = open; i + 1 < text.size();) {
    if (text[i] == '{' && text[i + 1] == '{') {
      ++depth;
      i += 2;
    } else if (text[i] == '}' && text[i + 1] == '}') {
      if (--depth == 0)
        return i;
      i += 2;
    } else {
      ++i;
    }
  }
  return std::string_view::npos;
}

bool is_tag_start(std::string_view text, std::size_t pos)
{
  if (text[pos] != '<' || pos + 1 >= text.size())
    return false;
  char c = text[pos + 1];
  if (c == '/' && pos + 2 < text.size())
    c = text[pos + 2];
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

bool is_external_link(std::string_view text, std::size_t pos)
{
  if (text[pos] != '[' || (pos + 1 < text.size() && text[pos + 1] == '['))
    return false;
  return starts_with_ci(text, pos + 1, "http://") ||
         starts_with_ci(text, pos + 1, "https://") ||
         starts_with_ci(text, pos + 1, "ftp://") ||
         text.compare(pos + 1, 2, "//") == 0;
}

struct Entity {
  std::string_view name;
  std::string_view value;
};

constexpr Entity kEntities[] = {
  {"&nbsp;", " "}, {"&amp;", "&"}, {"&lt;", "<"}, {"&gt;", ">"},
  {"&quot;", "\""}, {"&ndash;", "–"}, {"&mdash;", "—"},
};

void strip_into(std::string_view text, std::string& out, int depth)
{
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (c == '<') {
      if (auto end = skip_opaque(text, i); end != std::string_view::npos) {
        if (text.compare(i, 4, "<!--") != 0) {
          // nowiki content is literal text
          auto inner = text.substr(i + 8, end - 9 - (i + 8));
          out.append(inner);
        }
        out.push_back(' ');
        i = end;
        continue;
      }
      if (is_tag_start(text, i)) {
        auto close = text.find('>', i);
        if (close != std::string_view::npos) {
          out.push_back(' ');
          i = close + 1;
          continue;
        }
      }
    } else if (c == '{' && i + 1 < text.size() && text[i + 1] == '{') {
      auto close = matching_template_close(text, i);
      if (close != std::string_view::npos) {
        out.push_back(' ');
        i = close + 2;
        continue;
      }
    } else if (c == '[' && i + 1 < text.size() && text[i + 1] == '[') {
      auto close = matching_close(text, i);
      if (close != std::string_view::npos) {
        auto content = text.substr(i + 2, close - i - 2);
        auto link = content.find("[[") == std::string_view::npos
                      ? parse_link(content)
                      : ParsedLink{};
        if (link.valid && link.excluded) {
          out.push_back(' ');
        } else if (link.valid) {
          if (depth < kMaxDepth)
            strip_into(link.anchor, out, depth + 1);
        } else if (content.find("[[") != std::string_view::npos) {
          // Nested markup inside a File or Category link goes with it.
          auto outer = parse_link(content.substr(0, content.find("[[")));
          if (!(outer.valid && outer.excluded) && depth < kMaxDepth)
            strip_into(content, out, depth + 1);
          else
            out.push_back(' ');
        } else if (depth < kMaxDepth) {
          strip_into(content, out, depth + 1);
        }
        i = close + 2;
        continue;
      }
    } else if (c == '[' && is_external_link(text, i)) {
      auto close = text.find(']', i);
      if (close != std::string_view::npos) {
        auto content = text.substr(i + 1, close - i - 1);
        auto space = content.find(' ');
        if (space != std::string_view::npos && depth < kMaxDepth)
          strip_into(content.substr(space + 1), out, depth + 1);
        out.push_back(' ');
        i = close + 1;
        continue;
      }
    } else if (c == '&') {
      bool matched = false;
      for (auto& e : kEntities) {
        if (text.compare(i, e.name.size(), e.name) == 0) {
          out.append(e.value);
          i += e.name.size();
          matched = true;
          break;
        }
      }
      if (matched)
        continue;
    }
    out.push_back(c);
    ++i;
  }
}

} // namespace

std::string normalize_title(std::string_view title)
{
  std::string collapsed;
  bool space = false;
  for (char c : trim(title)) {
    if (c == '_' || c == ' ') {
      space = true;
      continue;
    }
    if (space && !collapsed.empty())
      collapsed.push_back(' ');
    space = false;
    collapsed.push_back(c);
  }
  if (collapsed.empty())
    return collapsed;
  std::size_t pos = 0;
  char32_t first = utf8::decode(collapsed, pos);
  std::string out;
  utf8::append(out, static_cast<char32_t>(u_toupper(static_cast<UChar32>(first))));
  out.append(collapsed, pos);
  return out;
}

std::vector<AnchorLink> extract_anchors(std::string_view text,
                                        std::uint64_t source_page_id)
{
  std::vector<AnchorLink> links;
  std::size_t i = 0;
  while (i + 1 < text.size()) {
    if (text[i] == '<') {
      if (auto end = skip_opaque(text, i); end != std::string_view::npos) {
        i = end;
        continue;
      }
      ++i;
      continue;
    }
    if (text[i] != '[' || text[i + 1] != '[') {
      ++i;
      continue;
    }
    auto close = text.find("]]", i + 2);
    auto inner_open = text.find("[[", i + 2);
    if (close == std::string_view::npos ||
        (inner_open != std::string_view::npos && inner_open < close)) {
      // Unclosed, or an outer link wrapping others: step inside.
      i += 2;
      continue;
    }
    auto link = parse_link(text.substr(i + 2, close - i - 2));
    std::size_t next = close + 2;
    if (link.valid && !link.excluded) {
      auto trail_end = link_trail(text, next);
      link.anchor.append(text.substr(next, trail_end - next));
      next = trail_end;
      if (!link.anchor.empty())
        links.push_back({source_page_id, std::move(link.target),
                         std::move(link.anchor),
                         static_cast<std::uint32_t>(links.size())});
    }
    i = next;
  }
  return links;
}

std::string strip_markup(std::string_view text)
{
  std::string out;
  out.reserve(text.size());
  strip_into(text, out, 0);
  return out;
}

std::vector<std::string> extract_fulltext(std::string_view text)
{
  return tokenize(strip_markup(text));
}

} // namespace revhist::wikitext
