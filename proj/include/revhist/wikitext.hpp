#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace revhist::wikitext {

struct AnchorLink {
  std::uint64_t source_page_id = 0;
  // Fragment stripped, underscores as spaces, first letter upper-cased.
  std::string target_title;
  std::string anchor_text;
  // Ordinal of the link among the extracted links of one text.
  std::uint32_t position = 0;

  friend bool operator==(const AnchorLink&, const AnchorLink&) = default;
};

// Internal `[[...]]` links in document order. Piped links take the text
// after the last pipe, bare links their target; lowercase letters right
// after the closing brackets extend the anchor ("[[bus]]es"). Links into
// the File, Image and Category namespaces, links inside HTML comments or
// <nowiki>, and unclosed or invalid brackets are skipped.
std::vector<AnchorLink> extract_anchors(std::string_view text,
                                        std::uint64_t source_page_id = 0);

// Plain text of a wikitext: comments, templates and tags removed, links
// replaced by their anchor text, external links by their label.
std::string strip_markup(std::string_view text);

// Tokens of strip_markup(text) under the shared tokenizer.
std::vector<std::string> extract_fulltext(std::string_view text);

std::string normalize_title(std::string_view title);

} // namespace revhist::wikitext
