#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include "revhist/time.hpp"

namespace revhist {

struct PageHeader {
  std::uint64_t page_id = 0;
  std::string title;
  // MediaWiki namespace number; 0 when the dump omits <ns>.
  std::int32_t ns = 0;
  std::optional<std::string> redirect_target;

  friend bool operator==(const PageHeader&, const PageHeader&) = default;
};

struct RevisionRecord {
  PageHeader page;
  std::uint64_t revision_id = 0;
  // Predecessor revision of the same page, if any.
  std::optional<std::uint64_t> parent_id;
  Timestamp timestamp{};
  std::optional<std::string> contributor;
  std::optional<std::string> comment;
  std::string text;
  // Set for suppressed revisions (`<text deleted="deleted"/>`); text is
  // then empty.
  bool text_deleted = false;

  std::size_t text_bytes() const { return text.size(); }

  friend bool operator==(const RevisionRecord&, const RevisionRecord&) = default;
};

// One item of a revision stream: a page header precedes that page's
// revisions.
using DumpEvent = std::variant<PageHeader, RevisionRecord>;

} // namespace revhist
