#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace revhist {

using TermCounts = std::map<std::string, std::uint32_t, std::less<>>;

struct RevisionDelta {
  std::uint64_t revision_id = 0;
  std::optional<std::uint64_t> parent_id;
  TermCounts inserted_terms;
  TermCounts removed_terms;
  // Size of the multiset intersection of parent and child tokens.
  std::uint64_t unchanged_count = 0;
  // Longest common subsequence length, i.e. tokens kept in place; only
  // computed when both sides are within kMaxAlignedTokens.
  std::optional<std::uint64_t> in_order_count;

  friend bool operator==(const RevisionDelta&, const RevisionDelta&) = default;
};

inline constexpr std::size_t kMaxAlignedTokens = 50'000;

// Token-level delta between two wikitexts (tokens as in extract_fulltext).
RevisionDelta diff_revisions(std::string_view parent_text,
                             std::string_view child_text);

RevisionDelta diff_tokens(std::span<const std::string> parent,
                          std::span<const std::string> child);

// Delta of a revision without an available predecessor: everything is
// inserted.
RevisionDelta full_insert(std::span<const std::string> child);

// Myers O((N+M)D) LCS length; nullopt once D exceeds `max_edits`.
std::optional<std::uint64_t> lcs_length(std::span<const std::string> a,
                                        std::span<const std::string> b,
                                        std::size_t max_edits);

} // namespace revhist
