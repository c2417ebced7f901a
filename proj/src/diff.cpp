#include "revhist/diff.hpp"

#include <vector>

#include "revhist/wikitext.hpp"

namespace revhist {

namespace {

TermCounts count(std::span<const std::string> tokens)
{
  TermCounts counts;
  for (auto& t : tokens)
    ++counts[t];
  return counts;
}

// Edit budget for the in-order alignment; keeps worst-case work near
// (N+M) * 4096 comparisons.
constexpr std::size_t kMaxEdits = 4096;

} // namespace

std::optional<std::uint64_t> lcs_length(std::span<const std::string> a,
                                        std::span<const std::string> b,
                                        std::size_t max_edits)
{
  const long n = static_cast<long>(a.size());
  const long m = static_cast<long>(b.size());
  const long max_d = std::min<long>(n + m, static_cast<long>(max_edits));
  const long offset = max_d + 1;
  std::vector<long> v(static_cast<std::size_t>(2 * max_d + 3), 0);
  for (long d = 0; d <= max_d; ++d) {
    for (long k = -d; k <= d; k += 2) {
      long x;
      if (k == -d || (k != d && v[k - 1 + offset] < v[k + 1 + offset]))
        x = v[k + 1 + offset];
      else
        x = v[k - 1 + offset] + 1;
      long y = x - k;
      while (x < n && y < m && a[x] == b[y]) {
        ++x;
        ++y;
      }
      v[k + offset] = x;
      if (x >= n && y >= m)
        return static_cast<std::uint64_t>((n + m - d) / 2);
    }
  }
  return std::nullopt;
}

RevisionDelta diff_tokens(std::span<const std::string> parent,
                          std::span<const std::string> child)
{
  RevisionDelta delta;
  auto before = count(parent);
  auto after = count(child);
  for (auto& [term, n] : before) {
    auto it = after.find(term);
    std::uint32_t kept = it == after.end() ? 0 : std::min(n, it->second);
    delta.unchanged_count += kept;
    if (n > kept)
      delta.removed_terms[term] = n - kept;
  }
  for (auto& [term, n] : after) {
    auto it = before.find(term);
    std::uint32_t kept = it == before.end() ? 0 : std::min(n, it->second);
    if (n > kept)
      delta.inserted_terms[term] = n - kept;
  }
  if (parent.size() <= kMaxAlignedTokens && child.size() <= kMaxAlignedTokens)
    delta.in_order_count = lcs_length(parent, child, kMaxEdits);
  return delta;
}

RevisionDelta full_insert(std::span<const std::string> child)
{
  RevisionDelta delta;
  delta.inserted_terms = count(child);
  delta.in_order_count = 0;
  return delta;
}

RevisionDelta diff_revisions(std::string_view parent_text,
                             std::string_view child_text)
{
  auto parent = wikitext::extract_fulltext(parent_text);
  auto child = wikitext::extract_fulltext(child_text);
  return diff_tokens(parent, child);
}

} // namespace revhist
