#include <doctest.h>

#include <map>
#include <random>

#include "revhist/diff.hpp"
#include "revhist/wikitext.hpp"

using namespace revhist;

namespace {

using Multiset = std::map<std::string, long>;

Multiset counts(const std::vector<std::string>& tokens)
{
  Multiset m;
  for (auto& t : tokens)
    ++m[t];
  return m;
}

// Textbook quadratic table.
std::uint64_t lcs_table(const std::vector<std::string>& a, const std::vector<std::string>& b)
{
  std::vector<std::vector<std::uint64_t>> t(a.size() + 1, std::vector<std::uint64_t>(b.size() + 1));
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
  return t[a.size()][b.size()];
}

std::vector<std::string> random_tokens(std::mt19937_64& rng, std::size_t n, int vocab)
{
  std::uniform_int_distribution<int> pick(0, vocab - 1);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back("w" + std::to_string(pick(rng)));
  return out;
}

} // namespace

TEST_CASE("identity and single substitution")
{
  auto same = diff_revisions("a b c", "a b c");
  CHECK(same.inserted_terms.empty());
  CHECK(same.removed_terms.empty());
  CHECK(same.unchanged_count == 3);
  CHECK(same.in_order_count == 3u);

  auto sub = diff_revisions("a b", "a c");
  CHECK(sub.inserted_terms == TermCounts{{"c", 1}});
  CHECK(sub.removed_terms == TermCounts{{"b", 1}});
  CHECK(sub.unchanged_count == 1);
}

TEST_CASE("reordering keeps the multiset but not the alignment")
{
  auto d = diff_revisions("a b c d", "d c b a");
  CHECK(d.inserted_terms.empty());
  CHECK(d.removed_terms.empty());
  CHECK(d.unchanged_count == 4);
  CHECK(d.in_order_count == 1u);
}

TEST_CASE("full insert has nothing removed")
{
  std::vector<std::string> child{"x", "y", "x"};
  auto d = full_insert(child);
  CHECK(d.removed_terms.empty());
  CHECK(d.inserted_terms == TermCounts{{"x", 2}, {"y", 1}});
  CHECK(d.unchanged_count == 0);
  CHECK_FALSE(d.parent_id);
}

TEST_CASE("random pairs satisfy the multiset equation")
{
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    auto parent = random_tokens(rng, 200, 30);
    auto child = parent;
    std::uniform_int_distribution<std::size_t> at(0, 199);
    for (int e = 0; e < trial % 40; ++e)
      child[at(rng)] = "n" + std::to_string(at(rng) % 17);
    if (trial % 3 == 0)
      child = random_tokens(rng, 150 + trial % 100, 30);

    auto d = diff_tokens(parent, child);
    auto p = counts(parent);
    auto c = counts(child);
    Multiset rebuilt = p;
    for (auto& [t, n] : d.removed_terms)
      rebuilt[t] -= n;
    for (auto& [t, n] : d.inserted_terms)
      rebuilt[t] += n;
    std::erase_if(rebuilt, [](auto& kv) { return kv.second == 0; });
    CAPTURE(trial);
    CHECK(rebuilt == c);
    for (auto& [t, n] : rebuilt)
      CHECK(n > 0);

    std::uint64_t common = 0;
    for (auto& [t, n] : p)
      if (auto it = c.find(t); it != c.end())
        common += static_cast<std::uint64_t>(std::min(n, it->second));
    CHECK(d.unchanged_count == common);
    CHECK(d.in_order_count == lcs_table(parent, child));
  }
}

TEST_CASE("lcs length gives up past the edit budget")
{
  std::vector<std::string> a{"a", "b", "c", "d", "e"};
  std::vector<std::string> b{"x", "y", "z"};
  CHECK_FALSE(lcs_length(a, b, 3));
  CHECK(lcs_length(a, b, 100) == 0u);
  CHECK(lcs_length(a, a, 0) == 5u);
}

TEST_CASE("long texts fall back to the multiset difference")
{
  std::vector<std::string> big(kMaxAlignedTokens + 1, "t");
  std::vector<std::string> small{"t", "u"};
  auto d = diff_tokens(big, small);
  CHECK_FALSE(d.in_order_count);
  CHECK(d.unchanged_count == 1);
  CHECK(d.removed_terms == TermCounts{{"t", kMaxAlignedTokens}});
  CHECK(d.inserted_terms == TermCounts{{"u", 1}});
}

TEST_CASE("text diff uses the fulltext tokens")
{
  auto d = diff_revisions("{{tpl}} [[Alpha|one]] two", "one [[Beta|three]]");
  CHECK(d.removed_terms == TermCounts{{"two", 1}});
  CHECK(d.inserted_terms == TermCounts{{"three", 1}});
  CHECK(d.unchanged_count == 1);
}
