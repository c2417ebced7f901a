#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <new>

#include "support.hpp"

namespace {

std::atomic<std::int64_t> live{0};
std::atomic<std::int64_t> peak{0};

void note(std::int64_t delta)
{
  auto now = live.fetch_add(delta) + delta;
  auto p = peak.load();
  while (now > p && !peak.compare_exchange_weak(p, now)) {
  }
}

} // namespace

void* operator new(std::size_t n)
{
  auto* block = static_cast<std::size_t*>(std::malloc(n + 16));
  if (!block)
    throw std::bad_alloc();
  *block = n;
  note(static_cast<std::int64_t>(n));
  return reinterpret_cast<char*>(block) + 16;
}

void operator delete(void* p) noexcept
{
  if (!p)
    return;
  auto* block = reinterpret_cast<std::size_t*>(static_cast<char*>(p) - 16);
  note(-static_cast<std::int64_t>(*block));
  std::free(block);
}

void operator delete(void* p, std::size_t) noexcept { operator delete(p); }

using namespace revhist;
using namespace revhist::testing;

namespace {

// Peak live heap above the baseline while streaming the whole file.
std::int64_t streaming_peak(const std::filesystem::path& path, std::int64_t& largest_text)
{
  auto base = live.load();
  peak = base;
  std::uint64_t n = 0;
  {
    dump::RevisionStream stream(dump::DumpSource::file(path));
    while (auto r = stream.next_revision()) {
      largest_text = std::max(largest_text, static_cast<std::int64_t>(r->text.size()));
      ++n;
    }
  }
  CHECK(n > 0);
  return peak.load() - base;
}

} // namespace

TEST_CASE("peak heap while streaming does not grow with dump size")
{
  TempDir dir;
  std::vector<std::int64_t> peaks;
  for (std::size_t revisions : {100, 1000, 10000}) {
    fixture::FixtureOptions o;
    o.seed = 8;
    o.pages = revisions / 10;
    o.revisions_per_page = 10;
    auto path = dir / ("f" + std::to_string(revisions) + ".xml");
    auto summary = fixture::generate_fixture(o, path);
    REQUIRE(summary.revisions == revisions);
    std::int64_t largest = 0;
    peaks.push_back(streaming_peak(path, largest));
    MESSAGE(revisions << " revisions, " << summary.bytes << " bytes: peak " << peaks.back()
                      << ", largest text " << largest);
    // Parser buffers plus a few copies of the current revision.
    CHECK(peaks.back() <= 384 * 1024 + 4 * largest);
    CHECK(peaks.back() * 4 < static_cast<std::int64_t>(summary.bytes) + 2 * 1024 * 1024);
  }
  CHECK(peaks[2] <= peaks[1] + 16 * 1024);
}
