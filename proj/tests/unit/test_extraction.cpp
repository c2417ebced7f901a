#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include "extraction_support.hpp"
#include "revhist/error.hpp"
#include "revhist/extraction.hpp"
#include "revhist/partitioner.hpp"
#include "support.hpp"

using namespace revhist;
using namespace revhist::testing;
using namespace revhist::extract;

namespace {

fixture::FixtureOptions corpus(std::uint64_t seed)
{
  fixture::FixtureOptions o;
  o.seed = seed;
  o.pages = 20;
  o.revisions_per_page = 6;
  o.start_date = Date{std::chrono::year{2012} / 1 / 1};
  o.span_days = 366;
  o.talk_fraction = 0.2;
  o.deleted_fraction = 0.1;
  return o;
}

} // namespace

TEST_CASE("projection to metadata builds no text payloads")
{
  TempDir dir;
  fixture::FixtureOptions o;
  o.pages = 3;
  o.revisions_per_page = 4;
  auto parts = make_partitions(o, dir.path());
  REQUIRE(parts.size() == 1);
  TransformStats stats;
  auto out = transform(parts[0], OperatorChain::parse("project:metadata"), &stats);
  CHECK(out.size() == 12);
  for (auto& r : out) {
    CHECK(r.kind() == RecordKind::metadata);
    auto& m = std::get<MetadataPayload>(r.payload);
    CHECK(m.text_bytes > 0);
  }
  CHECK(stats.emitted == 12);
  CHECK(stats.rejected == 0);
}

TEST_CASE("the May 2012 filter keeps exactly the May revisions")
{
  TempDir dir;
  auto parts = make_partitions(corpus(3), dir.path());
  auto chain = OperatorChain::parse("filter:from=2012-05-01,to=2012-06-01;project:fulltext");
  TransformStats stats;
  auto out = transform(parts[0], chain, &stats);
  auto may = TimeRange{parse_iso8601("2012-05-01T00:00:00Z"), parse_iso8601("2012-06-01T00:00:00Z")};
  std::set<std::uint64_t> expected;
  for (auto& r : read_all(parts[0]))
    if (may.contains(r.timestamp))
      expected.insert(r.revision_id);
  REQUIRE_FALSE(expected.empty());
  std::set<std::uint64_t> got;
  for (auto& r : out) {
    CHECK(may.contains(r.timestamp));
    CHECK(r.kind() == RecordKind::fulltext);
    got.insert(r.revision_id);
  }
  CHECK(got == expected);
  CHECK(stats.payloads_built == expected.size());
  CHECK(stats.rejected == stats.revisions_read - expected.size());
}

TEST_CASE("pushdown gives the same records as filtering afterwards")
{
  TempDir dir;
  std::vector<std::string> chains = {
    "project:anchors",
    "filter:from=2012-03-01,to=2012-09-01;project:fulltext",
    "filter:articles_only=true;project:anchors",
    "filter:ns=1;project:metadata",
    "sample:rate=0.3,seed=9;project:delta",
    "filter:from=2012-02-01,to=2012-12-01,custom=has-parent;sample:rate=0.7,seed=2;project:delta",
    "filter:ns=0|1,custom=non-deleted;project:fulltext",
  };
  int n = 0;
  for (auto mode : {PartitionMode::entity_wise, PartitionMode::document_wise}) {
    auto parts = make_partitions(corpus(40 + n), dir / std::to_string(n), mode, 3);
    ++n;
    for (auto& text : chains) {
      auto chain = OperatorChain::parse(text);
      for (auto& p : parts) {
        CAPTURE(text);
        TransformStats stats;
        auto pushed = transform(p, chain, &stats);
        CHECK(pushed == materialize_then_filter(p, chain));
        auto total = static_cast<double>(stats.revisions_read);
        auto f = total ? static_cast<double>(stats.rejected) / total : 0.0;
        CHECK(static_cast<double>(stats.payloads_built) <= (1 - f) * total + 1);
        CHECK(stats.payloads_built == pushed.size());
      }
    }
  }
}

TEST_CASE("output is ordered by page then timestamp")
{
  TempDir dir;
  auto parts = make_partitions(corpus(5), dir.path(), PartitionMode::document_wise, 2);
  for (auto& p : parts) {
    auto out = transform(p, OperatorChain::parse("project:metadata"));
    CHECK(std::is_sorted(out.begin(), out.end(), [](auto& a, auto& b) {
      return std::tuple(a.page_id, a.timestamp) < std::tuple(b.page_id, b.timestamp);
    }));
  }
}

TEST_CASE("sampling is seeded and deterministic")
{
  TempDir dir;
  auto parts = make_partitions(corpus(6), dir.path());
  auto chain = OperatorChain::parse("sample:rate=0.5,seed=1");
  auto a = transform(parts[0], chain);
  auto b = transform(parts[0], chain);
  CHECK(a == b);
  CHECK(a.size() > 20);
  CHECK(a.size() < 100);
  auto other = transform(parts[0], OperatorChain::parse("sample:rate=0.5,seed=2"));
  CHECK(other != a);
  CHECK(transform(parts[0], OperatorChain::parse("sample:rate=1")).size() == 120);
  for (std::uint64_t id = 1; id < 1000; ++id)
    CHECK(sampled(id, {1.0, 5}));
}

TEST_CASE("delta payloads across partitions")
{
  TempDir dir;
  auto o = corpus(7);
  o.deleted_fraction = 0;
  auto whole = make_partitions(o, dir / "whole");
  auto split = make_partitions(o, dir / "split", PartitionMode::document_wise, 3);
  auto chain = OperatorChain::parse("project:delta");
  std::map<std::uint64_t, EmittedRecord> reference;
  for (auto& r : transform(whole[0], chain))
    reference.emplace(r.revision_id, r);
  std::uint64_t missing = 0;
  std::size_t seen = 0;
  for (auto& p : split) {
    TransformStats stats;
    for (auto& r : transform(p, chain, &stats)) {
      ++seen;
      auto& d = std::get<DeltaPayload>(r.payload);
      auto& full = std::get<DeltaPayload>(reference.at(r.revision_id).payload);
      if (d.parent_available) {
        CHECK(d == full);
      } else {
        CHECK(d.delta.removed_terms.empty());
        CHECK(d.delta.unchanged_count == 0);
        std::uint64_t inserted = 0;
        for (auto& [t, c] : d.delta.inserted_terms)
          inserted += c;
        std::uint64_t parent_side = full.delta.unchanged_count;
        for (auto& [t, c] : full.delta.inserted_terms)
          parent_side += c;
        CHECK(inserted == parent_side);
      }
    }
    missing += stats.parent_missing;
  }
  CHECK(seen == reference.size());
  CHECK(missing > 0);
  for (auto& [id, r] : reference) {
    auto& d = std::get<DeltaPayload>(r.payload);
    CHECK(d.parent_available);
    if (!d.delta.parent_id)
      CHECK(d.delta.removed_terms.empty());
  }
}

TEST_CASE("records round-trip through json")
{
  TempDir dir;
  auto parts = make_partitions(corpus(8), dir.path());
  for (auto kind : {"metadata", "fulltext", "anchors", "delta"}) {
    auto chain = OperatorChain::parse(std::string("project:") + kind);
    for (auto& r : transform(parts[0], chain)) {
      auto j = to_json(r);
      CHECK(j["kind"] == kind);
      CHECK(record_from_json(j) == r);
    }
  }
  auto r = build_record(read_all(parts[0]).front(), RecordKind::anchors);
  auto j = to_json(r);
  j["kind"] = "fulltext";
  CHECK_THROWS_AS(record_from_json(j), Error);
}

TEST_CASE("transform_to_file writes partitions in index order")
{
  TempDir dir;
  auto parts = make_partitions(corpus(9), dir / "p", PartitionMode::entity_wise, 4);
  auto chain = OperatorChain::parse("project:anchors");
  std::vector<EmittedRecord> expected;
  for (auto& p : parts)
    for (auto& r : transform(p, chain))
      expected.push_back(r);
  for (unsigned workers : {1u, 3u}) {
    auto out = dir / ("out" + std::to_string(workers) + ".jsonl");
    auto stats = transform_to_file(parts, chain, out, workers);
    CHECK(stats.emitted == expected.size());
    std::vector<EmittedRecord> got;
    EmittedReader reader(out);
    while (auto r = reader.next())
      got.push_back(std::move(*r));
    CHECK(got == expected);
  }
}

TEST_CASE("xml partitions transform like json-lines")
{
  TempDir dir;
  auto xml = make_partitions(corpus(10), dir / "x", PartitionMode::entity_wise, 1,
                             records::RecordFormat::xml);
  auto jsonl = make_partitions(corpus(10), dir / "j");
  auto chain = OperatorChain::parse("project:fulltext");
  CHECK(transform(xml[0], chain) == transform(jsonl[0], chain));
}

TEST_CASE("chain grammar")
{
  auto chain = OperatorChain::parse("filter:from=2012-05-01,to=2012-06-01;project:fulltext");
  CHECK(chain.operators.size() == 2);
  CHECK(chain.projection() == RecordKind::fulltext);
  CHECK(OperatorChain::parse("").projection() == RecordKind::metadata);

  auto code_of = [](std::string_view text) {
    try {
      OperatorChain::parse(text);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::io_error;
  };
  CHECK(code_of("project:pagerank") == ErrorCode::unknown_kind);
  CHECK(code_of("project:anchors;project:fulltext") == ErrorCode::bad_parameter);
  CHECK(code_of("sample:rate=0") == ErrorCode::bad_parameter);
  CHECK(code_of("sample:rate=1.5") == ErrorCode::bad_parameter);
  CHECK(code_of("map:x=1") == ErrorCode::bad_parameter);
  CHECK(code_of("filter:colour=red") == ErrorCode::bad_parameter);
  CHECK(code_of("filter:from=2013-01-01,to=2012-01-01") == ErrorCode::bad_range);
  CHECK(code_of("filter:from=yesterday") == ErrorCode::bad_timestamp);
}
