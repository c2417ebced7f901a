#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "revhist/error.hpp"
#include "revhist/partitioner.hpp"
#include "support.hpp"

using namespace revhist;
using namespace revhist::testing;
using records::RecordFormat;

namespace {

RevisionRecord rev(std::uint64_t page, std::string title, std::int32_t ns, const char* ts)
{
  RevisionRecord r;
  r.page = {page, std::move(title), ns, {}};
  r.revision_id = page * 100 + 1;
  r.timestamp = parse_iso8601(ts);
  r.text = "t";
  return r;
}

TimeRange range(const char* a, const char* b)
{
  return {parse_date_or_instant(a), parse_date_or_instant(b)};
}

std::vector<RevisionRecord> read_all(const std::filesystem::path& path)
{
  std::vector<RevisionRecord> out;
  records::RecordReader reader(path);
  while (auto r = reader.next())
    out.push_back(std::move(*r));
  return out;
}

struct Run {
  PartitionManifest manifest;
  std::vector<std::vector<RevisionRecord>> parts;
};

Run partition(const std::string& xml, PartitionPlan plan, const std::filesystem::path& dir)
{
  plan.output_dir = dir;
  auto in = std::make_shared<std::istringstream>(xml);
  dump::RevisionStream stream(dump::DumpSource{in, dump::Compression::none, {}, {}});
  Run run{partition_stream(stream, plan), {}};
  for (auto& p : run.manifest.partitions)
    run.parts.push_back(read_all(p.path));
  return run;
}

fixture::FixtureOptions pages(std::size_t n, std::size_t revs, std::uint64_t seed = 1)
{
  fixture::FixtureOptions o;
  o.pages = n;
  o.revisions_per_page = revs;
  o.seed = seed;
  return o;
}

} // namespace

TEST_CASE("apply_filter is a conjunction of the present clauses")
{
  auto r = rev(1, "Alpha", 0, "2012-06-15T00:00:00Z");
  FilterSpec f;
  CHECK(f.empty());
  CHECK(apply_filter(r, f));
  f.time_range = range("2011-01-01", "2013-01-01");
  CHECK(apply_filter(r, f));
  CHECK_FALSE(apply_filter(rev(1, "Alpha", 0, "2013-01-01T00:00:00Z"), f));
  CHECK(apply_filter(rev(1, "Alpha", 0, "2011-01-01T00:00:00Z"), f));
  CHECK_FALSE(apply_filter(rev(1, "Alpha", 0, "2010-12-31T23:59:59Z"), f));

  FilterSpec articles;
  articles.articles_only = true;
  CHECK_FALSE(apply_filter(rev(1, "Talk:Alpha", 1, "2012-01-01T00:00:00Z"), articles));
  CHECK(apply_filter(r, articles));
  articles.namespaces = std::set<std::int32_t>{0, 1};
  CHECK_FALSE(apply_filter(rev(1, "Talk:Alpha", 1, "2012-01-01T00:00:00Z"), articles));

  FilterSpec ns;
  ns.namespaces = std::set<std::int32_t>{1, 6};
  CHECK(apply_filter(rev(1, "Talk:Alpha", 1, "2012-01-01T00:00:00Z"), ns));
  CHECK_FALSE(apply_filter(r, ns));

  auto set = std::make_shared<EntitySet>();
  set->add("Alpha", "Q1");
  FilterSpec kb;
  kb.entity_set = set;
  CHECK(apply_filter(r, kb));
  CHECK_FALSE(apply_filter(rev(2, "Beta", 0, "2012-01-01T00:00:00Z"), kb));

  FilterSpec custom;
  custom.custom = find_predicate("non-deleted");
  REQUIRE(custom.custom);
  CHECK(apply_filter(r, custom));
  auto d = r;
  d.text_deleted = true;
  d.text.clear();
  CHECK_FALSE(apply_filter(d, custom));
  CHECK_FALSE(find_predicate("no-such-predicate"));
}

TEST_CASE("filter validation rejects empty ranges")
{
  FilterSpec f;
  f.time_range = range("2013-01-01", "2011-01-01");
  CHECK_THROWS_AS(f.validate(), Error);
  f.time_range = range("2011-01-01", "2011-01-01");
  CHECK_THROWS_AS(f.validate(), Error);
  f.time_range = range("2011-01-01", "2011-01-02");
  CHECK_NOTHROW(f.validate());
}

TEST_CASE("match_entity normalizes titles and urls")
{
  auto obama = rev(1, "Barack Obama", 0, "2012-01-01T00:00:00Z");
  auto talk = rev(2, "Talk:Barack Obama", 1, "2012-01-01T00:00:00Z");

  EntitySet exact(Normalization::title_exact);
  exact.add("Barack Obama", "Q76");
  CHECK(match_entity(obama, exact) == "Q76");
  CHECK_FALSE(match_entity(talk, exact));
  CHECK_FALSE(match_entity(rev(3, "barack obama", 0, "2012-01-01T00:00:00Z"), exact));

  EntitySet url(Normalization::url_decode);
  url.add("Barack%20Obama", "Q76");
  CHECK(match_entity(obama, url) == "Q76");
  CHECK_FALSE(match_entity(talk, url));
  EntitySet url2(Normalization::url_decode);
  url2.add("http://dbpedia.org/resource/Barack_Obama", "Q76");
  CHECK(match_entity(obama, url2) == "Q76");

  EntitySet folded(Normalization::title_case_fold);
  folded.add("BARACK obama", "Q76");
  CHECK(match_entity(obama, folded) == "Q76");
  CHECK_THROWS_AS(folded.add("barack OBAMA", "Q77"), Error);

  CHECK(title_from_url("https://en.wikipedia.org/wiki/Usain_Bolt") == "Usain Bolt");
  CHECK(title_from_url("Caf%C3%A9_Society") == "Café Society");
  CHECK(entity_key("Usain Bolt") == "usain_bolt");
  CHECK(entity_key("UEFA Euro 2012") == "uefa_euro_2012");
}

TEST_CASE("entity sets load from tab-separated files")
{
  TempDir dir;
  write_file(dir / "kb.tsv", "# comment\nBarack Obama\tQ76\n\nUsain Bolt\tQ1189\n");
  auto set = EntitySet::load(dir / "kb.tsv", Normalization::title_exact);
  CHECK(set.size() == 2);
  CHECK(set.lookup("Usain Bolt") == "Q1189");
  write_file(dir / "bad.tsv", "no tab here\n");
  CHECK_THROWS_AS(EntitySet::load(dir / "bad.tsv", Normalization::title_exact), Error);
}

TEST_CASE("entity routing")
{
  for (std::uint64_t id : {1ULL, 10ULL, 123456789ULL})
    CHECK(entity_route(id, 1) == 0);
  CHECK(entity_route(10, 8) == entity_route(10, 8));

  // Frozen against the chosen hash: 10^5 consecutive ids over 8 buckets.
  std::vector<std::uint64_t> load(8);
  for (std::uint64_t id = 1; id <= 100'000; ++id) {
    auto p = entity_route(id, 8);
    REQUIRE(p < 8);
    ++load[p];
  }
  auto [lo, hi] = std::minmax_element(load.begin(), load.end());
  CHECK(static_cast<double>(*hi) / static_cast<double>(*lo) < 1.1);
  for (std::uint32_t n = 1; n <= 16; ++n)
    for (std::uint64_t id = 1; id < 500; id += 7)
      CHECK(entity_route(id, n) < n);
}

TEST_CASE("entity-wise partitioning keeps each page in one file")
{
  TempDir dir;
  auto xml = fixture_xml(pages(3, 4));
  PartitionPlan plan;
  plan.partition_count = 2;
  auto run = partition(xml, plan, dir.path());
  CHECK(run.manifest.records_out() == 12);
  CHECK(run.manifest.partitions.size() == 2);

  // Brute-force grouping oracle from the original stream.
  std::map<std::uint64_t, std::size_t> expected;
  for (auto& r : revisions_of(stream_events(xml)))
    ++expected[r.page.page_id];
  std::map<std::uint64_t, std::set<std::size_t>> where;
  std::map<std::uint64_t, std::size_t> got;
  for (std::size_t i = 0; i < run.parts.size(); ++i)
    for (auto& r : run.parts[i]) {
      where[r.page.page_id].insert(i);
      ++got[r.page.page_id];
    }
  CHECK(got == expected);
  for (auto& [page, files] : where) {
    CHECK(files.size() == 1);
    CHECK(*files.begin() == entity_route(page, 2));
  }
  for (std::size_t i = 0; i < run.parts.size(); ++i)
    CHECK(run.manifest.partitions[i].revisions == run.parts[i].size());
}

TEST_CASE("a filter that excludes everything still writes well-formed files")
{
  TempDir dir;
  for (auto format : {RecordFormat::json_lines, RecordFormat::xml}) {
    PartitionPlan plan;
    plan.partition_count = 2;
    plan.output_format = format;
    plan.filter.time_range = range("1990-01-01", "1991-01-01");
    auto out = dir / std::string(records::to_string(format));
    auto run = partition(fixture_xml(pages(3, 4)), plan, out);
    CHECK(run.manifest.records_out() == 0);
    CHECK(run.manifest.dropped_by_filter == 12);
    REQUIRE(run.parts.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(std::filesystem::exists(run.manifest.partitions[i].path));
      CHECK(run.parts[i].empty());
      CHECK_FALSE(run.manifest.partitions[i].min_timestamp);
    }
  }
}

TEST_CASE("document-wise partitioning keeps lineage")
{
  TempDir dir;
  auto xml = fixture_xml(pages(3, 4));
  PartitionPlan plan;
  plan.mode = PartitionMode::document_wise;
  plan.partition_count = 3;
  auto run = partition(xml, plan, dir.path());
  CHECK(run.manifest.records_out() == 12);
  std::map<std::uint64_t, std::optional<std::uint64_t>> parents;
  for (auto& r : revisions_of(stream_events(xml)))
    parents[r.revision_id] = r.parent_id;
  std::size_t seen = 0;
  for (auto& part : run.parts) {
    CHECK(part.size() == 4); // round robin
    for (auto& r : part) {
      CHECK(r.parent_id == parents.at(r.revision_id));
      ++seen;
    }
  }
  CHECK(seen == 12);
}

TEST_CASE("partitions round-trip field for field in both formats")
{
  TempDir dir;
  auto o = pages(15, 3, 5);
  o.redirect_fraction = 0.2;
  o.deleted_fraction = 0.2;
  o.talk_fraction = 0.2;
  auto xml = fixture_xml(o);
  auto original = revisions_of(stream_events(xml));
  for (auto format : {RecordFormat::json_lines, RecordFormat::xml}) {
    PartitionPlan plan;
    plan.partition_count = 1;
    plan.output_format = format;
    auto run = partition(xml, plan, dir / std::string(records::to_string(format)));
    REQUIRE(run.parts.size() == 1);
    CHECK(run.parts[0] == original);
    auto& info = run.manifest.partitions[0];
    CHECK(info.bytes == std::filesystem::file_size(info.path));
  }
}

TEST_CASE("json-lines record schema")
{
  RevisionRecord r = rev(5, "Alpha", 0, "2012-06-15T10:00:00Z");
  r.parent_id = 4;
  r.contributor = "bob";
  r.page.redirect_target = "Beta";
  auto j = records::to_json(r);
  for (auto key : {"page_id", "title", "ns", "redirect", "rev_id", "parent_id", "timestamp",
                   "contributor", "comment", "text", "deleted"})
    CHECK(j.contains(key));
  CHECK(j.size() == 11);
  CHECK(j["comment"].is_null());
  CHECK(j["timestamp"] == "2012-06-15T10:00:00Z");
  CHECK(records::revision_from_json(j) == r);
  j.erase("rev_id");
  CHECK_THROWS_AS(records::revision_from_json(j), Error);
}

TEST_CASE("xml writer refuses characters xml cannot carry")
{
  CHECK(records::escape_xml("a<b>&\"c'") == "a&lt;b&gt;&amp;&quot;c'");
  CHECK_THROWS_AS(records::escape_xml(std::string("a\x01") + "b"), Error);
}

TEST_CASE("manifest round-trips through json")
{
  TempDir dir;
  PartitionPlan plan;
  plan.partition_count = 3;
  plan.filter.time_range = range("2011-01-01", "2011-07-01");
  auto run = partition(fixture_xml(pages(10, 3)), plan, dir.path());
  auto loaded = PartitionManifest::load(dir.path());
  CHECK(loaded.partitions == run.manifest.partitions);
  CHECK(loaded.records_in == 30);
  CHECK(loaded.records_out() + loaded.dropped_by_filter == 30);
  CHECK(loaded.hash == "splitmix64");
  CHECK(loaded.filter == run.manifest.filter);
}

TEST_CASE("conservation, mode independence and monotonicity")
{
  TempDir dir;
  auto o = pages(30, 6, 17);
  o.talk_fraction = 0.3;
  o.span_days = 900;
  auto xml = fixture_xml(o);
  auto all = revisions_of(stream_events(xml));

  std::vector<FilterSpec> chain(1);
  chain.push_back(chain.back());
  chain.back().time_range = range("2011-03-01", "2012-03-01");
  chain.push_back(chain.back());
  chain.back().articles_only = true;
  chain.push_back(chain.back());
  chain.back().custom = find_predicate("has-parent");

  std::size_t previous = all.size() + 1;
  int step = 0;
  for (auto& f : chain) {
    std::multiset<std::uint64_t> expected;
    for (auto& r : all)
      if (apply_filter(r, f))
        expected.insert(r.revision_id);
    std::map<PartitionMode, std::multiset<std::uint64_t>> got;
    for (auto mode : {PartitionMode::entity_wise, PartitionMode::document_wise}) {
      PartitionPlan plan;
      plan.mode = mode;
      plan.partition_count = 4;
      plan.filter = f;
      auto run = partition(xml, plan, dir / (std::to_string(step) + std::string(to_string(mode))));
      for (auto& part : run.parts)
        for (auto& r : part)
          got[mode].insert(r.revision_id);
      CHECK(run.manifest.records_out() == expected.size());
    }
    CAPTURE(step);
    CHECK(got[PartitionMode::entity_wise] == expected);
    CHECK(got[PartitionMode::document_wise] == expected);
    std::set<std::uint64_t> unique(expected.begin(), expected.end());
    CHECK(unique.size() == expected.size());
    CHECK(expected.size() <= previous);
    previous = expected.size();
    ++step;
  }
  CHECK(previous < all.size());
}

TEST_CASE("parallel split readers match the single reader")
{
  TempDir dir;
  auto o = pages(60, 3, 23);
  o.pages_per_stream = 7;
  for (auto c : {dump::Compression::none, dump::Compression::bzip2_multistream}) {
    o.compression = c;
    auto path = dir / ("f" + std::string(dump::to_string(c)));
    fixture::generate_fixture(o, path);
    std::vector<std::vector<RevisionRecord>> outputs;
    for (unsigned workers : {1u, 4u}) {
      PartitionPlan plan;
      plan.partition_count = 5;
      plan.workers = workers;
      plan.output_dir = dir / ("out" + std::to_string(workers) + std::string(dump::to_string(c)));
      auto manifest = partition_dump(dump::DumpSource::file(path, c), plan);
      CHECK(manifest.records_out() == 180);
      std::vector<RevisionRecord> flat;
      for (auto& p : manifest.partitions)
        for (auto& r : read_all(p.path))
          flat.push_back(r);
      outputs.push_back(flat);
    }
    CHECK(outputs[0] == outputs[1]);
  }
}
