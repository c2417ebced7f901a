#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "dom_oracle.hpp"
#include "revhist/error.hpp"
#include "support.hpp"

using namespace revhist;
using namespace revhist::testing;
using dump::Compression;
using dump::DumpSource;

namespace {

fixture::FixtureOptions small(std::uint64_t seed, std::size_t pages = 3, std::size_t revs = 2)
{
  fixture::FixtureOptions o;
  o.seed = seed;
  o.pages = pages;
  o.revisions_per_page = revs;
  return o;
}

std::vector<std::uint64_t> page_ids(const std::vector<DumpEvent>& events)
{
  std::vector<std::uint64_t> ids;
  for (auto& e : events)
    if (auto* p = std::get_if<PageHeader>(&e))
      ids.push_back(p->page_id);
  return ids;
}

// Every offset where the literal tag starts.
std::vector<std::uint64_t> scan_page_tags(const std::string& bytes)
{
  std::vector<std::uint64_t> out;
  for (auto pos = bytes.find("<page>"); pos != std::string::npos; pos = bytes.find("<page>", pos + 1))
    out.push_back(pos);
  return out;
}

const char* kHeader = "<mediawiki xml:lang=\"en\" version=\"0.10\">\n";

} // namespace

TEST_CASE("smallest dump yields one header and one revision")
{
  auto xml = fixture_xml(small(3, 1, 1));
  auto events = stream_events(xml);
  REQUIRE(events.size() == 2);
  CHECK(std::holds_alternative<PageHeader>(events[0]));
  CHECK(std::holds_alternative<RevisionRecord>(events[1]));
  CHECK(events == dom_parse(xml));
}

TEST_CASE("pages come out in file order and match the DOM parse")
{
  auto xml = fixture_xml(small(7));
  auto events = stream_events(xml);
  CHECK(page_ids(events) == std::vector<std::uint64_t>{10, 20, 30});
  CHECK(events == dom_parse(xml));
}

TEST_CASE("streaming equals the DOM oracle across seeds and shapes")
{
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    auto o = small(seed, 5 + seed % 7, 1 + seed % 5);
    o.talk_fraction = 0.2;
    o.file_fraction = 0.1;
    o.redirect_fraction = 0.2;
    o.deleted_fraction = 0.2;
    auto xml = fixture_xml(o);
    CAPTURE(seed);
    CHECK(stream_events(xml) == dom_parse(xml));
  }
}

TEST_CASE("hand-written dump with optional and unknown elements")
{
  std::string xml = std::string(kHeader) + R"(  <siteinfo><sitename>W</sitename></siteinfo>
  <page>
    <title>Alpha</title>
    <id>5</id>
    <redirect title="Beta" />
    <restrictions>edit=sysop</restrictions>
    <revision>
      <id>9</id>
      <parentid>7</parentid>
      <timestamp>2012-02-29T12:00:00Z</timestamp>
      <contributor><ip>10.0.0.1</ip></contributor>
      <minor />
      <sha1>abc</sha1>
      <text xml:space="preserve">#REDIRECT [[Beta]] &amp; more</text>
    </revision>
    <revision>
      <id>11</id>
      <timestamp>2012-03-01T00:00:00Z</timestamp>
      <contributor deleted="deleted" />
      <comment deleted="deleted" />
      <text deleted="deleted" />
    </revision>
  </page>
</mediawiki>
)";
  auto events = stream_events(xml);
  REQUIRE(events.size() == 3);
  auto& page = std::get<PageHeader>(events[0]);
  CHECK(page.page_id == 5);
  CHECK(page.ns == 0);
  CHECK(page.redirect_target == "Beta");
  auto& a = std::get<RevisionRecord>(events[1]);
  CHECK(a.parent_id == 7u);
  CHECK(a.contributor == "10.0.0.1");
  CHECK_FALSE(a.comment);
  CHECK(a.text == "#REDIRECT [[Beta]] & more");
  CHECK(a.text_bytes() == a.text.size());
  auto& b = std::get<RevisionRecord>(events[2]);
  CHECK(b.text_deleted);
  CHECK(b.text.empty());
  CHECK_FALSE(b.contributor);
  CHECK_FALSE(b.comment);
  CHECK(events == dom_parse(xml));
}

TEST_CASE("parse_revision maps fields directly")
{
  PageHeader page{1, "P", 0, {}};
  auto r = dump::parse_revision(
    "<revision><id>7</id><timestamp>2011-01-01T00:00:00Z</timestamp><text>x</text></revision>", page);
  CHECK(r.revision_id == 7);
  CHECK(format_iso8601(r.timestamp) == "2011-01-01T00:00:00Z");
  CHECK(r.text == "x");
  CHECK_FALSE(r.parent_id);
  CHECK_FALSE(r.contributor);
  CHECK(r.page == page);

  auto p = dump::parse_revision(
    "<revision><parentid>7</parentid><id>9</id><timestamp>2011-01-01T00:00:00Z</timestamp></revision>",
    page);
  CHECK(p.parent_id == 7u);
  CHECK(p.revision_id == 9);

  auto code_of = [&](std::string_view frag) {
    try {
      dump::parse_revision(frag, page);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::usage;
  };
  CHECK(code_of("<revision><id>7</id><text>x</text></revision>") == ErrorCode::missing_required_field);
  CHECK(code_of("<revision><timestamp>2011-01-01T00:00:00Z</timestamp></revision>") ==
        ErrorCode::missing_required_field);
  CHECK(code_of("<revision><id>7</id><timestamp>01/01/2011</timestamp></revision>") ==
        ErrorCode::bad_timestamp);
  CHECK(code_of("<revision><id>7</id>") == ErrorCode::malformed_xml);
}

TEST_CASE("malformed xml reports the byte offset")
{
  std::string xml = std::string(kHeader) + "  <page><title>A</title><id>1</id></pag>";
  try {
    stream_events(xml);
    FAIL("expected malformed xml");
  } catch (const MalformedXml& e) {
    CHECK(e.code() == ErrorCode::malformed_xml);
    auto at = xml.find("</pag>");
    CHECK(e.offset() >= at);
    CHECK(e.offset() <= at + 6);
  }
}

TEST_CASE("invalid utf-8 is replaced and counted")
{
  std::string xml = std::string(kHeader) +
                    "<page><title>A</title><id>1</id><revision><id>2</id>"
                    "<timestamp>2011-01-01T00:00:00Z</timestamp><text>a\xFF" "b</text>"
                    "</revision></page></mediawiki>";
  auto in = std::make_shared<std::istringstream>(xml);
  dump::RevisionStream stream(DumpSource{in, Compression::none, {}, {}});
  auto r = stream.next_revision();
  REQUIRE(r);
  CHECK(r->text == "a\xEF\xBF\xBD" "b");
  CHECK_FALSE(stream.next());
  CHECK(stream.stats().invalid_utf8_replaced == 1);
  CHECK(stream.stats().revisions == 1);
  CHECK(stream.stats().pages == 1);
}

TEST_CASE("codecs are transparent")
{
  TempDir dir;
  auto o = small(11, 12, 3);
  o.pages_per_stream = 4;
  auto plain = stream_events(fixture_xml(o));
  for (auto c : {Compression::none, Compression::gzip, Compression::bzip2,
                 Compression::bzip2_multistream}) {
    CAPTURE(dump::to_string(c));
    o.compression = c;
    auto path = dir / ("f." + std::string(dump::to_string(c)));
    fixture::generate_fixture(o, path);
    CHECK(dump::detect_compression(path) == c);
    CHECK(stream_events(DumpSource::file(path, c)) == plain);
  }
}

TEST_CASE("source errors")
{
  TempDir dir;
  auto o = small(2);
  fixture::generate_fixture(o, dir / "plain.xml");
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::usage;
  };
  CHECK(code_of([&] { stream_events(DumpSource::file(dir / "missing.xml")); }) ==
        ErrorCode::io_error);
  CHECK(code_of([&] { stream_events(DumpSource::file(dir / "plain.xml", Compression::gzip)); }) ==
        ErrorCode::codec_mismatch);
  CHECK(code_of([&] { stream_events(DumpSource::file(dir / "plain.xml", Compression::bzip2)); }) ==
        ErrorCode::codec_mismatch);
  o.compression = Compression::gzip;
  fixture::generate_fixture(o, dir / "f.gz");
  auto gz = DumpSource::file(dir / "f.gz", Compression::gzip);
  CHECK(code_of([&] { dump::seek_page_boundary(gz, 0); }) == ErrorCode::not_seekable);
  gz.start_offset = 10;
  CHECK(code_of([&] { dump::RevisionStream s(gz); }) == ErrorCode::not_seekable);
}

TEST_CASE("seek_page_boundary agrees with a byte scan")
{
  TempDir dir;
  auto path = dir / "f.xml";
  fixture::generate_fixture(small(1), path);
  auto bytes = read_file(path);
  auto tags = scan_page_tags(bytes);
  REQUIRE(tags.size() == 3);
  auto src = DumpSource::file(path);

  CHECK(tags.front() == 58);
  CHECK(dump::seek_page_boundary(src, 0) == 58);
  for (auto t : tags)
    CHECK(dump::seek_page_boundary(src, t) == t);
  CHECK(dump::seek_page_boundary(src, tags.back() + 1) == dump::kEndOfData);
  CHECK(dump::seek_page_boundary(src, bytes.size() + 100) == dump::kEndOfData);
  for (std::uint64_t off = 0; off < bytes.size(); off += 37) {
    auto next = std::lower_bound(tags.begin(), tags.end(), off);
    CHECK(dump::seek_page_boundary(src, off) == (next == tags.end() ? dump::kEndOfData : *next));
  }
}

TEST_CASE("parsing from a boundary yields the remaining pages")
{
  TempDir dir;
  auto path = dir / "f.xml";
  fixture::generate_fixture(small(5, 6, 2), path);
  auto all = stream_events(DumpSource::file(path));
  auto tags = scan_page_tags(read_file(path));
  for (std::size_t i = 0; i < tags.size(); ++i) {
    auto src = DumpSource::file(path);
    src.start_offset = tags[i];
    auto ids = page_ids(stream_events(src));
    CHECK(ids.size() == tags.size() - i);
    CHECK(ids.front() == (i + 1) * 10);
  }
}

namespace {

std::multiset<std::uint64_t> pages_by_splits(const std::filesystem::path& path, Compression c,
                                             std::vector<std::uint64_t> offsets)
{
  auto src = DumpSource::file(path, c);
  std::vector<std::uint64_t> bounds;
  for (auto o : offsets)
    if (auto b = dump::seek_page_boundary(src, o); b != dump::kEndOfData)
      bounds.push_back(b);
  std::sort(bounds.begin(), bounds.end());
  bounds.erase(std::unique(bounds.begin(), bounds.end()), bounds.end());
  std::multiset<std::uint64_t> seen;
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    auto split = src;
    split.start_offset = bounds[i];
    if (i + 1 < bounds.size())
      split.end_offset = bounds[i + 1];
    for (auto id : page_ids(stream_events(split)))
      seen.insert(id);
  }
  return seen;
}

} // namespace

TEST_CASE("splits cover every page exactly once")
{
  TempDir dir;
  std::mt19937_64 rng(99);
  for (auto c : {Compression::none, Compression::bzip2_multistream}) {
    auto o = small(21, 40, 2);
    o.pages_per_stream = 3;
    o.compression = c;
    auto path = dir / "f.bin";
    auto summary = fixture::generate_fixture(o, path);
    auto size = std::filesystem::file_size(path);
    std::multiset<std::uint64_t> expected(summary.page_ids.begin(), summary.page_ids.end());
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<std::uint64_t> offsets{0};
      std::uniform_int_distribution<std::uint64_t> pick(0, size + 10);
      for (int k = 0; k < 1 + trial; ++k)
        offsets.push_back(pick(rng));
      CAPTURE(dump::to_string(c));
      CAPTURE(trial);
      CHECK(pages_by_splits(path, c, offsets) == expected);
    }
  }
}

TEST_CASE("multistream boundaries land on stream starts")
{
  TempDir dir;
  auto o = small(4, 10, 1);
  o.pages_per_stream = 2;
  o.compression = Compression::bzip2_multistream;
  auto path = dir / "f.bz2";
  fixture::generate_fixture(o, path);
  auto src = DumpSource::file(path, o.compression);
  auto bytes = read_file(path);
  auto first = dump::seek_page_boundary(src, 0);
  REQUIRE(first != dump::kEndOfData);
  CHECK(first > 0); // the header stream holds no page
  CHECK(bytes.compare(first, 3, "BZh") == 0);
  CHECK(dump::seek_page_boundary(src, first) == first);
  auto second = dump::seek_page_boundary(src, first + 1);
  REQUIRE(second != dump::kEndOfData);
  CHECK(bytes.compare(second, 3, "BZh") == 0);
  auto s = src;
  s.start_offset = first;
  s.end_offset = second;
  CHECK(page_ids(stream_events(s)) == std::vector<std::uint64_t>{10, 20});
}
