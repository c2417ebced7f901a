#include "revhist/temporal_index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <zlib.h>

#include "revhist/error.hpp"
#include "revhist/tokenizer.hpp"

namespace revhist::index {

using nlohmann::json;
namespace fs = std::filesystem;
using extract::RecordKind;

std::string_view to_string(Field f)
{
  return f == Field::anchor ? "anchor" : "fulltext";
}

Field parse_field(std::string_view text)
{
  if (text == "anchor" || text == "anchors")
    return Field::anchor;
  if (text == "fulltext")
    return Field::fulltext;
  throw Error(ErrorCode::unknown_field, "unknown field '" + std::string(text) + "'");
}

std::vector<TemporalPosting> postings_of(const extract::EmittedRecord& record)
{
  auto kind = record.kind();
  if (kind != RecordKind::anchors && kind != RecordKind::fulltext)
    throw Error(ErrorCode::unknown_kind,
                "records of kind " + std::string(extract::to_string(kind)) +
                  " cannot be indexed");
  std::vector<TemporalPosting> out;
  if (record.deleted)
    return out;
  auto emit = [&](const std::string& term, std::uint32_t freq, Field field) {
    out.push_back({term, record.entity, record.timestamp, freq, field});
  };
  if (kind == RecordKind::fulltext) {
    for (auto& [term, n] : std::get<extract::FulltextPayload>(record.payload).terms) {
      if (n == 0)
        throw Error(ErrorCode::corrupt_payload, "zero frequency for '" + term + "'");
      emit(term, n, Field::fulltext);
    }
  } else {
    TermCounts counts;
    for (auto& link : std::get<extract::AnchorsPayload>(record.payload).links)
      for_each_token(link.anchor_text, [&](std::string_view t) {
        auto it = counts.find(t);
        if (it == counts.end())
          counts.emplace(std::string(t), 1);
        else
          ++it->second;
      });
    for (auto& [term, n] : counts)
      emit(term, n, Field::anchor);
  }
  return out;
}

// Segment

namespace {

bool posting_less(const Segment::Posting& a, const Segment::Posting& b)
{
  return std::tie(a.field, a.term, a.entity, a.ts) < std::tie(b.field, b.term, b.entity, b.ts);
}

bool same_key(const Segment::Posting& a, const Segment::Posting& b)
{
  return a.field == b.field && a.term == b.term && a.entity == b.entity && a.ts == b.ts;
}

// Sorted dictionary from interned strings; returns old id -> new id.
std::vector<std::uint32_t> sort_dictionary(std::vector<std::string>& dict)
{
  std::vector<std::uint32_t> order(dict.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(),
            [&](std::uint32_t a, std::uint32_t b) { return dict[a] < dict[b]; });
  std::vector<std::uint32_t> remap(dict.size());
  std::vector<std::string> sorted;
  sorted.reserve(dict.size());
  for (std::uint32_t i = 0; i < order.size(); ++i) {
    remap[order[i]] = i;
    sorted.push_back(std::move(dict[order[i]]));
  }
  dict = std::move(sorted);
  return remap;
}

struct Interner {
  std::vector<std::string> values;
  std::unordered_map<std::string, std::uint32_t> ids;

  std::uint32_t operator()(const std::string& s)
  {
    auto [it, inserted] = ids.try_emplace(s, static_cast<std::uint32_t>(values.size()));
    if (inserted)
      values.push_back(s);
    return it->second;
  }
};

} // namespace

std::optional<std::uint32_t> Segment::term_id(std::string_view term) const
{
  auto it = std::lower_bound(terms_.begin(), terms_.end(), term);
  if (it == terms_.end() || *it != term)
    return std::nullopt;
  return static_cast<std::uint32_t>(it - terms_.begin());
}

std::optional<std::uint32_t> Segment::entity_id(std::string_view entity) const
{
  auto it = std::lower_bound(entities_.begin(), entities_.end(), entity);
  if (it == entities_.end() || *it != entity)
    return std::nullopt;
  return static_cast<std::uint32_t>(it - entities_.begin());
}

std::span<const Segment::Posting> Segment::term_postings(Field field, std::uint32_t term) const
{
  auto lo = std::partition_point(postings_.begin(), postings_.end(), [&](const Posting& p) {
    return std::tie(p.field, p.term) < std::tie(field, term);
  });
  auto hi = std::partition_point(lo, postings_.end(), [&](const Posting& p) {
    return p.field == field && p.term == term;
  });
  return {lo, hi};
}

std::span<const std::uint32_t> Segment::entity_postings(Field field, std::uint32_t entity) const
{
  auto key = [&](std::uint32_t i) { return std::tie(postings_[i].field, postings_[i].entity); };
  auto lo = std::partition_point(by_entity_.begin(), by_entity_.end(), [&](std::uint32_t i) {
    return key(i) < std::tie(field, entity);
  });
  auto hi = std::partition_point(lo, by_entity_.end(), [&](std::uint32_t i) {
    return postings_[i].field == field && postings_[i].entity == entity;
  });
  return {lo, hi};
}

void Segment::finish()
{
  std::sort(postings_.begin(), postings_.end(), posting_less);
  std::size_t w = 0;
  for (std::size_t r = 0; r < postings_.size(); ++r) {
    if (w > 0 && same_key(postings_[w - 1], postings_[r]))
      postings_[w - 1].freq += postings_[r].freq;
    else
      postings_[w++] = postings_[r];
  }
  postings_.resize(w);
  std::sort(records_.begin(), records_.end(),
            [](const Record& a, const Record& b) { return a.key < b.key; });

  span_.reset();
  if (!postings_.empty()) {
    auto [lo, hi] = std::minmax_element(postings_.begin(), postings_.end(),
                                        [](auto& a, auto& b) { return a.ts < b.ts; });
    span_ = TimeRange{Timestamp{std::chrono::seconds{lo->ts}},
                      Timestamp{std::chrono::seconds{hi->ts + 1}}};
  }

  by_entity_.resize(postings_.size());
  std::iota(by_entity_.begin(), by_entity_.end(), 0u);
  std::sort(by_entity_.begin(), by_entity_.end(), [&](std::uint32_t a, std::uint32_t b) {
    auto& x = postings_[a];
    auto& y = postings_[b];
    return std::tie(x.field, x.entity, x.ts, x.term) < std::tie(y.field, y.entity, y.ts, y.term);
  });

  entity_docs_.assign(entities_.size(), 0);
  for (auto& r : records_)
    ++entity_docs_[r.entity];
}

std::shared_ptr<const Segment> Segment::build(
  std::uint64_t id, std::vector<TemporalPosting> postings,
  std::vector<std::pair<RecordKey, std::string>> records)
{
  auto seg = std::make_shared<Segment>();
  seg->id_ = id;
  Interner terms, entities;
  seg->postings_.reserve(postings.size());
  for (auto& p : postings) {
    if (p.frequency == 0)
      throw Error(ErrorCode::corrupt_payload, "posting with zero frequency");
    seg->postings_.push_back({terms(p.term), entities(p.entity),
                              p.timestamp.time_since_epoch().count(), p.frequency, p.field});
  }
  postings.clear();
  postings.shrink_to_fit();
  seg->records_.reserve(records.size());
  for (auto& [key, entity] : records)
    seg->records_.push_back({key, entities(entity)});

  seg->terms_ = std::move(terms.values);
  seg->entities_ = std::move(entities.values);
  auto term_map = sort_dictionary(seg->terms_);
  auto entity_map = sort_dictionary(seg->entities_);
  for (auto& p : seg->postings_) {
    p.term = term_map[p.term];
    p.entity = entity_map[p.entity];
  }
  for (auto& r : seg->records_)
    r.entity = entity_map[r.entity];
  seg->finish();
  return seg;
}

std::shared_ptr<const Segment> Segment::merge(
  std::uint64_t id, const std::vector<std::shared_ptr<const Segment>>& inputs)
{
  auto seg = std::make_shared<Segment>();
  seg->id_ = id;

  std::vector<std::string> all_terms, all_entities;
  for (auto& in : inputs) {
    all_terms.insert(all_terms.end(), in->terms_.begin(), in->terms_.end());
    all_entities.insert(all_entities.end(), in->entities_.begin(), in->entities_.end());
  }
  auto unique_sorted = [](std::vector<std::string>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  unique_sorted(all_terms);
  unique_sorted(all_entities);
  auto id_in = [](const std::vector<std::string>& dict, const std::string& s) {
    return static_cast<std::uint32_t>(std::lower_bound(dict.begin(), dict.end(), s) - dict.begin());
  };

  std::size_t total = 0;
  for (auto& in : inputs)
    total += in->postings_.size();
  seg->postings_.reserve(total);
  for (auto& in : inputs) {
    std::vector<std::uint32_t> tmap(in->terms_.size()), emap(in->entities_.size());
    for (std::size_t i = 0; i < tmap.size(); ++i)
      tmap[i] = id_in(all_terms, in->terms_[i]);
    for (std::size_t i = 0; i < emap.size(); ++i)
      emap[i] = id_in(all_entities, in->entities_[i]);
    for (auto p : in->postings_) {
      p.term = tmap[p.term];
      p.entity = emap[p.entity];
      seg->postings_.push_back(p);
    }
    for (auto r : in->records_) {
      r.entity = emap[r.entity];
      seg->records_.push_back(r);
    }
  }
  seg->terms_ = std::move(all_terms);
  seg->entities_ = std::move(all_entities);
  seg->finish();
  return seg;
}

// Segment file, little-endian throughout:
//   magic "RHSEG001", u32 version, u64 segment id,
//   u32 n_terms, n_terms x (u32 len, bytes),
//   u32 n_entities, n_entities x (u32 len, bytes),
//   u64 n_postings, n_postings x (u32 term, u32 entity, i64 ts, u32 freq, u8 field),
//   u64 n_records, n_records x (u64 page, u64 rev, u8 kind, u32 entity),
//   u32 crc32 of every preceding byte.

namespace {

constexpr char kMagic[8] = {'R', 'H', 'S', 'E', 'G', '0', '0', '1'};

class Writer {
public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v)
  {
    for (int i = 0; i < 4; ++i)
      u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v)
  {
    for (int i = 0; i < 8; ++i)
      u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(const std::string& s)
  {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  std::string& buffer() { return buf_; }

private:
  std::string buf_;
};

class Reader {
public:
  Reader(std::string_view data, const fs::path& path) : data_(data), path_(path) {}

  std::uint8_t u8()
  {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32()
  {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64()
  {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
    return v;
  }
  std::string str()
  {
    auto n = u32();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view bytes(std::size_t n)
  {
    need(n);
    auto v = data_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  bool at_end() const { return pos_ == data_.size(); }
  [[noreturn]] void fail(const std::string& what) const
  {
    throw Error(ErrorCode::corrupt_index, path_.string() + ": " + what);
  }

private:
  void need(std::size_t n) const
  {
    if (data_.size() - pos_ < n)
      fail("truncated segment");
  }

  std::string_view data_;
  std::size_t pos_ = 0;
  fs::path path_;
};

std::uint32_t crc_of(std::string_view data)
{
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < data.size()) {
    auto n = static_cast<uInt>(std::min<std::size_t>(data.size() - off, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data.data() + off), n);
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

void write_file_atomic(const fs::path& path, std::string_view data)
{
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw Error(ErrorCode::io_error, "cannot create '" + tmp.string() + "'");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.close();
    if (!out)
      throw Error(ErrorCode::io_error, "write failed on '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec)
    throw Error(ErrorCode::io_error, "cannot rename '" + tmp.string() + "': " + ec.message());
}

std::string read_file(const fs::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::io_error, "cannot open '" + path.string() + "'");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad())
    throw Error(ErrorCode::io_error, "read failed on '" + path.string() + "'");
  return data;
}

} // namespace

void Segment::write(const fs::path& path) const
{
  Writer w;
  w.buffer().reserve(64 + postings_.size() * 21 + records_.size() * 21);
  w.raw(kMagic, sizeof(kMagic));
  w.u32(kIndexFormatVersion);
  w.u64(id_);
  w.u32(static_cast<std::uint32_t>(terms_.size()));
  for (auto& t : terms_)
    w.str(t);
  w.u32(static_cast<std::uint32_t>(entities_.size()));
  for (auto& e : entities_)
    w.str(e);
  w.u64(postings_.size());
  for (auto& p : postings_) {
    w.u32(p.term);
    w.u32(p.entity);
    w.u64(static_cast<std::uint64_t>(p.ts));
    w.u32(p.freq);
    w.u8(static_cast<std::uint8_t>(p.field));
  }
  w.u64(records_.size());
  for (auto& r : records_) {
    w.u64(r.key.page_id);
    w.u64(r.key.revision_id);
    w.u8(static_cast<std::uint8_t>(r.key.kind));
    w.u32(r.entity);
  }
  w.u32(crc_of(w.buffer()));
  write_file_atomic(path, w.buffer());
}

std::shared_ptr<const Segment> Segment::read(const fs::path& path)
{
  auto data = read_file(path);
  Reader head(data, path);
  if (data.size() < sizeof(kMagic) + 4)
    head.fail("truncated segment");
  std::string_view body(data.data(), data.size() - 4);
  Reader tail(std::string_view(data).substr(data.size() - 4), path);
  if (tail.u32() != crc_of(body))
    head.fail("checksum mismatch");

  Reader r(body, path);
  if (r.bytes(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic)))
    r.fail("bad magic");
  if (auto v = r.u32(); v != kIndexFormatVersion)
    r.fail("unsupported segment version " + std::to_string(v));

  auto seg = std::make_shared<Segment>();
  seg->id_ = r.u64();
  auto n_terms = r.u32();
  seg->terms_.reserve(n_terms);
  for (std::uint32_t i = 0; i < n_terms; ++i)
    seg->terms_.push_back(r.str());
  auto n_entities = r.u32();
  seg->entities_.reserve(n_entities);
  for (std::uint32_t i = 0; i < n_entities; ++i)
    seg->entities_.push_back(r.str());
  if (!std::is_sorted(seg->terms_.begin(), seg->terms_.end()) ||
      !std::is_sorted(seg->entities_.begin(), seg->entities_.end()))
    r.fail("unsorted dictionary");

  auto n_postings = r.u64();
  if (n_postings > body.size() / 21)
    r.fail("posting count exceeds file size");
  seg->postings_.reserve(n_postings);
  for (std::uint64_t i = 0; i < n_postings; ++i) {
    Posting p;
    p.term = r.u32();
    p.entity = r.u32();
    p.ts = static_cast<std::int64_t>(r.u64());
    p.freq = r.u32();
    auto f = r.u8();
    if (p.term >= n_terms || p.entity >= n_entities || p.freq == 0 || f > 1)
      r.fail("invalid posting");
    p.field = static_cast<Field>(f);
    seg->postings_.push_back(p);
  }
  auto n_records = r.u64();
  if (n_records > body.size() / 21)
    r.fail("record count exceeds file size");
  seg->records_.reserve(n_records);
  for (std::uint64_t i = 0; i < n_records; ++i) {
    Record rec;
    rec.key.page_id = r.u64();
    rec.key.revision_id = r.u64();
    auto k = r.u8();
    rec.entity = r.u32();
    if (k > 3 || rec.entity >= n_entities)
      r.fail("invalid record");
    rec.key.kind = static_cast<RecordKind>(k);
    seg->records_.push_back(rec);
  }
  if (!r.at_end())
    r.fail("trailing bytes");
  seg->finish();
  return seg;
}

// Queries

std::uint64_t TimelineHistogram::total() const
{
  std::uint64_t n = 0;
  for (auto& b : buckets)
    n += b.count;
  return n;
}

TimelineHistogram empty_histogram(Granularity g, TimeRange range)
{
  TimelineHistogram h;
  h.granularity = g;
  h.range = range;
  for (Date d = bucket_start(range.start, g); to_timestamp(d) < range.end; d = next_bucket(d, g))
    h.buckets.push_back({d, 0});
  return h;
}

namespace {

void require_range(const TimeRange& r)
{
  if (!(r.start < r.end))
    throw Error(ErrorCode::bad_range, "range start must precede its end");
}

std::size_t bucket_index(const TimelineHistogram& h, std::int64_t ts)
{
  auto day = day_of(Timestamp{std::chrono::seconds{ts}});
  auto days = (day - h.buckets.front().start).count();
  return static_cast<std::size_t>(h.granularity == Granularity::day ? days : days / 7);
}

bool in_range(const TimeRange& r, std::int64_t ts)
{
  return r.contains(Timestamp{std::chrono::seconds{ts}});
}

// One matching posting; `other` is the entity for a term query and the term
// for an entity query. Equal (other, ts) pairs from different segments are
// the same posting key.
struct Hit {
  std::string_view other;
  std::int64_t ts;
  std::uint32_t freq;
};

std::vector<Hit> collect(const std::vector<std::shared_ptr<const Segment>>& segments,
                         const QueryTarget& target, Field field, const TimeRange& range)
{
  std::vector<Hit> hits;
  for (auto& seg : segments) {
    auto& ps = seg->postings();
    if (target.kind == QueryTarget::Kind::term) {
      auto id = seg->term_id(target.key);
      if (!id)
        continue;
      for (auto& p : seg->term_postings(field, *id))
        if (in_range(range, p.ts))
          hits.push_back({seg->entities()[p.entity], p.ts, p.freq});
    } else {
      auto id = seg->entity_id(target.key);
      if (!id)
        continue;
      for (auto i : seg->entity_postings(field, *id))
        if (in_range(range, ps[i].ts))
          hits.push_back({seg->terms()[ps[i].term], ps[i].ts, ps[i].freq});
    }
  }
  if (segments.size() > 1) {
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
      return std::tie(a.ts, a.other) < std::tie(b.ts, b.other);
    });
    std::size_t w = 0;
    for (std::size_t r = 0; r < hits.size(); ++r) {
      if (w > 0 && hits[w - 1].ts == hits[r].ts && hits[w - 1].other == hits[r].other)
        hits[w - 1].freq += hits[r].freq;
      else
        hits[w++] = hits[r];
    }
    hits.resize(w);
  }
  return hits;
}

} // namespace

Snapshot::Snapshot(std::vector<std::shared_ptr<const Segment>> segments)
    : segments_(std::move(segments))
{
}

TimelineHistogram Snapshot::timeline(const TimelineQuery& q) const
{
  require_range(q.range);
  auto h = empty_histogram(q.granularity, q.range);
  for (auto& hit : collect(segments_, q.target, q.field, q.range))
    h.buckets[bucket_index(h, hit.ts)].count += q.weighted ? hit.freq : 1;
  return h;
}

TermRanking Snapshot::top_terms(const TopTermsQuery& q) const
{
  if (q.range.end < q.range.start)
    throw Error(ErrorCode::bad_range, "range start must precede its end");
  if (q.k == 0)
    throw Error(ErrorCode::bad_parameter, "k must be at least 1");
  TermRanking ranking;
  ranking.k = q.k;
  if (!q.range.valid())
    return ranking;

  std::unordered_map<std::string_view, std::uint64_t> scores;
  if (!q.target) {
    for (auto& seg : segments_)
      for (auto& p : seg->postings())
        if (p.field == q.field && in_range(q.range, p.ts))
          scores[seg->terms()[p.term]] += p.freq;
  } else if (q.target->kind == QueryTarget::Kind::entity) {
    for (auto& hit : collect(segments_, *q.target, q.field, q.range))
      scores[hit.other] += hit.freq;
  } else {
    // Documents are (entity, instant) pairs holding the term.
    std::set<std::pair<std::string_view, std::int64_t>> docs;
    for (auto& hit : collect(segments_, *q.target, q.field, q.range))
      docs.emplace(hit.other, hit.ts);
    for (auto& seg : segments_) {
      auto& ps = seg->postings();
      for (auto& [entity, ts] : docs) {
        auto id = seg->entity_id(entity);
        if (!id)
          continue;
        auto slice = seg->entity_postings(q.field, *id);
        auto lo = std::partition_point(slice.begin(), slice.end(),
                                       [&](std::uint32_t i) { return ps[i].ts < ts; });
        for (auto it = lo; it != slice.end() && ps[*it].ts == ts; ++it)
          scores[seg->terms()[ps[*it].term]] += ps[*it].freq;
      }
    }
  }

  ranking.entries.reserve(scores.size());
  for (auto& [term, score] : scores)
    ranking.entries.push_back({std::string(term), score});
  auto better = [](const TermScore& a, const TermScore& b) {
    return a.score != b.score ? a.score > b.score : a.term < b.term;
  };
  if (ranking.entries.size() > q.k) {
    std::partial_sort(ranking.entries.begin(),
                      ranking.entries.begin() + static_cast<std::ptrdiff_t>(q.k),
                      ranking.entries.end(), better);
    ranking.entries.resize(q.k);
  } else {
    std::sort(ranking.entries.begin(), ranking.entries.end(), better);
  }
  return ranking;
}

CoOccurrence Snapshot::co_occurrence(const CoOccurrenceQuery& q) const
{
  require_range(q.range);
  CoOccurrence c;
  c.a = timeline({QueryTarget::entity(q.entity_a), q.field, q.granularity, q.range, q.weighted});
  c.b = timeline({QueryTarget::entity(q.entity_b), q.field, q.granularity, q.range, q.weighted});
  c.overlap.reserve(c.a.buckets.size());
  for (std::size_t i = 0; i < c.a.buckets.size(); ++i)
    c.overlap.push_back({c.a.buckets[i].start,
                         std::min(c.a.buckets[i].count, c.b.buckets[i].count)});
  return c;
}

std::vector<EntityHit> Snapshot::entity_search(std::string_view prefix, std::size_t limit) const
{
  auto folded = case_fold(prefix);
  std::map<std::string_view, std::uint64_t> found;
  for (auto& seg : segments_) {
    auto& ents = seg->entities();
    auto it = std::lower_bound(ents.begin(), ents.end(), folded);
    for (; it != ents.end() && it->starts_with(folded); ++it) {
      auto n = seg->entity_docs()[static_cast<std::size_t>(it - ents.begin())];
      if (n > 0)
        found[*it] += n;
    }
  }
  std::vector<EntityHit> hits;
  for (auto& [key, n] : found) {
    if (hits.size() >= limit)
      break;
    hits.push_back({std::string(key), n});
  }
  return hits;
}

bool Snapshot::has_entity(std::string_view key) const
{
  return std::any_of(segments_.begin(), segments_.end(),
                     [&](auto& s) { return s->entity_id(key).has_value(); });
}

IndexStats Snapshot::stats() const
{
  IndexStats s;
  s.segments = segments_.size();
  for (auto& seg : segments_) {
    s.records += seg->doc_count();
    s.postings += seg->posting_count();
    if (auto span = seg->time_span()) {
      if (!s.time_span)
        s.time_span = span;
      else
        s.time_span = TimeRange{std::min(s.time_span->start, span->start),
                                std::max(s.time_span->end, span->end)};
    }
  }
  return s;
}

// TemporalIndex

namespace {

constexpr std::string_view kMetaName = "meta.json";
constexpr std::string_view kLockName = "write.lock";

std::string segment_file(std::uint64_t id)
{
  char name[40];
  std::snprintf(name, sizeof(name), "seg-%010llu.bin", static_cast<unsigned long long>(id));
  return name;
}

} // namespace

struct TemporalIndex::State {
  fs::path dir;
  OpenMode mode = OpenMode::read_write;
  IndexOptions options;
  int lock_fd = -1;
  bool open = true;

  mutable std::mutex writer;
  mutable std::mutex snap_mu;
  std::shared_ptr<const Snapshot> snap = std::make_shared<Snapshot>();

  std::vector<std::shared_ptr<const Segment>> live;
  std::uint64_t next_id = 1;
  std::set<RecordKey> indexed;
  std::vector<TemporalPosting> pending_postings;
  std::vector<std::pair<RecordKey, std::string>> pending_records;

  ~State()
  {
    if (lock_fd >= 0) {
      ::flock(lock_fd, LOCK_UN);
      ::close(lock_fd);
    }
  }

  void require_writable() const
  {
    if (!open)
      throw Error(ErrorCode::index_closed, "index is closed");
    if (mode != OpenMode::read_write)
      throw Error(ErrorCode::index_closed, "index is open read-only");
  }

  void publish()
  {
    auto s = std::make_shared<const Snapshot>(live);
    std::lock_guard lock(snap_mu);
    snap = std::move(s);
  }

  void save_meta() const
  {
    json segs = json::array();
    for (auto& s : live)
      segs.push_back({{"id", s->id()},
                      {"file", segment_file(s->id())},
                      {"doc_count", s->doc_count()},
                      {"postings", s->posting_count()}});
    json meta{{"format_version", kIndexFormatVersion},
              {"tokenizer", kTokenizerId},
              {"next_segment_id", next_id},
              {"segments", segs}};
    write_file_atomic(dir / kMetaName, meta.dump(2) + "\n");
  }

  void load()
  {
    auto text = read_file(dir / kMetaName);
    json meta;
    try {
      meta = json::parse(text);
      if (meta.at("format_version").get<int>() != kIndexFormatVersion)
        throw Error(ErrorCode::corrupt_index,
                    "unsupported index format " + meta.at("format_version").dump());
      if (meta.at("tokenizer").get<std::string>() != kTokenizerId)
        throw Error(ErrorCode::corrupt_index,
                    "index built with tokenizer " + meta.at("tokenizer").get<std::string>());
      next_id = meta.at("next_segment_id").get<std::uint64_t>();
      for (auto& s : meta.at("segments")) {
        auto id = s.at("id").get<std::uint64_t>();
        auto seg = Segment::read(dir / s.at("file").get<std::string>());
        if (seg->id() != id || id >= next_id)
          throw Error(ErrorCode::corrupt_index, "segment id mismatch for " + std::to_string(id));
        live.push_back(std::move(seg));
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::corrupt_index, "bad meta.json: " + std::string(e.what()));
    }
    for (auto& s : live)
      for (auto& r : s->records())
        indexed.insert(r.key);
  }

  std::shared_ptr<const Segment> seal()
  {
    auto seg = Segment::build(next_id++, std::move(pending_postings), std::move(pending_records));
    pending_postings.clear();
    pending_records.clear();
    seg->write(dir / segment_file(seg->id()));
    live.push_back(seg);
    save_meta();
    publish();
    return seg;
  }

  std::shared_ptr<const Segment> merge(const std::vector<std::uint64_t>& ids)
  {
    std::vector<std::shared_ptr<const Segment>> inputs;
    for (auto id : ids) {
      auto it = std::find_if(live.begin(), live.end(), [&](auto& s) { return s->id() == id; });
      if (it == live.end())
        throw Error(ErrorCode::unknown_segment, "no live segment " + std::to_string(id));
      if (std::find(inputs.begin(), inputs.end(), *it) == inputs.end())
        inputs.push_back(*it);
    }
    auto merged = Segment::merge(next_id++, inputs);
    merged->write(dir / segment_file(merged->id()));
    std::erase_if(live, [&](auto& s) {
      return std::find(inputs.begin(), inputs.end(), s) != inputs.end();
    });
    live.push_back(merged);
    save_meta();
    publish();
    for (auto& s : inputs) {
      std::error_code ec;
      fs::remove(dir / segment_file(s->id()), ec);
    }
    return merged;
  }

  static std::size_t tier(const Segment& s, std::size_t factor)
  {
    std::size_t t = 0;
    for (auto n = s.doc_count(); n >= factor; n /= factor)
      ++t;
    return t;
  }

  void apply_merge_policy()
  {
    auto factor = options.merge_factor;
    if (factor < 2)
      return;
    for (;;) {
      std::map<std::size_t, std::vector<std::uint64_t>> tiers;
      for (auto& s : live)
        tiers[tier(*s, factor)].push_back(s->id());
      auto full = std::find_if(tiers.begin(), tiers.end(),
                               [&](auto& t) { return t.second.size() >= factor; });
      if (full == tiers.end())
        return;
      full->second.resize(factor);
      merge(full->second);
    }
  }
};

TemporalIndex::TemporalIndex(std::unique_ptr<State> state) : state_(std::move(state)) {}
TemporalIndex::TemporalIndex(TemporalIndex&&) noexcept = default;
TemporalIndex& TemporalIndex::operator=(TemporalIndex&&) noexcept = default;
TemporalIndex::~TemporalIndex() = default;

TemporalIndex TemporalIndex::open(const fs::path& dir, OpenMode mode, IndexOptions options)
{
  auto st = std::make_unique<State>();
  st->dir = dir;
  st->mode = mode;
  st->options = options;
  bool has_meta = fs::exists(dir / kMetaName);
  if (mode == OpenMode::read_only && !has_meta)
    throw Error(ErrorCode::io_error, "no index at '" + dir.string() + "'");
  if (mode == OpenMode::read_write) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
      throw Error(ErrorCode::io_error, "cannot create '" + dir.string() + "': " + ec.message());
    auto lock_path = dir / kLockName;
    st->lock_fd = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (st->lock_fd < 0)
      throw Error(ErrorCode::io_error, "cannot open '" + lock_path.string() + "'");
    if (::flock(st->lock_fd, LOCK_EX | LOCK_NB) != 0)
      throw Error(ErrorCode::io_error, "index '" + dir.string() + "' has another writer");
  }
  if (has_meta)
    st->load();
  else
    st->save_meta();
  st->publish();
  return TemporalIndex(std::move(st));
}

bool TemporalIndex::index_record(const extract::EmittedRecord& record)
{
  std::lock_guard lock(state_->writer);
  state_->require_writable();
  RecordKey key{record.page_id, record.revision_id, record.kind()};
  if (state_->indexed.contains(key))
    return false;
  auto postings = postings_of(record);
  state_->indexed.insert(key);
  state_->pending_records.emplace_back(key, record.entity);
  std::move(postings.begin(), postings.end(), std::back_inserter(state_->pending_postings));
  return true;
}

void TemporalIndex::refresh()
{
  std::lock_guard lock(state_->writer);
  state_->require_writable();
  if (state_->pending_records.empty())
    return;
  state_->seal();
  state_->apply_merge_policy();
}

std::shared_ptr<const Segment> TemporalIndex::seal_segment()
{
  std::lock_guard lock(state_->writer);
  state_->require_writable();
  return state_->seal();
}

std::shared_ptr<const Segment> TemporalIndex::merge_segments(const std::vector<std::uint64_t>& ids)
{
  std::lock_guard lock(state_->writer);
  state_->require_writable();
  return state_->merge(ids);
}

void TemporalIndex::force_merge()
{
  std::lock_guard lock(state_->writer);
  state_->require_writable();
  if (!state_->pending_records.empty())
    state_->seal();
  if (state_->live.size() <= 1)
    return;
  std::vector<std::uint64_t> ids;
  for (auto& s : state_->live)
    ids.push_back(s->id());
  state_->merge(ids);
}

std::shared_ptr<const Snapshot> TemporalIndex::snapshot() const
{
  std::lock_guard lock(state_->snap_mu);
  return state_->snap;
}

std::vector<SegmentInfo> TemporalIndex::segment_infos() const
{
  std::lock_guard lock(state_->writer);
  std::vector<SegmentInfo> out;
  for (auto& s : state_->live)
    out.push_back({s->id(), segment_file(s->id()), s->doc_count(), s->posting_count()});
  return out;
}

std::size_t TemporalIndex::pending() const
{
  std::lock_guard lock(state_->writer);
  return state_->pending_records.size();
}

void TemporalIndex::close()
{
  std::lock_guard lock(state_->writer);
  if (!state_->open)
    return;
  if (state_->mode == OpenMode::read_write && !state_->pending_records.empty())
    state_->seal();
  state_->open = false;
  if (state_->lock_fd >= 0) {
    ::flock(state_->lock_fd, LOCK_UN);
    ::close(state_->lock_fd);
    state_->lock_fd = -1;
  }
}

bool TemporalIndex::is_open() const
{
  std::lock_guard lock(state_->writer);
  return state_->open;
}

const fs::path& TemporalIndex::dir() const
{
  return state_->dir;
}

// JSON

namespace {

std::string format_bound(Timestamp t)
{
  auto d = day_of(t);
  if (to_timestamp(d) == t)
    return format_date(d);
  return format_iso8601(t);
}

json buckets_json(const std::vector<Bucket>& buckets)
{
  json out = json::array();
  for (auto& b : buckets)
    out.push_back({{"start", format_date(b.start)}, {"count", b.count}});
  return out;
}

} // namespace

json to_json(const TimelineHistogram& h)
{
  return {{"granularity", to_string(h.granularity)},
          {"from", format_bound(h.range.start)},
          {"to", format_bound(h.range.end)},
          {"total", h.total()},
          {"buckets", buckets_json(h.buckets)}};
}

json to_json(const TermRanking& r)
{
  json entries = json::array();
  for (auto& e : r.entries)
    entries.push_back({{"term", e.term}, {"score", e.score}});
  return {{"k", r.k}, {"entries", entries}};
}

json to_json(const CoOccurrence& c)
{
  return {{"a", to_json(c.a)}, {"b", to_json(c.b)}, {"overlap", buckets_json(c.overlap)}};
}

json to_json(const std::vector<EntityHit>& hits)
{
  json out = json::array();
  for (auto& h : hits)
    out.push_back({{"key", h.key}, {"records", h.records}});
  return {{"entities", out}};
}

json to_json(const IndexStats& s)
{
  json j{{"segments", s.segments}, {"records", s.records}, {"postings", s.postings}};
  if (s.time_span) {
    j["time_span"] = {{"from", format_date(day_of(s.time_span->start))},
                      {"to", format_date(day_of(s.time_span->end - std::chrono::seconds{1}))}};
  } else {
    j["time_span"] = nullptr;
  }
  return j;
}

} // namespace revhist::index
