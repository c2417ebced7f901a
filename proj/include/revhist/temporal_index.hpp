#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "revhist/extraction.hpp"
#include "revhist/time.hpp"

namespace revhist::index {

enum class Field : std::uint8_t { anchor = 0, fulltext = 1 };

std::string_view to_string(Field f);
// Throws Error(unknown_field).
Field parse_field(std::string_view text);

struct TemporalPosting {
  std::string term;
  std::string entity;
  Timestamp timestamp{};
  std::uint32_t frequency = 1;
  Field field = Field::anchor;

  friend auto operator<=>(const TemporalPosting&, const TemporalPosting&) = default;
};

// Postings an indexable record contributes; empty for deleted records.
// Throws Error(unknown_kind) for kinds other than anchors and fulltext.
std::vector<TemporalPosting> postings_of(const extract::EmittedRecord& record);

struct RecordKey {
  std::uint64_t page_id = 0;
  std::uint64_t revision_id = 0;
  extract::RecordKind kind = extract::RecordKind::anchors;

  friend auto operator<=>(const RecordKey&, const RecordKey&) = default;
};

// Sealed, immutable segment. Postings are sorted by (field, term, entity,
// timestamp) and unique on that key.
class Segment {
public:
  struct Posting {
    std::uint32_t term;
    std::uint32_t entity;
    std::int64_t ts;
    std::uint32_t freq;
    Field field;
  };
  struct Record {
    RecordKey key;
    std::uint32_t entity;
  };

  std::uint64_t id() const { return id_; }
  std::uint64_t doc_count() const { return records_.size(); }
  std::size_t posting_count() const { return postings_.size(); }
  std::optional<TimeRange> time_span() const { return span_; }

  const std::vector<std::string>& terms() const { return terms_; }
  const std::vector<std::string>& entities() const { return entities_; }
  const std::vector<Posting>& postings() const { return postings_; }
  const std::vector<Record>& records() const { return records_; }

  std::optional<std::uint32_t> term_id(std::string_view term) const;
  std::optional<std::uint32_t> entity_id(std::string_view entity) const;

  // Postings of one term, a contiguous slice of postings().
  std::span<const Posting> term_postings(Field field, std::uint32_t term) const;
  // Positions into postings() of one entity's postings, ordered by timestamp.
  std::span<const std::uint32_t> entity_postings(Field field, std::uint32_t entity) const;

  // Number of records per entity id.
  const std::vector<std::uint32_t>& entity_docs() const { return entity_docs_; }

  // Builds a segment, summing frequencies of postings sharing a key.
  static std::shared_ptr<const Segment> build(std::uint64_t id,
                                              std::vector<TemporalPosting> postings,
                                              std::vector<std::pair<RecordKey, std::string>> records);
  static std::shared_ptr<const Segment> merge(std::uint64_t id,
                                              const std::vector<std::shared_ptr<const Segment>>& inputs);

  void write(const std::filesystem::path& path) const;
  // Throws Error(corrupt_index) on a bad magic, version or checksum.
  static std::shared_ptr<const Segment> read(const std::filesystem::path& path);

private:
  void finish();

  std::uint64_t id_ = 0;
  std::vector<std::string> terms_;
  std::vector<std::string> entities_;
  std::vector<Posting> postings_;
  std::vector<Record> records_;
  std::optional<TimeRange> span_;
  std::vector<std::uint32_t> by_entity_;
  std::vector<std::uint32_t> entity_docs_;
};

struct QueryTarget {
  enum class Kind { term, entity } kind = Kind::term;
  std::string key;

  static QueryTarget term(std::string key) { return {Kind::term, std::move(key)}; }
  static QueryTarget entity(std::string key) { return {Kind::entity, std::move(key)}; }
};

struct TimelineQuery {
  QueryTarget target;
  Field field = Field::anchor;
  Granularity granularity = Granularity::week;
  TimeRange range{};
  // Sum frequencies instead of counting postings.
  bool weighted = false;
};

struct Bucket {
  Date start;
  std::uint64_t count = 0;

  friend bool operator==(const Bucket&, const Bucket&) = default;
};

struct TimelineHistogram {
  Granularity granularity = Granularity::week;
  TimeRange range{};
  std::vector<Bucket> buckets;

  std::uint64_t total() const;
  friend bool operator==(const TimelineHistogram&, const TimelineHistogram&) = default;
};

struct TopTermsQuery {
  // Without a target every posting of the field counts. A term target
  // ranks the terms of the (entity, instant) documents containing it.
  std::optional<QueryTarget> target;
  Field field = Field::anchor;
  TimeRange range{};
  std::size_t k = 10;
};

struct TermScore {
  std::string term;
  std::uint64_t score = 0;

  friend bool operator==(const TermScore&, const TermScore&) = default;
};

struct TermRanking {
  std::size_t k = 0;
  std::vector<TermScore> entries;

  friend bool operator==(const TermRanking&, const TermRanking&) = default;
};

struct CoOccurrenceQuery {
  std::string entity_a;
  std::string entity_b;
  Field field = Field::anchor;
  Granularity granularity = Granularity::week;
  TimeRange range{};
  bool weighted = false;
};

struct CoOccurrence {
  TimelineHistogram a;
  TimelineHistogram b;
  std::vector<Bucket> overlap;

  friend bool operator==(const CoOccurrence&, const CoOccurrence&) = default;
};

struct EntityHit {
  std::string key;
  std::uint64_t records = 0;

  friend bool operator==(const EntityHit&, const EntityHit&) = default;
};

struct IndexStats {
  std::size_t segments = 0;
  std::uint64_t records = 0;
  std::uint64_t postings = 0;
  std::optional<TimeRange> time_span;
};

// Empty histogram with zero-filled buckets covering `range`.
TimelineHistogram empty_histogram(Granularity g, TimeRange range);

// Immutable view over a set of segments; safe to share across threads.
class Snapshot {
public:
  explicit Snapshot(std::vector<std::shared_ptr<const Segment>> segments = {});

  // Throws Error(bad_range) unless range.start < range.end.
  TimelineHistogram timeline(const TimelineQuery& q) const;
  // Throws Error(bad_range) on a reversed range, Error(bad_parameter) when
  // k is 0. An empty range gives an empty ranking.
  TermRanking top_terms(const TopTermsQuery& q) const;
  CoOccurrence co_occurrence(const CoOccurrenceQuery& q) const;
  // Entity keys starting with the case-folded prefix, by key.
  std::vector<EntityHit> entity_search(std::string_view prefix, std::size_t limit = 20) const;

  bool has_entity(std::string_view key) const;
  IndexStats stats() const;
  const std::vector<std::shared_ptr<const Segment>>& segments() const { return segments_; }

private:
  std::vector<std::shared_ptr<const Segment>> segments_;
};

struct SegmentInfo {
  std::uint64_t id = 0;
  std::string file;
  std::uint64_t doc_count = 0;
  std::uint64_t postings = 0;
};

enum class OpenMode { read_only, read_write };

struct IndexOptions {
  // Merge after each refresh once a size tier holds this many segments;
  // 0 disables automatic merging.
  std::size_t merge_factor = 4;
};

inline constexpr int kIndexFormatVersion = 1;

// Directory-backed segmented index. One writer per directory, enforced by
// an advisory lock; readers take snapshots.
class TemporalIndex {
public:
  // Creates the directory and an empty meta.json when missing (read_write
  // only). Throws Error(corrupt_index) when a segment fails verification.
  static TemporalIndex open(const std::filesystem::path& dir,
                            OpenMode mode = OpenMode::read_write,
                            IndexOptions options = {});

  TemporalIndex(TemporalIndex&&) noexcept;
  TemporalIndex& operator=(TemporalIndex&&) noexcept;
  ~TemporalIndex();

  // Buffers the record's postings. Returns false when the record was
  // already indexed. Throws Error(index_closed) after close().
  bool index_record(const extract::EmittedRecord& record);

  // Seals pending records into a segment when there are any.
  void refresh();
  std::shared_ptr<const Segment> seal_segment();
  // Throws Error(unknown_segment) for ids not in the live set.
  std::shared_ptr<const Segment> merge_segments(const std::vector<std::uint64_t>& ids);
  // Merges everything into one segment.
  void force_merge();

  std::shared_ptr<const Snapshot> snapshot() const;
  std::vector<SegmentInfo> segment_infos() const;
  std::size_t pending() const;

  void close();
  bool is_open() const;

  const std::filesystem::path& dir() const;

private:
  struct State;
  explicit TemporalIndex(std::unique_ptr<State> state);
  std::unique_ptr<State> state_;
};

// Canonical JSON encodings shared by the CLI and the HTTP service.
nlohmann::json to_json(const TimelineHistogram& h);
nlohmann::json to_json(const TermRanking& r);
nlohmann::json to_json(const CoOccurrence& c);
nlohmann::json to_json(const std::vector<EntityHit>& hits);
nlohmann::json to_json(const IndexStats& s);

} // namespace revhist::index
