#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "revhist/diff.hpp"
#include "revhist/filter.hpp"
#include "revhist/revision.hpp"
#include "revhist/wikitext.hpp"

namespace revhist::extract {

enum class RecordKind { metadata, fulltext, anchors, delta };

std::string_view to_string(RecordKind k);
std::optional<RecordKind> parse_kind(std::string_view text);

struct MetadataPayload {
  std::optional<std::uint64_t> parent_id;
  std::optional<std::string> contributor;
  std::optional<std::string> comment;
  std::uint64_t text_bytes = 0;
  std::optional<std::string> redirect;

  friend bool operator==(const MetadataPayload&, const MetadataPayload&) = default;
};

struct FulltextPayload {
  TermCounts terms;
  std::uint64_t token_count = 0;

  friend bool operator==(const FulltextPayload&, const FulltextPayload&) = default;
};

struct AnchorsPayload {
  std::vector<wikitext::AnchorLink> links;

  friend bool operator==(const AnchorsPayload&, const AnchorsPayload&) = default;
};

struct DeltaPayload {
  RevisionDelta delta;
  // False when the predecessor lives in another partition.
  bool parent_available = true;

  friend bool operator==(const DeltaPayload&, const DeltaPayload&) = default;
};

using Payload =
  std::variant<MetadataPayload, FulltextPayload, AnchorsPayload, DeltaPayload>;

// One (key, value) pair of the transformer output. The key is
// (page_id, revision_id) within a kind.
struct EmittedRecord {
  std::uint64_t page_id = 0;
  std::uint64_t revision_id = 0;
  std::string entity;
  std::string title;
  std::int32_t ns = 0;
  Timestamp timestamp{};
  bool deleted = false;
  Payload payload;
  // Stored with the record, never indexed.
  std::map<std::string, std::string> attributes;

  RecordKind kind() const { return static_cast<RecordKind>(payload.index()); }

  friend bool operator==(const EmittedRecord&, const EmittedRecord&) = default;
};

nlohmann::json to_json(const EmittedRecord& record);
// Throws Error(corrupt_payload) when the payload does not match its kind.
EmittedRecord record_from_json(const nlohmann::json& j);

struct FilterOp {
  FilterSpec spec;
};
struct ProjectOp {
  RecordKind kind = RecordKind::metadata;
};
struct SampleOp {
  double rate = 1.0;
  std::uint64_t seed = 0;
};
using Operator = std::variant<FilterOp, ProjectOp, SampleOp>;

struct OperatorChain {
  std::vector<Operator> operators;

  // At most one project; sample rates in (0, 1]. Throws Error(bad_parameter).
  void validate() const;
  // Projected kind, metadata when the chain has no project.
  RecordKind projection() const;
  // True when a revision survives every filter and sample in the chain.
  bool admits(const RevisionRecord& record) const;

  // "filter:from=2012-05-01,to=2012-06-01;sample:rate=0.5,seed=1;project:fulltext"
  // Filter keys: from, to, ns (values joined by '|'), articles_only,
  // custom, entities (path), normalization.
  static OperatorChain parse(std::string_view text);
};

// Deterministic per-revision sampling decision.
bool sampled(std::uint64_t revision_id, const SampleOp& op);

// Builds one record of `kind`. `parent_text` is only consulted for deltas;
// nullptr means the predecessor is unavailable.
EmittedRecord build_record(const RevisionRecord& rev, RecordKind kind,
                           const std::string* parent_text = nullptr);

struct TransformStats {
  std::uint64_t revisions_read = 0;
  std::uint64_t rejected = 0;
  std::uint64_t payloads_built = 0;
  std::uint64_t parent_missing = 0;
  std::uint64_t emitted = 0;
};

using RecordSink = std::function<void(EmittedRecord&&)>;

// Reads one partition file (xml or json-lines), drops revisions rejected
// by the chain before any payload work, and emits the rest ordered by
// (page, timestamp).
TransformStats transform(const std::filesystem::path& partition,
                         const OperatorChain& chain, const RecordSink& sink);

std::vector<EmittedRecord> transform(const std::filesystem::path& partition,
                                     const OperatorChain& chain,
                                     TransformStats* stats = nullptr);

// Transforms every partition of a directory (or a single file), one worker
// per partition up to `workers`, and writes json-lines to `out`. Records
// appear partition by partition in index order.
TransformStats transform_to_file(const std::vector<std::filesystem::path>& partitions,
                                 const OperatorChain& chain,
                                 const std::filesystem::path& out,
                                 unsigned workers = 1);

// Partition files listed by a manifest, or the file itself.
std::vector<std::filesystem::path> partition_files(const std::filesystem::path& input);

// Streams json-lines EmittedRecords back.
class EmittedReader {
public:
  explicit EmittedReader(const std::filesystem::path& path);
  std::optional<EmittedRecord> next();

private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::string line_;
  std::uint64_t lineno_ = 0;
};

} // namespace revhist::extract
