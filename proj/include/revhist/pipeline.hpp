#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "revhist/extraction.hpp"
#include "revhist/fixture.hpp"
#include "revhist/partitioner.hpp"
#include "revhist/temporal_index.hpp"

namespace revhist::pipeline {

struct JobReport {
  std::string stage;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
  std::uint64_t records_in = 0;
  std::uint64_t records_out = 0;
  std::uint64_t dropped_by_filter = 0;
  std::chrono::duration<double> wall_time{};
  std::map<std::string, std::uint64_t> counters;
  std::optional<std::uint64_t> seed;

  nlohmann::json to_json() const;
};

// Appends one json line per report.
void append_reports(const std::filesystem::path& path, const std::vector<JobReport>& reports);

// Refuses to overwrite unless `force`, in which case the path is removed.
// Throws Error(output_exists).
void claim_output(const std::filesystem::path& path, bool force);

struct GenFixtureStage {
  fixture::FixtureOptions options;
  std::filesystem::path output;
};

struct PartitionStage {
  std::filesystem::path input;
  // Detected from the file's magic bytes when unset.
  std::optional<dump::Compression> compression;
  PartitionPlan plan;
};

struct ExtractStage {
  std::filesystem::path input;
  std::filesystem::path output;
  extract::OperatorChain chain;
  unsigned workers = 1;
};

struct IndexStage {
  // A json-lines file or a directory of them.
  std::filesystem::path input;
  std::filesystem::path index_dir;
  // Refresh after this many records; 0 refreshes once at the end.
  std::size_t batch = 100'000;
  index::IndexOptions options;
  bool force_merge = false;
};

struct QuerySpec {
  enum class Type { timeline, top_terms, cooccur, entity_search } type = Type::timeline;
  std::string q;
  std::string b;
  index::QueryTarget::Kind by = index::QueryTarget::Kind::term;
  index::Field field = index::Field::anchor;
  Granularity granularity = Granularity::week;
  std::optional<TimeRange> range;
  std::size_t k = 10;
  bool weighted = false;
};

// Runs one query against a snapshot; missing ranges default to the
// indexed span in whole days.
nlohmann::json run_query(const index::Snapshot& snap, const QuerySpec& spec);

// {"type": "timeline"|"top-terms"|"cooccur"|"entity-search", "q", "b",
//  "by", "field", "granularity", "from", "to", "k", "weighted"}
QuerySpec query_from_json(const nlohmann::json& j);
nlohmann::json to_json(const QuerySpec& spec);

struct QueryStage {
  std::filesystem::path index_dir;
  std::vector<QuerySpec> queries;
  // json-lines, one result per query.
  std::filesystem::path output;
};

JobReport run_stage(const GenFixtureStage& s);
JobReport run_stage(const PartitionStage& s);
JobReport run_stage(const ExtractStage& s);
JobReport run_stage(const IndexStage& s);
// The report's "digest" counter is the FNV-1a hash of the result file.
JobReport run_stage(const QueryStage& s);

using Stage = std::variant<GenFixtureStage, PartitionStage, ExtractStage, IndexStage, QueryStage>;

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::filesystem::path workdir;
  unsigned workers = 1;
  std::vector<Stage> stages;
};

// Declarative JSON description:
// {"seed": 42, "workdir": "out", "workers": 1,
//  "stages": [{"stage": "gen-fixture", ...}, {"stage": "partition", ...},
//             {"stage": "extract", "chain": "project:anchors"},
//             {"stage": "index"}, {"stage": "query", "queries": [...]}]}
// Relative paths resolve against `base` (the config file's directory) and
// then workdir. A stage without "input" reads its predecessor's output.
// Throws Error(config_parse_error) before any work is done.
PipelineConfig parse_pipeline(const nlohmann::json& j, const std::filesystem::path& base);
PipelineConfig load_pipeline(const std::filesystem::path& path);

struct RunOptions {
  bool force = false;
  // Overrides the config's worker count when set.
  std::optional<unsigned> workers;
};

// Runs stages in order; a failing stage raises Error(stage_failure) and
// leaves earlier outputs in place.
std::vector<JobReport> run_pipeline(const PipelineConfig& config, const RunOptions& options = {});

std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t file_digest(const std::filesystem::path& path);

} // namespace revhist::pipeline
