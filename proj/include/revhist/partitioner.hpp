#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "revhist/dump_parser.hpp"
#include "revhist/filter.hpp"
#include "revhist/record_io.hpp"

namespace revhist {

enum class PartitionMode { entity_wise, document_wise };

std::string_view to_string(PartitionMode m);
std::optional<PartitionMode> parse_partition_mode(std::string_view text);

struct PartitionPlan {
  PartitionMode mode = PartitionMode::entity_wise;
  std::uint32_t partition_count = 1;
  records::RecordFormat output_format = records::RecordFormat::json_lines;
  FilterSpec filter;
  std::filesystem::path output_dir;
  // Parallel split readers; only effective on seekable sources.
  unsigned workers = 1;
};

struct PartitionInfo {
  std::uint32_t index = 0;
  std::filesystem::path path;
  std::uint64_t revisions = 0;
  std::uint64_t bytes = 0;
  std::optional<Timestamp> min_timestamp;
  std::optional<Timestamp> max_timestamp;

  friend bool operator==(const PartitionInfo&, const PartitionInfo&) = default;
};

struct PartitionManifest {
  PartitionMode mode = PartitionMode::entity_wise;
  records::RecordFormat format = records::RecordFormat::json_lines;
  std::string hash = "splitmix64";
  std::uint32_t partition_count = 1;
  std::uint64_t records_in = 0;
  std::uint64_t dropped_by_filter = 0;
  std::uint64_t invalid_utf8_replaced = 0;
  nlohmann::json filter = nlohmann::json::object();
  std::vector<PartitionInfo> partitions;

  std::uint64_t records_out() const;

  // Partition paths are stored relative to the manifest's directory.
  nlohmann::json to_json() const;
  static PartitionManifest from_json(const nlohmann::json& j,
                                     const std::filesystem::path& dir);

  void save(const std::filesystem::path& dir) const;
  static PartitionManifest load(const std::filesystem::path& dir);
};

inline constexpr std::string_view kManifestName = "manifest.json";

// SplitMix64 of the page id, reduced modulo partition_count.
std::uint32_t entity_route(std::uint64_t page_id, std::uint32_t partition_count);

std::filesystem::path partition_path(const std::filesystem::path& dir,
                                     std::uint32_t index,
                                     records::RecordFormat format);

// Single-reader repartition of an already opened stream.
PartitionManifest partition_stream(dump::RevisionStream& stream,
                                   const PartitionPlan& plan);

// Splits seekable sources at page boundaries and repartitions the splits
// in parallel; output does not depend on scheduling.
PartitionManifest partition_dump(const dump::DumpSource& source,
                                 const PartitionPlan& plan);

} // namespace revhist
