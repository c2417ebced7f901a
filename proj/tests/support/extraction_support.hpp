#pragma once

#include <algorithm>
#include <map>
#include <tuple>

#include "revhist/extraction.hpp"
#include "revhist/partitioner.hpp"
#include "support.hpp"

namespace revhist::testing {

// Partitions an in-memory fixture and lists the partition files.
inline std::vector<std::filesystem::path> make_partitions(
  const fixture::FixtureOptions& o, const std::filesystem::path& dir,
  PartitionMode mode = PartitionMode::entity_wise, std::uint32_t count = 1,
  records::RecordFormat format = records::RecordFormat::json_lines)
{
  auto in = std::make_shared<std::istringstream>(fixture_xml(o));
  dump::RevisionStream stream(dump::DumpSource{in, dump::Compression::none, {}, {}});
  PartitionPlan plan;
  plan.mode = mode;
  plan.partition_count = count;
  plan.output_format = format;
  plan.output_dir = dir;
  partition_stream(stream, plan);
  return extract::partition_files(dir);
}

inline std::vector<RevisionRecord> read_all(const std::filesystem::path& path)
{
  std::vector<RevisionRecord> out;
  records::RecordReader reader(path);
  while (auto r = reader.next())
    out.push_back(std::move(*r));
  return out;
}

// Builds every payload first and filters afterwards.
inline std::vector<extract::EmittedRecord> materialize_then_filter(
  const std::filesystem::path& partition, const extract::OperatorChain& chain)
{
  auto revs = read_all(partition);
  std::map<std::uint64_t, const std::string*> texts;
  for (auto& r : revs)
    if (!r.text_deleted)
      texts[r.revision_id] = &r.text;
  std::vector<std::pair<const RevisionRecord*, extract::EmittedRecord>> all;
  for (auto& r : revs) {
    const std::string* parent = nullptr;
    if (r.parent_id)
      if (auto it = texts.find(*r.parent_id); it != texts.end())
        parent = it->second;
    all.emplace_back(&r, extract::build_record(r, chain.projection(), parent));
  }
  std::vector<extract::EmittedRecord> out;
  std::stable_sort(all.begin(), all.end(), [](auto& a, auto& b) {
    return std::tuple(a.first->page.page_id, a.first->timestamp, a.first->revision_id) <
           std::tuple(b.first->page.page_id, b.first->timestamp, b.first->revision_id);
  });
  for (auto& [rev, record] : all)
    if (chain.admits(*rev))
      out.push_back(std::move(record));
  return out;
}

} // namespace revhist::testing
