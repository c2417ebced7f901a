#include "revhist/partitioner.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <memory>
#include <mutex>
#include <set>
#include <thread>

#include "revhist/error.hpp"
#include "revhist/rng.hpp"

namespace revhist {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(PartitionMode m)
{
  return m == PartitionMode::entity_wise ? "entity-wise" : "document-wise";
}

std::optional<PartitionMode> parse_partition_mode(std::string_view text)
{
  if (text == "entity" || text == "entity-wise")
    return PartitionMode::entity_wise;
  if (text == "document" || text == "document-wise")
    return PartitionMode::document_wise;
  return std::nullopt;
}

std::uint32_t entity_route(std::uint64_t page_id, std::uint32_t partition_count)
{
  if (partition_count <= 1)
    return 0;
  return static_cast<std::uint32_t>(splitmix64(page_id) % partition_count);
}

fs::path partition_path(const fs::path& dir, std::uint32_t index,
                        records::RecordFormat format)
{
  char name[32];
  std::snprintf(name, sizeof(name), "part-%05u", index);
  return dir / (std::string(name) + std::string(records::file_extension(format)));
}

std::uint64_t PartitionManifest::records_out() const
{
  std::uint64_t n = 0;
  for (auto& p : partitions)
    n += p.revisions;
  return n;
}

json PartitionManifest::to_json() const
{
  json parts = json::array();
  for (auto& p : partitions) {
    parts.push_back({
      {"index", p.index},
      {"file", p.path.filename().string()},
      {"revisions", p.revisions},
      {"bytes", p.bytes},
      {"min_timestamp",
       p.min_timestamp ? json(format_iso8601(*p.min_timestamp)) : json(nullptr)},
      {"max_timestamp",
       p.max_timestamp ? json(format_iso8601(*p.max_timestamp)) : json(nullptr)},
    });
  }
  return json{
    {"version", 1},
    {"mode", to_string(mode)},
    {"format", records::to_string(format)},
    {"hash", hash},
    {"partition_count", partition_count},
    {"records_in", records_in},
    {"records_out", records_out()},
    {"dropped_by_filter", dropped_by_filter},
    {"invalid_utf8_replaced", invalid_utf8_replaced},
    {"filter", filter},
    {"partitions", parts},
  };
}

PartitionManifest PartitionManifest::from_json(const json& j, const fs::path& dir)
{
  try {
    PartitionManifest m;
    auto mode = parse_partition_mode(j.at("mode").get<std::string>());
    auto format = records::parse_format(j.at("format").get<std::string>());
    if (!mode || !format)
      throw Error(ErrorCode::format_error, "manifest has unknown mode or format");
    m.mode = *mode;
    m.format = *format;
    m.hash = j.at("hash").get<std::string>();
    m.partition_count = j.at("partition_count").get<std::uint32_t>();
    m.records_in = j.at("records_in").get<std::uint64_t>();
    m.dropped_by_filter = j.at("dropped_by_filter").get<std::uint64_t>();
    m.invalid_utf8_replaced = j.value("invalid_utf8_replaced", std::uint64_t{0});
    m.filter = j.value("filter", json::object());
    for (auto& p : j.at("partitions")) {
      PartitionInfo info;
      info.index = p.at("index").get<std::uint32_t>();
      info.path = dir / p.at("file").get<std::string>();
      info.revisions = p.at("revisions").get<std::uint64_t>();
      info.bytes = p.at("bytes").get<std::uint64_t>();
      if (auto& t = p.at("min_timestamp"); !t.is_null())
        info.min_timestamp = parse_iso8601(t.get<std::string>());
      if (auto& t = p.at("max_timestamp"); !t.is_null())
        info.max_timestamp = parse_iso8601(t.get<std::string>());
      m.partitions.push_back(std::move(info));
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format_error, std::string("bad manifest: ") + e.what());
  }
}

void PartitionManifest::save(const fs::path& dir) const
{
  std::ofstream out(dir / kManifestName, std::ios::trunc);
  out << to_json().dump(2) << '\n';
  if (!out)
    throw Error(ErrorCode::io_error, "cannot write manifest in " + dir.string());
}

PartitionManifest PartitionManifest::load(const fs::path& dir)
{
  std::ifstream in(dir / kManifestName);
  if (!in)
    throw Error(ErrorCode::io_error,
                "no " + std::string(kManifestName) + " in " + dir.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format_error, std::string("bad manifest: ") + e.what());
  }
  return from_json(j, dir);
}

namespace {

void prepare_output(const PartitionPlan& plan)
{
  if (plan.partition_count < 1)
    throw Error(ErrorCode::bad_parameter, "partition_count must be at least 1");
  plan.filter.validate();
  std::error_code ec;
  fs::create_directories(plan.output_dir, ec);
  if (ec || !fs::is_directory(plan.output_dir))
    throw Error(ErrorCode::io_error,
                "cannot create output directory '" + plan.output_dir.string() + "'");
}

// Routes one reader's records into its own set of writers.
class SplitWorker {
public:
  SplitWorker(const PartitionPlan& plan, const std::vector<fs::path>& paths,
              bool fragment)
    : plan_(plan)
  {
    for (auto& p : paths)
      writers_.push_back(
        std::make_unique<records::RecordWriter>(p, plan.output_format, fragment));
  }

  void consume(dump::RevisionStream& stream)
  {
    while (auto rec = stream.next_revision()) {
      ++records_in_;
      if (!apply_filter(*rec, plan_.filter)) {
        ++dropped_;
        continue;
      }
      std::uint32_t target = 0;
      if (plan_.mode == PartitionMode::entity_wise) {
        target = entity_route(rec->page.page_id, plan_.partition_count);
      } else {
        target = static_cast<std::uint32_t>(round_robin_++ % plan_.partition_count);
      }
      writers_[target]->write(*rec);
    }
    invalid_utf8_ += stream.stats().invalid_utf8_replaced;
    for (auto& w : writers_)
      w->close();
  }

  const records::RecordWriter& writer(std::size_t i) const { return *writers_[i]; }

  std::uint64_t records_in_ = 0;
  std::uint64_t dropped_ = 0;
  std::uint64_t invalid_utf8_ = 0;

private:
  const PartitionPlan& plan_;
  std::vector<std::unique_ptr<records::RecordWriter>> writers_;
  std::uint64_t round_robin_ = 0;
};

PartitionManifest base_manifest(const PartitionPlan& plan)
{
  PartitionManifest m;
  m.mode = plan.mode;
  m.format = plan.output_format;
  m.partition_count = plan.partition_count;
  m.filter = plan.filter.describe();
  return m;
}

} // namespace

PartitionManifest partition_stream(dump::RevisionStream& stream,
                                   const PartitionPlan& plan)
{
  prepare_output(plan);
  std::vector<fs::path> paths;
  for (std::uint32_t i = 0; i < plan.partition_count; ++i)
    paths.push_back(partition_path(plan.output_dir, i, plan.output_format));
  SplitWorker worker(plan, paths, false);
  worker.consume(stream);

  auto m = base_manifest(plan);
  m.records_in = worker.records_in_;
  m.dropped_by_filter = worker.dropped_;
  m.invalid_utf8_replaced = worker.invalid_utf8_;
  for (std::uint32_t i = 0; i < plan.partition_count; ++i) {
    auto& w = worker.writer(i);
    m.partitions.push_back(
      {i, paths[i], w.count(), w.bytes(), w.min_timestamp(), w.max_timestamp()});
  }
  m.save(plan.output_dir);
  return m;
}

PartitionManifest partition_dump(const dump::DumpSource& source,
                                 const PartitionPlan& plan)
{
  const auto* path = std::get_if<fs::path>(&source.location);
  bool seekable = path && !source.start_offset && !source.end_offset &&
                  (source.compression == dump::Compression::none ||
                   source.compression == dump::Compression::bzip2_multistream);
  if (plan.workers <= 1 || !seekable) {
    auto stream = dump::open_dump(source);
    return partition_stream(stream, plan);
  }

  prepare_output(plan);
  auto size = fs::file_size(*path);
  std::set<std::uint64_t> cuts{0};
  for (unsigned k = 1; k < plan.workers; ++k) {
    auto b = dump::seek_page_boundary(source, size * k / plan.workers);
    if (b != dump::kEndOfData)
      cuts.insert(b);
  }
  std::vector<std::uint64_t> bounds(cuts.begin(), cuts.end());
  const std::size_t splits = bounds.size();

  // Each split writes fragments; fragments are spliced per partition in
  // split order, so every final file still has one writer.
  std::vector<std::vector<fs::path>> fragments(splits);
  std::vector<std::unique_ptr<SplitWorker>> workers(splits);
  for (std::size_t s = 0; s < splits; ++s) {
    for (std::uint32_t i = 0; i < plan.partition_count; ++i)
      fragments[s].push_back(plan.output_dir /
                             (".frag-" + std::to_string(s) + "-" + std::to_string(i)));
    workers[s] = std::make_unique<SplitWorker>(plan, fragments[s], true);
  }
  std::vector<std::exception_ptr> errors(splits);
  {
    std::vector<std::jthread> threads;
    for (std::size_t s = 0; s < splits; ++s) {
      threads.emplace_back([&, s] {
        try {
          dump::DumpSource split = source;
          split.start_offset = bounds[s];
          if (s + 1 < splits)
            split.end_offset = bounds[s + 1];
          auto stream = dump::open_dump(split);
          workers[s]->consume(stream);
        } catch (...) {
          errors[s] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e)
      std::rethrow_exception(e);

  auto m = base_manifest(plan);
  for (auto& w : workers) {
    m.records_in += w->records_in_;
    m.dropped_by_filter += w->dropped_;
    m.invalid_utf8_replaced += w->invalid_utf8_;
  }
  for (std::uint32_t i = 0; i < plan.partition_count; ++i) {
    auto final_path = partition_path(plan.output_dir, i, plan.output_format);
    std::ofstream out(final_path, std::ios::binary | std::ios::trunc);
    PartitionInfo info{i, final_path, 0, 0, std::nullopt, std::nullopt};
    auto emit = [&](std::string_view s) {
      out.write(s.data(), static_cast<std::streamsize>(s.size()));
      info.bytes += s.size();
    };
    if (plan.output_format == records::RecordFormat::xml)
      emit(records::kXmlHeader);
    for (std::size_t s = 0; s < splits; ++s) {
      auto& w = workers[s]->writer(i);
      info.revisions += w.count();
      if (w.min_timestamp() && (!info.min_timestamp || *w.min_timestamp() < *info.min_timestamp))
        info.min_timestamp = w.min_timestamp();
      if (w.max_timestamp() && (!info.max_timestamp || *w.max_timestamp() > *info.max_timestamp))
        info.max_timestamp = w.max_timestamp();
      std::ifstream in(fragments[s][i], std::ios::binary);
      std::string chunk(1 << 16, '\0');
      while (in.read(chunk.data(), static_cast<std::streamsize>(chunk.size())) ||
             in.gcount() > 0)
        emit(std::string_view(chunk.data(), static_cast<std::size_t>(in.gcount())));
      in.close();
      fs::remove(fragments[s][i]);
    }
    if (plan.output_format == records::RecordFormat::xml)
      emit(records::kXmlFooter);
    out.close();
    if (!out)
      throw Error(ErrorCode::io_error, "write failed on " + final_path.string());
    m.partitions.push_back(std::move(info));
  }
  m.save(plan.output_dir);
  return m;
}

} // namespace revhist
