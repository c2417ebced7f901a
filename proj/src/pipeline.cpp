#include "revhist/pipeline.hpp"

#include <fstream>

#include "revhist/entity_set.hpp"
#include "revhist/error.hpp"

namespace revhist::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

json JobReport::to_json() const
{
  json in = json::array(), out = json::array();
  for (auto& p : inputs)
    in.push_back(p.string());
  for (auto& p : outputs)
    out.push_back(p.string());
  json j{{"stage", stage},
         {"inputs", in},
         {"outputs", out},
         {"records_in", records_in},
         {"records_out", records_out},
         {"dropped_by_filter", dropped_by_filter},
         {"wall_time_s", wall_time.count()},
         {"counters", counters}};
  j["seed"] = seed ? json(*seed) : json(nullptr);
  return j;
}

void append_reports(const fs::path& path, const std::vector<JobReport>& reports)
{
  if (path.has_parent_path())
    fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out)
    throw Error(ErrorCode::io_error, "cannot open report '" + path.string() + "'");
  for (auto& r : reports)
    out << r.to_json().dump() << '\n';
  if (!out)
    throw Error(ErrorCode::io_error, "write failed on '" + path.string() + "'");
}

void claim_output(const fs::path& path, bool force)
{
  if (!fs::exists(path))
    return;
  if (!force)
    throw Error(ErrorCode::output_exists,
                "'" + path.string() + "' exists; pass --force to overwrite");
  std::error_code ec;
  fs::remove_all(path, ec);
  if (ec)
    throw Error(ErrorCode::io_error, "cannot remove '" + path.string() + "': " + ec.message());
}

std::uint64_t fnv1a(std::string_view data, std::uint64_t h)
{
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t file_digest(const fs::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::io_error, "cannot open '" + path.string() + "'");
  std::uint64_t h = fnv1a({});
  std::string buf(1 << 16, '\0');
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h = fnv1a(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())), h);
  }
  return h;
}

// Queries

namespace {

std::string_view type_name(QuerySpec::Type t)
{
  switch (t) {
    case QuerySpec::Type::timeline: return "timeline";
    case QuerySpec::Type::top_terms: return "top-terms";
    case QuerySpec::Type::cooccur: return "cooccur";
    case QuerySpec::Type::entity_search: return "entity-search";
  }
  return "timeline";
}

TimeRange default_range(const index::Snapshot& snap)
{
  auto span = snap.stats().time_span;
  if (!span)
    throw Error(ErrorCode::bad_range, "index is empty; give a range");
  return {to_timestamp(day_of(span->start)),
          to_timestamp(day_of(span->end - std::chrono::seconds{1}) + std::chrono::days{1})};
}

} // namespace

json run_query(const index::Snapshot& snap, const QuerySpec& spec)
{
  auto range = [&] { return spec.range ? *spec.range : default_range(snap); };
  switch (spec.type) {
    case QuerySpec::Type::timeline:
      return index::to_json(snap.timeline(
        {{spec.by, spec.q}, spec.field, spec.granularity, range(), spec.weighted}));
    case QuerySpec::Type::top_terms: {
      index::TopTermsQuery q;
      if (!spec.q.empty())
        q.target = index::QueryTarget{spec.by, spec.q};
      q.field = spec.field;
      q.range = range();
      q.k = spec.k;
      return index::to_json(snap.top_terms(q));
    }
    case QuerySpec::Type::cooccur:
      return index::to_json(snap.co_occurrence(
        {spec.q, spec.b, spec.field, spec.granularity, range(), spec.weighted}));
    case QuerySpec::Type::entity_search:
      return index::to_json(snap.entity_search(spec.q, spec.k));
  }
  return nullptr;
}

QuerySpec query_from_json(const json& j)
{
  QuerySpec s;
  auto type = j.value("type", std::string("timeline"));
  if (type == "timeline")
    s.type = QuerySpec::Type::timeline;
  else if (type == "top-terms")
    s.type = QuerySpec::Type::top_terms;
  else if (type == "cooccur")
    s.type = QuerySpec::Type::cooccur;
  else if (type == "entity-search")
    s.type = QuerySpec::Type::entity_search;
  else
    throw Error(ErrorCode::config_parse_error, "unknown query type '" + type + "'");
  s.q = j.value("q", std::string());
  s.b = j.value("b", std::string());
  auto by = j.value("by", std::string("term"));
  if (by != "term" && by != "entity")
    throw Error(ErrorCode::config_parse_error, "by must be term or entity");
  s.by = by == "term" ? index::QueryTarget::Kind::term : index::QueryTarget::Kind::entity;
  s.field = index::parse_field(j.value("field", std::string("anchor")));
  auto g = parse_granularity(j.value("granularity", std::string("week")));
  if (!g)
    throw Error(ErrorCode::config_parse_error, "granularity must be day or week");
  s.granularity = *g;
  if (j.contains("from") != j.contains("to"))
    throw Error(ErrorCode::config_parse_error, "give both from and to or neither");
  if (j.contains("from"))
    s.range = TimeRange{parse_date_or_instant(j.at("from").get<std::string>()),
                        parse_date_or_instant(j.at("to").get<std::string>())};
  s.k = j.value("k", std::size_t{10});
  s.weighted = j.value("weighted", false);
  return s;
}

json to_json(const QuerySpec& s)
{
  json j{{"type", type_name(s.type)},
         {"q", s.q},
         {"by", s.by == index::QueryTarget::Kind::term ? "term" : "entity"},
         {"field", index::to_string(s.field)},
         {"granularity", to_string(s.granularity)},
         {"k", s.k},
         {"weighted", s.weighted}};
  if (!s.b.empty())
    j["b"] = s.b;
  if (s.range) {
    j["from"] = format_iso8601(s.range->start);
    j["to"] = format_iso8601(s.range->end);
  }
  return j;
}

// Stages

namespace {

class Timer {
public:
  std::chrono::duration<double> elapsed() const { return Clock::now() - start_; }

private:
  Clock::time_point start_ = Clock::now();
};

} // namespace

JobReport run_stage(const GenFixtureStage& s)
{
  Timer t;
  if (s.output.has_parent_path())
    fs::create_directories(s.output.parent_path());
  auto summary = fixture::generate_fixture(s.options, s.output);
  JobReport r;
  r.stage = "gen-fixture";
  r.outputs = {s.output};
  r.records_out = summary.revisions;
  r.counters = {{"pages", summary.pages}, {"bytes", summary.bytes}};
  r.seed = s.options.seed;
  r.wall_time = t.elapsed();
  return r;
}

JobReport run_stage(const PartitionStage& s)
{
  Timer t;
  auto compression = s.compression ? *s.compression : dump::detect_compression(s.input);
  auto manifest = partition_dump(dump::DumpSource::file(s.input, compression), s.plan);
  JobReport r;
  r.stage = "partition";
  r.inputs = {s.input};
  r.outputs = {s.plan.output_dir};
  r.records_in = manifest.records_in;
  r.records_out = manifest.records_out();
  r.dropped_by_filter = manifest.dropped_by_filter;
  r.counters = {{"partitions", manifest.partition_count},
                {"invalid_utf8_replaced", manifest.invalid_utf8_replaced}};
  r.wall_time = t.elapsed();
  return r;
}

JobReport run_stage(const ExtractStage& s)
{
  Timer t;
  auto files = extract::partition_files(s.input);
  auto stats = extract::transform_to_file(files, s.chain, s.output, s.workers);
  JobReport r;
  r.stage = "extract";
  r.inputs = {s.input};
  r.outputs = {s.output};
  r.records_in = stats.revisions_read;
  r.records_out = stats.emitted;
  r.dropped_by_filter = stats.rejected;
  r.counters = {{"payloads_built", stats.payloads_built},
                {"parent_missing", stats.parent_missing},
                {"partitions", files.size()}};
  for (auto& op : s.chain.operators)
    if (auto* sample = std::get_if<extract::SampleOp>(&op))
      r.seed = sample->seed;
  r.wall_time = t.elapsed();
  return r;
}

JobReport run_stage(const IndexStage& s)
{
  Timer t;
  std::vector<fs::path> files;
  if (fs::is_directory(s.input)) {
    for (auto& e : fs::directory_iterator(s.input))
      if (e.is_regular_file() && e.path().extension() == ".jsonl")
        files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(s.input);
  }
  auto idx = index::TemporalIndex::open(s.index_dir, index::OpenMode::read_write, s.options);
  JobReport r;
  r.stage = "index";
  r.inputs = {s.input};
  r.outputs = {s.index_dir};
  std::uint64_t duplicates = 0;
  std::size_t since_refresh = 0;
  for (auto& f : files) {
    extract::EmittedReader reader(f);
    while (auto rec = reader.next()) {
      ++r.records_in;
      if (idx.index_record(*rec))
        ++r.records_out;
      else
        ++duplicates;
      if (s.batch && ++since_refresh >= s.batch) {
        idx.refresh();
        since_refresh = 0;
      }
    }
  }
  idx.refresh();
  if (s.force_merge)
    idx.force_merge();
  auto stats = idx.snapshot()->stats();
  idx.close();
  r.counters = {{"duplicates", duplicates},
                {"segments", stats.segments},
                {"postings", stats.postings}};
  r.wall_time = t.elapsed();
  return r;
}

JobReport run_stage(const QueryStage& s)
{
  Timer t;
  auto idx = index::TemporalIndex::open(s.index_dir, index::OpenMode::read_only);
  auto snap = idx.snapshot();
  if (s.output.has_parent_path())
    fs::create_directories(s.output.parent_path());
  {
    std::ofstream out(s.output, std::ios::binary | std::ios::trunc);
    if (!out)
      throw Error(ErrorCode::io_error, "cannot create '" + s.output.string() + "'");
    for (auto& q : s.queries)
      out << json{{"query", to_json(q)}, {"result", run_query(*snap, q)}}.dump() << '\n';
    if (!out)
      throw Error(ErrorCode::io_error, "write failed on '" + s.output.string() + "'");
  }
  JobReport r;
  r.stage = "query";
  r.inputs = {s.index_dir};
  r.outputs = {s.output};
  r.records_in = snap->stats().records;
  r.records_out = s.queries.size();
  r.counters = {{"digest", file_digest(s.output)}};
  r.wall_time = t.elapsed();
  return r;
}

// Pipeline description

namespace {

enum class Artifact { none, dump, partitions, emitted, index, results };

[[noreturn]] void config_error(const std::string& what)
{
  throw Error(ErrorCode::config_parse_error, what);
}

struct StageParser {
  fs::path workdir;
  std::uint64_t seed;
  unsigned workers;
  Artifact last = Artifact::none;
  fs::path last_output;

  fs::path resolve(const std::string& p) const
  {
    fs::path path(p);
    return path.is_absolute() ? path : workdir / path;
  }

  fs::path input(const json& j, Artifact want, std::string_view stage) const
  {
    if (j.contains("input"))
      return resolve(j.at("input").get<std::string>());
    if (last != want)
      config_error(std::string(stage) + " stage has no input and does not follow a stage "
                                        "producing one");
    return last_output;
  }

  fs::path output(const json& j, const char* fallback, Artifact kind)
  {
    auto out = resolve(j.value("output", std::string(fallback)));
    last = kind;
    last_output = out;
    return out;
  }

  Stage gen_fixture(const json& j)
  {
    GenFixtureStage s;
    auto& o = s.options;
    o.seed = seed;
    o.pages = j.value("pages", o.pages);
    o.revisions_per_page = j.value("revisions_per_page", o.revisions_per_page);
    if (j.contains("start_date"))
      o.start_date = day_of(parse_date_or_instant(j.at("start_date").get<std::string>()));
    o.span_days = j.value("span_days", o.span_days);
    o.words_per_page = j.value("words_per_page", o.words_per_page);
    o.talk_fraction = j.value("talk_fraction", o.talk_fraction);
    o.file_fraction = j.value("file_fraction", o.file_fraction);
    o.redirect_fraction = j.value("redirect_fraction", o.redirect_fraction);
    o.deleted_fraction = j.value("deleted_fraction", o.deleted_fraction);
    o.pages_per_stream = j.value("pages_per_stream", o.pages_per_stream);
    if (j.contains("compression")) {
      auto c = dump::parse_compression(j.at("compression").get<std::string>());
      if (!c)
        config_error("unknown compression " + j.at("compression").dump());
      o.compression = *c;
    }
    if (j.contains("spikes")) {
      auto& sp = j.at("spikes");
      if (sp.is_string()) {
        if (sp == "exploration")
          o.spikes = fixture::exploration_spikes();
        else if (sp != "none")
          config_error("spikes must be \"exploration\", \"none\" or a list");
      } else {
        for (auto& e : sp)
          o.spikes.push_back({e.at("title").get<std::string>(),
                              day_of(parse_date_or_instant(e.at("start").get<std::string>())),
                              e.value("days", 7), e.value("revisions", std::size_t{50}),
                              e.at("anchor").get<std::string>()});
      }
    }
    s.output = output(j, "dump.xml", Artifact::dump);
    return s;
  }

  Stage partition(const json& j)
  {
    PartitionStage s;
    s.input = input(j, Artifact::dump, "partition");
    if (j.contains("compression") && j.at("compression") != "auto") {
      auto c = dump::parse_compression(j.at("compression").get<std::string>());
      if (!c)
        config_error("unknown compression " + j.at("compression").dump());
      s.compression = *c;
    }
    auto mode = parse_partition_mode(j.value("mode", std::string("entity-wise")));
    if (!mode)
      config_error("unknown partition mode " + j.value("mode", std::string()));
    s.plan.mode = *mode;
    s.plan.partition_count = j.value("partitions", 4u);
    if (s.plan.partition_count < 1)
      config_error("partitions must be at least 1");
    auto format = records::parse_format(j.value("format", std::string("jsonl")));
    if (!format)
      config_error("unknown record format " + j.value("format", std::string()));
    s.plan.output_format = *format;
    s.plan.workers = workers;
    if (j.contains("filter")) {
      auto& f = j.at("filter");
      if (f.contains("from") || f.contains("to"))
        s.plan.filter.time_range = TimeRange{
          f.contains("from") ? parse_date_or_instant(f.at("from").get<std::string>())
                             : Timestamp::min(),
          f.contains("to") ? parse_date_or_instant(f.at("to").get<std::string>())
                           : Timestamp::max()};
      if (f.contains("ns"))
        s.plan.filter.namespaces = f.at("ns").get<std::set<std::int32_t>>();
      s.plan.filter.articles_only = f.value("articles_only", false);
      if (f.contains("predicate")) {
        auto p = find_predicate(f.at("predicate").get<std::string>());
        if (!p)
          config_error("unknown predicate " + f.at("predicate").dump());
        s.plan.filter.custom = std::move(*p);
      }
      if (f.contains("entities")) {
        auto norm = parse_normalization(f.value("normalization", std::string("title-exact")));
        if (!norm)
          config_error("unknown normalization " + f.value("normalization", std::string()));
        s.plan.filter.entity_set = std::make_shared<EntitySet>(
          EntitySet::load(resolve(f.at("entities").get<std::string>()), *norm));
      }
      s.plan.filter.validate();
    }
    s.plan.output_dir = output(j, "partitions", Artifact::partitions);
    return s;
  }

  Stage extract(const json& j)
  {
    ExtractStage s;
    s.input = input(j, Artifact::partitions, "extract");
    s.chain = extract::OperatorChain::parse(j.value("chain", std::string("project:anchors")));
    for (auto& op : s.chain.operators)
      if (auto* sample = std::get_if<extract::SampleOp>(&op); sample && sample->seed == 0)
        sample->seed = seed;
    s.workers = workers;
    s.output = output(j, "emitted.jsonl", Artifact::emitted);
    return s;
  }

  Stage index(const json& j)
  {
    IndexStage s;
    s.input = input(j, Artifact::emitted, "index");
    s.batch = j.value("batch", s.batch);
    s.options.merge_factor = j.value("merge_factor", s.options.merge_factor);
    s.force_merge = j.value("force_merge", false);
    s.index_dir = output(j, "index", Artifact::index);
    return s;
  }

  Stage query(const json& j)
  {
    QueryStage s;
    s.index_dir = input(j, Artifact::index, "query");
    for (auto& q : j.value("queries", json::array()))
      s.queries.push_back(query_from_json(q));
    s.output = output(j, "results.jsonl", Artifact::results);
    return s;
  }
};

fs::path output_of(const Stage& s)
{
  return std::visit(
    [](auto& st) -> fs::path {
      using T = std::decay_t<decltype(st)>;
      if constexpr (std::is_same_v<T, PartitionStage>)
        return st.plan.output_dir;
      else if constexpr (std::is_same_v<T, IndexStage>)
        return st.index_dir;
      else
        return st.output;
    },
    s);
}

std::string_view name_of(const Stage& s)
{
  static constexpr std::string_view names[] = {"gen-fixture", "partition", "extract", "index",
                                               "query"};
  return names[s.index()];
}

} // namespace

PipelineConfig parse_pipeline(const json& j, const fs::path& base)
{
  try {
    if (!j.is_object())
      config_error("pipeline description must be a JSON object");
    for (auto& [key, _] : j.items())
      if (key != "seed" && key != "workdir" && key != "workers" && key != "stages")
        config_error("unknown top-level key '" + key + "'");
    PipelineConfig c;
    c.seed = j.value("seed", std::uint64_t{0});
    fs::path workdir(j.value("workdir", std::string(".")));
    c.workdir = workdir.is_absolute() ? workdir : base / workdir;
    c.workers = j.value("workers", 1u);
    if (c.workers < 1)
      config_error("workers must be at least 1");
    StageParser p{c.workdir, c.seed, c.workers, Artifact::none, {}};
    if (!j.contains("stages") || !j.at("stages").is_array() || j.at("stages").empty())
      config_error("pipeline needs a non-empty stages list");
    for (auto& st : j.at("stages")) {
      auto name = st.at("stage").get<std::string>();
      if (name == "gen-fixture")
        c.stages.push_back(p.gen_fixture(st));
      else if (name == "partition")
        c.stages.push_back(p.partition(st));
      else if (name == "extract")
        c.stages.push_back(p.extract(st));
      else if (name == "index")
        c.stages.push_back(p.index(st));
      else if (name == "query")
        c.stages.push_back(p.query(st));
      else
        config_error("unknown stage '" + name + "'");
    }
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config_parse_error, std::string("pipeline: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::config_parse_error || e.code() == ErrorCode::io_error)
      throw;
    throw Error(ErrorCode::config_parse_error, std::string("pipeline: ") + e.what());
  }
}

PipelineConfig load_pipeline(const fs::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::io_error, "cannot open pipeline '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config_parse_error, path.string() + ": " + e.what());
  }
  return parse_pipeline(j, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

std::vector<JobReport> run_pipeline(const PipelineConfig& config, const RunOptions& options)
{
  for (auto& s : config.stages)
    if (!options.force && fs::exists(output_of(s)))
      throw Error(ErrorCode::output_exists,
                  "'" + output_of(s).string() + "' exists; pass --force to overwrite");
  fs::create_directories(config.workdir);

  std::vector<JobReport> reports;
  for (std::size_t i = 0; i < config.stages.size(); ++i) {
    auto stage = config.stages[i];
    if (options.workers) {
      if (auto* p = std::get_if<PartitionStage>(&stage))
        p->plan.workers = *options.workers;
      if (auto* e = std::get_if<ExtractStage>(&stage))
        e->workers = *options.workers;
    }
    try {
      claim_output(output_of(stage), options.force);
      auto report = std::visit([](auto& s) { return run_stage(s); }, stage);
      report.seed = config.seed;
      reports.push_back(std::move(report));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::stage_failure, "stage " + std::to_string(i + 1) + " (" +
                                              std::string(name_of(stage)) + ") failed: " + e.what());
    }
  }
  return reports;
}

} // namespace revhist::pipeline
