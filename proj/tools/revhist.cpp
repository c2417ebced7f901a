#include <csignal>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <pthread.h>

#include <CLI11.hpp>

#include "revhist/error.hpp"
#include "revhist/extraction.hpp"
#include "revhist/fixture.hpp"
#include "revhist/partitioner.hpp"
#include "revhist/pipeline.hpp"
#include "revhist/query_service.hpp"
#include "revhist/temporal_index.hpp"

using namespace revhist;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::optional<fs::path> report;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  std::vector<pipeline::JobReport> reports;
};

dump::Compression compression_arg(const std::string& text)
{
  auto c = dump::parse_compression(text);
  if (!c)
    throw Error(ErrorCode::usage, "unknown compression '" + text + "'");
  return *c;
}

struct GenFixtureArgs {
  fs::path output;
  fixture::FixtureOptions options;
  std::string start = "2011-01-01";
  std::string compression = "none";
  std::string spikes = "none";
  bool force = false;
};

void add_gen_fixture(CLI::App& app, Globals& g)
{
  auto* cmd = app.add_subcommand("gen-fixture", "Write a synthetic revision-history dump");
  auto a = std::make_shared<GenFixtureArgs>();
  cmd->add_option("-o,--output,--out", a->output, "Dump file to write")->required();
  cmd->add_option("--pages", a->options.pages, "Article pages")->capture_default_str();
  cmd->add_option("--revisions-per-page", a->options.revisions_per_page)->capture_default_str();
  cmd->add_option("--seed", a->options.seed)->capture_default_str();
  cmd->add_option("--start,--start-date", a->start, "First revision date")->capture_default_str();
  cmd->add_option("--span-days", a->options.span_days)->capture_default_str();
  cmd->add_option("--words", a->options.words_per_page, "Words per revision text")
    ->capture_default_str();
  cmd->add_option("--compression", a->compression, "none, gzip, bzip2 or bzip2-multistream")
    ->capture_default_str();
  cmd->add_option("--pages-per-stream", a->options.pages_per_stream)->capture_default_str();
  cmd->add_option("--spikes", a->spikes, "none or exploration")
    ->check(CLI::IsMember({"none", "exploration"}))
    ->capture_default_str();
  cmd->add_flag("--force", a->force, "Overwrite an existing output");
  cmd->callback([a, &g] {
    pipeline::GenFixtureStage s{a->options, a->output};
    s.options.start_date = day_of(parse_date_or_instant(a->start));
    s.options.compression = compression_arg(a->compression);
    if (a->spikes == "exploration")
      s.options.spikes = fixture::exploration_spikes();
    pipeline::claim_output(s.output, a->force);
    g.reports.push_back(pipeline::run_stage(s));
    auto& r = g.reports.back();
    std::cout << "wrote " << r.counters["pages"] << " pages, " << r.records_out
              << " revisions, " << r.counters["bytes"] << " bytes to " << s.output.string()
              << "\n";
  });
}

struct PartitionArgs {
  fs::path input, output;
  std::string mode = "entity-wise";
  std::uint32_t partitions = 4;
  std::string format = "jsonl";
  std::string compression = "auto";
  std::optional<std::string> from, to;
  std::vector<std::int32_t> ns;
  bool articles_only = false;
  std::optional<fs::path> entities;
  std::string normalization = "title-exact";
  std::optional<std::string> predicate;
  bool force = false;
};

void add_partition(CLI::App& app, Globals& g)
{
  auto* cmd = app.add_subcommand("partition", "Repartition a dump into partition files");
  auto a = std::make_shared<PartitionArgs>();
  cmd->add_option("-i,--input", a->input, "Dump file")->required();
  cmd->add_option("-o,--output,--out", a->output, "Output directory")->required();
  cmd->add_option("--mode", a->mode, "entity-wise or document-wise")->capture_default_str();
  cmd->add_option("-n,--partitions", a->partitions)->capture_default_str()->check(
    CLI::Range(1u, 65536u));
  cmd->add_option("--format", a->format, "jsonl or xml")->capture_default_str();
  cmd->add_option("--compression", a->compression, "auto, none, gzip, bzip2, bzip2-multistream")
    ->capture_default_str();
  cmd->add_option("--from", a->from, "Keep revisions at or after this date");
  cmd->add_option("--to", a->to, "Keep revisions before this date");
  cmd->add_option("--ns,--namespaces", a->ns, "Namespaces to keep")->delimiter(',');
  cmd->add_flag("--articles-only", a->articles_only, "Keep namespace 0 only");
  cmd->add_option("--entities,--entity-list", a->entities, "Entity list, key<TAB>id per line");
  cmd->add_option("--normalization", a->normalization,
                  "title-exact, title-case-fold or url-decode")
    ->capture_default_str();
  cmd->add_option("--predicate", a->predicate,
                  "non-redirect, non-deleted, has-parent or registered-user");
  cmd->add_flag("--force", a->force, "Overwrite an existing output");
  cmd->callback([a, &g] {
    pipeline::PartitionStage s;
    s.input = a->input;
    if (a->compression != "auto")
      s.compression = compression_arg(a->compression);
    auto mode = parse_partition_mode(a->mode);
    if (!mode)
      throw Error(ErrorCode::usage, "unknown mode '" + a->mode + "'");
    auto format = records::parse_format(a->format);
    if (!format)
      throw Error(ErrorCode::usage, "unknown format '" + a->format + "'");
    s.plan.mode = *mode;
    s.plan.partition_count = a->partitions;
    s.plan.output_format = *format;
    s.plan.output_dir = a->output;
    s.plan.workers = g.workers;
    auto& f = s.plan.filter;
    if (a->from || a->to)
      f.time_range = TimeRange{a->from ? parse_date_or_instant(*a->from) : Timestamp::min(),
                               a->to ? parse_date_or_instant(*a->to) : Timestamp::max()};
    if (!a->ns.empty())
      f.namespaces = std::set<std::int32_t>(a->ns.begin(), a->ns.end());
    f.articles_only = a->articles_only;
    if (a->predicate) {
      auto p = find_predicate(*a->predicate);
      if (!p)
        throw Error(ErrorCode::usage, "unknown predicate '" + *a->predicate + "'");
      f.custom = std::move(*p);
    }
    if (a->entities) {
      auto norm = parse_normalization(a->normalization);
      if (!norm)
        throw Error(ErrorCode::usage, "unknown normalization '" + a->normalization + "'");
      f.entity_set = std::make_shared<EntitySet>(EntitySet::load(*a->entities, *norm));
    }
    f.validate();
    pipeline::claim_output(s.plan.output_dir, a->force);
    g.reports.push_back(pipeline::run_stage(s));
    auto& r = g.reports.back();
    std::cout << "read " << r.records_in << " revisions, kept " << r.records_out
              << ", dropped " << r.dropped_by_filter << " into " << a->partitions
              << " partitions under " << a->output.string() << "\n";
  });
}

struct ExtractArgs {
  fs::path input, output;
  std::string chain = "project:anchors";
  bool force = false;
};

void add_extract(CLI::App& app, Globals& g)
{
  auto* cmd = app.add_subcommand("extract", "Transform partitions into emitted records");
  auto a = std::make_shared<ExtractArgs>();
  cmd->add_option("-i,--input,--partition", a->input, "Partition directory or file")->required();
  cmd->add_option("-o,--output,--out", a->output, "json-lines output")->required();
  cmd->add_option("--chain,--ops", a->chain,
                  "Operators, e.g. filter:from=2012-01-01,to=2013-01-01;project:fulltext")
    ->capture_default_str();
  cmd->add_flag("--force", a->force, "Overwrite an existing output");
  cmd->callback([a, &g] {
    pipeline::ExtractStage s{a->input, a->output, extract::OperatorChain::parse(a->chain),
                             g.workers};
    pipeline::claim_output(s.output, a->force);
    g.reports.push_back(pipeline::run_stage(s));
    auto& r = g.reports.back();
    std::cout << "read " << r.records_in << " revisions, emitted " << r.records_out
              << ", rejected " << r.dropped_by_filter << " to " << s.output.string() << "\n";
  });
}

struct IndexArgs {
  fs::path input, index;
  std::size_t batch = 100'000;
  std::size_t merge_factor = 4;
  bool force_merge = false;
};

void add_index(CLI::App& app, Globals& g)
{
  auto* cmd = app.add_subcommand("index", "Add emitted records to a temporal index");
  auto a = std::make_shared<IndexArgs>();
  cmd->add_option("-i,--input", a->input, "Emitted json-lines file or directory")->required();
  cmd->add_option("--index", a->index, "Index directory, created when missing")->required();
  cmd->add_option("--batch", a->batch, "Records per refresh, 0 for one refresh")
    ->capture_default_str();
  cmd->add_option("--merge-factor", a->merge_factor, "Segments per tier before merging")
    ->capture_default_str();
  cmd->add_flag("--force-merge", a->force_merge, "Merge into a single segment at the end");
  cmd->callback([a, &g] {
    pipeline::IndexStage s;
    s.input = a->input;
    s.index_dir = a->index;
    s.batch = a->batch;
    s.options.merge_factor = a->merge_factor;
    s.force_merge = a->force_merge;
    g.reports.push_back(pipeline::run_stage(s));
    auto& r = g.reports.back();
    std::cout << "indexed " << r.records_out << " of " << r.records_in << " records; "
              << r.counters["segments"] << " segments, " << r.counters["postings"]
              << " postings\n";
  });
}

struct QueryArgs {
  fs::path index;
  std::optional<std::string> timeline, top_terms, entity_search;
  std::vector<std::string> cooccur;
  std::string by = "term";
  std::string field = "anchor";
  std::string granularity = "week";
  std::optional<std::string> from, to;
  std::size_t k = 10;
  bool weighted = false;
};

void add_query(CLI::App& app, Globals&)
{
  auto* cmd = app.add_subcommand("query", "Query a temporal index, printing JSON");
  auto a = std::make_shared<QueryArgs>();
  cmd->add_option("--index", a->index, "Index directory")->required();
  auto* tl = cmd->add_option("--timeline", a->timeline, "Timeline of a term or entity key");
  auto* tt = cmd->add_option("--top-terms", a->top_terms,
                             "Top terms for a term or entity key (empty for all)");
  auto* co = cmd->add_option("--cooccur", a->cooccur, "Two entity keys")->expected(2);
  auto* es = cmd->add_option("--entity-search", a->entity_search, "Entity key prefix");
  tl->excludes(tt)->excludes(co)->excludes(es);
  tt->excludes(co)->excludes(es);
  co->excludes(es);
  cmd->add_option("--by", a->by, "term or entity")
    ->check(CLI::IsMember({"term", "entity"}))
    ->capture_default_str();
  cmd->add_option("--field", a->field, "anchor or fulltext")->capture_default_str();
  cmd->add_option("--granularity", a->granularity, "day or week")->capture_default_str();
  cmd->add_option("--from", a->from, "Range start (date or instant)");
  cmd->add_option("--to", a->to, "Range end, exclusive");
  cmd->add_option("-k", a->k, "Ranking size or search limit")->capture_default_str();
  cmd->add_flag("--weighted", a->weighted, "Sum frequencies instead of counting postings");
  cmd->callback([a] {
    pipeline::QuerySpec spec;
    if (a->timeline) {
      spec.type = pipeline::QuerySpec::Type::timeline;
      spec.q = *a->timeline;
    } else if (a->top_terms) {
      spec.type = pipeline::QuerySpec::Type::top_terms;
      spec.q = *a->top_terms;
    } else if (!a->cooccur.empty()) {
      spec.type = pipeline::QuerySpec::Type::cooccur;
      spec.q = a->cooccur[0];
      spec.b = a->cooccur[1];
    } else if (a->entity_search) {
      spec.type = pipeline::QuerySpec::Type::entity_search;
      spec.q = *a->entity_search;
    } else {
      throw Error(ErrorCode::usage,
                  "give one of --timeline, --top-terms, --cooccur, --entity-search");
    }
    spec.by = a->by == "term" ? index::QueryTarget::Kind::term : index::QueryTarget::Kind::entity;
    spec.field = index::parse_field(a->field);
    auto gran = parse_granularity(a->granularity);
    if (!gran)
      throw Error(ErrorCode::usage, "granularity must be day or week");
    spec.granularity = *gran;
    if (a->from.has_value() != a->to.has_value())
      throw Error(ErrorCode::usage, "give both --from and --to or neither");
    if (a->from)
      spec.range = TimeRange{parse_date_or_instant(*a->from), parse_date_or_instant(*a->to)};
    spec.k = a->k;
    auto idx = index::TemporalIndex::open(a->index, index::OpenMode::read_only);
    std::cout << pipeline::run_query(*idx.snapshot(), spec).dump() << "\n";
  });
}

struct ServeArgs {
  std::optional<fs::path> index;
  std::optional<std::string> bind;
  std::optional<fs::path> config;
};

void add_serve(CLI::App& app, Globals&)
{
  auto* cmd = app.add_subcommand("serve", "Serve an index over HTTP");
  auto a = std::make_shared<ServeArgs>();
  cmd->add_option("--index", a->index, "Index directory");
  cmd->add_option("--bind", a->bind, "host:port (default 127.0.0.1:8080)");
  cmd->add_option("--config", a->config, "key = value configuration file");
  cmd->callback([a] {
    auto config = a->config ? service::load_config(*a->config) : service::ServiceConfig{};
    service::apply_environment(config);
    if (a->index)
      config.index_dir = *a->index;
    if (a->bind)
      std::tie(config.host, config.port) = service::parse_bind(*a->bind);
    if (config.index_dir.empty())
      throw Error(ErrorCode::usage, "no index directory; use --index, REVHIST_INDEX or index_dir");

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    sigaddset(&signals, SIGHUP);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    service::HttpServer server(config);
    int port = server.bind();
    std::cerr << "serving " << config.index_dir.string() << " on " << config.host << ":" << port
              << "\n";
    std::jthread watcher([&server, signals] {
      for (;;) {
        int sig = 0;
        if (sigwait(&signals, &sig) != 0)
          continue;
        if (sig == SIGHUP) {
          try {
            server.service().reload();
            std::cerr << "index reloaded\n";
          } catch (const std::exception& e) {
            std::cerr << "reload failed: " << e.what() << "\n";
          }
          continue;
        }
        server.stop();
        return;
      }
    });
    try {
      server.serve();
    } catch (...) {
      pthread_kill(watcher.native_handle(), SIGTERM);
      throw;
    }
    pthread_kill(watcher.native_handle(), SIGTERM);
  });
}

struct PipelineArgs {
  fs::path config;
  bool force = false;
};

void add_pipeline(CLI::App& app, Globals& g, const CLI::Option* workers)
{
  auto* cmd = app.add_subcommand("pipeline", "Run a declarative pipeline description");
  auto a = std::make_shared<PipelineArgs>();
  cmd->add_option("-c,--config", a->config, "Pipeline JSON file")->required();
  cmd->add_flag("--force", a->force, "Overwrite existing stage outputs");
  cmd->callback([a, &g, workers] {
    auto config = pipeline::load_pipeline(a->config);
    pipeline::RunOptions options;
    options.force = a->force;
    if (workers->count() > 0)
      options.workers = g.workers;
    for (auto& r : pipeline::run_pipeline(config, options)) {
      std::cout << r.stage << ": in " << r.records_in << ", out " << r.records_out
                << ", dropped " << r.dropped_by_filter << " (" << r.wall_time.count()
                << " s)";
      if (auto it = r.counters.find("digest"); it != r.counters.end())
        std::cout << " digest " << std::hex << it->second << std::dec;
      std::cout << "\n";
      g.reports.push_back(r);
    }
  });
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Revision-history extraction and temporal indexing"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--report", g.report, "Append json-lines job reports here");
  auto* workers = app.add_option("--workers", g.workers, "Parallelism cap")
                    ->check(CLI::Range(1u, 1024u))
                    ->capture_default_str();
  add_gen_fixture(app, g);
  add_partition(app, g);
  add_extract(app, g);
  add_index(app, g);
  add_query(app, g);
  add_serve(app, g);
  add_pipeline(app, g, workers);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    if (g.report && !g.reports.empty())
      pipeline::append_reports(*g.report, g.reports);
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  try {
    if (g.report)
      pipeline::append_reports(*g.report, g.reports);
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return exit_code(e.code());
  }
  return 0;
}
