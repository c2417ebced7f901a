#include "revhist/extraction.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <exception>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "revhist/entity_set.hpp"
#include "revhist/error.hpp"
#include "revhist/partitioner.hpp"
#include "revhist/record_io.hpp"
#include "revhist/rng.hpp"
#include "revhist/tokenizer.hpp"

namespace revhist::extract {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(RecordKind k)
{
  switch (k) {
    case RecordKind::metadata: return "metadata";
    case RecordKind::fulltext: return "fulltext";
    case RecordKind::anchors: return "anchors";
    case RecordKind::delta: return "delta";
  }
  return "metadata";
}

std::optional<RecordKind> parse_kind(std::string_view text)
{
  if (text == "metadata")
    return RecordKind::metadata;
  if (text == "fulltext")
    return RecordKind::fulltext;
  if (text == "anchors")
    return RecordKind::anchors;
  if (text == "delta")
    return RecordKind::delta;
  return std::nullopt;
}

namespace {

template <typename T>
json opt(const std::optional<T>& v)
{
  return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> opt_from(const json& j, const char* key)
{
  auto& v = j.at(key);
  if (v.is_null())
    return std::nullopt;
  return v.get<T>();
}

json counts_json(const TermCounts& counts)
{
  json j = json::object();
  for (auto& [term, n] : counts)
    j[term] = n;
  return j;
}

TermCounts counts_from(const json& j)
{
  TermCounts counts;
  for (auto& [term, n] : j.items()) {
    auto v = n.get<std::uint32_t>();
    if (v == 0)
      throw Error(ErrorCode::corrupt_payload, "zero count for term '" + term + "'");
    counts.emplace(term, v);
  }
  return counts;
}

struct PayloadToJson {
  json operator()(const MetadataPayload& p) const
  {
    return {{"parent_id", opt(p.parent_id)},
            {"contributor", opt(p.contributor)},
            {"comment", opt(p.comment)},
            {"text_bytes", p.text_bytes},
            {"redirect", opt(p.redirect)}};
  }
  json operator()(const FulltextPayload& p) const
  {
    return {{"token_count", p.token_count}, {"terms", counts_json(p.terms)}};
  }
  json operator()(const AnchorsPayload& p) const
  {
    json links = json::array();
    for (auto& l : p.links)
      links.push_back({{"source_page_id", l.source_page_id},
                       {"target", l.target_title},
                       {"anchor", l.anchor_text},
                       {"position", l.position}});
    return {{"links", links}};
  }
  json operator()(const DeltaPayload& p) const
  {
    return {{"parent_id", opt(p.delta.parent_id)},
            {"inserted", counts_json(p.delta.inserted_terms)},
            {"removed", counts_json(p.delta.removed_terms)},
            {"unchanged", p.delta.unchanged_count},
            {"in_order", opt(p.delta.in_order_count)},
            {"parent_available", p.parent_available}};
  }
};

Payload payload_from(RecordKind kind, const json& j)
{
  switch (kind) {
    case RecordKind::metadata: {
      MetadataPayload p;
      p.parent_id = opt_from<std::uint64_t>(j, "parent_id");
      p.contributor = opt_from<std::string>(j, "contributor");
      p.comment = opt_from<std::string>(j, "comment");
      p.text_bytes = j.at("text_bytes").get<std::uint64_t>();
      p.redirect = opt_from<std::string>(j, "redirect");
      return p;
    }
    case RecordKind::fulltext: {
      FulltextPayload p;
      p.token_count = j.at("token_count").get<std::uint64_t>();
      p.terms = counts_from(j.at("terms"));
      return p;
    }
    case RecordKind::anchors: {
      AnchorsPayload p;
      for (auto& l : j.at("links")) {
        wikitext::AnchorLink link;
        link.source_page_id = l.at("source_page_id").get<std::uint64_t>();
        link.target_title = l.at("target").get<std::string>();
        link.anchor_text = l.at("anchor").get<std::string>();
        link.position = l.at("position").get<std::uint32_t>();
        p.links.push_back(std::move(link));
      }
      return p;
    }
    case RecordKind::delta: {
      DeltaPayload p;
      p.delta.parent_id = opt_from<std::uint64_t>(j, "parent_id");
      p.delta.inserted_terms = counts_from(j.at("inserted"));
      p.delta.removed_terms = counts_from(j.at("removed"));
      p.delta.unchanged_count = j.at("unchanged").get<std::uint64_t>();
      p.delta.in_order_count = opt_from<std::uint64_t>(j, "in_order");
      p.parent_available = j.at("parent_available").get<bool>();
      return p;
    }
  }
  throw Error(ErrorCode::unknown_kind, "unknown record kind");
}

} // namespace

json to_json(const EmittedRecord& r)
{
  json attrs = json::object();
  for (auto& [k, v] : r.attributes)
    attrs[k] = v;
  json j{{"page_id", r.page_id},
         {"rev_id", r.revision_id},
         {"entity", r.entity},
         {"title", r.title},
         {"ns", r.ns},
         {"timestamp", format_iso8601(r.timestamp)},
         {"kind", to_string(r.kind())},
         {"deleted", r.deleted},
         {"attributes", attrs}};
  j["payload"] = std::visit(PayloadToJson{}, r.payload);
  return j;
}

EmittedRecord record_from_json(const json& j)
{
  try {
    EmittedRecord r;
    r.page_id = j.at("page_id").get<std::uint64_t>();
    r.revision_id = j.at("rev_id").get<std::uint64_t>();
    r.entity = j.at("entity").get<std::string>();
    r.title = j.at("title").get<std::string>();
    r.ns = j.at("ns").get<std::int32_t>();
    r.timestamp = parse_iso8601(j.at("timestamp").get<std::string>());
    auto kind = parse_kind(j.at("kind").get<std::string>());
    if (!kind)
      throw Error(ErrorCode::corrupt_payload,
                  "unknown kind '" + j.at("kind").get<std::string>() + "'");
    r.deleted = j.at("deleted").get<bool>();
    if (auto it = j.find("attributes"); it != j.end())
      for (auto& [k, v] : it->items())
        r.attributes[k] = v.get<std::string>();
    r.payload = payload_from(*kind, j.at("payload"));
    if (auto* d = std::get_if<DeltaPayload>(&r.payload))
      d->delta.revision_id = r.revision_id;
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::corrupt_payload, std::string("bad record: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::bad_timestamp)
      throw Error(ErrorCode::corrupt_payload, e.what());
    throw;
  }
}

void OperatorChain::validate() const
{
  int projects = 0;
  for (auto& op : operators) {
    if (std::holds_alternative<ProjectOp>(op))
      ++projects;
    if (auto* s = std::get_if<SampleOp>(&op))
      if (!(s->rate > 0.0 && s->rate <= 1.0))
        throw Error(ErrorCode::bad_parameter,
                    "sample rate must lie in (0, 1], got " + std::to_string(s->rate));
    if (auto* f = std::get_if<FilterOp>(&op))
      f->spec.validate();
  }
  if (projects > 1)
    throw Error(ErrorCode::bad_parameter, "at most one project per chain");
}

RecordKind OperatorChain::projection() const
{
  for (auto& op : operators)
    if (auto* p = std::get_if<ProjectOp>(&op))
      return p->kind;
  return RecordKind::metadata;
}

bool sampled(std::uint64_t revision_id, const SampleOp& op)
{
  if (op.rate >= 1.0)
    return true;
  auto h = splitmix64(op.seed ^ splitmix64(revision_id));
  return static_cast<double>(h >> 11) * 0x1.0p-53 < op.rate;
}

bool OperatorChain::admits(const RevisionRecord& record) const
{
  for (auto& op : operators) {
    if (auto* f = std::get_if<FilterOp>(&op)) {
      if (!apply_filter(record, f->spec))
        return false;
    } else if (auto* s = std::get_if<SampleOp>(&op)) {
      if (!sampled(record.revision_id, *s))
        return false;
    }
  }
  return true;
}

namespace {

std::vector<std::string_view> split(std::string_view text, char sep)
{
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    auto pos = text.find(sep, start);
    parts.push_back(text.substr(start, pos - start));
    if (pos == std::string_view::npos)
      break;
    start = pos + 1;
  }
  return parts;
}

std::string_view trim(std::string_view s)
{
  auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos)
    return {};
  auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

template <typename T>
T number(std::string_view text, std::string_view what)
{
  T v{};
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size())
    throw Error(ErrorCode::bad_parameter,
                "bad " + std::string(what) + " '" + std::string(text) + "'");
  return v;
}

FilterSpec parse_filter(const std::vector<std::pair<std::string_view, std::string_view>>& kv)
{
  FilterSpec spec;
  std::optional<Timestamp> from, to;
  std::optional<std::string> entities;
  auto normalization = Normalization::title_exact;
  for (auto& [k, v] : kv) {
    if (k == "from") {
      from = parse_date_or_instant(v);
    } else if (k == "to") {
      to = parse_date_or_instant(v);
    } else if (k == "ns") {
      std::set<std::int32_t> ns;
      for (auto part : split(v, '|'))
        ns.insert(number<std::int32_t>(trim(part), "namespace"));
      spec.namespaces = std::move(ns);
    } else if (k == "articles_only") {
      spec.articles_only = v.empty() || v == "true" || v == "1";
    } else if (k == "custom") {
      auto p = find_predicate(v);
      if (!p)
        throw Error(ErrorCode::bad_parameter, "unknown predicate '" + std::string(v) + "'");
      spec.custom = std::move(*p);
    } else if (k == "entities") {
      entities = std::string(v);
    } else if (k == "normalization") {
      auto n = parse_normalization(v);
      if (!n)
        throw Error(ErrorCode::bad_parameter,
                    "unknown normalization '" + std::string(v) + "'");
      normalization = *n;
    } else {
      throw Error(ErrorCode::bad_parameter, "unknown filter key '" + std::string(k) + "'");
    }
  }
  if (from || to) {
    spec.time_range = TimeRange{from.value_or(Timestamp::min()),
                                to.value_or(Timestamp::max())};
  }
  if (entities)
    spec.entity_set =
      std::make_shared<EntitySet>(EntitySet::load(*entities, normalization));
  return spec;
}

} // namespace

OperatorChain OperatorChain::parse(std::string_view text)
{
  OperatorChain chain;
  for (auto raw : split(text, ';')) {
    auto op = trim(raw);
    if (op.empty())
      continue;
    auto colon = op.find(':');
    auto name = trim(op.substr(0, colon));
    auto args = colon == std::string_view::npos ? std::string_view{}
                                                : trim(op.substr(colon + 1));
    std::vector<std::pair<std::string_view, std::string_view>> kv;
    if (name != "project" && !args.empty()) {
      for (auto item : split(args, ',')) {
        item = trim(item);
        auto eq = item.find('=');
        kv.emplace_back(trim(item.substr(0, eq)),
                        eq == std::string_view::npos ? std::string_view{}
                                                     : trim(item.substr(eq + 1)));
      }
    }
    if (name == "filter") {
      chain.operators.push_back(FilterOp{parse_filter(kv)});
    } else if (name == "project") {
      auto kind = parse_kind(args);
      if (!kind)
        throw Error(ErrorCode::unknown_kind,
                    "no extractor for kind '" + std::string(args) + "'");
      chain.operators.push_back(ProjectOp{*kind});
    } else if (name == "sample") {
      SampleOp s;
      for (auto& [k, v] : kv) {
        if (k == "rate")
          s.rate = std::stod(std::string(v));
        else if (k == "seed")
          s.seed = number<std::uint64_t>(v, "seed");
        else
          throw Error(ErrorCode::bad_parameter, "unknown sample key '" + std::string(k) + "'");
      }
      chain.operators.push_back(s);
    } else {
      throw Error(ErrorCode::bad_parameter, "unknown operator '" + std::string(name) + "'");
    }
  }
  chain.validate();
  return chain;
}

EmittedRecord build_record(const RevisionRecord& rev, RecordKind kind,
                           const std::string* parent_text)
{
  EmittedRecord r;
  r.page_id = rev.page.page_id;
  r.revision_id = rev.revision_id;
  r.entity = entity_key(rev.page.title);
  r.title = rev.page.title;
  r.ns = rev.page.ns;
  r.timestamp = rev.timestamp;
  r.deleted = rev.text_deleted;
  if (rev.contributor)
    r.attributes["contributor"] = *rev.contributor;
  switch (kind) {
    case RecordKind::metadata:
      r.payload = MetadataPayload{rev.parent_id, rev.contributor, rev.comment,
                                  rev.text_bytes(), rev.page.redirect_target};
      break;
    case RecordKind::fulltext: {
      FulltextPayload p;
      for_each_token(wikitext::strip_markup(rev.text), [&](std::string_view t) {
        ++p.token_count;
        auto it = p.terms.find(t);
        if (it == p.terms.end())
          p.terms.emplace(std::string(t), 1);
        else
          ++it->second;
      });
      r.payload = std::move(p);
      break;
    }
    case RecordKind::anchors:
      r.payload = AnchorsPayload{wikitext::extract_anchors(rev.text, rev.page.page_id)};
      break;
    case RecordKind::delta: {
      DeltaPayload p;
      auto child = wikitext::extract_fulltext(rev.text);
      if (rev.parent_id && parent_text) {
        auto parent = wikitext::extract_fulltext(*parent_text);
        p.delta = diff_tokens(parent, child);
      } else {
        p.delta = full_insert(child);
        p.parent_available = !rev.parent_id.has_value();
      }
      p.delta.revision_id = rev.revision_id;
      p.delta.parent_id = rev.parent_id;
      r.payload = std::move(p);
      break;
    }
  }
  return r;
}

TransformStats transform(const fs::path& partition, const OperatorChain& chain,
                         const RecordSink& sink)
{
  chain.validate();
  const auto kind = chain.projection();
  TransformStats stats;
  records::RecordReader reader(partition);
  std::vector<RevisionRecord> kept;
  // Texts of every revision in the partition, for delta parent lookup.
  std::unordered_map<std::uint64_t, std::string> texts;
  while (auto rec = reader.next()) {
    ++stats.revisions_read;
    bool admit = chain.admits(*rec);
    if (kind == RecordKind::delta && !rec->text_deleted)
      texts.emplace(rec->revision_id, rec->text);
    if (!admit) {
      ++stats.rejected;
      continue;
    }
    kept.push_back(std::move(*rec));
  }
  std::stable_sort(kept.begin(), kept.end(), [](auto& a, auto& b) {
    if (a.page.page_id != b.page.page_id)
      return a.page.page_id < b.page.page_id;
    if (a.timestamp != b.timestamp)
      return a.timestamp < b.timestamp;
    return a.revision_id < b.revision_id;
  });
  for (auto& rec : kept) {
    const std::string* parent = nullptr;
    if (kind == RecordKind::delta && rec.parent_id) {
      auto it = texts.find(*rec.parent_id);
      if (it != texts.end())
        parent = &it->second;
      else
        ++stats.parent_missing;
    }
    auto out = build_record(rec, kind, parent);
    ++stats.payloads_built;
    ++stats.emitted;
    sink(std::move(out));
  }
  return stats;
}

std::vector<EmittedRecord> transform(const fs::path& partition,
                                     const OperatorChain& chain,
                                     TransformStats* stats)
{
  std::vector<EmittedRecord> out;
  auto s = transform(partition, chain, [&](EmittedRecord&& r) { out.push_back(std::move(r)); });
  if (stats)
    *stats = s;
  return out;
}

std::vector<fs::path> partition_files(const fs::path& input)
{
  if (fs::is_directory(input)) {
    if (fs::exists(input / kManifestName)) {
      std::vector<fs::path> files;
      for (auto& p : PartitionManifest::load(input).partitions)
        files.push_back(p.path);
      return files;
    }
    std::vector<fs::path> files;
    for (auto& entry : fs::directory_iterator(input)) {
      auto ext = entry.path().extension();
      if (entry.is_regular_file() && (ext == ".jsonl" || ext == ".xml"))
        files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
  }
  if (!fs::exists(input))
    throw Error(ErrorCode::io_error, "no such partition '" + input.string() + "'");
  return {input};
}

TransformStats transform_to_file(const std::vector<fs::path>& partitions,
                                 const OperatorChain& chain, const fs::path& out,
                                 unsigned workers)
{
  chain.validate();
  std::vector<fs::path> parts(partitions.size());
  std::vector<TransformStats> stats(partitions.size());
  std::vector<std::exception_ptr> errors(partitions.size());
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i = next++; i < partitions.size(); i = next++) {
      try {
        parts[i] = out.string() + ".part" + std::to_string(i);
        std::ofstream o(parts[i], std::ios::binary | std::ios::trunc);
        if (!o)
          throw Error(ErrorCode::io_error, "cannot create '" + parts[i].string() + "'");
        std::string line;
        stats[i] = transform(partitions[i], chain, [&](EmittedRecord&& r) {
          line = to_json(r).dump();
          line.push_back('\n');
          o.write(line.data(), static_cast<std::streamsize>(line.size()));
        });
        o.close();
        if (!o)
          throw Error(ErrorCode::io_error, "write failed on '" + parts[i].string() + "'");
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> threads;
    auto n = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(partitions.size())));
    for (unsigned t = 1; t < n; ++t)
      threads.emplace_back(run);
    run();
  }
  for (auto& e : errors)
    if (e) {
      for (auto& p : parts)
        if (!p.empty())
          fs::remove(p);
      std::rethrow_exception(e);
    }

  if (out.has_parent_path())
    fs::create_directories(out.parent_path());
  std::ofstream o(out, std::ios::binary | std::ios::trunc);
  if (!o)
    throw Error(ErrorCode::io_error, "cannot create '" + out.string() + "'");
  TransformStats total;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    std::ifstream in(parts[i], std::ios::binary);
    o << in.rdbuf();
    in.close();
    fs::remove(parts[i]);
    total.revisions_read += stats[i].revisions_read;
    total.rejected += stats[i].rejected;
    total.payloads_built += stats[i].payloads_built;
    total.parent_missing += stats[i].parent_missing;
    total.emitted += stats[i].emitted;
  }
  o.close();
  if (!o)
    throw Error(ErrorCode::io_error, "write failed on '" + out.string() + "'");
  return total;
}

EmittedReader::EmittedReader(const fs::path& path) : path_(path), in_(path, std::ios::binary)
{
  if (!in_)
    throw Error(ErrorCode::io_error, "cannot open '" + path.string() + "'");
}

std::optional<EmittedRecord> EmittedReader::next()
{
  while (std::getline(in_, line_)) {
    ++lineno_;
    if (line_.empty())
      continue;
    json j;
    try {
      j = json::parse(line_);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::corrupt_payload,
                  path_.string() + ":" + std::to_string(lineno_) + ": " + e.what());
    }
    return record_from_json(j);
  }
  return std::nullopt;
}

} // namespace revhist::extract
