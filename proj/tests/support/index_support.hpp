#pragma once

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "index_oracle.hpp"
#include "revhist/temporal_index.hpp"

namespace revhist::testing {

struct RecordGenOptions {
  std::size_t records = 500;
  std::size_t entities = 12;
  std::size_t vocabulary = 40;
  std::size_t max_links = 6;
  std::size_t max_terms = 12;
  Date start = Date{std::chrono::year{2011} / 1 / 1};
  int span_days = 120;
  double deleted_fraction = 0.02;
  std::uint64_t seed = 1;
};

inline std::string entity_name(std::size_t i) { return "entity_" + std::to_string(i); }
inline std::string term_name(std::size_t i) { return "w" + std::to_string(i); }

// Anchors and fulltext records with skewed term choice, so rankings have
// both clear winners and ties.
inline std::vector<extract::EmittedRecord> random_records(const RecordGenOptions& o)
{
  std::mt19937_64 rng(o.seed);
  std::uniform_int_distribution<std::size_t> entity(0, o.entities - 1);
  std::uniform_int_distribution<std::int64_t> second(0, std::int64_t{o.span_days} * 86400 - 1);
  std::geometric_distribution<std::size_t> skew(0.08);
  std::bernoulli_distribution deleted(o.deleted_fraction);
  auto term = [&] { return term_name(std::min(skew(rng), o.vocabulary - 1)); };
  auto base = to_timestamp(o.start);

  std::vector<extract::EmittedRecord> out;
  for (std::size_t i = 0; i < o.records; ++i) {
    extract::EmittedRecord r;
    auto e = entity(rng);
    r.page_id = (e + 1) * 10;
    r.revision_id = i / 2 + 1;
    r.entity = entity_name(e);
    r.title = "Entity " + std::to_string(e);
    // Coarse timestamps make identical instants across records common.
    r.timestamp = base + std::chrono::seconds{second(rng) / 3600 * 3600};
    r.deleted = deleted(rng);
    if (i % 2 == 0) {
      extract::AnchorsPayload p;
      std::uniform_int_distribution<std::size_t> n(1, o.max_links);
      if (!r.deleted)
        for (std::size_t k = n(rng), pos = 0; pos < k; ++pos) {
          auto text = term();
          if (pos % 3 == 1)
            text += " " + term();
          p.links.push_back({r.page_id, "Target", text, static_cast<std::uint32_t>(pos)});
        }
      r.payload = std::move(p);
    } else {
      extract::FulltextPayload p;
      std::uniform_int_distribution<std::size_t> n(1, o.max_terms);
      if (!r.deleted)
        for (std::size_t k = n(rng); k > 0; --k) {
          ++p.terms[term()];
          ++p.token_count;
        }
      r.payload = std::move(p);
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline TimeRange span_of(const RecordGenOptions& o)
{
  return {to_timestamp(o.start), to_timestamp(o.start + std::chrono::days{o.span_days})};
}

// Every query family over a fixed set of keys and ranges, as one canonical
// JSON document. Equal sweeps mean equal answers.
inline std::string query_sweep(const index::Snapshot& snap, const RecordGenOptions& o)
{
  using namespace index;
  auto full = span_of(o);
  std::vector<TimeRange> ranges{full,
                                {full.start + std::chrono::hours{37}, full.end - std::chrono::days{20}},
                                {full.start + std::chrono::days{10}, full.start + std::chrono::days{11}}};
  nlohmann::json out = nlohmann::json::array();
  for (auto field : {Field::anchor, Field::fulltext})
    for (auto& range : ranges) {
      for (auto g : {Granularity::day, Granularity::week}) {
        for (std::size_t t = 0; t < std::min<std::size_t>(o.vocabulary, 8); ++t)
          for (bool weighted : {false, true})
            out.push_back(to_json(snap.timeline({QueryTarget::term(term_name(t)), field, g, range, weighted})));
        for (std::size_t e = 0; e < o.entities; ++e)
          out.push_back(to_json(snap.timeline({QueryTarget::entity(entity_name(e)), field, g, range, false})));
        out.push_back(to_json(snap.co_occurrence({entity_name(0), entity_name(1), field, g, range, false})));
        out.push_back(to_json(snap.co_occurrence({entity_name(2), entity_name(2), field, g, range, true})));
      }
      out.push_back(to_json(snap.top_terms({std::nullopt, field, range, 10})));
      out.push_back(to_json(snap.top_terms({QueryTarget::entity(entity_name(3)), field, range, 5})));
      out.push_back(to_json(snap.top_terms({QueryTarget::term(term_name(0)), field, range, 7})));
    }
  out.push_back(to_json(snap.entity_search("entity_1", 50)));
  auto stats = snap.stats();
  out.push_back(stats.records);
  return out.dump();
}

} // namespace revhist::testing
