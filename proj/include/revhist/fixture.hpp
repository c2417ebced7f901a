#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "revhist/dump_parser.hpp"
#include "revhist/time.hpp"

namespace revhist::fixture {

// A burst of extra revisions on one page inside [start, start + days),
// each carrying links whose anchor text is `anchor`.
struct EventSpike {
  std::string title;
  Date start;
  int days = 7;
  std::size_t revisions = 50;
  std::string anchor;
};

struct FixtureOptions {
  std::size_t pages = 10;
  std::size_t revisions_per_page = 5;
  std::uint64_t seed = 1;
  Date start_date = Date{std::chrono::year{2011} / 1 / 1};
  int span_days = 365;
  std::size_t words_per_page = 40;
  // Fractions of generated pages outside the article namespace.
  double talk_fraction = 0.1;
  double file_fraction = 0.03;
  double redirect_fraction = 0.03;
  double deleted_fraction = 0.01;
  std::vector<EventSpike> spikes;
  dump::Compression compression = dump::Compression::none;
  std::size_t pages_per_stream = 100;
};

struct FixtureSummary {
  std::uint64_t pages = 0;
  std::uint64_t revisions = 0;
  std::uint64_t bytes = 0;
  std::vector<std::uint64_t> page_ids;
};

// Page ids are 10, 20, 30, ... in file order; revision ids count up from 1
// across the whole dump.
FixtureSummary write_fixture(const FixtureOptions& options, std::ostream& out);

// Writes to `path`, compressed per options.compression. For multistream,
// the header, each run of pages_per_stream pages, and the footer are
// separate bzip2 streams.
FixtureSummary generate_fixture(const FixtureOptions& options,
                                const std::filesystem::path& path);

// Event spikes mirroring the 2011-2013 exploration scenario: an election
// week, a football tournament, the games, and two athletes co-spiking.
std::vector<EventSpike> exploration_spikes();

} // namespace revhist::fixture
