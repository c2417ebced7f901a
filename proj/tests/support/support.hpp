#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "revhist/dump_parser.hpp"
#include "revhist/fixture.hpp"

namespace revhist::testing {

// Directory removed with everything in it when the object goes away.
class TempDir {
public:
  TempDir()
  {
    std::random_device rd;
    for (;;) {
      path_ = std::filesystem::temp_directory_path() /
              ("revhist-test-" + std::to_string(rd()) + std::to_string(rd()));
      if (std::filesystem::create_directory(path_))
        break;
    }
  }
  ~TempDir()
  {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p)
{
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const std::filesystem::path& p, std::string_view text)
{
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

inline std::string fixture_xml(const fixture::FixtureOptions& options)
{
  std::ostringstream out;
  fixture::write_fixture(options, out);
  return out.str();
}

// Every event of a dump through the streaming parser.
inline std::vector<DumpEvent> stream_events(const dump::DumpSource& source)
{
  std::vector<DumpEvent> events;
  dump::RevisionStream stream(source);
  while (auto e = stream.next())
    events.push_back(std::move(*e));
  return events;
}

inline std::vector<DumpEvent> stream_events(const std::string& xml)
{
  auto in = std::make_shared<std::istringstream>(xml);
  return stream_events(dump::DumpSource{in, dump::Compression::none, {}, {}});
}

inline std::vector<RevisionRecord> revisions_of(const std::vector<DumpEvent>& events)
{
  std::vector<RevisionRecord> out;
  for (auto& e : events)
    if (auto* r = std::get_if<RevisionRecord>(&e))
      out.push_back(*r);
  return out;
}

} // namespace revhist::testing
