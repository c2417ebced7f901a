#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "revhist/dump_parser.hpp"
#include "revhist/revision.hpp"

namespace revhist::records {

enum class RecordFormat { xml, json_lines };

std::string_view to_string(RecordFormat f);
std::optional<RecordFormat> parse_format(std::string_view text);
std::string_view file_extension(RecordFormat f);
// Decides by extension: `.jsonl` is json-lines, anything else xml.
RecordFormat format_for(const std::filesystem::path& path);

// Opening of every export-format file this project writes.
inline constexpr std::string_view kXmlHeader =
  "<mediawiki xml:lang=\"en\" version=\"0.10\">\n  <siteinfo />\n";
inline constexpr std::string_view kXmlFooter = "</mediawiki>\n";

// Throws Error(format_error) for characters XML 1.0 cannot carry.
std::string escape_xml(std::string_view text);

void append_page_open(std::string& out, const PageHeader& page);
void append_page_close(std::string& out);
void append_revision(std::string& out, const RevisionRecord& rev);

// json-lines schema, one object per revision:
// {page_id, title, ns, redirect, rev_id, parent_id, timestamp, contributor,
//  comment, text, deleted}; absent optionals are null.
nlohmann::json to_json(const RevisionRecord& rev);
RevisionRecord revision_from_json(const nlohmann::json& j);

class RecordWriter {
public:
  // A `fragment` writer omits the XML document header and footer so that
  // several fragments can be spliced into one file.
  RecordWriter(const std::filesystem::path& path, RecordFormat format,
               bool fragment = false);
  ~RecordWriter();
  RecordWriter(const RecordWriter&) = delete;
  RecordWriter& operator=(const RecordWriter&) = delete;

  void write(const RevisionRecord& rev);
  void close();

  std::uint64_t count() const { return count_; }
  std::uint64_t bytes() const { return bytes_; }
  std::optional<Timestamp> min_timestamp() const { return min_ts_; }
  std::optional<Timestamp> max_timestamp() const { return max_ts_; }

private:
  void flush_buffer();

  std::filesystem::path path_;
  RecordFormat format_;
  bool fragment_;
  std::ofstream out_;
  std::string buf_;
  std::optional<std::uint64_t> open_page_;
  std::uint64_t count_ = 0;
  std::uint64_t bytes_ = 0;
  std::optional<Timestamp> min_ts_;
  std::optional<Timestamp> max_ts_;
  bool closed_ = false;
};

// Reads back partition files of either format.
class RecordReader {
public:
  explicit RecordReader(const std::filesystem::path& path);
  RecordReader(const std::filesystem::path& path, RecordFormat format);

  std::optional<RevisionRecord> next();

  std::uint64_t line() const { return line_; }

private:
  RecordFormat format_;
  std::filesystem::path path_;
  std::ifstream in_;
  std::optional<dump::RevisionStream> xml_;
  std::string line_buf_;
  std::uint64_t line_ = 0;
};

} // namespace revhist::records
