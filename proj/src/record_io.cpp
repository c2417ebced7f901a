#include "revhist/record_io.hpp"

#include "revhist/error.hpp"

namespace revhist::records {

using nlohmann::json;

std::string_view to_string(RecordFormat f)
{
  return f == RecordFormat::xml ? "xml" : "jsonl";
}

std::optional<RecordFormat> parse_format(std::string_view text)
{
  if (text == "xml")
    return RecordFormat::xml;
  if (text == "jsonl" || text == "json-lines" || text == "json")
    return RecordFormat::json_lines;
  return std::nullopt;
}

std::string_view file_extension(RecordFormat f)
{
  return f == RecordFormat::xml ? ".xml" : ".jsonl";
}

RecordFormat format_for(const std::filesystem::path& path)
{
  return path.extension() == ".jsonl" ? RecordFormat::json_lines
                                      : RecordFormat::xml;
}

std::string escape_xml(std::string_view text)
{
  std::string out;
  out.reserve(text.size() + text.size() / 16);
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\r': out += "&#13;"; break;
      default:
        if (c < 0x20 && c != '\t' && c != '\n')
          throw Error(ErrorCode::format_error,
                      "control character " + std::to_string(c) +
                        " cannot be written as XML");
        out.push_back(ch);
    }
  }
  return out;
}

void append_page_open(std::string& out, const PageHeader& page)
{
  out += "  <page>\n    <title>";
  out += escape_xml(page.title);
  out += "</title>\n    <ns>";
  out += std::to_string(page.ns);
  out += "</ns>\n    <id>";
  out += std::to_string(page.page_id);
  out += "</id>\n";
  if (page.redirect_target) {
    out += "    <redirect title=\"";
    out += escape_xml(*page.redirect_target);
    out += "\" />\n";
  }
}

void append_page_close(std::string& out)
{
  out += "  </page>\n";
}

void append_revision(std::string& out, const RevisionRecord& rev)
{
  out += "    <revision>\n      <id>";
  out += std::to_string(rev.revision_id);
  out += "</id>\n";
  if (rev.parent_id) {
    out += "      <parentid>";
    out += std::to_string(*rev.parent_id);
    out += "</parentid>\n";
  }
  out += "      <timestamp>";
  out += format_iso8601(rev.timestamp);
  out += "</timestamp>\n";
  if (rev.contributor) {
    out += "      <contributor>\n        <username>";
    out += escape_xml(*rev.contributor);
    out += "</username>\n      </contributor>\n";
  } else {
    out += "      <contributor deleted=\"deleted\" />\n";
  }
  if (rev.comment) {
    out += "      <comment>";
    out += escape_xml(*rev.comment);
    out += "</comment>\n";
  }
  if (rev.text_deleted) {
    out += "      <text deleted=\"deleted\" />\n";
  } else {
    out += "      <text xml:space=\"preserve\" bytes=\"";
    out += std::to_string(rev.text_bytes());
    out += "\">";
    out += escape_xml(rev.text);
    out += "</text>\n";
  }
  out += "    </revision>\n";
}

namespace {

template <typename T>
json optional_json(const std::optional<T>& v)
{
  return v ? json(*v) : json(nullptr);
}

} // namespace

json to_json(const RevisionRecord& rev)
{
  return json{
    {"page_id", rev.page.page_id},
    {"title", rev.page.title},
    {"ns", rev.page.ns},
    {"redirect", optional_json(rev.page.redirect_target)},
    {"rev_id", rev.revision_id},
    {"parent_id", optional_json(rev.parent_id)},
    {"timestamp", format_iso8601(rev.timestamp)},
    {"contributor", optional_json(rev.contributor)},
    {"comment", optional_json(rev.comment)},
    {"text", rev.text},
    {"deleted", rev.text_deleted},
  };
}

RevisionRecord revision_from_json(const json& j)
{
  try {
    RevisionRecord r;
    r.page.page_id = j.at("page_id").get<std::uint64_t>();
    r.page.title = j.at("title").get<std::string>();
    r.page.ns = j.at("ns").get<std::int32_t>();
    if (auto& v = j.at("redirect"); !v.is_null())
      r.page.redirect_target = v.get<std::string>();
    r.revision_id = j.at("rev_id").get<std::uint64_t>();
    if (auto& v = j.at("parent_id"); !v.is_null())
      r.parent_id = v.get<std::uint64_t>();
    r.timestamp = parse_iso8601(j.at("timestamp").get<std::string>());
    if (auto& v = j.at("contributor"); !v.is_null())
      r.contributor = v.get<std::string>();
    if (auto& v = j.at("comment"); !v.is_null())
      r.comment = v.get<std::string>();
    r.text = j.at("text").get<std::string>();
    r.text_deleted = j.at("deleted").get<bool>();
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format_error,
                std::string("bad revision record: ") + e.what());
  }
}

RecordWriter::RecordWriter(const std::filesystem::path& path,
                           RecordFormat format, bool fragment)
  : path_(path),
    format_(format),
    fragment_(fragment),
    out_(path, std::ios::binary | std::ios::trunc)
{
  if (!out_)
    throw Error(ErrorCode::io_error, "cannot create '" + path.string() + "'");
  if (format_ == RecordFormat::xml && !fragment_)
    buf_.append(kXmlHeader);
}

RecordWriter::~RecordWriter()
{
  try {
    close();
  } catch (...) {
  }
}

void RecordWriter::write(const RevisionRecord& rev)
{
  if (closed_)
    throw Error(ErrorCode::io_error, "write after close on " + path_.string());
  if (format_ == RecordFormat::xml) {
    // Escape first so an unserializable record leaves the file untouched.
    std::string chunk;
    if (open_page_ != rev.page.page_id) {
      if (open_page_)
        append_page_close(chunk);
      append_page_open(chunk, rev.page);
    }
    append_revision(chunk, rev);
    open_page_ = rev.page.page_id;
    buf_ += chunk;
  } else {
    try {
      buf_ += to_json(rev).dump();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::format_error,
                  "revision " + std::to_string(rev.revision_id) +
                    " is not serializable: " + e.what());
    }
    buf_.push_back('\n');
  }
  ++count_;
  if (!min_ts_ || rev.timestamp < *min_ts_)
    min_ts_ = rev.timestamp;
  if (!max_ts_ || rev.timestamp > *max_ts_)
    max_ts_ = rev.timestamp;
  if (buf_.size() >= (1u << 20))
    flush_buffer();
}

void RecordWriter::flush_buffer()
{
  out_.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
  if (!out_)
    throw Error(ErrorCode::io_error, "write failed on " + path_.string());
  bytes_ += buf_.size();
  buf_.clear();
}

void RecordWriter::close()
{
  if (closed_)
    return;
  closed_ = true;
  if (format_ == RecordFormat::xml) {
    if (open_page_)
      append_page_close(buf_);
    if (!fragment_)
      buf_.append(kXmlFooter);
  }
  flush_buffer();
  out_.close();
  if (!out_)
    throw Error(ErrorCode::io_error, "close failed on " + path_.string());
}

RecordReader::RecordReader(const std::filesystem::path& path)
  : RecordReader(path, format_for(path))
{
}

RecordReader::RecordReader(const std::filesystem::path& path,
                           RecordFormat format)
  : format_(format), path_(path)
{
  if (format_ == RecordFormat::xml) {
    xml_.emplace(dump::DumpSource::file(path));
  } else {
    in_.open(path, std::ios::binary);
    if (!in_)
      throw Error(ErrorCode::io_error, "cannot open '" + path.string() + "'");
  }
}

std::optional<RevisionRecord> RecordReader::next()
{
  if (xml_)
    return xml_->next_revision();
  while (std::getline(in_, line_buf_)) {
    ++line_;
    if (line_buf_.empty())
      continue;
    json j;
    try {
      j = json::parse(line_buf_);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::format_error,
                  path_.string() + ":" + std::to_string(line_) + ": " + e.what());
    }
    return revision_from_json(j);
  }
  if (in_.bad())
    throw Error(ErrorCode::io_error, "read failed on " + path_.string());
  return std::nullopt;
}

} // namespace revhist::records
