#include "revhist/dump_parser.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <deque>
#include <exception>
#include <new>
#include <vector>

#include <expat.h>

#include "decoded_reader.hpp"
#include "revhist/error.hpp"
#include "revhist/utf8.hpp"

namespace revhist::dump {

namespace {

constexpr std::size_t kChunkSize = 1 << 16;
constexpr std::string_view kSyntheticRoot = "<mediawiki>";

// Expat allocations go through operator new so that they are visible to
// allocation accounting like everything else.
void* xml_malloc(std::size_t size)
{
  auto* block = static_cast<std::size_t*>(::operator new(size + 16));
  *block = size;
  return reinterpret_cast<char*>(block) + 16;
}

void xml_free(void* ptr)
{
  if (ptr)
    ::operator delete(static_cast<char*>(ptr) - 16);
}

void* xml_realloc(void* ptr, std::size_t size)
{
  void* fresh = xml_malloc(size);
  if (ptr) {
    auto old = *reinterpret_cast<std::size_t*>(static_cast<char*>(ptr) - 16);
    std::memcpy(fresh, ptr, std::min(old, size));
    xml_free(ptr);
  }
  return fresh;
}

const XML_Memory_Handling_Suite kMemorySuite{xml_malloc, xml_realloc, xml_free};

struct ParserDeleter {
  void operator()(XML_Parser p) const { XML_ParserFree(p); }
};
using ParserPtr = std::unique_ptr<std::remove_pointer_t<XML_Parser>, ParserDeleter>;

ParserPtr make_parser()
{
  ParserPtr p{XML_ParserCreate_MM("UTF-8", &kMemorySuite, nullptr)};
  if (!p)
    throw std::bad_alloc();
  return p;
}

std::string_view trim(std::string_view s)
{
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos)
    return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view text, const char* what)
{
  auto t = trim(text);
  T value{};
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty())
    throw Error(ErrorCode::format_error,
                std::string("bad ") + what + " value '" + std::string(t) + "'");
  return value;
}

bool attr_is(const XML_Char** attrs, std::string_view name,
             std::string_view value)
{
  for (auto a = attrs; a && *a; a += 2)
    if (name == a[0] && value == a[1])
      return true;
  return false;
}

const char* attr_value(const XML_Char** attrs, std::string_view name)
{
  for (auto a = attrs; a && *a; a += 2)
    if (name == a[0])
      return a[1];
  return nullptr;
}

enum class Tag {
  root,
  page,
  title,
  ns,
  page_id,
  redirect,
  revision,
  rev_id,
  parent_id,
  timestamp,
  contributor,
  username,
  ip,
  comment,
  text,
  other,
};

bool captures(Tag t)
{
  switch (t) {
    case Tag::title:
    case Tag::ns:
    case Tag::page_id:
    case Tag::rev_id:
    case Tag::parent_id:
    case Tag::timestamp:
    case Tag::username:
    case Tag::ip:
    case Tag::comment:
    case Tag::text:
      return true;
    default:
      return false;
  }
}

// Element-level state machine over the supported export-format subset.
// Everything outside that subset is skipped.
class DumpHandler {
public:
  struct Sink {
    virtual ~Sink() = default;
    virtual void page_start(XML_Parser parser) = 0;
    virtual void page(PageHeader&& header) = 0;
    virtual void revision(RevisionRecord&& record) = 0;
  };

  // With `fragment_page`, the document root is a lone <revision>.
  DumpHandler(XML_Parser parser, Sink& sink,
              const PageHeader* fragment_page = nullptr)
    : parser_(parser), sink_(sink)
  {
    if (fragment_page) {
      page_ = *fragment_page;
      fragment_ = true;
      header_emitted_ = true;
    }
    XML_SetUserData(parser, this);
    XML_SetElementHandler(parser, &DumpHandler::on_start, &DumpHandler::on_end);
    XML_SetCharacterDataHandler(parser, &DumpHandler::on_chars);
  }

  // Rethrows an exception raised inside a callback.
  void rethrow_pending()
  {
    if (pending_) {
      auto e = pending_;
      pending_ = nullptr;
      std::rethrow_exception(e);
    }
  }

  bool failed() const { return pending_ != nullptr; }

private:
  static void on_start(void* self, const XML_Char* name, const XML_Char** attrs)
  {
    auto* h = static_cast<DumpHandler*>(self);
    if (h->failed())
      return;
    try {
      h->start(name, attrs);
    } catch (...) {
      h->fail(std::current_exception());
    }
  }

  static void on_end(void* self, const XML_Char* name)
  {
    auto* h = static_cast<DumpHandler*>(self);
    if (h->failed())
      return;
    try {
      h->end(name);
    } catch (...) {
      h->fail(std::current_exception());
    }
  }

  static void on_chars(void* self, const XML_Char* s, int len)
  {
    auto* h = static_cast<DumpHandler*>(self);
    if (!h->stack_.empty() && captures(h->stack_.back()))
      h->buf_.append(s, static_cast<std::size_t>(len));
  }

  void fail(std::exception_ptr e)
  {
    pending_ = std::move(e);
    XML_StopParser(parser_, XML_FALSE);
  }

  Tag classify(std::string_view name) const
  {
    if (stack_.empty())
      return fragment_ ? (name == "revision" ? Tag::revision : Tag::other)
                       : Tag::root;
    switch (stack_.back()) {
      case Tag::root:
        return name == "page" ? Tag::page : Tag::other;
      case Tag::page:
        if (name == "title") return Tag::title;
        if (name == "ns") return Tag::ns;
        if (name == "id") return Tag::page_id;
        if (name == "redirect") return Tag::redirect;
        if (name == "revision") return Tag::revision;
        return Tag::other;
      case Tag::revision:
        if (name == "id") return Tag::rev_id;
        if (name == "parentid") return Tag::parent_id;
        if (name == "timestamp") return Tag::timestamp;
        if (name == "contributor") return Tag::contributor;
        if (name == "comment") return Tag::comment;
        if (name == "text") return Tag::text;
        return Tag::other;
      case Tag::contributor:
        if (name == "username") return Tag::username;
        if (name == "ip") return Tag::ip;
        return Tag::other;
      default:
        return Tag::other;
    }
  }

  void start(std::string_view name, const XML_Char** attrs)
  {
    Tag tag = classify(name);
    stack_.push_back(tag);
    buf_.clear();
    switch (tag) {
      case Tag::page:
        page_ = PageHeader{};
        header_emitted_ = false;
        sink_.page_start(parser_);
        break;
      case Tag::redirect:
        if (auto t = attr_value(attrs, "title"))
          page_.redirect_target = t;
        else
          page_.redirect_target = std::string{};
        break;
      case Tag::revision:
        if (!header_emitted_)
          emit_header();
        rev_ = RevisionRecord{};
        rev_id_.reset();
        timestamp_.reset();
        break;
      case Tag::text:
        rev_.text_deleted = attr_is(attrs, "deleted", "deleted");
        break;
      case Tag::comment:
        comment_deleted_ = attr_is(attrs, "deleted", "deleted");
        break;
      default:
        break;
    }
  }

  void end(std::string_view)
  {
    Tag tag = stack_.back();
    stack_.pop_back();
    switch (tag) {
      case Tag::title:
        page_.title = std::move(buf_);
        break;
      case Tag::ns:
        page_.ns = parse_number<std::int32_t>(buf_, "ns");
        break;
      case Tag::page_id:
        page_.page_id = parse_number<std::uint64_t>(buf_, "page id");
        break;
      case Tag::rev_id:
        rev_id_ = parse_number<std::uint64_t>(buf_, "revision id");
        break;
      case Tag::parent_id:
        rev_.parent_id = parse_number<std::uint64_t>(buf_, "parentid");
        break;
      case Tag::timestamp:
        timestamp_ = std::move(buf_);
        break;
      case Tag::username:
      case Tag::ip:
        rev_.contributor = std::move(buf_);
        break;
      case Tag::comment:
        if (!comment_deleted_)
          rev_.comment = std::move(buf_);
        break;
      case Tag::text:
        if (rev_.text_deleted)
          rev_.text.clear();
        else
          rev_.text = std::move(buf_);
        break;
      case Tag::revision:
        emit_revision();
        break;
      case Tag::page:
        if (!header_emitted_)
          emit_header();
        break;
      default:
        break;
    }
    buf_.clear();
  }

  void emit_header()
  {
    if (page_.page_id == 0)
      throw Error(ErrorCode::missing_required_field, "page without <id>");
    if (trim(page_.title).empty())
      throw Error(ErrorCode::missing_required_field, "page without <title>");
    header_emitted_ = true;
    sink_.page(PageHeader{page_});
  }

  void emit_revision()
  {
    if (!rev_id_ || *rev_id_ == 0)
      throw Error(ErrorCode::missing_required_field, "revision without <id>");
    if (!timestamp_)
      throw Error(ErrorCode::missing_required_field,
                  "revision " + std::to_string(*rev_id_) + " without <timestamp>");
    rev_.revision_id = *rev_id_;
    rev_.timestamp = parse_iso8601(trim(*timestamp_));
    if (rev_.parent_id && *rev_.parent_id == rev_.revision_id)
      throw Error(ErrorCode::format_error,
                  "revision " + std::to_string(rev_.revision_id) +
                    " names itself as parent");
    rev_.page = page_;
    sink_.revision(std::move(rev_));
    rev_ = RevisionRecord{};
  }

  XML_Parser parser_;
  Sink& sink_;
  bool fragment_ = false;
  std::vector<Tag> stack_;
  std::string buf_;
  PageHeader page_;
  bool header_emitted_ = false;
  RevisionRecord rev_;
  std::optional<std::uint64_t> rev_id_;
  std::optional<std::string> timestamp_;
  bool comment_deleted_ = false;
  std::exception_ptr pending_;
};

std::string describe(XML_Parser p)
{
  return XML_ErrorString(XML_GetErrorCode(p));
}

std::size_t find_page_tag(std::string_view data, std::size_t from = 0)
{
  for (;;) {
    auto pos = data.find("<page", from);
    if (pos == std::string_view::npos || pos + 5 >= data.size())
      return std::string_view::npos;
    char c = data[pos + 5];
    if (c == '>' || c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '/')
      return pos;
    from = pos + 1;
  }
}

} // namespace

struct RevisionStream::Impl final : DumpHandler::Sink {
  explicit Impl(const DumpSource& src) : source(src)
  {
    bool has_path = std::holds_alternative<std::filesystem::path>(src.location);
    bool seeking = src.start_offset.has_value() || src.end_offset.has_value();
    if (seeking && (!has_path || src.compression == Compression::gzip ||
                    src.compression == Compression::bzip2))
      throw Error(ErrorCode::not_seekable,
                  "byte offsets need an uncompressed or bzip2-multistream file");

    std::uint64_t start = src.start_offset.value_or(0);
    std::optional<std::uint64_t> phase_end;
    if (start > 0) {
      if (src.compression == Compression::bzip2_multistream)
        start = detail::next_bzip2_stream(
          std::get<std::filesystem::path>(src.location), start);
      else
        start = seek_page_boundary(src, start);
      if (start == kEndOfData) {
        done = true;
        return;
      }
      mid_stream = true;
    }
    if (src.end_offset) {
      if (*src.end_offset <= start) {
        done = true;
        return;
      }
      if (src.compression == Compression::bzip2_multistream) {
        auto b = detail::next_bzip2_stream(
          std::get<std::filesystem::path>(src.location), *src.end_offset);
        if (b != kEndOfData)
          phase_end = b;
      }
    }
    aligned_start = start;
    reader.emplace(src, start, phase_end);
    parser = make_parser();
    handler.emplace(parser.get(), *this);
    raw.resize(kChunkSize);
  }

  void page_start(XML_Parser p) override
  {
    auto idx = static_cast<std::uint64_t>(XML_GetCurrentByteIndex(p));
    std::uint64_t decoded =
      skipped + sanitizer.original_offset(idx - prefix_len);
    bool past_end = false;
    if (source.compression == Compression::none) {
      page_offset = aligned_start + decoded;
      past_end = source.end_offset && page_offset >= *source.end_offset;
    } else {
      page_offset = decoded;
      auto boundary = reader->phase_boundary();
      past_end = boundary && decoded >= *boundary;
    }
    if (past_end) {
      reached_end = true;
      XML_StopParser(p, XML_FALSE);
      return;
    }
    ++stats.pages;
  }

  void page(PageHeader&& header) override
  {
    events.emplace_back(std::move(header));
    XML_StopParser(parser.get(), XML_TRUE);
  }

  void revision(RevisionRecord&& record) override
  {
    ++stats.revisions;
    events.emplace_back(std::move(record));
    XML_StopParser(parser.get(), XML_TRUE);
  }

  // Reads the next decoded chunk into `feed`; false at end of input.
  bool fill()
  {
    feed.clear();
    if (!pending_head.empty()) {
      feed.assign(kSyntheticRoot);
      prefix_len = kSyntheticRoot.size();
      sanitizer.feed(pending_head, feed);
      pending_head.clear();
      pending_head.shrink_to_fit();
      return true;
    }
    auto n = reader->read(raw.data(), raw.size());
    stats.decoded_bytes += n;
    if (n == 0) {
      sanitizer.feed({}, feed, true);
      return false;
    }
    sanitizer.feed(std::string_view(raw.data(), n), feed);
    return true;
  }

  // Discards decoded bytes up to the first page tag; a split starting
  // mid-file owns only whole pages.
  bool skip_to_first_page()
  {
    std::string window;
    for (;;) {
      auto n = reader->read(raw.data(), raw.size());
      stats.decoded_bytes += n;
      if (n == 0)
        return false;
      window.append(raw.data(), n);
      auto pos = find_page_tag(window);
      if (pos != std::string::npos) {
        skipped += pos;
        pending_head = window.substr(pos);
        return true;
      }
      constexpr std::size_t kKeep = 6;
      if (window.size() > kKeep) {
        skipped += window.size() - kKeep;
        window.erase(0, window.size() - kKeep);
      }
    }
  }

  void pump()
  {
    XML_Status status;
    if (suspended) {
      status = XML_ResumeParser(parser.get());
    } else {
      if (first_chunk) {
        first_chunk = false;
        if (mid_stream && !skip_to_first_page()) {
          done = true;
          return;
        }
      }
      bool more = fill();
      last_final = !more;
      status = XML_Parse(parser.get(), feed.data(), static_cast<int>(feed.size()),
                         last_final ? XML_TRUE : XML_FALSE);
    }
    handler->rethrow_pending();
    stats.invalid_utf8_replaced = sanitizer.replacements();
    switch (status) {
      case XML_STATUS_SUSPENDED:
        suspended = true;
        return;
      case XML_STATUS_OK:
        suspended = false;
        if (last_final)
          done = true;
        return;
      case XML_STATUS_ERROR:
        if (reached_end) {
          done = true;
          return;
        }
        {
          auto idx = static_cast<std::uint64_t>(
            std::max<XML_Index>(0, XML_GetCurrentByteIndex(parser.get())));
          auto rel = idx > prefix_len ? idx - prefix_len : 0;
          std::uint64_t offset = skipped + sanitizer.original_offset(rel);
          if (source.compression == Compression::none)
            offset += aligned_start;
          throw MalformedXml(offset, describe(parser.get()));
        }
    }
  }

  DumpSource source;
  std::optional<detail::DecodedReader> reader;
  ParserPtr parser;
  std::optional<DumpHandler> handler;
  utf8::Sanitizer sanitizer;
  std::vector<char> raw;
  std::string feed;
  std::string pending_head;
  std::deque<DumpEvent> events;
  StreamStats stats;
  std::uint64_t aligned_start = 0;
  std::uint64_t skipped = 0;
  std::uint64_t prefix_len = 0;
  std::uint64_t page_offset = 0;
  bool mid_stream = false;
  bool first_chunk = true;
  bool suspended = false;
  bool last_final = false;
  bool reached_end = false;
  bool done = false;
};

RevisionStream::RevisionStream(const DumpSource& source)
  : impl_(std::make_unique<Impl>(source))
{
}

RevisionStream::~RevisionStream() = default;
RevisionStream::RevisionStream(RevisionStream&&) noexcept = default;
RevisionStream& RevisionStream::operator=(RevisionStream&&) noexcept = default;

std::optional<DumpEvent> RevisionStream::next()
{
  auto& s = *impl_;
  while (s.events.empty()) {
    if (s.done)
      return std::nullopt;
    s.pump();
  }
  DumpEvent e = std::move(s.events.front());
  s.events.pop_front();
  return e;
}

std::optional<RevisionRecord> RevisionStream::next_revision()
{
  while (auto e = next())
    if (auto* r = std::get_if<RevisionRecord>(&*e))
      return std::move(*r);
  return std::nullopt;
}

std::uint64_t RevisionStream::current_page_offset() const
{
  return impl_->page_offset;
}

const StreamStats& RevisionStream::stats() const
{
  return impl_->stats;
}

RevisionStream open_dump(const DumpSource& source)
{
  return RevisionStream(source);
}

namespace {

struct FragmentSink final : DumpHandler::Sink {
  void page_start(XML_Parser) override {}
  void page(PageHeader&&) override {}
  void revision(RevisionRecord&& r) override { result = std::move(r); }
  std::optional<RevisionRecord> result;
};

} // namespace

RevisionRecord parse_revision(std::string_view fragment, const PageHeader& page)
{
  auto parser = make_parser();
  FragmentSink sink;
  DumpHandler handler(parser.get(), sink, &page);
  std::string repaired;
  utf8::Sanitizer sanitizer;
  sanitizer.feed(fragment, repaired, true);
  auto status = XML_Parse(parser.get(), repaired.data(),
                          static_cast<int>(repaired.size()), XML_TRUE);
  handler.rethrow_pending();
  if (status != XML_STATUS_OK)
    throw MalformedXml(static_cast<std::uint64_t>(std::max<XML_Index>(
                         0, XML_GetCurrentByteIndex(parser.get()))),
                       describe(parser.get()));
  if (!sink.result)
    throw Error(ErrorCode::format_error, "fragment is not a <revision> element");
  return std::move(*sink.result);
}

std::uint64_t seek_page_boundary(const DumpSource& source, std::uint64_t from)
{
  const auto* path = std::get_if<std::filesystem::path>(&source.location);
  if (!path || source.compression == Compression::gzip ||
      source.compression == Compression::bzip2)
    throw Error(ErrorCode::not_seekable,
                std::string(to_string(source.compression)) +
                  " input cannot be split at byte offsets");

  if (source.compression == Compression::none) {
    std::ifstream in(*path, std::ios::binary);
    if (!in)
      throw Error(ErrorCode::io_error, "cannot open '" + path->string() + "'");
    in.seekg(0, std::ios::end);
    auto size = static_cast<std::uint64_t>(in.tellg());
    if (from >= size)
      return kEndOfData;
    in.seekg(static_cast<std::streamoff>(from));
    std::string window;
    std::vector<char> buf(kChunkSize);
    std::uint64_t base = from;
    for (;;) {
      in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
      auto n = static_cast<std::size_t>(in.gcount());
      window.append(buf.data(), n);
      auto pos = find_page_tag(window);
      if (pos != std::string::npos)
        return base + pos;
      if (n == 0)
        return kEndOfData;
      constexpr std::size_t kKeep = 6;
      if (window.size() > kKeep) {
        base += window.size() - kKeep;
        window.erase(0, window.size() - kKeep);
      }
    }
  }

  // Multistream: walk stream starts until one holds a page tag.
  auto stream = detail::next_bzip2_stream(*path, from);
  while (stream != kEndOfData) {
    auto next = detail::next_bzip2_stream(*path, stream + 1);
    DumpSource one = source;
    detail::DecodedReader reader(one, stream, next == kEndOfData
                                                ? std::optional<std::uint64_t>{}
                                                : std::optional{next});
    std::string window;
    std::vector<char> buf(kChunkSize);
    for (;;) {
      if (reader.phase_boundary())
        break;
      auto n = reader.read(buf.data(), buf.size());
      if (n == 0 || reader.phase_boundary())
        break;
      window.append(buf.data(), n);
      if (find_page_tag(window) != std::string::npos)
        return stream;
      if (window.size() > 6)
        window.erase(0, window.size() - 6);
    }
    stream = next;
  }
  return kEndOfData;
}

} // namespace revhist::dump
