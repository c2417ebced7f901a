#include "decoded_reader.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <vector>

#include <boost/iostreams/filter/bzip2.hpp>
#include <boost/iostreams/filter/gzip.hpp>

#include "revhist/error.hpp"

namespace io = boost::iostreams;

namespace revhist::dump {

std::string_view to_string(Compression c)
{
  switch (c) {
    case Compression::none: return "none";
    case Compression::gzip: return "gzip";
    case Compression::bzip2: return "bzip2";
    case Compression::bzip2_multistream: return "bzip2-multistream";
  }
  return "none";
}

std::optional<Compression> parse_compression(std::string_view text)
{
  if (text == "none")
    return Compression::none;
  if (text == "gzip")
    return Compression::gzip;
  if (text == "bzip2")
    return Compression::bzip2;
  if (text == "bzip2-multistream")
    return Compression::bzip2_multistream;
  return std::nullopt;
}

namespace {

constexpr std::array<unsigned char, 6> kBlockMagic{0x31, 0x41, 0x59,
                                                   0x26, 0x53, 0x59};

bool is_gzip_magic(const unsigned char* p, std::size_t n)
{
  return n >= 2 && p[0] == 0x1f && p[1] == 0x8b;
}

bool is_bzip2_magic(const unsigned char* p, std::size_t n)
{
  return n >= 4 && p[0] == 'B' && p[1] == 'Z' && p[2] == 'h' && p[3] >= '1' &&
         p[3] <= '9';
}

// A bzip2 stream header followed by a block header; rules out empty streams
// and accidental "BZh" byte runs.
bool is_stream_start(const unsigned char* p, std::size_t n)
{
  return n >= 10 && is_bzip2_magic(p, n) &&
         std::memcmp(p + 4, kBlockMagic.data(), kBlockMagic.size()) == 0;
}

std::shared_ptr<std::ifstream> open_file(const std::filesystem::path& path)
{
  auto f = std::make_shared<std::ifstream>(path, std::ios::binary);
  if (!*f)
    throw Error(ErrorCode::io_error, "cannot open '" + path.string() + "'");
  return f;
}

// Boost source reading a byte range of a shared file.
class FileRange {
public:
  using char_type = char;
  using category = io::source_tag;

  FileRange(std::shared_ptr<std::ifstream> file, std::uint64_t begin,
            std::uint64_t end)
    : file_(std::move(file)), pos_(begin), end_(end)
  {
  }

  std::streamsize read(char* s, std::streamsize n)
  {
    if (pos_ >= end_)
      return -1;
    auto want = static_cast<std::streamsize>(
      std::min<std::uint64_t>(static_cast<std::uint64_t>(n), end_ - pos_));
    file_->clear();
    file_->seekg(static_cast<std::streamoff>(pos_));
    file_->read(s, want);
    auto got = file_->gcount();
    if (got <= 0)
      return -1;
    pos_ += static_cast<std::uint64_t>(got);
    return got;
  }

private:
  std::shared_ptr<std::ifstream> file_;
  std::uint64_t pos_;
  std::uint64_t end_;
};

} // namespace

Compression detect_compression(const std::filesystem::path& path)
{
  auto f = open_file(path);
  std::array<unsigned char, 10> head{};
  f->read(reinterpret_cast<char*>(head.data()), head.size());
  auto n = static_cast<std::size_t>(f->gcount());
  if (is_gzip_magic(head.data(), n))
    return Compression::gzip;
  if (is_bzip2_magic(head.data(), n)) {
    if (detail::next_bzip2_stream(path, 1) != kEndOfData)
      return Compression::bzip2_multistream;
    return Compression::bzip2;
  }
  return Compression::none;
}

namespace detail {

std::uint64_t next_bzip2_stream(const std::filesystem::path& path,
                                std::uint64_t from)
{
  auto f = open_file(path);
  f->seekg(static_cast<std::streamoff>(from));
  if (!*f)
    return kEndOfData;
  constexpr std::size_t kChunk = 1 << 16;
  constexpr std::size_t kOverlap = 9;
  std::vector<unsigned char> buf(kChunk + kOverlap);
  std::size_t have = 0;
  std::uint64_t base = from;
  for (;;) {
    f->read(reinterpret_cast<char*>(buf.data()) + have,
            static_cast<std::streamsize>(kChunk));
    auto got = static_cast<std::size_t>(f->gcount());
    have += got;
    for (std::size_t i = 0; i + 10 <= have; ++i)
      if (buf[i] == 'B' && is_stream_start(buf.data() + i, have - i))
        return base + i;
    if (got == 0)
      return kEndOfData;
    std::size_t keep = std::min(have, kOverlap);
    std::memmove(buf.data(), buf.data() + have - keep, keep);
    base += have - keep;
    have = keep;
  }
}

DecodedReader::DecodedReader(const DumpSource& source, std::uint64_t from,
                             std::optional<std::uint64_t> phase_end)
  : source_(source), phase_end_(phase_end)
{
  if (auto* stream = std::get_if<std::shared_ptr<std::istream>>(&source.location)) {
    if (!*stream || !**stream)
      throw Error(ErrorCode::io_error, "unreadable input stream");
    auto& in = **stream;
    if (source.compression == Compression::none) {
      raw_ = &in;
      return;
    }
    in_ = std::make_unique<io::filtering_istream>();
    if (source.compression == Compression::gzip)
      in_->push(io::gzip_decompressor());
    else
      in_->push(io::bzip2_decompressor());
    std::array<char, 4> head{};
    in.read(head.data(), head.size());
    auto n = static_cast<std::size_t>(in.gcount());
    auto* u = reinterpret_cast<const unsigned char*>(head.data());
    bool ok = source.compression == Compression::gzip ? is_gzip_magic(u, n)
                                                      : is_bzip2_magic(u, n);
    if (!ok)
      throw Error(ErrorCode::codec_mismatch,
                  "stream does not start with " +
                    std::string(to_string(source.compression)) + " magic");
    for (std::size_t i = n; i-- > 0;)
      in.putback(head[i]);
    if (!in)
      throw Error(ErrorCode::io_error, "input stream does not support putback");
    in_->push(in);
    in_->exceptions(std::ios::badbit);
    return;
  }

  const auto& path = std::get<std::filesystem::path>(source.location);
  file_ = open_file(path);
  file_->seekg(0, std::ios::end);
  auto size = static_cast<std::uint64_t>(file_->tellg());
  if (phase_end_ && *phase_end_ >= size)
    phase_end_.reset();
  if (source.compression == Compression::none) {
    check_magic(*file_, from);
    file_->clear();
    file_->seekg(static_cast<std::streamoff>(from));
    raw_ = file_.get();
    return;
  }
  check_magic(*file_, from);
  open_phase(from, phase_end_.value_or(size));
}

DecodedReader::~DecodedReader() = default;

void DecodedReader::check_magic(std::istream& in, std::uint64_t at)
{
  std::array<unsigned char, 4> head{};
  in.clear();
  in.seekg(static_cast<std::streamoff>(at));
  in.read(reinterpret_cast<char*>(head.data()), head.size());
  auto n = static_cast<std::size_t>(in.gcount());
  in.clear();
  bool ok = true;
  switch (source_.compression) {
    case Compression::none:
      ok = at != 0 || !(is_gzip_magic(head.data(), n) ||
                        is_bzip2_magic(head.data(), n));
      break;
    case Compression::gzip:
      ok = is_gzip_magic(head.data(), n);
      break;
    case Compression::bzip2:
    case Compression::bzip2_multistream:
      ok = is_bzip2_magic(head.data(), n) || (n == 0 && at != 0);
      break;
  }
  if (!ok)
    throw Error(ErrorCode::codec_mismatch,
                "magic bytes disagree with declared compression " +
                  std::string(to_string(source_.compression)));
}

void DecodedReader::open_phase(std::uint64_t begin, std::uint64_t end)
{
  in_ = std::make_unique<io::filtering_istream>();
  if (source_.compression == Compression::gzip)
    in_->push(io::gzip_decompressor());
  else
    in_->push(io::bzip2_decompressor());
  in_->push(FileRange(file_, begin, end));
  in_->exceptions(std::ios::badbit);
}

std::size_t DecodedReader::read(char* dst, std::size_t n)
{
  std::istream* in = raw_ ? raw_ : in_.get();
  if (!in)
    return 0;
  for (;;) {
    std::size_t got = 0;
    try {
      in->read(dst, static_cast<std::streamsize>(n));
      got = static_cast<std::size_t>(in->gcount());
    } catch (const io::bzip2_error& e) {
      throw Error(ErrorCode::codec_mismatch,
                  std::string("bzip2 decode failed: ") + e.what());
    } catch (const io::gzip_error& e) {
      throw Error(ErrorCode::codec_mismatch,
                  std::string("gzip decode failed: ") + e.what());
    } catch (const std::ios_base::failure& e) {
      throw Error(ErrorCode::io_error, e.what());
    }
    if (got > 0) {
      delivered_ += got;
      return got;
    }
    if (raw_ && raw_->bad())
      throw Error(ErrorCode::io_error, "read failed");
    if (!raw_ && phase_end_ && !second_phase_) {
      boundary_ = delivered_;
      second_phase_ = true;
      file_->clear();
      file_->seekg(0, std::ios::end);
      auto size = static_cast<std::uint64_t>(file_->tellg());
      open_phase(*phase_end_, size);
      in = in_.get();
      continue;
    }
    return 0;
  }
}

} // namespace detail
} // namespace revhist::dump
