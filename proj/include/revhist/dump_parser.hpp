#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "revhist/revision.hpp"

namespace revhist::dump {

enum class Compression { none, gzip, bzip2, bzip2_multistream };

std::string_view to_string(Compression c);
std::optional<Compression> parse_compression(std::string_view text);

// Guesses the codec from the leading magic bytes. A bzip2 file with more
// than one stream is reported as bzip2_multistream.
Compression detect_compression(const std::filesystem::path& path);

struct DumpSource {
  std::variant<std::filesystem::path, std::shared_ptr<std::istream>> location;
  Compression compression = Compression::none;
  // Only for seekable codecs (none, bzip2_multistream) on path locations.
  // The stream begins at the first page boundary at or after this offset.
  std::optional<std::uint64_t> start_offset;
  // Exclusive split end: pages whose boundary lies at or after this offset
  // belong to the next split.
  std::optional<std::uint64_t> end_offset;

  static DumpSource file(std::filesystem::path p,
                         Compression c = Compression::none)
  {
    return DumpSource{std::move(p), c, std::nullopt, std::nullopt};
  }
};

inline constexpr std::uint64_t kEndOfData =
  std::numeric_limits<std::uint64_t>::max();

struct StreamStats {
  std::uint64_t pages = 0;
  std::uint64_t revisions = 0;
  std::uint64_t invalid_utf8_replaced = 0;
  std::uint64_t decoded_bytes = 0;
};

class RevisionStream {
public:
  explicit RevisionStream(const DumpSource& source);
  ~RevisionStream();
  RevisionStream(RevisionStream&&) noexcept;
  RevisionStream& operator=(RevisionStream&&) noexcept;

  // Next event in dump order, or nullopt at end of stream.
  std::optional<DumpEvent> next();

  // Convenience: skips page headers.
  std::optional<RevisionRecord> next_revision();

  // Offset of the most recent page boundary: a raw file offset for
  // uncompressed input, a decompressed offset otherwise.
  std::uint64_t current_page_offset() const;

  const StreamStats& stats() const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

RevisionStream open_dump(const DumpSource& source);

// Parses one `<revision>` element belonging to `page`.
RevisionRecord parse_revision(std::string_view fragment, const PageHeader& page);

// Uncompressed: offset of the first `<page>` tag at or after `from`.
// bzip2-multistream: compressed offset of the first stream at or after
// `from` that contains a `<page>` tag. kEndOfData when there is none.
std::uint64_t seek_page_boundary(const DumpSource& source, std::uint64_t from);

} // namespace revhist::dump
