#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>

#include <boost/iostreams/filtering_stream.hpp>

#include "revhist/dump_parser.hpp"

namespace revhist::dump::detail {

// Offset of the first bzip2 stream header at or after `from`, or kEndOfData.
std::uint64_t next_bzip2_stream(const std::filesystem::path& path,
                                std::uint64_t from);

// Delivers decompressed bytes of a source starting at a compressed offset.
// For multistream input with a `phase_end`, the streams in [from, phase_end)
// are decoded first and the decoded length of that prefix is reported once
// it is known; decoding then continues past it.
class DecodedReader {
public:
  DecodedReader(const DumpSource& source, std::uint64_t from,
                std::optional<std::uint64_t> phase_end);
  ~DecodedReader();

  std::size_t read(char* dst, std::size_t n);

  // Decoded length of the [from, phase_end) prefix, once fully read.
  std::optional<std::uint64_t> phase_boundary() const { return boundary_; }

private:
  void open_phase(std::uint64_t begin, std::uint64_t end);
  void check_magic(std::istream& in, std::uint64_t at);

  DumpSource source_;
  std::shared_ptr<std::ifstream> file_;
  std::unique_ptr<boost::iostreams::filtering_istream> in_;
  std::istream* raw_ = nullptr;
  std::optional<std::uint64_t> phase_end_;
  std::optional<std::uint64_t> boundary_;
  std::uint64_t delivered_ = 0;
  bool second_phase_ = false;
};

} // namespace revhist::dump::detail
