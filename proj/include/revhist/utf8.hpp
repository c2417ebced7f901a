#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <string>
#include <string_view>

namespace revhist::utf8 {

inline constexpr char32_t kReplacement = 0xFFFD;

// Decodes the code point at `pos` and advances it. Invalid or truncated
// sequences decode to U+FFFD and consume exactly one byte.
char32_t decode(std::string_view text, std::size_t& pos, bool* invalid = nullptr);

void append(std::string& out, char32_t cp);

bool is_valid(std::string_view text);

// Streaming repair of UTF-8 input. Chunks may split a multi-byte sequence;
// the incomplete tail is carried into the next feed().
class Sanitizer {
public:
  // Appends the repaired form of `chunk` to `out`. With `final`, a carried
  // incomplete sequence is flushed as replacement characters.
  void feed(std::string_view chunk, std::string& out, bool final = false);

  std::uint64_t replacements() const { return replacements_; }

  // Maps an offset in the repaired output back to the raw input. Queries
  // must be nondecreasing.
  std::uint64_t original_offset(std::uint64_t repaired);

private:
  std::string carry_;
  std::uint64_t replacements_ = 0;
  std::uint64_t produced_ = 0;
  // Repaired-output offsets just past each emitted replacement character
  // that original_offset() has not consumed yet.
  std::deque<std::uint64_t> pending_shifts_;
  std::uint64_t consumed_shifts_ = 0;
};

} // namespace revhist::utf8
