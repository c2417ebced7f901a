#include "revhist/utf8.hpp"

namespace revhist::utf8 {

namespace {

// Expected sequence length from the lead byte; 0 for an invalid lead.
int sequence_length(unsigned char lead)
{
  if (lead < 0x80)
    return 1;
  if (lead >= 0xC2 && lead <= 0xDF)
    return 2;
  if (lead >= 0xE0 && lead <= 0xEF)
    return 3;
  if (lead >= 0xF0 && lead <= 0xF4)
    return 4;
  return 0;
}

bool continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

// Validates the sequence at `p` of `len` bytes; returns the code point or
// -1 for overlongs, surrogates and out-of-range values.
long validate(const unsigned char* p, int len)
{
  for (int i = 1; i < len; ++i)
    if (!continuation(p[i]))
      return -1;
  switch (len) {
    case 1:
      return p[0];
    case 2:
      return ((p[0] & 0x1F) << 6) | (p[1] & 0x3F);
    case 3: {
      long cp = ((p[0] & 0x0F) << 12) | ((p[1] & 0x3F) << 6) | (p[2] & 0x3F);
      if (cp < 0x800 || (cp >= 0xD800 && cp <= 0xDFFF))
        return -1;
      return cp;
    }
    case 4: {
      long cp = ((p[0] & 0x07) << 18) | ((p[1] & 0x3F) << 12) |
                ((p[2] & 0x3F) << 6) | (p[3] & 0x3F);
      if (cp < 0x10000 || cp > 0x10FFFF)
        return -1;
      return cp;
    }
  }
  return -1;
}

} // namespace

char32_t decode(std::string_view text, std::size_t& pos, bool* invalid)
{
  auto p = reinterpret_cast<const unsigned char*>(text.data()) + pos;
  int len = sequence_length(*p);
  long cp = -1;
  if (len > 0 && pos + len <= text.size())
    cp = validate(p, len);
  if (cp < 0) {
    ++pos;
    if (invalid)
      *invalid = true;
    return kReplacement;
  }
  pos += len;
  if (invalid)
    *invalid = false;
  return static_cast<char32_t>(cp);
}

void append(std::string& out, char32_t cp)
{
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

bool is_valid(std::string_view text)
{
  std::size_t pos = 0;
  while (pos < text.size()) {
    if (static_cast<unsigned char>(text[pos]) < 0x80) {
      ++pos;
      continue;
    }
    bool bad = false;
    decode(text, pos, &bad);
    if (bad)
      return false;
  }
  return true;
}

void Sanitizer::feed(std::string_view chunk, std::string& out, bool final)
{
  std::string joined;
  std::string_view data = chunk;
  if (!carry_.empty()) {
    joined = carry_;
    joined.append(chunk);
    data = joined;
    carry_.clear();
  }
  const std::size_t out_start = out.size();
  out.reserve(out.size() + data.size());
  std::size_t pos = 0;
  std::size_t run = 0;
  while (pos < data.size()) {
    auto c = static_cast<unsigned char>(data[pos]);
    if (c < 0x80) {
      ++pos;
      continue;
    }
    int len = sequence_length(c);
    if (len > 0 && pos + len > data.size() && !final) {
      // Possibly a sequence split across chunks: hold back if every byte
      // seen so far is a continuation.
      bool prefix_ok = true;
      for (std::size_t i = pos + 1; i < data.size(); ++i)
        prefix_ok = prefix_ok && continuation(static_cast<unsigned char>(data[i]));
      if (prefix_ok) {
        out.append(data.substr(run, pos - run));
        carry_.assign(data.substr(pos));
        produced_ += out.size() - out_start;
        return;
      }
    }
    std::size_t next = pos;
    bool bad = false;
    decode(data, next, &bad);
    if (bad) {
      out.append(data.substr(run, pos - run));
      append(out, kReplacement);
      ++replacements_;
      pending_shifts_.push_back(produced_ + (out.size() - out_start));
      run = next;
    }
    pos = next;
  }
  out.append(data.substr(run));
  produced_ += out.size() - out_start;
}

std::uint64_t Sanitizer::original_offset(std::uint64_t repaired)
{
  while (!pending_shifts_.empty() && pending_shifts_.front() <= repaired) {
    pending_shifts_.pop_front();
    ++consumed_shifts_;
  }
  return repaired - 2 * consumed_shifts_;
}

} // namespace revhist::utf8
