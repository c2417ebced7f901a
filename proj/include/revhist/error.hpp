#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace revhist {

enum class ErrorCode {
  io_error,
  codec_mismatch,
  malformed_xml,
  missing_required_field,
  bad_timestamp,
  not_seekable,
  format_error,
  unknown_kind,
  index_closed,
  corrupt_payload,
  corrupt_index,
  unknown_segment,
  bad_range,
  unknown_field,
  bad_parameter,
  unknown_entity,
  config_parse_error,
  stage_failure,
  output_exists,
  usage,
};

// Machine-readable, kebab-case name used on the wire and in CLI output.
std::string_view to_string(ErrorCode code);

// Process exit status for a failure of this kind: 1 usage, 2 data, 3 I/O.
int exit_code(ErrorCode code);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

// Thrown by the XML layer; carries the byte offset of the violation in the
// decompressed input.
class MalformedXml : public Error {
public:
  MalformedXml(std::uint64_t offset, const std::string& what);

  std::uint64_t offset() const noexcept { return offset_; }

private:
  std::uint64_t offset_;
};

} // namespace revhist
