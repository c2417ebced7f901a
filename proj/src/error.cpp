#include "revhist/error.hpp"

namespace revhist {

std::string_view to_string(ErrorCode code)
{
  switch (code) {
    case ErrorCode::io_error: return "io-error";
    case ErrorCode::codec_mismatch: return "codec-mismatch";
    case ErrorCode::malformed_xml: return "malformed-xml";
    case ErrorCode::missing_required_field: return "missing-required-field";
    case ErrorCode::bad_timestamp: return "bad-timestamp";
    case ErrorCode::not_seekable: return "not-seekable";
    case ErrorCode::format_error: return "format-error";
    case ErrorCode::unknown_kind: return "unknown-kind";
    case ErrorCode::index_closed: return "index-closed";
    case ErrorCode::corrupt_payload: return "corrupt-payload";
    case ErrorCode::corrupt_index: return "corrupt-index";
    case ErrorCode::unknown_segment: return "unknown-segment";
    case ErrorCode::bad_range: return "bad-range";
    case ErrorCode::unknown_field: return "unknown-field";
    case ErrorCode::bad_parameter: return "bad-parameter";
    case ErrorCode::unknown_entity: return "unknown-entity";
    case ErrorCode::config_parse_error: return "config-parse-error";
    case ErrorCode::stage_failure: return "stage-failure";
    case ErrorCode::output_exists: return "output-exists";
    case ErrorCode::usage: return "usage";
  }
  return "unknown";
}

int exit_code(ErrorCode code)
{
  switch (code) {
    case ErrorCode::usage:
    case ErrorCode::config_parse_error:
    case ErrorCode::bad_parameter:
    case ErrorCode::bad_range:
    case ErrorCode::unknown_field:
    case ErrorCode::unknown_kind:
    case ErrorCode::output_exists:
      return 1;
    case ErrorCode::io_error:
    case ErrorCode::not_seekable:
      return 3;
    default:
      return 2;
  }
}

Error::Error(ErrorCode code, const std::string& message)
  : std::runtime_error(std::string(to_string(code)) + ": " + message),
    code_(code)
{
}

MalformedXml::MalformedXml(std::uint64_t offset, const std::string& what)
  : Error(ErrorCode::malformed_xml,
          what + " at byte " + std::to_string(offset)),
    offset_(offset)
{
}

} // namespace revhist
