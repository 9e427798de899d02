#include "igeood/error.hpp"

namespace igeood {

const char* to_string(FormatErrorCode code) {
  switch (code) {
    case FormatErrorCode::manifest_missing: return "manifest_missing";
    case FormatErrorCode::manifest_parse: return "manifest_parse";
    case FormatErrorCode::missing_field: return "missing_field";
    case FormatErrorCode::wrong_type: return "wrong_type";
    case FormatErrorCode::unsupported_version: return "unsupported_version";
    case FormatErrorCode::unsupported_dtype: return "unsupported_dtype";
    case FormatErrorCode::invalid_dimension: return "invalid_dimension";
    case FormatErrorCode::file_missing: return "file_missing";
    case FormatErrorCode::size_mismatch: return "size_mismatch";
    case FormatErrorCode::label_out_of_range: return "label_out_of_range";
    case FormatErrorCode::invalid_path: return "invalid_path";
    case FormatErrorCode::io_failure: return "io_failure";
  }
  return "unknown";
}

}  // namespace igeood
