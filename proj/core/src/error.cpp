#include "mtl/error.hpp"

namespace mtl {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kNumerical: return "numerical";
    case ErrorCode::kChecksum: return "checksum";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kDiverged: return "diverged";
  }
  return "unknown";
}

}  // namespace mtl
