#include "xmodal/errors.hpp"

namespace xmodal {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kArgument: return "E_ARG";
    case ErrorCode::kDecode: return "E_DECODE";
    case ErrorCode::kParse: return "E_PARSE";
    case ErrorCode::kShape: return "E_SHAPE";
    case ErrorCode::kConfig: return "E_CONFIG";
    case ErrorCode::kCorruptCheckpoint: return "E_CHECKPOINT";
    case ErrorCode::kMining: return "E_MINING";
    case ErrorCode::kDiverged: return "E_DIVERGED";
    case ErrorCode::kUndefinedMetric: return "E_METRIC";
    case ErrorCode::kIo: return "E_IO";
  }
  return "E_UNKNOWN";
}

}  // namespace xmodal
