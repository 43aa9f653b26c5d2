#include "mixmae/error.hpp"

namespace mixmae {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParameter: return "parameter error";
    case ErrorKind::kDimension: return "dimension error";
    case ErrorKind::kIndex: return "index error";
    case ErrorKind::kConfig: return "configuration error";
    case ErrorKind::kContract: return "contract error";
    case ErrorKind::kNumeric: return "numeric error";
    case ErrorKind::kIo: return "io error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kIntegrity: return "integrity error";
    case ErrorKind::kIngestion: return "ingestion error";
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kInternal: return "internal error";
  }
  return "unknown error";
}

void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace mixmae
