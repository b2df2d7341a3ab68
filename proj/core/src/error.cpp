#include "plgmi/error.hpp"

namespace plgmi {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument:
      return "invalid-argument";
    case ErrorKind::kData:
      return "data";
    case ErrorKind::kDependency:
      return "dependency";
    case ErrorKind::kNumerical:
      return "numerical";
    case ErrorKind::kIo:
      return "io";
  }
  return "unknown";
}

}  // namespace plgmi
