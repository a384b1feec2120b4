#pragma once

#include <stdexcept>
#include <string>

namespace cpath {

/// Base of every error thrown by the library. `kind()` is a stable
/// snake_case tag used by the CLI for machine-parsable error lines.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define CPATH_DEFINE_ERROR(Name, tag)                                   \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(tag, what) {}        \
  };

CPATH_DEFINE_ERROR(DimensionError, "dimension_error")
CPATH_DEFINE_ERROR(ContractError, "contract_error")
CPATH_DEFINE_ERROR(NumericError, "numeric_error")
CPATH_DEFINE_ERROR(TrainingError, "training_error")
CPATH_DEFINE_ERROR(FormatError, "format_error")
CPATH_DEFINE_ERROR(CapabilityError, "capability_error")
CPATH_DEFINE_ERROR(DegeneratePathError, "degenerate_path_error")
CPATH_DEFINE_ERROR(RejectedPairError, "rejected_pair_error")
CPATH_DEFINE_ERROR(IoError, "io_error")
CPATH_DEFINE_ERROR(ConfigError, "config_error")
CPATH_DEFINE_ERROR(SamplingError, "sampling_error")

#undef CPATH_DEFINE_ERROR

}  // namespace cpath
