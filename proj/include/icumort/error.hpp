#pragma once

#include <stdexcept>
#include <string>

namespace icumort {

// Every failure raised by the library derives from Error so callers (and the
// CLI) can catch one type and still branch on the concrete category.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define ICUMORT_ERROR_TYPE(Name)          \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

ICUMORT_ERROR_TYPE(DimensionError);    // incompatible shapes or lengths
ICUMORT_ERROR_TYPE(OverflowError);     // non-finite value produced by a computation
ICUMORT_ERROR_TYPE(ContractError);     // caller violated an API precondition
ICUMORT_ERROR_TYPE(StateError);        // object used in the wrong lifecycle state
ICUMORT_ERROR_TYPE(InputError);        // invalid user data
ICUMORT_ERROR_TYPE(ParameterError);    // invalid numeric hyperparameter
ICUMORT_ERROR_TYPE(LikelihoodError);   // partial likelihood undefined (no events)
ICUMORT_ERROR_TYPE(DegeneracyError);   // singular design / information matrix
ICUMORT_ERROR_TYPE(ConfigError);       // invalid model or run configuration
ICUMORT_ERROR_TYPE(MetricError);       // metric undefined on the given data
ICUMORT_ERROR_TYPE(HarnessError);      // bootstrap harness could not complete
ICUMORT_ERROR_TYPE(FormatError);       // malformed file or schema violation

#undef ICUMORT_ERROR_TYPE

}  // namespace icumort
