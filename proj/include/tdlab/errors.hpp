#pragma once

#include <stdexcept>
#include <string>

namespace tdlab {

// Base class for all library errors.
//
// ValidationError covers malformed inputs and parameter checks that fail
// before any computation starts; RuntimeFailure covers numerical failures
// discovered while solving or simulating. The CLI maps the two branches to
// exit codes 1 and 2.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ValidationError : Error {
  using Error::Error;
};
struct RuntimeFailure : Error {
  using Error::Error;
};

// ---- input validation ----
struct DimensionMismatch : ValidationError {
  using ValidationError::ValidationError;
};
struct RankDeficientFeatures : ValidationError {
  using ValidationError::ValidationError;
};
struct InadmissibleStepSize : ValidationError {
  using ValidationError::ValidationError;
};
struct AlphaOutOfRange : ValidationError {
  using ValidationError::ValidationError;
};
struct DenominatorNonPositive : ValidationError {
  using ValidationError::ValidationError;
};
struct AssumptionViolated : ValidationError {
  using ValidationError::ValidationError;
};
struct InvalidParameter : ValidationError {
  using ValidationError::ValidationError;
};
// Malformed configuration or data files (bad JSON, unknown keys, bad values).
struct SpecError : ValidationError {
  using ValidationError::ValidationError;
};

// ---- numerical / runtime ----
struct NotIrreducible : RuntimeFailure {
  using RuntimeFailure::RuntimeFailure;
};
struct SolverFailure : RuntimeFailure {
  using RuntimeFailure::RuntimeFailure;
};
struct SingularSystem : RuntimeFailure {
  using RuntimeFailure::RuntimeFailure;
};
struct TruncationTooSmall : RuntimeFailure {
  using RuntimeFailure::RuntimeFailure;
};
struct MaxIterExceeded : RuntimeFailure {
  using RuntimeFailure::RuntimeFailure;
};
struct EpochBufferIncomplete : RuntimeFailure {
  using RuntimeFailure::RuntimeFailure;
};
struct NonFiniteIterate : RuntimeFailure {
  using RuntimeFailure::RuntimeFailure;
};
struct RankDeficientAfterRetries : RuntimeFailure {
  using RuntimeFailure::RuntimeFailure;
};

}  // namespace tdlab
