#pragma once

#include <stdexcept>
#include <string>

namespace llf {

// Base class for everything this library throws on purpose.  Callers that
// want a single catch-all can catch llf::Error; the CLI maps the subtypes
// to exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input shape: wrong column counts, unknown column names,
// dimension mismatches between a model and the data it is applied to.
struct SchemaError : Error {
  using Error::Error;
};

// Unparseable content: a CSV cell that is not a finite number, a model
// file that is not valid JSON or has the wrong format version.
struct ParseError : Error {
  using Error::Error;
};

// Structurally valid input that is too small or degenerate for the
// requested operation (e.g. fewer rows than a subsample needs).
struct SizeError : Error {
  using Error::Error;
};

// Inconsistent or out-of-range configuration values.
struct ConfigError : Error {
  using Error::Error;
};

// A linear system that cannot be solved at the requested penalty.
struct RankError : Error {
  using Error::Error;
};

// Propensity estimates too close to 0 or 1 for stable residualization.
struct OverlapError : Error {
  using Error::Error;
};

}  // namespace llf
