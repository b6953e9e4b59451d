#pragma once

#include <stdexcept>
#include <string>

namespace rmna {

// Base class for all errors raised by the toolkit.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input file (bad line, wrong field count); message carries the line number.
struct ParseError : Error {
    using Error::Error;
};

// A label was looked up in reuse mode but is not in the interning table,
// or an id is outside the vocabulary.
struct LookupError : Error {
    using Error::Error;
};

// Operation called in a state that forbids it (e.g. double inverse augmentation).
struct StateError : Error {
    using Error::Error;
};

// Incompatible tensor shapes.
struct ShapeError : Error {
    using Error::Error;
};

// NaN/Inf produced where a finite value is required.
struct NumericError : Error {
    using Error::Error;
};

// Negative sampling could not find a legal corruption within the attempt budget.
struct SamplingError : Error {
    using Error::Error;
};

// Rule metric undefined (zero head pairs or zero body pairs).
struct MetricError : Error {
    using Error::Error;
};

// Cross-stage inputs disagree (e.g. embeddings missing rows for the graph).
struct ConsistencyError : Error {
    using Error::Error;
};

// Bad configuration file or unknown key.
struct ConfigError : Error {
    using Error::Error;
};

// Checkpoint file unreadable, truncated, or of the wrong kind/vocabulary.
struct CheckpointError : Error {
    using Error::Error;
};

// A stage input artifact is missing; message names the subcommand that produces it.
struct DependencyError : Error {
    using Error::Error;
};

} // namespace rmna
