#pragma once

// SPDX-License-Identifier: Apache-2.0

#include <stdexcept>
#include <string>

namespace scoter {

// Error taxonomy. Every module throws one of these; the `what()` string
// carries the concrete context (offending shape, path, user id, ...).

struct ScoterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tensor shape disagreement (matmul inner dims, broadcast mismatch, ...).
struct ShapeError : ScoterError {
  using ScoterError::ScoterError;
};

/// NaN/Inf produced by a kernel, or fed into the optimizer.
struct NumericError : ScoterError {
  using ScoterError::ScoterError;
};

/// Zero-norm vector where a direction is required (cosine, InfoNCE rows).
struct DegenerateNormError : NumericError {
  using NumericError::NumericError;
};

/// Malformed or missing input data (CSV rows, JSONL records, raw dumps).
struct DataError : ScoterError {
  using ScoterError::ScoterError;
};

/// Provider transport failure after retries were exhausted.
struct TransportError : ScoterError {
  using ScoterError::ScoterError;
};

/// Provider answered, but not in the agreed wire format.
struct ProtocolError : ScoterError {
  using ScoterError::ScoterError;
};

/// Fixture provider has no entry for the requested key.
struct MissingFixtureError : ScoterError {
  using ScoterError::ScoterError;
};

/// Completion text that does not match the expected tag structure.
struct ParseError : ScoterError {
  using ScoterError::ScoterError;
};

/// Binary store or checkpoint failed its magic/version/length checks.
struct CorruptStoreError : ScoterError {
  using ScoterError::ScoterError;
};

/// Lookup of an id that the store/index does not contain.
struct NotFoundError : ScoterError {
  using ScoterError::ScoterError;
};

/// Invalid run configuration (unknown key, missing field, bad value).
struct ConfigError : ScoterError {
  using ScoterError::ScoterError;
};

}  // namespace scoter
