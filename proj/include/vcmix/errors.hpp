#pragma once

#include <stdexcept>
#include <string>

namespace vcmix {

/// Base class for all errors raised by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Dataset validation
struct DimensionMismatch : Error { using Error::Error; };
struct NonFiniteValue : Error { using Error::Error; };
struct DegenerateIndex : Error { using Error::Error; };

// Kernel handling
struct QuadratureFailure : Error { using Error::Error; };

// Local fitting
struct InsufficientLocalData : Error { using Error::Error; };
struct SingularSystem : Error { using Error::Error; };

// Variance components
struct NoUsableClusters : Error { using Error::Error; };
struct SingularCluster : Error { using Error::Error; };

// Inference
struct InvalidInterval : Error { using Error::Error; };
struct TooFewClusters : Error { using Error::Error; };

// I/O and configuration
struct SchemaError : Error { using Error::Error; };
struct InconsistentClusterCovariate : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

}  // namespace vcmix
