#pragma once

#include <stdexcept>
#include <string>

namespace sunbayes {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class DimensionMismatch : public Error {
 public:
  explicit DimensionMismatch(const std::string& what) : Error(what) {}
};

// Cholesky failed even after the jitter ladder was exhausted.
class NonPositiveDefinite : public Error {
 public:
  explicit NonPositiveDefinite(const std::string& what) : Error(what) {}
};

class RegionTooImprobable : public Error {
 public:
  explicit RegionTooImprobable(const std::string& what) : Error(what) {}
};

class MomentDimExceeded : public Error {
 public:
  explicit MomentDimExceeded(const std::string& what) : Error(what) {}
};

class EmptyIndexSet : public Error {
 public:
  explicit EmptyIndexSet(const std::string& what) : Error(what) {}
};

class RankDeficient : public Error {
 public:
  explicit RankDeficient(const std::string& what) : Error(what) {}
};

class NonBinaryResponse : public Error {
 public:
  explicit NonBinaryResponse(const std::string& what) : Error(what) {}
};

class NegativeResponse : public Error {
 public:
  explicit NegativeResponse(const std::string& what) : Error(what) {}
};

class NonPositiveVariance : public Error {
 public:
  explicit NonPositiveVariance(const std::string& what) : Error(what) {}
};

class SigmaDimMismatch : public Error {
 public:
  explicit SigmaDimMismatch(const std::string& what) : Error(what) {}
};

class FewerThanTwoCategories : public Error {
 public:
  explicit FewerThanTwoCategories(const std::string& what) : Error(what) {}
};

class MixedDimensions : public Error {
 public:
  explicit MixedDimensions(const std::string& what) : Error(what) {}
};

// Every EP site produced a non-positive-definite cavity in the same sweep.
class AllSitesSkipped : public Error {
 public:
  explicit AllSitesSkipped(const std::string& what) : Error(what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

}  // namespace sunbayes
