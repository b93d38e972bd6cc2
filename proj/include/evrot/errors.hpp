#ifndef EVROT_ERRORS_HPP
#define EVROT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace evrot {

/// Base class for all evrot errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed or inconsistent input data (event files, trajectories, configs).
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& msg) : Error(msg) {}
};

/// Configuration field failed validation; message names the field.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// A numeric routine failed to converge within its iteration budget.
class ConvergenceError : public Error {
 public:
  explicit ConvergenceError(const std::string& msg) : Error(msg) {}
};

/// Input matrix is not a valid rotation, or a point is outside the domain
/// of a projection (behind the camera, at a pole).
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& msg) : Error(msg) {}
};

/// The normal equations are rank deficient; carries the null direction.
class DegenerateGeometryError : public Error {
 public:
  DegenerateGeometryError(const std::string& msg, double nx, double ny, double nz)
      : Error(msg), null_direction{nx, ny, nz} {}
  double null_direction[3];
};

/// Frame-to-map alignment could not be performed (e.g. no inliers).
class AlignmentError : public Error {
 public:
  explicit AlignmentError(const std::string& msg) : Error(msg) {}
};

}  // namespace evrot

#endif  // EVROT_ERRORS_HPP
