#pragma once

#include <stdexcept>
#include <string>

namespace nfiekf {

/// Raised when vectors or matrices do not match the group they target.
class DimensionError : public std::invalid_argument {
public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

/// Raised by the group logarithm when the rotation angle sits on the branch cut (±π).
class BranchCutError : public std::domain_error {
public:
  explicit BranchCutError(const std::string& what) : std::domain_error(what) {}
};

class NotPsdError : public std::domain_error {
public:
  explicit NotPsdError(const std::string& what) : std::domain_error(what) {}
};

/// The innovation covariance could not be inverted although a noisy update was requested.
class SingularInnovationError : public std::runtime_error {
public:
  explicit SingularInnovationError(const std::string& what) : std::runtime_error(what) {}
};

/// The homogeneous tail of an innovation did not cancel.
class MalformedConstraintError : public std::invalid_argument {
public:
  explicit MalformedConstraintError(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace nfiekf
