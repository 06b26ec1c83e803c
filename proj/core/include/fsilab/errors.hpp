#pragma once

#include <stdexcept>
#include <string>

namespace fsilab {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

class CompatibilityError : public Error {
 public:
  CompatibilityError(const std::string& what, std::string condition, double residual)
      : Error(what), condition_(std::move(condition)), residual_(residual) {}
  const std::string& condition() const { return condition_; }
  double residual() const { return residual_; }

 private:
  std::string condition_;
  double residual_;
};

class ClearanceError : public Error {
 public:
  ClearanceError(const std::string& what, double clearance) : Error(what), clearance_(clearance) {}
  double clearance() const { return clearance_; }

 private:
  double clearance_;
};

class ContractionError : public Error {
 public:
  using Error::Error;
};

}  // namespace fsilab
