#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sonoloc {

// Domain failures. Anything derived from Error maps to CLI exit code 1;
// IoError maps to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class DegenerateGeometryError : public Error {
 public:
  using Error::Error;
};

class ProjectionIncompleteError : public Error {
 public:
  ProjectionIncompleteError(std::vector<std::size_t> missing);
  const std::vector<std::size_t>& missing() const { return missing_; }

 private:
  std::vector<std::size_t> missing_;
};

class TrainingDivergedError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class GridMismatchError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
  ParseError(const std::string& what, std::size_t line);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_ = 0;
};

class UnsupportedVersionError : public ParseError {
 public:
  using ParseError::ParseError;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sonoloc
