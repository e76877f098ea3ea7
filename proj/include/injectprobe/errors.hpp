#pragma once

#include <stdexcept>
#include <string>

namespace injectprobe {

/// Base class for every error this library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Configuration / input errors (CLI exit code 2).

class ParseError : public Error {
 public:
  using Error::Error;
};

/// Schema violation with the path of the offending field, e.g.
/// "params_grid.temperatures[0]".
class SchemaError : public Error {
 public:
  SchemaError(std::string path, const std::string& message)
      : Error(path.empty() ? message : path + ": " + message),
        path_(std::move(path)) {}

  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class DelimiterCollision : public Error {
 public:
  using Error::Error;
};

class MalformedDelimiters : public Error {
 public:
  using Error::Error;
};

class EmptyFactor : public Error {
 public:
  using Error::Error;
};

class UnresolvedReference : public Error {
 public:
  using Error::Error;
};

class MissingTemplate : public Error {
 public:
  using Error::Error;
};

class InconsistentRecord : public Error {
 public:
  using Error::Error;
};

class DuplicateCase : public Error {
 public:
  using Error::Error;
};

class UnknownCase : public Error {
 public:
  using Error::Error;
};

class AxisMismatch : public Error {
 public:
  using Error::Error;
};

// Backend errors (CLI exit code 3).

class NetworkError : public Error {
 public:
  using Error::Error;
};

class RateLimited : public Error {
 public:
  using Error::Error;
};

class AuthError : public Error {
 public:
  using Error::Error;
};

class CacheMiss : public Error {
 public:
  using Error::Error;
};

// Storage errors (CLI exit code 4).

class StorageError : public Error {
 public:
  using Error::Error;
};

}  // namespace injectprobe
