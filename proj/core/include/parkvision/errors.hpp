#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pv {

// Base of every error the library throws. Catch this at process boundaries.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor / layer shape disagreement.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Caller supplied a value outside the accepted domain.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A model spec, experiment plan or config file is inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Optimisation produced non-finite values.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t iteration)
      : Error(what), iteration_(iteration) {}
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

// Model file could not be parsed.
class ParseError : public Error {
 public:
  enum class Kind { kBadMagic, kUnsupportedVersion, kTruncated, kTrailingData, kInvalidSpec };
  ParseError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Image bytes that are neither a decodable PNG nor JPEG.
class DecodeError : public Error {
 public:
  using Error::Error;
};

// A dataset image could not be loaded; path() names the file.
class LoadError : public Error {
 public:
  LoadError(const std::string& path, const std::string& why)
      : Error("cannot load '" + path + "': " + why), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class EmptyIndexError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class CropError : public Error {
 public:
  using Error::Error;
};

class FetchError : public Error {
 public:
  enum class Kind { kTimeout, kConnection, kHttpStatus, kDecode, kInvalidUrl };
  FetchError(Kind kind, const std::string& what, int http_status = 0)
      : Error(what), kind_(kind), http_status_(http_status) {}
  Kind kind() const noexcept { return kind_; }
  int http_status() const noexcept { return http_status_; }

 private:
  Kind kind_;
  int http_status_;
};

const char* to_string(FetchError::Kind kind) noexcept;

}  // namespace pv
