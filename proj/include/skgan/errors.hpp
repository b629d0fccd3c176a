#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace skgan {

// Shape mismatch between operands. `axis` names the offending dimension
// ("n", "c", "h", "w", "bias", "in_features", ...).
class DimensionError : public std::invalid_argument {
 public:
  DimensionError(std::string axis, const std::string& what)
      : std::invalid_argument(what), axis_(std::move(axis)) {}
  const std::string& axis() const { return axis_; }

 private:
  std::string axis_;
};

// A network specification whose layers do not chain.
class BuildError : public std::invalid_argument {
 public:
  BuildError(std::size_t boundary, const std::string& what)
      : std::invalid_argument(what), boundary_(boundary) {}
  // Index of the layer whose input could not be produced by its predecessor.
  std::size_t boundary() const { return boundary_; }

 private:
  std::size_t boundary_;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. `offset` is the byte position where parsing failed.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t offset, const std::string& what)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace skgan
