#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncre {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A vector's norm fell below the normalization threshold. Upstream this
/// usually means the representation has collapsed.
class DegenerateVectorError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

class EmptyPairingError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class LabelError : public Error {
 public:
  LabelError(std::vector<std::size_t> lines, const std::string& what)
      : Error(what), lines_(std::move(lines)) {}
  const std::vector<std::size_t>& lines() const noexcept { return lines_; }

 private:
  std::vector<std::size_t> lines_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Training aborted because representations degenerated. Carries the
/// diagnostics measured at the point of failure.
class CollapseError : public Error {
 public:
  CollapseError(const std::string& what, double effective_rank,
                std::size_t degenerate_rows)
      : Error(what),
        effective_rank_(effective_rank),
        degenerate_rows_(degenerate_rows) {}
  double effective_rank() const noexcept { return effective_rank_; }
  std::size_t degenerate_rows() const noexcept { return degenerate_rows_; }

 private:
  double effective_rank_;
  std::size_t degenerate_rows_;
};

}  // namespace ncre
