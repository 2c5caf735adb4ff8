#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tvae {

/// Root of every error the harness raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input data (dataset, sample, benchmark files). Maps to CLI exit code 1.
class DataError : public Error {
 public:
  using Error::Error;
};

/// The agent could not be reached or did not answer. Maps to CLI exit code 2.
class AgentError : public Error {
 public:
  using Error::Error;
};

class MalformedLine : public DataError {
 public:
  MalformedLine(std::size_t line_no, const std::string& detail)
      : DataError("line " + std::to_string(line_no) + ": " + detail), line_no_(line_no) {}
  std::size_t line_no() const noexcept { return line_no_; }

 private:
  std::size_t line_no_;
};

class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

class InvariantViolation : public DataError {
 public:
  InvariantViolation(std::string where, std::string field, const std::string& detail)
      : DataError("invariant violation in " + (where.empty() ? std::string("<record>") : where) + ", field '" +
                  field + "': " + detail),
        where_(std::move(where)),
        field_(std::move(field)) {}
  const std::string& where() const noexcept { return where_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string where_;
  std::string field_;
};

class MissingDims : public DataError {
 public:
  MissingDims(std::string id, std::size_t step)
      : DataError("absolute coordinates without screen_dims (trajectory '" + id + "', step " +
                  std::to_string(step) + ")"),
        id_(std::move(id)),
        step_(step) {}
  const std::string& id() const noexcept { return id_; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::string id_;
  std::size_t step_;
};

class NegativeCoordinate : public DataError {
 public:
  using DataError::DataError;
};

class EmptyDataset : public DataError {
 public:
  EmptyDataset() : DataError("dataset is empty") {}
};

class AlignmentMismatch : public DataError {
 public:
  using DataError::DataError;
};

class EmptySet : public DataError {
 public:
  explicit EmptySet(const std::string& what) : DataError("empty input set: " + what) {}
};

// Codec errors.

class ParseError : public Error {
 public:
  using Error::Error;
};

class MissingBlock : public ParseError {
 public:
  explicit MissingBlock(std::string name) : ParseError("missing block <" + name + ">"), name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

class MalformedActionJson : public ParseError {
 public:
  explicit MalformedActionJson(const std::string& detail) : ParseError("malformed action JSON: " + detail) {}
};

class UnknownVerification : public ParseError {
 public:
  explicit UnknownVerification(std::string token)
      : ParseError("unknown verification literal '" + token + "'"), token_(std::move(token)) {}
  const std::string& token() const noexcept { return token_; }

 private:
  std::string token_;
};

class UnknownActionKind : public ParseError {
 public:
  explicit UnknownActionKind(std::string token)
      : ParseError("unknown action kind '" + token + "'"), token_(std::move(token)) {}
  const std::string& token() const noexcept { return token_; }

 private:
  std::string token_;
};

class ModeInapplicable : public Error {
 public:
  ModeInapplicable(const std::string& mode, const std::string& kind)
      : Error("failure mode " + mode + " not applicable to action kind " + kind) {}
};

class BudgetExceeded : public Error {
 public:
  BudgetExceeded() : Error("transition called past the step budget") {}
};

class AgentUnavailable : public AgentError {
 public:
  explicit AgentUnavailable(const std::string& detail) : AgentError("agent unavailable: " + detail) {}
};

class Timeout : public AgentError {
 public:
  explicit Timeout(const std::string& detail) : AgentError("agent timed out: " + detail) {}
};

// Numeric errors (GRPO).

class NumericError : public Error {
 public:
  using Error::Error;
};

class GroupTooSmall : public NumericError {
 public:
  explicit GroupTooSmall(std::size_t n) : NumericError("group needs at least 2 outputs, got " + std::to_string(n)) {}
};

class LengthMismatch : public NumericError {
 public:
  using NumericError::NumericError;
};

class ShapeMismatch : public NumericError {
 public:
  using NumericError::NumericError;
};

class InvalidDistribution : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace tvae
