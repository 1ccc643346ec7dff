#pragma once

#include <stdexcept>
#include <string>

namespace amx {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or size disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

// Caller broke a precondition that is not a shape problem.
class ContractError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf observed in values or gradients.
class NumericError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IngestionError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class EvaluationError : public Error {
 public:
  using Error::Error;
};

class IterationError : public Error {
 public:
  using Error::Error;
};

class CorruptionError : public Error {
 public:
  using Error::Error;
};

}  // namespace amx
