#pragma once

#include <stdexcept>
#include <string>

namespace moco {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string &what) : std::runtime_error(what) {}
};

/// Bad user input: malformed genome, out-of-bounds value, unknown parameter.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Replay trace problems: missing file, malformed row, config not in trace.
class TraceError : public Error {
public:
  using Error::Error;
};

/// Ledger file problems: missing/corrupt header, duplicate id, write failure.
class LedgerError : public Error {
public:
  using Error::Error;
};

/// External evaluator protocol violations: bad JSON, broken invariants, timeout.
class ProtocolError : public Error {
public:
  using Error::Error;
};

} // namespace moco
