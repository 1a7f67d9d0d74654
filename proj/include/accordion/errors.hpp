#pragma once

#include <stdexcept>
#include <string>

namespace accordion {

// Error taxonomy. Every failure the library raises deliberately is one of
// these, so callers (and the CLI) can map them onto exit codes without
// string-matching messages.

// Malformed request against a well-formed object: bad shapes, out-of-range
// depth configs, invalid hyper-parameters.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// Shape mismatch between tensors in a kernel call.
class ShapeError : public ConfigError {
 public:
  explicit ShapeError(const std::string& what) : ConfigError(what) {}
};

// No depth config satisfies the stated resource budget.
class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

// Peer unreachable / connection failed or dropped.
class UnreachableError : public std::runtime_error {
 public:
  explicit UnreachableError(const std::string& what) : std::runtime_error(what) {}
};

// Checksum mismatch in stored or transferred bytes.
class IntegrityError : public std::runtime_error {
 public:
  explicit IntegrityError(const std::string& what) : std::runtime_error(what) {}
};

// Unsupported container/protocol format version.
class VersionError : public std::runtime_error {
 public:
  explicit VersionError(const std::string& what) : std::runtime_error(what) {}
};

// Peer violated the transfer protocol (unexpected message, bad frame).
class ProtocolError : public std::runtime_error {
 public:
  explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

// Lookup of a model / chunk / table entry that does not exist.
class NotFoundError : public std::runtime_error {
 public:
  explicit NotFoundError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace accordion
