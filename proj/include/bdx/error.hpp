#pragma once

#include <stdexcept>
#include <string>

namespace bdx {

/// Failure categories. The CLI maps these onto process exit codes.
enum class ErrorKind {
  Config,            // bad parameters, inconsistent shapes between components
  Io,                // filesystem and format errors
  Data,              // empty or unusable training data
  MissingReference,  // no fault-free reference for a working condition
  Shape,             // tensor / sequence shape mismatch
  Bounds,            // index outside a valid range
  Degenerate,        // all-zero segment, normalization undefined
  Label,             // fault label outside [0, classes)
  RejectedReference, // faulty or non-training reference offered to the store
  Persistence,       // corrupt store on disk
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace bdx
