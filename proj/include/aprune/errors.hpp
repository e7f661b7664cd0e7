#ifndef APRUNE_ERRORS_HPP_
#define APRUNE_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace aprune {

// Dimension or wiring mismatch; message names the offending layer/site.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss during training; carries a diagnostic snapshot.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& msg, std::string snapshot)
      : std::runtime_error(msg), snapshot_(std::move(snapshot)) {}
  const std::string& snapshot() const { return snapshot_; }

 private:
  std::string snapshot_;
};

// A derivation left some layer with zero channels.
class CollapseError : public std::runtime_error {
 public:
  explicit CollapseError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace aprune

#endif  // APRUNE_ERRORS_HPP_
