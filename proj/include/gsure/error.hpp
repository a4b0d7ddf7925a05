#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gsure {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// A forward evaluation produced NaN or Inf. Carries the offending node index.
class NonFiniteError : public Error {
 public:
  NonFiniteError(const std::string& what, std::size_t node)
      : Error(what), node_(node) {}
  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t node_;
};

// A diffusion timestep below the PSD-feasible range, or a schedule that never
// becomes feasible for the measurement noise.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

// Invalid construction arguments (probabilities, acceleration factors, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long step) : Error(what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

}  // namespace gsure
