#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cbompc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Objective (or loss) produced a non-finite value for a given agent.
class EvaluationError : public Error {
 public:
  EvaluationError(std::size_t agent, const std::string& what)
      : Error(what + " (agent " + std::to_string(agent) + ")"), agent_(agent) {}
  std::size_t agent() const noexcept { return agent_; }

 private:
  std::size_t agent_;
};

/// Argument outside the domain of a model function (e.g. q_c <= 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Time integration produced a non-finite state.
class IntegrationError : public Error {
 public:
  IntegrationError(std::size_t substep, const std::string& what)
      : Error(what + " (sub-step " + std::to_string(substep) + ")"), substep_(substep) {}
  std::size_t substep() const noexcept { return substep_; }

 private:
  std::size_t substep_;
};

/// A plant step inside a horizon rollout failed.
class RolloutError : public Error {
 public:
  RolloutError(std::size_t step, const std::string& what)
      : Error(what + " (rollout step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Invalid experiment configuration; key() names the offending entry.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace cbompc
