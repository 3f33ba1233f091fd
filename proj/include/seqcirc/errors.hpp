#pragma once

#include <stdexcept>
#include <string>

namespace seqcirc {

/// Tensor shapes that do not compose (matmul inner dims, norm width, ...).
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Weight/vocab files that are missing, truncated or inconsistent.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid call arguments: context overflow, bad patch site, bad edge direction.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The model does not solve the task on this dataset (baseline logit diff <= 0).
class DatasetUnfitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Candidate generation ran out of attempts before reaching the requested size.
class GenerationExhaustedError : public std::runtime_error {
 public:
  GenerationExhaustedError(const std::string& what, double acceptance_rate)
      : std::runtime_error(what), acceptance_rate_(acceptance_rate) {}
  double acceptance_rate() const noexcept { return acceptance_rate_; }

 private:
  double acceptance_rate_;
};

/// Performance ratio requested against a zero clean logit difference.
class UndefinedScoreError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace seqcirc
