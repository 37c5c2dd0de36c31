#pragma once

#include <stdexcept>
#include <string>

namespace babylab {

// Base class for every error raised by the library. The message is a single
// line so the CLI can print it verbatim.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Raised by the trainer when the loss becomes NaN or infinite.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t step, double loss)
      : Error("training diverged at step " + std::to_string(step) +
              " (loss=" + std::to_string(loss) + ")"),
        step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace babylab
