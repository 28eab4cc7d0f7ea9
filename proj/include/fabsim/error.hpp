#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fabsim {

// Bad input: out-of-range parameters, unknown names, malformed configs.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed file contents. `line` is 1-based, 0 when not tied to a line.
class ParseError : public ValidationError {
public:
    ParseError(const std::string& what, std::size_t line)
        : ValidationError(line ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Numerical blow-up during a rollout.
class SimulationDiverged : public std::runtime_error {
public:
    explicit SimulationDiverged(std::size_t frame)
        : std::runtime_error("simulation diverged while producing frame " + std::to_string(frame)),
          frame_(frame) {}
    std::size_t frame() const noexcept { return frame_; }

private:
    std::size_t frame_;
};

class TrainingDiverged : public std::runtime_error {
public:
    explicit TrainingDiverged(std::size_t epoch)
        : std::runtime_error("training loss became non-finite at epoch " + std::to_string(epoch)),
          epoch_(epoch) {}
    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

class FitFailed : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fabsim
