#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace glda {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Bad configuration or arguments that violate an operation's preconditions.
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// Unreadable/unwritable files and malformed input data.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Loss of positive-definiteness and other unrecoverable numerical failures.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Point in time as a signed count of nanoseconds since the Unix epoch.
///
/// Month-long streams sampled at sub-microsecond resolution lose precision in
/// a double, so every timestamp in the library is an integer count.
struct Timestamp {
  std::int64_t ns = 0;

  static constexpr std::int64_t kPerSecond = 1'000'000'000;

  static Timestamp from_seconds(double s) {
    return Timestamp{static_cast<std::int64_t>(std::llround(s * kPerSecond))};
  }
  double seconds() const { return static_cast<double>(ns) / kPerSecond; }

  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

}  // namespace glda
