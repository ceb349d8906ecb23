#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace dnsp {

using cdouble = std::complex<double>;
using cvec = std::vector<cdouble>;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Thrown for invalid static configuration (bad N/P, non-power-of-two order, ...).
struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown for bad runtime inputs (dimension mismatches, out-of-range values).
struct input_error : std::runtime_error {
  explicit input_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when training diverges or a metric is undefined.
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw input_error(msg);
}

}  // namespace dnsp
