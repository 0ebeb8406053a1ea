// SPDX-License-Identifier: Apache-2.0
#include "nasq/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace nasq {
namespace {

void check_format(const FixedPointFormat& fmt) {
  // Codes must stay exact in both int64 and double.
  if (fmt.int_bits < 0 || fmt.frac_bits < 0 || fmt.total_bits() > 52) {
    throw QuantizeError("invalid fixed-point format (" + std::to_string(fmt.int_bits) + "," +
                        std::to_string(fmt.frac_bits) + ")");
  }
}

}  // namespace

double FixedPointFormat::range_b() const {
  return std::ldexp(1.0, is_signed ? int_bits - 1 : int_bits);
}

double FixedPointFormat::delta_q() const { return std::ldexp(1.0, -frac_bits); }

std::int64_t FixedPointFormat::min_code() const {
  if (!is_signed || total_bits() == 0) return 0;
  return -(std::int64_t{1} << (total_bits() - 1));
}

std::int64_t FixedPointFormat::max_code() const {
  if (!is_signed) return (std::int64_t{1} << total_bits()) - 1;
  if (total_bits() == 0) return 0;
  return (std::int64_t{1} << (total_bits() - 1)) - 1;
}

FormatRange format_range(const FixedPointFormat& fmt) {
  check_format(fmt);
  const double dq = fmt.delta_q();
  return {static_cast<double>(fmt.min_code()) * dq, static_cast<double>(fmt.max_code()) * dq, dq};
}

std::int64_t quantize_code(double x, const FixedPointFormat& fmt) {
  check_format(fmt);
  if (!std::isfinite(x)) {
    throw QuantizeError("cannot quantize a non-finite value");
  }
  // Scaling by a power of two is exact; std::round breaks ties away from zero.
  const double scaled = std::round(std::ldexp(x, fmt.frac_bits));
  const double lo = static_cast<double>(fmt.min_code());
  const double hi = static_cast<double>(fmt.max_code());
  return static_cast<std::int64_t>(std::clamp(scaled, lo, hi));
}

double quantize(double x, const FixedPointFormat& fmt) {
  return std::ldexp(static_cast<double>(quantize_code(x, fmt)), -fmt.frac_bits);
}

bool on_grid(double x, const FixedPointFormat& fmt) {
  check_format(fmt);
  if (!std::isfinite(x)) return false;
  const double scaled = std::ldexp(x, fmt.frac_bits);
  if (scaled != std::trunc(scaled)) return false;
  return scaled >= static_cast<double>(fmt.min_code()) &&
         scaled <= static_cast<double>(fmt.max_code());
}

}  // namespace nasq
