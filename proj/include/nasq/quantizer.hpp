// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "nasq/error.hpp"

namespace nasq {

class QuantizeError : public Error {
 public:
  using Error::Error;
};

// Linear fixed-point format. Unsigned (activations after ReLU) spans
// [0, 2^int_bits - dq]; signed (weights) spans [-2^(int_bits-1), 2^(int_bits-1) - dq],
// with dq = 2^-frac_bits in both cases.
//
// A signed format with no bits at all (0,0) holds only zero.
struct FixedPointFormat {
  bool is_signed = false;
  int int_bits = 0;
  int frac_bits = 0;

  static FixedPointFormat activation(int ai, int af) { return {false, ai, af}; }
  static FixedPointFormat weight(int wi, int wf) { return {true, wi, wf}; }

  int total_bits() const { return int_bits + frac_bits; }
  double range_b() const;
  double delta_q() const;

  // Integer code bounds: representable values are code * delta_q.
  std::int64_t min_code() const;
  std::int64_t max_code() const;

  bool operator==(const FixedPointFormat&) const = default;
};

struct FormatRange {
  double lo = 0.0;
  double hi = 0.0;
  double delta_q = 1.0;
};

FormatRange format_range(const FixedPointFormat& fmt);

// Code of the nearest grid point (ties away from zero), clipped to the
// format's code range. Throws QuantizeError for non-finite x.
std::int64_t quantize_code(double x, const FixedPointFormat& fmt);

double quantize(double x, const FixedPointFormat& fmt);

inline double quantize_unsigned(double x, int ai, int af) {
  return quantize(x, FixedPointFormat::activation(ai, af));
}

inline double quantize_signed(double x, int wi, int wf) {
  return quantize(x, FixedPointFormat::weight(wi, wf));
}

// True if x is exactly a representable value of fmt.
bool on_grid(double x, const FixedPointFormat& fmt);

}  // namespace nasq
