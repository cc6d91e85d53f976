#pragma once

#include <cfenv>
#include <cmath>
#include <string>

#include "mits/util.hpp"

namespace mits {

// Fixed-point decimal formatting with round-half-to-even tie breaking.
// std::nearbyint honors the default FE_TONEAREST mode, which is ties-to-even.
inline std::string format_fixed(double v, int decimals) {
  if (!std::isfinite(v)) throw Error("cannot format non-finite value");
  double scale = 1.0;
  for (int i = 0; i < decimals; ++i) scale *= 10.0;
  double scaled = v * scale;
  if (std::fabs(scaled) > 9e15) throw Error("value out of formatting range");
  long long units = static_cast<long long>(std::nearbyint(scaled));
  bool neg = units < 0;
  unsigned long long mag = neg ? 0ull - static_cast<unsigned long long>(units)
                               : static_cast<unsigned long long>(units);
  std::string digits = std::to_string(mag);
  if (digits.size() <= static_cast<size_t>(decimals))
    digits.insert(0, static_cast<size_t>(decimals) + 1 - digits.size(), '0');
  std::string out;
  if (neg) out += '-';
  out.append(digits, 0, digits.size() - static_cast<size_t>(decimals));
  if (decimals > 0) {
    out += '.';
    out.append(digits, digits.size() - static_cast<size_t>(decimals), std::string::npos);
  }
  return out;
}

// Observation times render as e.g. "0.88" (two decimals, full precision kept
// internally; formatting happens only at render time).
inline std::string format_hours(double t) { return format_fixed(t, 2); }

}  // namespace mits
