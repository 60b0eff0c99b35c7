#pragma once
//===----------------------------------------------------------------------===//
// Fixed-point codec. Client values are scaled to integers before encryption
// (default scale 100: cent precision for currency-sized values). Negative
// values ride the upper half of the plaintext ring: residues above M/2 decode
// as negative, which is exactly what additive folding of signed values needs.
//===----------------------------------------------------------------------===//

#include <cmath>
#include <cstdint>
#include <limits>

#include <boost/multiprecision/cpp_int.hpp>

#include "faforge/calc.hpp" // Rational, BigInt
#include "faforge/error.hpp"

namespace faforge {

// Round-half-away-from-zero scaling of a real to an integer.
inline int64_t encode_fixed(double x, int64_t scale) {
  if (scale <= 0)
    throw Error(ErrorCode::NonpositiveScale, "fixed-point scale must be positive");
  if (!std::isfinite(x))
    throw Error(ErrorCode::OutOfRange, "cannot encode a non-finite value");
  double scaled = x * static_cast<double>(scale);
  if (std::abs(scaled) >= 9.2e18) // conservative int64 guard
    throw Error(ErrorCode::Overflow, "value exceeds the fixed-point range");
  return std::llround(scaled);
}

// Signed integer -> ring residue in [0, modulus).
inline BigInt signed_to_residue(const BigInt& v, const BigInt& modulus) {
  BigInt r = v % modulus;
  if (r < 0) r += modulus;
  return r;
}

// Ring residue -> signed integer: residues above modulus/2 are negative.
inline BigInt residue_to_signed(const BigInt& r, const BigInt& modulus) {
  if (r < 0 || r >= modulus)
    throw Error(ErrorCode::OutOfRange, "residue outside [0, modulus)");
  if (r * 2 >= modulus) return r - modulus;
  return r;
}

// Exact rational value of a decoded residue.
inline Rational rational_from_residue(const BigInt& residue, int64_t scale,
                                      const BigInt& modulus) {
  if (scale <= 0)
    throw Error(ErrorCode::NonpositiveScale, "fixed-point scale must be positive");
  return Rational(residue_to_signed(residue, modulus), BigInt(scale));
}

// Convenience double view of the same decoding.
inline double decode_fixed(const BigInt& residue, int64_t scale, const BigInt& modulus) {
  return rational_from_residue(residue, scale, modulus).convert_to<double>();
}

} // namespace faforge
