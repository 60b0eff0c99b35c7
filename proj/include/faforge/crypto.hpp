#pragma once
//===----------------------------------------------------------------------===//
// Additively homomorphic encryption.
//
// The real scheme is Paillier with the usual g = n + 1 simplification:
//
//   keygen   p, q prime, n = p*q, lambda = lcm(p-1, q-1), mu = lambda^-1 mod n
//   encrypt  c = (1 + m*n) * r^n mod n^2          (random r coprime to n)
//   decrypt  m = L(c^lambda mod n^2) * mu mod n,  L(u) = (u - 1) / n
//   add      c1 (+) c2 = c1 * c2 mod n^2
//
// A "mock" scheme over the 2^64 ring sits behind the same interface for fast
// simulation runs where cryptographic cost is irrelevant; its ciphertexts are
// the residues themselves and (+) is plain modular addition. Both schemes tag
// ciphertexts with a key fingerprint so values from different keys can never
// be folded together silently.
//===----------------------------------------------------------------------===//

#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <boost/multiprecision/cpp_int.hpp>
#include <boost/multiprecision/miller_rabin.hpp>
#include <nlohmann/json.hpp>

#include "faforge/error.hpp"
#include "faforge/fixedpoint.hpp"
#include "faforge/util.hpp"

namespace faforge {

enum class AheScheme { Paillier, Mock };

inline const char* to_string(AheScheme s) {
  return s == AheScheme::Paillier ? "paillier" : "mock";
}

struct PublicKey {
  AheScheme scheme = AheScheme::Paillier;
  unsigned bits = 0;       // modulus size (Paillier)
  BigInt n;                // plaintext modulus
  BigInt n_squared;        // ciphertext modulus (Paillier)
  std::string fingerprint; // fnv1a-64 over the scheme/modulus

  bool operator==(const PublicKey&) const = default;
};

struct SecretKey {
  BigInt lambda;
  BigInt mu;
  bool operator==(const SecretKey&) const = default;
};

struct KeyPair {
  PublicKey pk;
  SecretKey sk;
};

struct Ciphertext {
  BigInt value;
  std::string key_fingerprint;
};

namespace detail {

inline std::string key_fingerprint(AheScheme scheme, const BigInt& n) {
  std::string tag = std::string(to_string(scheme)) + ":" + n.str(0, std::ios_base::hex);
  return hex64(fnv1a64(tag));
}

// Uniform integer in [0, bound) from a 64-bit generator, by rejection.
inline BigInt random_below(std::mt19937_64& rng, const BigInt& bound) {
  if (bound <= 0) throw Error(ErrorCode::InvalidArgument, "random_below needs a positive bound");
  unsigned bits = boost::multiprecision::msb(bound) + 1;
  unsigned words = (bits + 63) / 64;
  while (true) {
    BigInt x = 0;
    for (unsigned i = 0; i < words; ++i) x = (x << 64) | BigInt(rng());
    x >>= (words * 64 - bits);
    if (x < bound) return x;
  }
}

inline const std::vector<uint32_t>& small_primes() {
  static const std::vector<uint32_t> primes = [] {
    std::vector<uint32_t> out;
    std::vector<bool> sieve(2000, true);
    for (uint32_t i = 2; i < sieve.size(); ++i) {
      if (!sieve[i]) continue;
      out.push_back(i);
      for (uint32_t j = i * 2; j < sieve.size(); j += i) sieve[j] = false;
    }
    return out;
  }();
  return primes;
}

inline BigInt random_prime(std::mt19937_64& rng, unsigned bits) {
  if (bits < 8) throw Error(ErrorCode::InvalidArgument, "prime size too small");
  while (true) {
    BigInt c = random_below(rng, BigInt(1) << bits);
    // top two bits set (so p*q has exactly 2*bits bits), odd
    c |= (BigInt(1) << (bits - 1)) | (BigInt(1) << (bits - 2)) | 1;
    bool composite = false;
    for (uint32_t p : small_primes()) {
      if (c == p) { composite = false; break; }
      if (c % p == 0) { composite = true; break; }
    }
    if (composite) continue;
    if (boost::multiprecision::miller_rabin_test(c, 25, rng)) return c;
  }
}

// Extended Euclid modular inverse; throws when gcd(a, m) != 1.
inline BigInt mod_inverse(const BigInt& a, const BigInt& m) {
  BigInt old_r = a % m, r = m;
  if (old_r < 0) old_r += m;
  BigInt old_s = 1, s = 0;
  while (r != 0) {
    BigInt q = old_r / r;
    BigInt tmp = old_r - q * r;
    old_r = r;
    r = tmp;
    tmp = old_s - q * s;
    old_s = s;
    s = tmp;
  }
  if (old_r != 1)
    throw Error(ErrorCode::InvalidArgument, "modular inverse does not exist");
  if (old_s < 0) old_s += m;
  return old_s;
}

inline BigInt big_from_hex(const std::string& hex, const std::string& what) {
  if (hex.empty()) throw Error(ErrorCode::ParseError, what + " is empty");
  try {
    return BigInt("0x" + hex);
  } catch (const std::exception&) {
    throw Error(ErrorCode::ParseError, what + " is not valid hex");
  }
}

} // namespace detail

// Paillier key generation. Deterministic for a given rng state.
inline KeyPair keygen(unsigned bits, std::mt19937_64& rng) {
  if (bits < 16 || bits % 2 != 0)
    throw Error(ErrorCode::InvalidArgument,
                "key size must be an even number of bits, at least 16");
  while (true) {
    BigInt p = detail::random_prime(rng, bits / 2);
    BigInt q = detail::random_prime(rng, bits / 2);
    if (p == q) continue;
    BigInt n = p * q;
    BigInt phi = (p - 1) * (q - 1);
    if (boost::multiprecision::gcd(n, phi) != 1) continue;
    KeyPair kp;
    kp.pk.scheme = AheScheme::Paillier;
    kp.pk.bits = bits;
    kp.pk.n = n;
    kp.pk.n_squared = n * n;
    kp.pk.fingerprint = detail::key_fingerprint(AheScheme::Paillier, n);
    kp.sk.lambda = boost::multiprecision::lcm(p - 1, q - 1);
    kp.sk.mu = detail::mod_inverse(kp.sk.lambda, n);
    return kp;
  }
}

// Identity scheme over the 2^64 ring: same interface, no cryptography.
inline KeyPair mock_keypair() {
  KeyPair kp;
  kp.pk.scheme = AheScheme::Mock;
  kp.pk.bits = 64;
  kp.pk.n = BigInt(1) << 64;
  kp.pk.n_squared = kp.pk.n;
  kp.pk.fingerprint = detail::key_fingerprint(AheScheme::Mock, kp.pk.n);
  kp.sk.lambda = 0;
  kp.sk.mu = 0;
  return kp;
}

// Encrypts a residue in [0, n).
inline Ciphertext encrypt(const PublicKey& pk, const BigInt& m, std::mt19937_64& rng) {
  if (m < 0 || m >= pk.n)
    throw Error(ErrorCode::OutOfRange, "plaintext outside [0, n)");
  if (pk.scheme == AheScheme::Mock) return {m, pk.fingerprint};
  BigInt r;
  do {
    r = detail::random_below(rng, pk.n);
  } while (r == 0 || boost::multiprecision::gcd(r, pk.n) != 1);
  // g = n + 1  =>  g^m = 1 + m*n (mod n^2)
  BigInt gm = (1 + m * pk.n) % pk.n_squared;
  BigInt rn = boost::multiprecision::powm(r, pk.n, pk.n_squared);
  return {(gm * rn) % pk.n_squared, pk.fingerprint};
}

// Encrypts a signed fixed-point integer by mapping it onto the ring.
inline Ciphertext encrypt_signed(const PublicKey& pk, int64_t v, std::mt19937_64& rng) {
  // leave headroom: |v| must stay below n/2 so the signed decoding is unambiguous
  BigInt mag = v < 0 ? BigInt(-(v + 1)) + 1 : BigInt(v);
  if (mag * 2 >= pk.n)
    throw Error(ErrorCode::OutOfRange, "plaintext magnitude exceeds n/2");
  return encrypt(pk, signed_to_residue(BigInt(v), pk.n), rng);
}

inline BigInt decrypt(const KeyPair& kp, const Ciphertext& c) {
  if (c.key_fingerprint != kp.pk.fingerprint)
    throw Error(ErrorCode::FingerprintMismatch,
                "ciphertext was produced under a different key");
  if (c.value < 0 || c.value >= kp.pk.n_squared)
    throw Error(ErrorCode::OutOfRange, "ciphertext outside [0, n^2)");
  if (kp.pk.scheme == AheScheme::Mock) return c.value;
  BigInt u = boost::multiprecision::powm(c.value, kp.sk.lambda, kp.pk.n_squared);
  BigInt l = (u - 1) / kp.pk.n;
  return (l * kp.sk.mu) % kp.pk.n;
}

// Homomorphic addition: the ciphertext of the sum of the plaintexts.
inline Ciphertext add_cipher(const PublicKey& pk, const Ciphertext& a, const Ciphertext& b) {
  if (a.key_fingerprint != b.key_fingerprint || a.key_fingerprint != pk.fingerprint)
    throw Error(ErrorCode::FingerprintMismatch,
                "cannot fold ciphertexts from different keys");
  if (pk.scheme == AheScheme::Mock) return {(a.value + b.value) % pk.n, pk.fingerprint};
  return {(a.value * b.value) % pk.n_squared, pk.fingerprint};
}

// ---- key serialization -------------------------------------------------------

inline nlohmann::json keys_to_json(const KeyPair& kp) {
  nlohmann::json j;
  j["scheme"] = to_string(kp.pk.scheme);
  j["bits"] = kp.pk.bits;
  j["n"] = kp.pk.n.str(0, std::ios_base::hex);
  j["lambda"] = kp.sk.lambda.str(0, std::ios_base::hex);
  j["mu"] = kp.sk.mu.str(0, std::ios_base::hex);
  return j;
}

inline KeyPair keys_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("scheme"))
    throw Error(ErrorCode::ParseError, "key file must carry a scheme");
  std::string scheme = j["scheme"].get<std::string>();
  if (scheme == "mock") return mock_keypair();
  if (scheme != "paillier")
    throw Error(ErrorCode::ParseError, "unknown scheme '" + scheme + "'");
  if (!j.contains("n"))
    throw Error(ErrorCode::ParseError, "key file must carry the modulus n");
  KeyPair kp;
  kp.pk.scheme = AheScheme::Paillier;
  kp.pk.n = detail::big_from_hex(j["n"].get<std::string>(), "n");
  kp.pk.n_squared = kp.pk.n * kp.pk.n;
  kp.pk.bits = j.contains("bits") ? j["bits"].get<unsigned>()
                                  : boost::multiprecision::msb(kp.pk.n) + 1;
  kp.pk.fingerprint = detail::key_fingerprint(AheScheme::Paillier, kp.pk.n);
  if (!j.contains("lambda") || !j.contains("mu"))
    throw Error(ErrorCode::ParseError, "key file is missing the secret components");
  kp.sk.lambda = detail::big_from_hex(j["lambda"].get<std::string>(), "lambda");
  kp.sk.mu = detail::big_from_hex(j["mu"].get<std::string>(), "mu");
  return kp;
}

inline KeyPair load_keys(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open key file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("key file: ") + e.what());
  }
  return keys_from_json(j);
}

} // namespace faforge
