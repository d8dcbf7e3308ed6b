#pragma once

#include <cstdint>
#include <cstddef>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace tetris {

using u16 = uint16_t;
using u32 = uint32_t;
using u64 = uint64_t;
using i64 = int64_t;
using u128 = unsigned __int128;
using i128 = __int128;

// ---------------------------------------------------------------------------
// Modular arithmetic on word-sized moduli (q < 2^63).
// ---------------------------------------------------------------------------

inline u64 add_mod(u64 a, u64 b, u64 q) {
    u64 r = a + b;
    return r >= q ? r - q : r;
}

inline u64 sub_mod(u64 a, u64 b, u64 q) {
    return a >= b ? a - b : a + q - b;
}

inline u64 neg_mod(u64 a, u64 q) {
    return a == 0 ? 0 : q - a;
}

inline u64 mul_mod(u64 a, u64 b, u64 q) {
    return static_cast<u64>((u128(a) * b) % q);
}

// Shoup multiplication: w fixed, w_shoup = floor(w * 2^64 / q).
inline u64 shoup_precompute(u64 w, u64 q) {
    return static_cast<u64>((u128(w) << 64) / q);
}

inline u64 mul_mod_shoup(u64 a, u64 w, u64 w_shoup, u64 q) {
    u64 hi = static_cast<u64>((u128(a) * w_shoup) >> 64);
    u64 r = a * w - hi * q;  // wraps mod 2^64; result < 2q
    return r >= q ? r - q : r;
}

inline u64 pow_mod(u64 base, u64 exp, u64 q) {
    u64 r = 1;
    base %= q;
    while (exp) {
        if (exp & 1) r = mul_mod(r, base, q);
        base = mul_mod(base, base, q);
        exp >>= 1;
    }
    return r;
}

// Inverse modulo a prime.
inline u64 inv_mod(u64 a, u64 q) {
    if (a % q == 0) throw std::invalid_argument("inv_mod: zero has no inverse");
    return pow_mod(a % q, q - 2, q);
}

// Inverse modulo an arbitrary modulus (extended Euclid).
inline u64 inv_mod_general(u64 a, u64 m) {
    i64 t = 0, new_t = 1;
    i64 r = i64(m), new_r = i64(a % m);
    while (new_r != 0) {
        i64 qt = r / new_r;
        t -= qt * new_t; std::swap(t, new_t);
        r -= qt * new_r; std::swap(r, new_r);
    }
    if (r != 1) throw std::invalid_argument("inv_mod_general: not invertible");
    if (t < 0) t += i64(m);
    return u64(t);
}

// Centered representative in [-(q-1)/2, (q-1)/2].
inline i64 to_centered(u64 x, u64 q) {
    return x > q / 2 ? static_cast<i64>(x) - static_cast<i64>(q) : static_cast<i64>(x);
}

inline u64 from_centered(i64 x, u64 q) {
    i64 r = x % static_cast<i64>(q);
    if (r < 0) r += static_cast<i64>(q);
    return static_cast<u64>(r);
}

// Global rounding rule: half away from zero.
inline i64 round_half_away(double x) {
    return static_cast<i64>(std::llround(x));  // llround ties away from zero
}

// ---------------------------------------------------------------------------
// Primality and NTT-friendly prime search.
// ---------------------------------------------------------------------------

inline bool is_prime_u64(u64 n) {
    if (n < 2) return false;
    for (u64 p : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
        if (n % p == 0) return n == p;
    }
    u64 d = n - 1;
    int s = 0;
    while ((d & 1) == 0) { d >>= 1; ++s; }
    for (u64 a : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
        u64 x = pow_mod(a, d, n);
        if (x == 1 || x == n - 1) continue;
        bool witness = true;
        for (int i = 1; i < s; ++i) {
            x = mul_mod(x, x, n);
            if (x == n - 1) { witness = false; break; }
        }
        if (witness) return false;
    }
    return true;
}

// Finds `count` distinct primes p with p = 1 mod `modulus`, scanning outward
// from 2^bits, skipping anything already in `exclude`.
inline std::vector<u64> find_ntt_primes(int bits, std::size_t count, u64 modulus,
                                        std::vector<u64> exclude = {}) {
    if (bits < 10 || bits > 62) throw std::invalid_argument("find_ntt_primes: bits out of range");
    std::vector<u64> out;
    u64 center = 1ULL << bits;
    u64 lo = center - (center % modulus) + 1;  // = 1 mod modulus
    u64 hi = lo + modulus;
    auto taken = [&](u64 p) {
        for (u64 e : exclude) if (e == p) return true;
        for (u64 e : out) if (e == p) return true;
        return false;
    };
    while (out.size() < count) {
        if (lo > modulus && is_prime_u64(lo) && !taken(lo)) out.push_back(lo);
        if (out.size() >= count) break;
        if (is_prime_u64(hi) && !taken(hi)) out.push_back(hi);
        lo -= modulus;
        hi += modulus;
        if (hi - center > (center >> 2)) throw std::runtime_error("find_ntt_primes: search exhausted");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Seeded, splittable randomness. Every sampling call takes an explicit
// generator so protocol transcripts are reproducible.
// ---------------------------------------------------------------------------

inline u64 splitmix64(u64 x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class Rng {
public:
    explicit Rng(u64 seed) : seed_(seed), engine_(splitmix64(seed)) {}

    u64 seed() const { return seed_; }

    u64 next() { return engine_(); }

    // Unbiased uniform draw in [0, bound).
    u64 uniform(u64 bound) {
        if (bound == 0) throw std::invalid_argument("Rng::uniform: zero bound");
        u64 threshold = (-bound) % bound;
        for (;;) {
            u64 x = engine_();
            if (x >= threshold) return x % bound;
        }
    }

    // Standard normal via Box-Muller; deterministic for a fixed seed.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = to_unit(engine_());
        double u2 = to_unit(engine_());
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Derives an independent child generator; children with distinct labels
    // never share a stream.
    Rng split(u64 label) const {
        return Rng(splitmix64(seed_ ^ splitmix64(label ^ 0xa5a5a5a55a5a5a5aULL)));
    }

private:
    static double to_unit(u64 x) {
        // (0, 1]: avoids log(0)
        return (static_cast<double>(x >> 11) + 1.0) * 0x1p-53;
    }

    u64 seed_;
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Error taxonomy: one exception type with a short stage/argument tag.
// ---------------------------------------------------------------------------

class TetrisError : public std::runtime_error {
public:
    TetrisError(const std::string& tag, const std::string& what)
        : std::runtime_error("[" + tag + "] " + what), tag_(tag) {}
    const std::string& tag() const { return tag_; }

private:
    std::string tag_;
};

}  // namespace tetris
