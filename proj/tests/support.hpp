#pragma once

// Shared test oracles. Everything here is deliberately independent of the
// library's fast paths: schoolbook convolution, big-integer CRT, direct DFTs.

#include <complex>
#include <vector>

#include "tetris/ring.hpp"

namespace oracle {

using namespace tetris;

// Schoolbook negacyclic convolution per residue row.
inline Poly schoolbook_negacyclic(const Poly& a, const Poly& b) {
    const RingParams& ring = a.ring();
    u32 n = ring.degree();
    Poly out(ring, a.level(), Form::coeff, a.nspecial());
    for (int r = 0; r < a.rows(); ++r) {
        u64 q = a.row_modulus(r);
        const u64* x = a.row(r);
        const u64* y = b.row(r);
        u64* z = out.row(r);
        for (u32 i = 0; i < n; ++i) {
            if (x[i] == 0) continue;
            for (u32 j = 0; j < n; ++j) {
                u64 t = mul_mod(x[i], y[j], q);
                u32 k = i + j;
                if (k < n) z[k] = add_mod(z[k], t, q);
                else z[k - n] = sub_mod(z[k - n], t, q);
            }
        }
    }
    return out;
}

// Exact CRT reconstruction of one coefficient across <= 2 q-primes, centered.
inline i128 crt2_centered(const Poly& p, u32 coeff) {
    const RingParams& ring = p.ring();
    if (p.level() > 1) throw std::runtime_error("crt2 supports <= 2 primes");
    if (p.level() == 0) return to_centered(p.row(0)[coeff], ring.modulus(0));
    u64 q0 = ring.modulus(0), q1 = ring.modulus(1);
    u64 r0 = p.row(0)[coeff], r1 = p.row(1)[coeff];
    // x = r0 + q0 * ((r1 - r0) * q0^{-1} mod q1)
    u64 d = sub_mod(r1 % q1, r0 % q1, q1);
    u64 t = mul_mod(d, inv_mod(q0 % q1, q1), q1);
    i128 x = i128(r0) + i128(q0) * t;
    i128 q = i128(q0) * q1;
    if (x > q / 2) x -= q;
    return x;
}

// Direct special DFT used by the canonical embedding: slot j of a complex
// vector w is sum_k w[k] * psi^{5^j * k}, psi = exp(i*pi/(2n)) a 4n-th root.
inline std::vector<std::complex<double>> special_dft(const std::vector<std::complex<double>>& w) {
    std::size_t n = w.size();
    std::vector<std::complex<double>> out(n);
    for (std::size_t j = 0; j < n; ++j) {
        u64 gj = 1;
        for (std::size_t t = 0; t < j; ++t) gj = (gj * 5) % (4 * n);
        std::complex<double> acc{0, 0};
        for (std::size_t k = 0; k < n; ++k) {
            double ang = M_PI * double((gj * k) % (4 * n)) / double(2 * n);
            acc += w[k] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[j] = acc;
    }
    return out;
}

inline std::vector<std::complex<double>> special_dft_inv(const std::vector<std::complex<double>>& v) {
    std::size_t n = v.size();
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc{0, 0};
        u64 gj = 1;
        for (std::size_t j = 0; j < n; ++j) {
            double ang = M_PI * double((gj * k) % (4 * n)) / double(2 * n);
            acc += v[j] * std::complex<double>(std::cos(ang), -std::sin(ang));
            gj = (gj * 5) % (4 * n);
        }
        out[k] = acc / double(n);
    }
    return out;
}

inline long double i128_to_ld(i128 x) {
    bool neg = x < 0;
    u128 u = neg ? u128(-x) : u128(x);
    long double v = (long double)(u64)(u >> 64) * 18446744073709551616.0L + (long double)(u64)u;
    return neg ? -v : v;
}

// Max |centered residual| of a small-noise polynomial; also asserts that all
// residue rows agree (catches silent noise blow-ups past min(q)/2).
inline double noise_inf_norm(const Poly& p) {
    double m = 0;
    for (u32 i = 0; i < p.ring().degree(); ++i) {
        i64 v0 = to_centered(p.row(0)[i], p.row_modulus(0));
        for (int r = 1; r < p.rows(); ++r) {
            i64 vr = to_centered(p.row(r)[i], p.row_modulus(r));
            if (vr != v0) throw std::runtime_error("noise_inf_norm: rows disagree (noise overflow?)");
        }
        m = std::max(m, std::abs(double(v0)));
    }
    return m;
}

}  // namespace oracle
