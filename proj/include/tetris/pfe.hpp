#pragma once

#include "tetris/rlwe.hpp"

namespace tetris {

// ---------------------------------------------------------------------------
// Large-domain private function evaluation. A scoring function f over a
// discretized interval [a, b) is packed into the test-vector polynomial
//   u_f = f(grid 0) - sum_{i=1}^{n-1} f(grid(n-i)) X^i,
// so multiplying the encryption of u_f by the plaintext monomial X^i rotates
// f(grid(i)) into the constant coefficient. No keyswitching is involved;
// evaluating one input costs one negacyclic rotation.
// ---------------------------------------------------------------------------

struct FunctionSpec {
    double lo = 0, hi = 0;       // half-open domain [lo, hi)
    std::vector<double> table;   // f on the grid lo + (hi-lo) * k / n
    double out_min = 0, out_max = 0;

    double max_value() const {
        double m = table.empty() ? 0 : table[0];
        for (double v : table) m = std::max(m, v);
        return m;
    }

    void validate(u32 ring_degree) const {
        if (!(lo < hi)) throw TetrisError("pfe", "empty function domain");
        if (table.size() != ring_degree)
            throw TetrisError("pfe", "table length must equal the ring degree");
        for (double v : table)
            if (!std::isfinite(v)) throw TetrisError("pfe", "non-finite table entry");
    }
};

struct TestVector {
    Ciphertext ct;          // encryption of u_f in the small ring
    double lo = 0, hi = 0;  // public domain metadata; the table stays private
    double max_value = 0;   // published bound used by the threshold normalizer
};

// x in [a, b) -> monomial exponent round(n (x-a)/(b-a)); an input rounding up
// to n is clamped to n-1 (the wraparound at X^n would negate f(grid 0)).
inline u32 encode_input(double x, double a, double b, u32 n) {
    if (!(x >= a && x < b)) throw TetrisError("pfe", "input outside the function domain");
    double g = (x - a) / (b - a);
    i64 i = round_half_away(double(n) * g);
    if (i >= i64(n)) i = i64(n) - 1;
    if (i < 0) i = 0;
    return u32(i);
}

inline TestVector build_test_vector(const KeyContext& ctx, const FunctionSpec& spec,
                                    const SecretKey& sk, double scale, Rng& rng) {
    const RingParams& ring = ctx.ring();
    u32 n = ring.degree();
    spec.validate(n);
    std::vector<i64> u(n);
    u[0] = round_half_away(spec.table[0] * scale);
    for (u32 i = 1; i < n; ++i) u[i] = -round_half_away(spec.table[n - i] * scale);
    Poly m = poly_from_i64(ring, u, 0);
    TestVector tv;
    tv.ct = ctx.encrypt(sk, m, scale, rng, Domain::coeffs);
    tv.lo = spec.lo;
    tv.hi = spec.hi;
    tv.max_value = spec.max_value();
    return tv;
}

// One plaintext-monomial product; exponents in [0, 2n) cover the signed range.
inline Ciphertext lookup(const TestVector& tv, u32 exponent) {
    Ciphertext out = tv.ct;
    for (auto& p : out.parts) p = p.mul_monomial(exponent);
    return out;
}

// Aggregated scores for a plaintext attribute matrix: row i yields a
// ciphertext whose constant coefficient decrypts to sum_j f_j(rows[i][j]).
// The optional trace records the plaintext-side control flow; it must not
// depend on the encrypted tables.
inline std::vector<Ciphertext> eval_scores(const std::vector<std::vector<double>>& rows,
                                           const std::vector<TestVector>& tvs,
                                           std::vector<std::string>* op_trace = nullptr) {
    if (tvs.empty()) throw TetrisError("pfe", "no scoring functions");
    u32 n = tvs[0].ct.ring().degree();
    std::vector<Ciphertext> out;
    out.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != tvs.size())
            throw TetrisError("pfe", "row " + std::to_string(r) + " has " +
                                         std::to_string(rows[r].size()) + " attributes, expected " +
                                         std::to_string(tvs.size()));
        Ciphertext acc;
        for (std::size_t c = 0; c < tvs.size(); ++c) {
            u32 idx;
            try {
                idx = encode_input(rows[r][c], tvs[c].lo, tvs[c].hi, n);
            } catch (const TetrisError&) {
                throw TetrisError("pfe", "attribute out of domain at row " + std::to_string(r) +
                                             ", column " + std::to_string(c));
            }
            if (op_trace)
                op_trace->push_back("rot " + std::to_string(c) + ":" + std::to_string(idx));
            Ciphertext term = lookup(tvs[c], idx);
            if (c == 0) acc = std::move(term);
            else {
                if (op_trace) op_trace->push_back("add");
                acc.add_inplace(term);
            }
        }
        out.push_back(std::move(acc));
    }
    return out;
}

}  // namespace tetris
