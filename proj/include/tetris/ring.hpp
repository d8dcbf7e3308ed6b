#pragma once

#include <algorithm>
#include <cstring>
#include <unordered_map>

#include "tetris/common.hpp"

namespace tetris {

// ---------------------------------------------------------------------------
// Per-modulus negacyclic NTT tables (psi = primitive 2N-th root of unity).
// ---------------------------------------------------------------------------

struct NttTables {
    u64 q = 0;
    u64 psi = 0;
    std::vector<u64> w;          // psi^brv(i), bit-reversed order
    std::vector<u64> w_shoup;
    std::vector<u64> winv;       // psi^-brv(i)
    std::vector<u64> winv_shoup;
    u64 n_inv = 0;
    u64 n_inv_shoup = 0;

    void init(u64 modulus, u32 degree, Rng& rng) {
        q = modulus;
        u32 log_n = 0;
        while ((1u << log_n) < degree) ++log_n;
        if ((q - 1) % (2 * u64(degree)) != 0)
            throw TetrisError("ring", "modulus lacks a 2N-th root of unity");
        // psi = x^((q-1)/2N) has order exactly 2N iff psi^N = -1.
        for (;;) {
            u64 x = rng.uniform(q - 2) + 2;
            psi = pow_mod(x, (q - 1) / (2 * u64(degree)), q);
            if (pow_mod(psi, degree, q) == q - 1) break;
        }
        u64 psi_inv = inv_mod(psi, q);
        w.resize(degree);
        winv.resize(degree);
        w_shoup.resize(degree);
        winv_shoup.resize(degree);
        for (u32 i = 0; i < degree; ++i) {
            u32 r = bit_reverse(i, log_n);
            w[i] = pow_mod(psi, r, q);
            winv[i] = pow_mod(psi_inv, r, q);
            w_shoup[i] = shoup_precompute(w[i], q);
            winv_shoup[i] = shoup_precompute(winv[i], q);
        }
        n_inv = inv_mod(degree, q);
        n_inv_shoup = shoup_precompute(n_inv, q);
    }

    static u32 bit_reverse(u32 x, u32 bits) {
        u32 r = 0;
        for (u32 i = 0; i < bits; ++i) {
            r = (r << 1) | (x & 1);
            x >>= 1;
        }
        return r;
    }

    // In-place forward transform, natural coefficient order in, transform
    // (bit-reversed evaluation) order out.
    void forward(u64* a, u32 n) const {
        u32 t = n;
        for (u32 m = 1; m < n; m <<= 1) {
            t >>= 1;
            for (u32 i = 0; i < m; ++i) {
                u64 s = w[m + i], ss = w_shoup[m + i];
                u64* p0 = a + 2 * i * t;
                u64* p1 = p0 + t;
                for (u32 j = 0; j < t; ++j) {
                    u64 u = p0[j];
                    u64 v = mul_mod_shoup(p1[j], s, ss, q);
                    p0[j] = add_mod(u, v, q);
                    p1[j] = sub_mod(u, v, q);
                }
            }
        }
    }

    void inverse(u64* a, u32 n) const {
        u32 t = 1;
        for (u32 m = n; m > 1; m >>= 1) {
            u32 h = m >> 1;
            u32 j1 = 0;
            for (u32 i = 0; i < h; ++i) {
                u64 s = winv[h + i], ss = winv_shoup[h + i];
                u64* p0 = a + j1;
                u64* p1 = p0 + t;
                for (u32 j = 0; j < t; ++j) {
                    u64 u = p0[j], v = p1[j];
                    p0[j] = add_mod(u, v, q);
                    p1[j] = mul_mod_shoup(sub_mod(u, v, q), s, ss, q);
                }
                j1 += 2 * t;
            }
            t <<= 1;
        }
        for (u32 j = 0; j < n; ++j) a[j] = mul_mod_shoup(a[j], n_inv, n_inv_shoup, q);
    }
};

// ---------------------------------------------------------------------------
// RingParams: the arithmetic substrate. Degree N, an ordered RNS chain of
// NTT-friendly primes (trailing `special_count` primes form the auxiliary
// modulus P used only inside keyswitching), and precomputed tables.
// Immutable after construction, shareable across threads.
// ---------------------------------------------------------------------------

struct NoiseParams {
    double gaussian_sigma = 3.2;
    u32 secret_hamming_weight = 0;  // h, nonzero ternary secret coefficients
};

class RingParams {
public:
    RingParams(u32 degree, std::vector<u64> moduli, u32 special_count)
        : degree_(degree), moduli_(std::move(moduli)), special_count_(special_count) {
        if (degree_ < 16 || (degree_ & (degree_ - 1)) != 0)
            throw TetrisError("ring", "degree must be a power of two >= 16");
        if (moduli_.empty() || special_count_ >= moduli_.size())
            throw TetrisError("ring", "need at least one non-special prime");
        log_degree_ = 0;
        while ((1u << log_degree_) < degree_) ++log_degree_;
        for (std::size_t i = 0; i < moduli_.size(); ++i) {
            u64 q = moduli_[i];
            if (!is_prime_u64(q) || q >= (1ULL << 62))
                throw TetrisError("ring", "moduli must be primes below 2^62");
            for (std::size_t j = 0; j < i; ++j)
                if (moduli_[j] == q) throw TetrisError("ring", "moduli must be distinct");
        }
        Rng rng(0x7e7215a1d2c3ULL);  // table construction only; tables are canonical per modulus
        tables_.resize(moduli_.size());
        for (std::size_t i = 0; i < moduli_.size(); ++i) {
            Rng r = rng.split(i);
            tables_[i].init(moduli_[i], degree_, r);
        }
        build_eval_order_map();
    }

    u32 degree() const { return degree_; }
    u32 log_degree() const { return log_degree_; }
    const std::vector<u64>& moduli() const { return moduli_; }
    u32 special_count() const { return special_count_; }
    u32 q_count() const { return static_cast<u32>(moduli_.size()) - special_count_; }
    int max_level() const { return static_cast<int>(q_count()) - 1; }
    u64 modulus(u32 idx) const { return moduli_[idx]; }
    const NttTables& tables(u32 idx) const { return tables_[idx]; }

    // Transform-order bookkeeping: slot j of the transform holds the value at
    // psi^{eval_exp_[j]}; exponents are odd mod 2N.
    u32 eval_exp(u32 slot) const { return eval_exp_[slot]; }
    u32 slot_of_exp(u32 exp) const { return slot_of_exp_[exp]; }

    double total_log2_q(int level) const {
        double s = 0;
        for (int i = 0; i <= level; ++i) s += std::log2(double(moduli_[i]));
        return s;
    }

    bool compatible(const RingParams& other) const { return this == &other; }

private:
    void build_eval_order_map() {
        // Probe: transform X and read off psi exponents per slot.
        const NttTables& t = tables_[0];
        std::vector<u64> a(degree_, 0);
        a[1] = 1;
        t.forward(a.data(), degree_);
        std::unordered_map<u64, u32> pow_of;
        pow_of.reserve(2 * degree_);
        u64 v = 1;
        for (u32 e = 0; e < 2 * degree_; ++e) {
            pow_of.emplace(v, e);
            v = mul_mod(v, t.psi, t.q);
        }
        eval_exp_.resize(degree_);
        slot_of_exp_.assign(2 * degree_, u32(-1));
        for (u32 j = 0; j < degree_; ++j) {
            auto it = pow_of.find(a[j]);
            if (it == pow_of.end()) throw TetrisError("ring", "eval-order probe failed");
            eval_exp_[j] = it->second;
            slot_of_exp_[it->second] = j;
        }
    }

    u32 degree_;
    u32 log_degree_;
    std::vector<u64> moduli_;
    u32 special_count_;
    std::vector<NttTables> tables_;
    std::vector<u32> eval_exp_;
    std::vector<u32> slot_of_exp_;
};

// ---------------------------------------------------------------------------
// Poly: per-prime residue rows of length N. Rows 0..level are the q-chain;
// `nspecial` trailing rows (when present) sit over the auxiliary primes.
// ---------------------------------------------------------------------------

enum class Form { coeff, eval };

class Poly {
public:
    Poly() = default;
    Poly(const RingParams& ring, int level, Form form, int nspecial = 0)
        : ring_(&ring), level_(level), nspecial_(nspecial), form_(form),
          data_(std::size_t(level + 1 + nspecial) * ring.degree(), 0) {
        if (level < 0 || level > ring.max_level())
            throw TetrisError("ring", "poly level out of range");
        if (nspecial != 0 && nspecial != int(ring.special_count()))
            throw TetrisError("ring", "special rows must be all-or-none");
    }

    const RingParams& ring() const { return *ring_; }
    int level() const { return level_; }
    int nspecial() const { return nspecial_; }
    Form form() const { return form_; }
    void set_form(Form f) { form_ = f; }
    int rows() const { return level_ + 1 + nspecial_; }
    bool empty() const { return ring_ == nullptr; }

    u64* row(int r) { return data_.data() + std::size_t(r) * ring_->degree(); }
    const u64* row(int r) const { return data_.data() + std::size_t(r) * ring_->degree(); }

    u32 modulus_index(int r) const {
        return r <= level_ ? u32(r) : ring_->q_count() + u32(r - level_ - 1);
    }
    u64 row_modulus(int r) const { return ring_->modulus(modulus_index(r)); }

    // --- transforms ---

    void ntt_forward() {
        if (form_ != Form::coeff) throw TetrisError("ring", "ntt_forward expects coeff form");
        for (int r = 0; r < rows(); ++r)
            ring_->tables(modulus_index(r)).forward(row(r), ring_->degree());
        form_ = Form::eval;
    }

    void ntt_inverse() {
        if (form_ != Form::eval) throw TetrisError("ring", "ntt_inverse expects eval form");
        for (int r = 0; r < rows(); ++r)
            ring_->tables(modulus_index(r)).inverse(row(r), ring_->degree());
        form_ = Form::coeff;
    }

    // --- element-wise arithmetic (forms and shapes must match) ---

    void add_inplace(const Poly& o) {
        check_shape(o);
        for (int r = 0; r < rows(); ++r) {
            u64 q = row_modulus(r);
            const u64* b = o.row(r);
            u64* a = row(r);
            for (u32 i = 0; i < ring_->degree(); ++i) a[i] = add_mod(a[i], b[i], q);
        }
    }

    void sub_inplace(const Poly& o) {
        check_shape(o);
        for (int r = 0; r < rows(); ++r) {
            u64 q = row_modulus(r);
            const u64* b = o.row(r);
            u64* a = row(r);
            for (u32 i = 0; i < ring_->degree(); ++i) a[i] = sub_mod(a[i], b[i], q);
        }
    }

    void negate_inplace() {
        for (int r = 0; r < rows(); ++r) {
            u64 q = row_modulus(r);
            u64* a = row(r);
            for (u32 i = 0; i < ring_->degree(); ++i) a[i] = neg_mod(a[i], q);
        }
    }

    void mul_pointwise_inplace(const Poly& o) {
        if (form_ != Form::eval || o.form_ != Form::eval)
            throw TetrisError("ring", "pointwise product expects eval form");
        check_shape(o);
        for (int r = 0; r < rows(); ++r) {
            u64 q = row_modulus(r);
            const u64* b = o.row(r);
            u64* a = row(r);
            for (u32 i = 0; i < ring_->degree(); ++i) a[i] = mul_mod(a[i], b[i], q);
        }
    }

    void mul_acc_pointwise(const Poly& x, const Poly& y) {
        // this += x * y, all in eval form
        if (form_ != Form::eval || x.form_ != Form::eval || y.form_ != Form::eval)
            throw TetrisError("ring", "mul_acc expects eval form");
        check_shape(x);
        check_shape(y);
        for (int r = 0; r < rows(); ++r) {
            u64 q = row_modulus(r);
            const u64* a = x.row(r);
            const u64* b = y.row(r);
            u64* c = row(r);
            for (u32 i = 0; i < ring_->degree(); ++i)
                c[i] = add_mod(c[i], mul_mod(a[i], b[i], q), q);
        }
    }

    // Multiply by an integer scalar given per modulus index.
    void mul_scalar_inplace(const std::vector<u64>& scalar_per_modulus) {
        for (int r = 0; r < rows(); ++r) {
            u64 q = row_modulus(r);
            u64 s = scalar_per_modulus[modulus_index(r)] % q;
            u64 ss = shoup_precompute(s, q);
            u64* a = row(r);
            for (u32 i = 0; i < ring_->degree(); ++i) a[i] = mul_mod_shoup(a[i], s, ss, q);
        }
    }

    void mul_small_scalar_inplace(u64 s) {
        for (int r = 0; r < rows(); ++r) {
            u64 q = row_modulus(r);
            u64 sq = s % q;
            u64 ss = shoup_precompute(sq, q);
            u64* a = row(r);
            for (u32 i = 0; i < ring_->degree(); ++i) a[i] = mul_mod_shoup(a[i], sq, ss, q);
        }
    }

    // --- structural ops ---

    void drop_to_level(int new_level) {
        if (new_level > level_) throw TetrisError("ring", "drop_to_level cannot raise");
        if (nspecial_ != 0) throw TetrisError("ring", "drop_to_level with special rows");
        level_ = new_level;
        data_.resize(std::size_t(level_ + 1) * ring_->degree());
    }

    void drop_special() {
        if (nspecial_ == 0) return;
        nspecial_ = 0;
        data_.resize(std::size_t(level_ + 1) * ring_->degree());
    }

    // Negacyclic multiplication by X^e, e in [0, 2N). Coefficient form only.
    Poly mul_monomial(u32 e) const {
        if (form_ != Form::coeff) throw TetrisError("ring", "mul_monomial expects coeff form");
        u32 n = ring_->degree();
        e %= 2 * n;
        Poly out(*ring_, level_, Form::coeff, nspecial_);
        for (int r = 0; r < rows(); ++r) {
            u64 q = row_modulus(r);
            const u64* a = row(r);
            u64* b = out.row(r);
            for (u32 i = 0; i < n; ++i) {
                u32 j = i + e;
                bool neg = false;
                if (j >= 2 * n) j -= 2 * n;
                if (j >= n) { j -= n; neg = true; }
                b[j] = neg ? neg_mod(a[i], q) : a[i];
            }
        }
        return out;
    }

    void check_shape(const Poly& o) const {
        if (ring_ != o.ring_ || level_ != o.level_ || nspecial_ != o.nspecial_ || form_ != o.form_)
            throw TetrisError("ring", "poly shape mismatch");
    }

private:
    const RingParams* ring_ = nullptr;
    int level_ = 0;
    int nspecial_ = 0;
    Form form_ = Form::coeff;
    std::vector<u64> data_;
};

// ---------------------------------------------------------------------------
// Free operations
// ---------------------------------------------------------------------------

inline Poly poly_add(const Poly& a, const Poly& b) {
    Poly r = a;
    r.add_inplace(b);
    return r;
}

inline Poly poly_sub(const Poly& a, const Poly& b) {
    Poly r = a;
    r.sub_inplace(b);
    return r;
}

inline Poly ntt_transform(const Poly& p, Form target) {
    Poly r = p;
    if (target == Form::eval) r.ntt_forward();
    else r.ntt_inverse();
    return r;
}

// Negacyclic product via NTT; inputs in coefficient form.
inline Poly poly_mul(const Poly& a, const Poly& b) {
    Poly x = a, y = b;
    if (x.form() == Form::coeff) x.ntt_forward();
    if (y.form() == Form::coeff) y.ntt_forward();
    x.mul_pointwise_inplace(y);
    x.ntt_inverse();
    return x;
}

// phi_g: X -> X^g, gcd(g, 2N) = 1. Works on either form.
inline Poly automorphism_apply(const Poly& p, u64 exponent) {
    const RingParams& ring = p.ring();
    u32 n = ring.degree();
    u64 two_n = 2 * u64(n);
    u64 g = exponent % two_n;
    if (g % 2 == 0) throw TetrisError("ring", "automorphism exponent must be odd");
    Poly out(ring, p.level(), p.form(), p.nspecial());
    if (p.form() == Form::coeff) {
        for (int r = 0; r < p.rows(); ++r) {
            u64 q = p.row_modulus(r);
            const u64* a = p.row(r);
            u64* b = out.row(r);
            for (u32 i = 0; i < n; ++i) {
                u64 j = (u64(i) * g) % two_n;
                if (j < n) b[j] = a[i];
                else b[j - n] = neg_mod(a[i], q);
            }
        }
    } else {
        // Pure slot permutation: out_hat[j] = in_hat[slot((g * e_j) mod 2N)].
        for (u32 j = 0; j < n; ++j) {
            u32 src = ring.slot_of_exp(u32((u64(ring.eval_exp(j)) * g) % two_n));
            for (int r = 0; r < p.rows(); ++r) out.row(r)[j] = p.row(r)[src];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

inline Poly sample_uniform(const RingParams& ring, int level, int nspecial, Rng& rng) {
    Poly p(ring, level, Form::coeff, nspecial);
    for (int r = 0; r < p.rows(); ++r) {
        u64 q = p.row_modulus(r);
        u64* a = p.row(r);
        for (u32 i = 0; i < ring.degree(); ++i) a[i] = rng.uniform(q);
    }
    return p;
}

// Small signed integer coefficients embedded into every active row.
inline Poly poly_from_i64(const RingParams& ring, const std::vector<i64>& coeffs,
                          int level, int nspecial = 0) {
    Poly p(ring, level, Form::coeff, nspecial);
    u32 n = ring.degree();
    for (int r = 0; r < p.rows(); ++r) {
        u64 q = p.row_modulus(r);
        u64* a = p.row(r);
        for (u32 i = 0; i < n && i < coeffs.size(); ++i) a[i] = from_centered(coeffs[i], q);
    }
    return p;
}

inline Poly sample_gaussian(const RingParams& ring, double sigma, int level, int nspecial,
                            Rng& rng) {
    if (sigma <= 0) throw TetrisError("ring", "sigma must be positive");
    std::vector<i64> c(ring.degree());
    i64 tail = round_half_away(6.0 * sigma);
    for (auto& x : c) x = std::clamp(round_half_away(rng.normal() * sigma), -tail, tail);
    return poly_from_i64(ring, c, level, nspecial);
}

// Exactly h nonzero coefficients in {-1, +1}.
inline Poly sample_ternary_hw(const RingParams& ring, u32 h, int level, int nspecial, Rng& rng) {
    u32 n = ring.degree();
    if (h > n) throw TetrisError("ring", "hamming weight exceeds degree");
    std::vector<u32> idx(n);
    for (u32 i = 0; i < n; ++i) idx[i] = i;
    std::vector<i64> c(n, 0);
    for (u32 i = 0; i < h; ++i) {
        u32 j = i + u32(rng.uniform(n - i));
        std::swap(idx[i], idx[j]);
        c[idx[i]] = rng.uniform(2) ? 1 : -1;
    }
    return poly_from_i64(ring, c, level, nspecial);
}

// ---------------------------------------------------------------------------
// Rescaling: round(p / q_level), half away from zero, exact in RNS.
// ---------------------------------------------------------------------------

inline Poly rescale_round(const Poly& p) {
    if (p.level() < 1) throw TetrisError("ring", "cannot rescale at level 0");
    if (p.nspecial() != 0) throw TetrisError("ring", "rescale with special rows");
    if (p.form() != Form::coeff) throw TetrisError("ring", "rescale expects coeff form");
    const RingParams& ring = p.ring();
    u32 n = ring.degree();
    int lvl = p.level();
    u64 ql = ring.modulus(lvl);
    u64 half = ql >> 1;  // ql odd: exact ties cannot occur
    Poly out(ring, lvl - 1, Form::coeff);
    const u64* last = p.row(lvl);
    for (int r = 0; r < lvl; ++r) {
        u64 q = ring.modulus(r);
        u64 ql_mod_q = ql % q;
        u64 inv_ql = inv_mod(ql_mod_q, q);
        u64 inv_ql_shoup = shoup_precompute(inv_ql, q);
        const u64* a = p.row(r);
        u64* b = out.row(r);
        for (u32 i = 0; i < n; ++i) {
            u64 t = last[i] % q;
            if (last[i] > half) t = sub_mod(t, ql_mod_q, q);  // centered remainder
            b[i] = mul_mod_shoup(sub_mod(a[i], t, q), inv_ql, inv_ql_shoup, q);
        }
    }
    return out;
}

// Lifts a level-0 polynomial to `new_level` (+ optional special rows) by
// centered reinterpretation of the residues mod q_0. This is the ModRaise
// primitive of the bootstrapping pipeline.
inline Poly raise_level(const Poly& p, int new_level, int nspecial = 0) {
    if (p.level() != 0 || p.nspecial() != 0)
        throw TetrisError("ring", "raise_level expects a level-0 poly");
    if (p.form() != Form::coeff) throw TetrisError("ring", "raise_level expects coeff form");
    const RingParams& ring = p.ring();
    u32 n = ring.degree();
    u64 q0 = ring.modulus(0);
    u64 half = q0 >> 1;
    Poly out(ring, new_level, Form::coeff, nspecial);
    std::memcpy(out.row(0), p.row(0), n * sizeof(u64));
    for (int r = 1; r < out.rows(); ++r) {
        u64 q = out.row_modulus(r);
        u64 q0_mod_q = q0 % q;
        const u64* a = p.row(0);
        u64* b = out.row(r);
        for (u32 i = 0; i < n; ++i) {
            u64 v = a[i] % q;
            if (a[i] > half) v = sub_mod(v, q0_mod_q, q);
            b[i] = v;
        }
    }
    return out;
}

}  // namespace tetris
