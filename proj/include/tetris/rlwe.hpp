#pragma once

#include <map>
#include <optional>

#include "tetris/ring.hpp"

namespace tetris {

// ---------------------------------------------------------------------------
// Gadget decomposition: RNS-digit decomposition over the prime chain, digits
// covering `group_size` consecutive primes, optionally refined by a
// power-of-two sub-basis (base2_bits, single-prime groups only).
// ---------------------------------------------------------------------------

struct GadgetVector {
    u32 group_size = 1;
    u32 base2_bits = 0;  // 0 disables the refinement

    u32 sub_digits(u64 q) const {
        if (base2_bits == 0) return 1;
        u32 bits = 0;
        while ((q >> bits) != 0) ++bits;
        return (bits + base2_bits - 1) / base2_bits;
    }
};

class GadgetPlan {
public:
    GadgetPlan() = default;
    GadgetPlan(const RingParams& ring, GadgetVector cfg) : ring_(&ring), cfg_(cfg) {
        if (cfg_.group_size == 0) throw TetrisError("rlwe", "gadget group size must be positive");
        if (cfg_.base2_bits != 0 && cfg_.group_size != 1)
            throw TetrisError("rlwe", "base2 refinement requires single-prime groups");
        u32 nq = ring.q_count();
        u32 ngroups = (nq + cfg_.group_size - 1) / cfg_.group_size;
        groups_.resize(ngroups);
        for (u32 j = 0; j < ngroups; ++j) {
            Group& g = groups_[j];
            g.first = j * cfg_.group_size;
            g.count = std::min(cfg_.group_size, nq - g.first);
            g.by_size.resize(g.count);
            for (u32 a = 1; a <= g.count; ++a) build_size(g, a);
        }
    }

    const RingParams& ring() const { return *ring_; }
    const GadgetVector& config() const { return cfg_; }

    u32 group_count(int level) const {
        return (u32(level) + cfg_.group_size) / cfg_.group_size;
    }

    u32 digit_count(int level) const {
        u32 n = 0;
        for (u32 j = 0; j < group_count(level); ++j) {
            u32 first = groups_[j].first;
            n += cfg_.base2_bits ? cfg_.sub_digits(ring_->modulus(first)) : 1;
        }
        return n;
    }

    // Decomposes d (coeff form, level l, no specials) into norm-bounded digit
    // polynomials extended over all active q-rows plus the special rows.
    std::vector<Poly> decompose(const Poly& d) const {
        if (d.form() != Form::coeff || d.nspecial() != 0)
            throw TetrisError("rlwe", "decompose expects coeff form without special rows");
        int level = d.level();
        u32 n = ring_->degree();
        int k = int(ring_->special_count());
        std::vector<Poly> out;
        for (u32 j = 0; j < group_count(level); ++j) {
            const Group& g = groups_[j];
            u32 active = std::min(g.count, u32(level) + 1 - g.first);
            const SizeTables& tb = g.by_size[active - 1];
            if (cfg_.base2_bits == 0) {
                Poly dig(*ring_, level, Form::coeff, k);
                // y_i = x_i * [(D'/q_i)^{-1}]_{q_i}, then fast base conversion
                // into every output row.
                std::vector<std::vector<u64>> y(active);
                for (u32 i = 0; i < active; ++i) {
                    u32 src = g.first + i;
                    u64 q = ring_->modulus(src);
                    u64 c = tb.src_scale[i], cs = shoup_precompute(c, q);
                    y[i].resize(n);
                    const u64* x = d.row(int(src));
                    for (u32 t = 0; t < n; ++t) y[i][t] = mul_mod_shoup(x[t], c, cs, q);
                }
                for (int r = 0; r < dig.rows(); ++r) {
                    u32 tgt = dig.modulus_index(r);
                    u64 qt = ring_->modulus(tgt);
                    u64* o = dig.row(r);
                    for (u32 i = 0; i < active; ++i) {
                        u64 w = tb.conv_w[i][tgt];
                        u64 ws = shoup_precompute(w, qt);
                        const u64* yv = y[i].data();
                        for (u32 t = 0; t < n; ++t)
                            o[t] = add_mod(o[t], mul_mod_shoup(yv[t] % qt, w, ws, qt), qt);
                    }
                }
                out.push_back(std::move(dig));
            } else {
                // Single-prime group with base-2^b refinement: balanced signed
                // sub-digits of the centered residue.
                u32 src = g.first;
                u64 q = ring_->modulus(src);
                u32 nsub = cfg_.sub_digits(q);
                u64 b = cfg_.base2_bits;
                std::vector<Poly> digs;
                for (u32 s = 0; s < nsub; ++s) digs.emplace_back(*ring_, level, Form::coeff, k);
                const u64* x = d.row(int(src));
                u64 half_base = 1ULL << (b - 1);
                for (u32 t = 0; t < n; ++t) {
                    i64 c = to_centered(x[t], q);
                    u64 mag = c < 0 ? u64(-c) : u64(c);
                    i64 sign = c < 0 ? -1 : 1;
                    u64 carry = 0;
                    for (u32 s = 0; s < nsub; ++s) {
                        u64 u = ((mag >> (s * b)) & ((1ULL << b) - 1)) + carry;
                        i64 dv;
                        if (s + 1 < nsub && u >= half_base) {
                            dv = i64(u) - i64(1ULL << b);
                            carry = 1;
                        } else {
                            dv = i64(u);
                            carry = 0;
                        }
                        dv *= sign;
                        Poly& dp = digs[s];
                        for (int r = 0; r < dp.rows(); ++r)
                            dp.row(r)[t] = from_centered(dv, dp.row_modulus(r));
                    }
                }
                for (auto& dp : digs) out.push_back(std::move(dp));
            }
        }
        for (auto& dp : out) dp.ntt_forward();
        return out;
    }

    // w_{digit} * P mod q_t for key generation, indexed like decompose output.
    std::vector<std::vector<u64>> key_scalars() const {
        u32 nq = ring_->q_count();
        u32 nmod = nq + ring_->special_count();
        std::vector<std::vector<u64>> out;
        for (const Group& g : groups_) {
            u64 q0 = ring_->modulus(g.first);
            u32 nsub = cfg_.base2_bits ? cfg_.sub_digits(q0) : 1;
            for (u32 s = 0; s < nsub; ++s) {
                std::vector<u64> row(nmod, 0);
                for (u32 t = 0; t < nmod; ++t) {
                    if (t >= nq) continue;                       // P = 0 mod special primes
                    if (t < g.first || t >= g.first + g.count) continue;  // Dhat = 0 elsewhere
                    u64 qt = ring_->modulus(t);
                    u64 p_mod = 1;
                    for (u32 sp = 0; sp < ring_->special_count(); ++sp)
                        p_mod = mul_mod(p_mod, ring_->modulus(nq + sp) % qt, qt);
                    u64 w = pow_mod(2, u64(s) * cfg_.base2_bits, qt);
                    row[t] = mul_mod(w, p_mod, qt);
                }
                out.push_back(std::move(row));
            }
        }
        return out;
    }

private:
    struct SizeTables {
        std::vector<u64> src_scale;             // per local source index
        std::vector<std::vector<u64>> conv_w;   // [local src][modulus index]
    };
    struct Group {
        u32 first = 0;
        u32 count = 0;
        std::vector<SizeTables> by_size;  // active source count 1..count
    };

    void build_size(Group& g, u32 active) {
        u32 nq = ring_->q_count();
        u32 nmod = nq + ring_->special_count();
        SizeTables& tb = g.by_size[active - 1];
        tb.src_scale.resize(active);
        tb.conv_w.assign(active, std::vector<u64>(nmod, 0));
        for (u32 i = 0; i < active; ++i) {
            u32 src = g.first + i;
            u64 q = ring_->modulus(src);
            // Digit j is [x]_{D'_j}; keys carry w_j = Dhat_j [Dhat_j^{-1}]_{D_j},
            // so the source scaling is only the in-group CRT factor (D'/q_i)^{-1}.
            u64 rest = 1;
            for (u32 t = 0; t < active; ++t)
                if (t != i) rest = mul_mod(rest, ring_->modulus(g.first + t) % q, q);
            tb.src_scale[i] = inv_mod(rest, q);
            for (u32 t = 0; t < nmod; ++t) {
                u64 qt = ring_->modulus(t);
                u64 w = 1;
                for (u32 u = 0; u < active; ++u)
                    if (u != i) w = mul_mod(w, ring_->modulus(g.first + u) % qt, qt);
                tb.conv_w[i][t] = w;
            }
        }
    }

    const RingParams* ring_ = nullptr;
    GadgetVector cfg_;
    std::vector<Group> groups_;
};

// ---------------------------------------------------------------------------
// Keys
// ---------------------------------------------------------------------------

class SecretKey {
public:
    SecretKey() = default;
    SecretKey(const RingParams& ring, const NoiseParams& noise, Rng& rng)
        : ring_(&ring), hamming_weight_(noise.secret_hamming_weight), id_(splitmix64(rng.next())) {
        Poly s = sample_ternary_hw(ring, hamming_weight_, ring.max_level(),
                                   int(ring.special_count()), rng);
        coeffs_.resize(ring.degree());
        for (u32 i = 0; i < ring.degree(); ++i)
            coeffs_[i] = to_centered(s.row(0)[i], ring.modulus(0));
        s.ntt_forward();
        eval_full_ = std::move(s);
    }

    // Secret built from explicit coefficients (derived secrets for ring
    // split/merge, squared keys, embedded small-ring secrets).
    SecretKey(const RingParams& ring, std::vector<i64> coeffs, u64 id)
        : ring_(&ring), id_(id), coeffs_(std::move(coeffs)) {
        hamming_weight_ = 0;
        for (i64 c : coeffs_) if (c != 0) ++hamming_weight_;
        Poly s = poly_from_i64(ring, coeffs_, ring.max_level(), int(ring.special_count()));
        s.ntt_forward();
        eval_full_ = std::move(s);
    }

    const RingParams& ring() const { return *ring_; }
    u32 hamming_weight() const { return hamming_weight_; }
    u64 id() const { return id_; }
    const std::vector<i64>& coeffs() const { return coeffs_; }

    // Eval-form copy shaped to (level, nspecial); rows are extracted, never
    // recomputed.
    Poly shaped(int level, int nspecial) const {
        Poly out(*ring_, level, Form::eval, nspecial);
        u32 n = ring_->degree();
        for (int r = 0; r < out.rows(); ++r) {
            u32 m = out.modulus_index(r);
            int src_row = m < ring_->q_count() ? int(m)
                                               : ring_->max_level() + 1 + int(m - ring_->q_count());
            std::memcpy(out.row(r), eval_full_.row(src_row), n * sizeof(u64));
        }
        return out;
    }

private:
    const RingParams* ring_ = nullptr;
    u32 hamming_weight_ = 0;
    u64 id_ = 0;
    std::vector<i64> coeffs_;
    Poly eval_full_;
};

struct PublicKey {
    Poly b, a;  // eval form at max level, no specials; b + a*s = e
    u64 sk_id = 0;
};

enum class Domain { coeffs, slots };

// ---------------------------------------------------------------------------
// Ciphertext: degree-k RLWE encryption; decrypts to sum parts[i] * s^i.
// ---------------------------------------------------------------------------

struct Ciphertext {
    std::vector<Poly> parts;
    double scale = 1.0;
    Domain domain = Domain::coeffs;
    u64 sk_id = 0;
    double noise_bound = 0.0;  // heuristic running bound, debug only

    const RingParams& ring() const { return parts.at(0).ring(); }
    int level() const { return parts.at(0).level(); }
    Form form() const { return parts.at(0).form(); }
    int degree() const { return int(parts.size()) - 1; }

    void to_coeff() {
        for (auto& p : parts)
            if (p.form() == Form::eval) p.ntt_inverse();
    }
    void to_eval() {
        for (auto& p : parts)
            if (p.form() == Form::coeff) p.ntt_forward();
    }

    void drop_to_level(int new_level) {
        for (auto& p : parts) p.drop_to_level(new_level);
    }

    void add_inplace(const Ciphertext& o) {
        if (parts.size() != o.parts.size()) throw TetrisError("rlwe", "ciphertext degree mismatch");
        if (domain != o.domain) throw TetrisError("rlwe", "domain tag mismatch");
        for (std::size_t i = 0; i < parts.size(); ++i) parts[i].add_inplace(o.parts[i]);
        noise_bound += o.noise_bound;
    }

    void sub_inplace(const Ciphertext& o) {
        if (parts.size() != o.parts.size()) throw TetrisError("rlwe", "ciphertext degree mismatch");
        if (domain != o.domain) throw TetrisError("rlwe", "domain tag mismatch");
        for (std::size_t i = 0; i < parts.size(); ++i) parts[i].sub_inplace(o.parts[i]);
        noise_bound += o.noise_bound;
    }

    void negate_inplace() {
        for (auto& p : parts) p.negate_inplace();
    }
};

// ---------------------------------------------------------------------------
// Switching key from s_from to s_to: beta RLWE encryptions of w_i * P * s_from
// at modulus QP. The a-parts are derived from a stored seed, which keeps the
// serialized form at one polynomial per digit.
// ---------------------------------------------------------------------------

struct SwitchingKey {
    GadgetVector gadget;
    u64 from_id = 0, to_id = 0;
    u64 a_seed = 0;
    std::vector<Poly> b;  // eval, full rows
    std::vector<Poly> a;  // eval, full rows

    const RingParams& ring() const { return b.at(0).ring(); }
};

class KeyContext {
public:
    KeyContext(const RingParams& ring, NoiseParams noise, GadgetVector gadget)
        : ring_(&ring), noise_(noise), plan_(ring, gadget) {}

    const RingParams& ring() const { return *ring_; }
    const NoiseParams& noise() const { return noise_; }
    const GadgetPlan& plan() const { return plan_; }

    std::pair<SecretKey, PublicKey> keygen(Rng& rng) const {
        Rng r_s = rng.split(1), r_pk = rng.split(2);
        SecretKey sk(*ring_, noise_, r_s);
        PublicKey pk = make_public(sk, r_pk);
        return {std::move(sk), std::move(pk)};
    }

    PublicKey make_public(const SecretKey& sk, Rng& rng) const {
        int lvl = ring_->max_level();
        Rng ra = rng.split(1), re = rng.split(2);
        Poly a = sample_uniform(*ring_, lvl, 0, ra);
        a.ntt_forward();
        Poly e = sample_gaussian(*ring_, noise_.gaussian_sigma, lvl, 0, re);
        e.ntt_forward();
        Poly s = sk.shaped(lvl, 0);
        Poly b = e;
        // b = -a*s + e
        Poly as = a;
        as.mul_pointwise_inplace(s);
        b.sub_inplace(as);
        return PublicKey{std::move(b), std::move(a), sk.id()};
    }

    // --- encryption / decryption ---

    Ciphertext encrypt(const SecretKey& sk, const Poly& m, double scale, Rng& rng,
                       Domain domain = Domain::coeffs) const {
        if (m.nspecial() != 0) throw TetrisError("rlwe", "message must not carry special rows");
        int lvl = m.level();
        Rng ra = rng.split(1), re = rng.split(2);
        Poly a = sample_uniform(*ring_, lvl, 0, ra);
        a.ntt_forward();
        Poly e = sample_gaussian(*ring_, noise_.gaussian_sigma, lvl, 0, re);
        Poly me = m.form() == Form::coeff ? m : ntt_transform(m, Form::coeff);
        me.add_inplace(e);
        me.ntt_forward();
        Poly s = sk.shaped(lvl, 0);
        Poly as = a;
        as.mul_pointwise_inplace(s);
        me.sub_inplace(as);
        me.ntt_inverse();
        Poly a_coeff = ntt_transform(a, Form::coeff);
        Ciphertext ct;
        ct.parts = {std::move(me), std::move(a_coeff)};
        ct.scale = scale;
        ct.domain = domain;
        ct.sk_id = sk.id();
        ct.noise_bound = 6.0 * noise_.gaussian_sigma;
        return ct;
    }

    Ciphertext encrypt_pk(const PublicKey& pk, const Poly& m, double scale, Rng& rng,
                          Domain domain = Domain::coeffs) const {
        int lvl = m.level();
        Rng rv = rng.split(1), r0 = rng.split(2), r1 = rng.split(3);
        std::vector<i64> vc(ring_->degree());
        for (auto& x : vc) x = i64(rv.uniform(3)) - 1;
        Poly v = poly_from_i64(*ring_, vc, lvl);
        v.ntt_forward();
        auto take = [&](const Poly& key) {
            Poly out(*ring_, lvl, Form::eval);
            for (int r = 0; r <= lvl; ++r)
                std::memcpy(out.row(r), key.row(r), ring_->degree() * sizeof(u64));
            return out;
        };
        Poly c0 = take(pk.b);
        c0.mul_pointwise_inplace(v);
        Poly c1 = take(pk.a);
        c1.mul_pointwise_inplace(v);
        c0.ntt_inverse();
        c1.ntt_inverse();
        Poly e0 = sample_gaussian(*ring_, noise_.gaussian_sigma, lvl, 0, r0);
        Poly e1 = sample_gaussian(*ring_, noise_.gaussian_sigma, lvl, 0, r1);
        c0.add_inplace(e0);
        c0.add_inplace(m.form() == Form::coeff ? m : ntt_transform(m, Form::coeff));
        c1.add_inplace(e1);
        Ciphertext ct;
        ct.parts = {std::move(c0), std::move(c1)};
        ct.scale = scale;
        ct.domain = domain;
        ct.sk_id = pk.sk_id;
        ct.noise_bound = 6.0 * noise_.gaussian_sigma * (2.0 * std::sqrt(double(ring_->degree())) + 1.0);
        return ct;
    }

    Poly decrypt(const SecretKey& sk, const Ciphertext& ct) const {
        if (ct.sk_id != 0 && ct.sk_id != sk.id())
            throw TetrisError("rlwe", "ciphertext bound to a different secret");
        int lvl = ct.level();
        Poly s = sk.shaped(lvl, 0);
        Poly acc(*ring_, lvl, Form::eval);
        Poly spow(*ring_, lvl, Form::eval);
        for (int r = 0; r <= lvl; ++r)
            for (u32 i = 0; i < ring_->degree(); ++i) spow.row(r)[i] = 1;
        for (std::size_t k = 0; k < ct.parts.size(); ++k) {
            Poly pk_eval = ct.parts[k];
            if (pk_eval.form() == Form::coeff) pk_eval.ntt_forward();
            acc.mul_acc_pointwise(pk_eval, spow);
            if (k + 1 < ct.parts.size()) spow.mul_pointwise_inplace(s);
        }
        acc.ntt_inverse();
        return acc;
    }

    // Noiseless encryption of zero: a transparent placeholder used for
    // padding merges and repack batches.
    Ciphertext zero_ciphertext(int level, double scale, u64 sk_id,
                               Domain domain = Domain::coeffs) const {
        Ciphertext ct;
        ct.parts = {Poly(*ring_, level, Form::coeff), Poly(*ring_, level, Form::coeff)};
        ct.scale = scale;
        ct.domain = domain;
        ct.sk_id = sk_id;
        ct.noise_bound = 0.0;
        return ct;
    }

    // --- keyswitching ---

    SwitchingKey switch_key_gen(const SecretKey& from, const SecretKey& to, Rng& rng) const {
        if (!from.ring().compatible(to.ring()) || !from.ring().compatible(*ring_))
            throw TetrisError("rlwe", "switching key requires matching rings");
        SwitchingKey swk;
        swk.gadget = plan_.config();
        swk.from_id = from.id();
        swk.to_id = to.id();
        swk.a_seed = splitmix64(rng.next());
        auto scalars = plan_.key_scalars();
        int lvl = ring_->max_level();
        int k = int(ring_->special_count());
        Poly s_to = to.shaped(lvl, k);
        Poly s_from = from.shaped(lvl, k);
        Rng ra(swk.a_seed);
        Rng re = rng.split(7);
        for (std::size_t i = 0; i < scalars.size(); ++i) {
            Rng rai = ra.split(i);
            Poly a = sample_uniform(*ring_, lvl, k, rai);
            a.ntt_forward();
            Rng rei = re.split(i);
            Poly e = sample_gaussian(*ring_, noise_.gaussian_sigma, lvl, k, rei);
            e.ntt_forward();
            // b = -a*s_to + e + w_i*P*s_from
            Poly b = e;
            Poly as = a;
            as.mul_pointwise_inplace(s_to);
            b.sub_inplace(as);
            Poly ws = s_from;
            ws.mul_scalar_inplace(scalars[i]);
            b.add_inplace(ws);
            swk.a.push_back(std::move(a));
            swk.b.push_back(std::move(b));
        }
        return swk;
    }

    // Accumulates digit polys against key components and divides by P.
    // Returns (c0, c1) in coeff form at the digits' level.
    std::pair<Poly, Poly> ks_inner(const std::vector<Poly>& digits, const SwitchingKey& swk) const {
        if (digits.empty()) throw TetrisError("rlwe", "empty decomposition");
        if (digits.size() > swk.b.size())
            throw TetrisError("rlwe", "switching key has too few digits");
        int lvl = digits[0].level();
        int k = int(ring_->special_count());
        Poly acc0(*ring_, lvl, Form::eval, k);
        Poly acc1(*ring_, lvl, Form::eval, k);
        u32 n = ring_->degree();
        std::size_t nd = digits.size();
        // lazily-reduced dot product across digits: products stay below
        // 2^120, so up to 256 digits fit a 128-bit accumulator
        std::vector<const u64*> drow(nd), brow(nd), arow(nd);
        for (int r = 0; r < acc0.rows(); ++r) {
            u32 m = acc0.modulus_index(r);
            u64 q = ring_->modulus(m);
            int key_row = m < ring_->q_count() ? int(m)
                                               : ring_->max_level() + 1 + int(m - ring_->q_count());
            for (std::size_t i = 0; i < nd; ++i) {
                drow[i] = digits[i].row(r);
                brow[i] = swk.b[i].row(key_row);
                arow[i] = swk.a[i].row(key_row);
            }
            u64* o0 = acc0.row(r);
            u64* o1 = acc1.row(r);
            for (u32 t = 0; t < n; ++t) {
                u128 s0 = 0, s1 = 0;
                for (std::size_t i = 0; i < nd; ++i) {
                    u128 d = drow[i][t];
                    s0 += d * brow[i][t];
                    s1 += d * arow[i][t];
                }
                o0[t] = u64(s0 % q);
                o1[t] = u64(s1 % q);
            }
        }
        acc0.ntt_inverse();
        acc1.ntt_inverse();
        return {mod_down_p(acc0), mod_down_p(acc1)};
    }

    std::pair<Poly, Poly> switch_key_apply(const Poly& d, const SwitchingKey& swk) const {
        return ks_inner(plan_.decompose(d), swk);
    }

    // round(x / P): centered fast base conversion of the special rows.
    Poly mod_down_p(const Poly& x) const {
        if (x.nspecial() == 0) throw TetrisError("rlwe", "mod_down_p expects special rows");
        if (x.form() != Form::coeff) throw TetrisError("rlwe", "mod_down_p expects coeff form");
        u32 n = ring_->degree();
        u32 nq = ring_->q_count();
        u32 k = ring_->special_count();
        int lvl = x.level();
        Poly out(*ring_, lvl, Form::coeff);
        // y_s = centered([x_s * (P/p_s)^{-1}]_{p_s})
        std::vector<std::vector<i64>> y(k, std::vector<i64>(n));
        for (u32 s = 0; s < k; ++s) {
            u64 ps = ring_->modulus(nq + s);
            u64 rest = 1;
            for (u32 t = 0; t < k; ++t)
                if (t != s) rest = mul_mod(rest, ring_->modulus(nq + t) % ps, ps);
            u64 c = inv_mod(rest, ps);
            u64 cs = shoup_precompute(c, ps);
            const u64* xs = x.row(lvl + 1 + int(s));
            for (u32 t = 0; t < n; ++t) y[s][t] = to_centered(mul_mod_shoup(xs[t], c, cs, ps), ps);
        }
        for (int r = 0; r <= lvl; ++r) {
            u64 q = ring_->modulus(r);
            u64 pinv = 1;
            for (u32 s = 0; s < k; ++s) pinv = mul_mod(pinv, ring_->modulus(nq + s) % q, q);
            pinv = inv_mod(pinv, q);
            u64 pinv_s = shoup_precompute(pinv, q);
            std::vector<u64> w(k);
            for (u32 s = 0; s < k; ++s) {
                u64 ws = 1;
                for (u32 t = 0; t < k; ++t)
                    if (t != s) ws = mul_mod(ws, ring_->modulus(nq + t) % q, q);
                w[s] = ws;
            }
            const u64* xr = x.row(r);
            u64* o = out.row(r);
            for (u32 t = 0; t < n; ++t) {
                u64 conv = 0;
                for (u32 s = 0; s < k; ++s) {
                    u64 ys = from_centered(y[s][t], q);
                    conv = add_mod(conv, mul_mod(ys, w[s], q), q);
                }
                o[t] = mul_mod_shoup(sub_mod(xr[t], conv, q), pinv, pinv_s, q);
            }
        }
        return out;
    }

    // --- relinearization / automorphisms ---

    SwitchingKey relin_key_gen(const SecretKey& sk, Rng& rng) const {
        SecretKey s2 = square_secret(sk);
        return switch_key_gen(s2, sk, rng);
    }

    Ciphertext relinearize(const Ciphertext& ct, const SwitchingKey& rlk) const {
        if (ct.degree() != 2) throw TetrisError("rlwe", "relinearize expects a degree-2 ciphertext");
        if (rlk.to_id != ct.sk_id) throw TetrisError("rlwe", "relinearization key mismatch");
        Ciphertext out;
        Poly c2 = ct.parts[2];
        if (c2.form() == Form::eval) c2.ntt_inverse();
        auto [d0, d1] = switch_key_apply(c2, rlk);
        Poly c0 = ct.parts[0];
        if (c0.form() == Form::eval) c0.ntt_inverse();
        Poly c1 = ct.parts[1];
        if (c1.form() == Form::eval) c1.ntt_inverse();
        c0.add_inplace(d0);
        c1.add_inplace(d1);
        out.parts = {std::move(c0), std::move(c1)};
        out.scale = ct.scale;
        out.domain = ct.domain;
        out.sk_id = ct.sk_id;
        out.noise_bound = ct.noise_bound + ks_noise_estimate();
        return out;
    }

    SwitchingKey galois_key_gen(const SecretKey& sk, u64 exponent, Rng& rng) const {
        std::vector<i64> c(ring_->degree());
        u64 two_n = 2 * u64(ring_->degree());
        u64 g = exponent % two_n;
        if (g % 2 == 0) throw TetrisError("rlwe", "invalid automorphism exponent");
        const auto& s = sk.coeffs();
        for (u32 i = 0; i < ring_->degree(); ++i) {
            u64 j = (u64(i) * g) % two_n;
            if (j < ring_->degree()) c[j] = s[i];
            else c[j - ring_->degree()] = -s[i];
        }
        SecretKey phi_s(*ring_, std::move(c), splitmix64(sk.id() ^ exponent));
        return switch_key_gen(phi_s, sk, rng);
    }

    Ciphertext apply_galois(const Ciphertext& ct, u64 exponent, const SwitchingKey& swk) const {
        if (ct.degree() != 1) throw TetrisError("rlwe", "apply_galois expects degree-1 input");
        Ciphertext out;
        Poly c0 = ct.parts[0];
        Poly c1 = ct.parts[1];
        if (c0.form() == Form::eval) c0.ntt_inverse();
        if (c1.form() == Form::eval) c1.ntt_inverse();
        Poly c0g = automorphism_apply(c0, exponent);
        Poly c1g = automorphism_apply(c1, exponent);
        auto [d0, d1] = switch_key_apply(c1g, swk);
        c0g.add_inplace(d0);
        out.parts = {std::move(c0g), std::move(d1)};
        out.scale = ct.scale;
        out.domain = ct.domain;
        out.sk_id = ct.sk_id;
        out.noise_bound = ct.noise_bound + ks_noise_estimate();
        return out;
    }

    double ks_noise_estimate() const {
        return 6.0 * noise_.gaussian_sigma * std::sqrt(double(ring_->degree())) *
               double(plan_.digit_count(ring_->max_level()));
    }

    SecretKey square_secret(const SecretKey& sk) const {
        // s^2 over the integers stays small for ternary s; compute exactly.
        u32 n = ring_->degree();
        const auto& s = sk.coeffs();
        std::vector<i64> sq(n, 0);
        for (u32 i = 0; i < n; ++i) {
            if (s[i] == 0) continue;
            for (u32 j = 0; j < n; ++j) {
                if (s[j] == 0) continue;
                u32 k = i + j;
                if (k < n) sq[k] += s[i] * s[j];
                else sq[k - n] -= s[i] * s[j];
            }
        }
        return SecretKey(*ring_, std::move(sq), splitmix64(sk.id() ^ 0x5157ULL));
    }

private:
    const RingParams* ring_;
    NoiseParams noise_;
    GadgetPlan plan_;
};

// ---------------------------------------------------------------------------
// Ring splitting and merging along the subring Y = X^2 (and its powers).
// ---------------------------------------------------------------------------

// Derives the secret s(X^stride) living in `big` from a secret over the small
// ring; used as the intermediate key of merge/split.
inline SecretKey embed_secret(const SecretKey& small_sk, const RingParams& big, u32 stride) {
    u32 n_small = small_sk.ring().degree();
    if (n_small * stride != big.degree())
        throw TetrisError("rlwe", "embed_secret stride mismatch");
    std::vector<i64> c(big.degree(), 0);
    for (u32 i = 0; i < n_small; ++i) c[std::size_t(i) * stride] = small_sk.coeffs()[i];
    return SecretKey(big, std::move(c), splitmix64(small_sk.id() ^ (0x37ULL + stride)));
}

// Interleaves `cts` (all over the same small ring, under one secret) into a
// single ciphertext over `big` under the embedded secret: message becomes
// sum_i m_i(X^stride) * X^i. Missing entries are treated as noiseless zeros.
inline Ciphertext merge_embed(const std::vector<const Ciphertext*>& cts, const RingParams& big) {
    std::size_t count = cts.size();
    const Ciphertext* first = nullptr;
    for (auto* c : cts)
        if (c) { first = c; break; }
    if (!first) throw TetrisError("rlwe", "merge_embed needs at least one ciphertext");
    const RingParams& small = first->ring();
    u32 stride = big.degree() / small.degree();
    if (stride * small.degree() != big.degree() || count > stride)
        throw TetrisError("rlwe", "merge arity exceeds degree ratio");
    int lvl = first->level();
    for (auto* c : cts)
        if (c && (c->level() != lvl || c->scale != first->scale))
            throw TetrisError("rlwe", "merge inputs must share level and scale");
    Ciphertext out;
    out.parts = {Poly(big, lvl, Form::coeff), Poly(big, lvl, Form::coeff)};
    out.scale = first->scale;
    out.domain = Domain::coeffs;
    out.sk_id = 0;  // under the embedded secret until keyswitched
    for (std::size_t i = 0; i < count; ++i) {
        if (!cts[i]) continue;
        Ciphertext src = *cts[i];
        src.to_coeff();
        out.noise_bound += src.noise_bound;
        for (int part = 0; part < 2; ++part) {
            for (int r = 0; r <= lvl; ++r) {
                const u64* in = src.parts[part].row(r);
                u64* o = out.parts[part].row(r);
                for (u32 k = 0; k < small.degree(); ++k)
                    o[std::size_t(k) * stride + i] = in[k];
            }
        }
    }
    return out;
}

// One merge step: two ciphertexts over the half ring -> one over `big`,
// re-encrypted under the target secret via swk: s_small(X^2) -> s_big.
inline Ciphertext ring_merge(const KeyContext& big_ctx, const Ciphertext& ct0,
                             const Ciphertext& ct1, const SwitchingKey& swk) {
    if (ct0.level() != ct1.level()) throw TetrisError("rlwe", "ring_merge level mismatch");
    Ciphertext emb = merge_embed({&ct0, &ct1}, big_ctx.ring());
    auto [d0, d1] = big_ctx.switch_key_apply(emb.parts[1], swk);
    emb.parts[0].add_inplace(d0);
    emb.parts[1] = std::move(d1);
    emb.sk_id = swk.to_id;
    emb.noise_bound += big_ctx.ks_noise_estimate();
    return emb;
}

// Merges up to big.degree()/small.degree() ciphertexts with a single
// keyswitch from the embedded secret (log-depth tree of pure embeddings).
inline Ciphertext ring_merge_many(const KeyContext& big_ctx, const std::vector<const Ciphertext*>& cts,
                                  const SwitchingKey& swk) {
    Ciphertext emb = merge_embed(cts, big_ctx.ring());
    auto [d0, d1] = big_ctx.switch_key_apply(emb.parts[1], swk);
    emb.parts[0].add_inplace(d0);
    emb.parts[1] = std::move(d1);
    emb.sk_id = swk.to_id;
    emb.noise_bound += big_ctx.ks_noise_estimate();
    return emb;
}

// Splits a ciphertext over the big ring into two over the half ring:
// keyswitch to the embedded secret, then de-interleave even/odd coefficients.
inline std::pair<Ciphertext, Ciphertext> ring_split(const KeyContext& big_ctx,
                                                    const RingParams& small,
                                                    const Ciphertext& ct,
                                                    const SwitchingKey& swk_to_embed,
                                                    u64 small_sk_id) {
    const RingParams& big = big_ctx.ring();
    if (small.degree() * 2 != big.degree())
        throw TetrisError("rlwe", "ring_split expects a half-degree target");
    Ciphertext src = ct;
    src.to_coeff();
    auto [d0, d1] = big_ctx.switch_key_apply(src.parts[1], swk_to_embed);
    d0.add_inplace(src.parts[0]);
    // (d0, d1) now lives under s_small(X^2); de-interleave.
    int lvl = src.level();
    auto extract = [&](const Poly& p, u32 parity) {
        Poly out(small, lvl, Form::coeff);
        for (int r = 0; r <= lvl; ++r) {
            const u64* in = p.row(r);
            u64* o = out.row(r);
            for (u32 k = 0; k < small.degree(); ++k) o[k] = in[2 * k + parity];
        }
        return out;
    };
    Ciphertext even, odd;
    even.parts = {extract(d0, 0), extract(d1, 0)};
    odd.parts = {extract(d0, 1), extract(d1, 1)};
    for (Ciphertext* c : {&even, &odd}) {
        c->scale = ct.scale;
        c->domain = Domain::coeffs;
        c->sk_id = small_sk_id;
        c->noise_bound = ct.noise_bound + big_ctx.ks_noise_estimate();
    }
    return {std::move(even), std::move(odd)};
}

}  // namespace tetris
