#pragma once

#include "tetris/ckks.hpp"

namespace tetris {

// ---------------------------------------------------------------------------
// Ring repacking: N RLWE ciphertexts, each holding a value in its constant
// coefficient, collapse into one ciphertext of sum_i m_i[0] X^i. The butterfly
// runs log N rounds; round 0 uses the conjugation exponent 2N-1, round i uses
// 5^(2^(i-1)). Inputs are pre-multiplied by N^{-1} so the per-round doubling
// cancels and the output noise is dominated by the keyswitch term.
// ---------------------------------------------------------------------------

struct RepackKeySet {
    std::vector<u64> exponents;           // round order, log N entries
    std::map<u64, SwitchingKey> keys;
    u64 sk_id = 0;

    const SwitchingKey& key(u64 exponent) const {
        auto it = keys.find(exponent);
        if (it == keys.end()) throw TetrisError("repack", "missing repack key");
        return it->second;
    }
};

inline std::vector<u64> repack_exponents(const RingParams& ring) {
    u32 n = ring.degree();
    u64 two_n = 2 * u64(n);
    std::vector<u64> exps;
    exps.push_back(two_n - 1);
    for (u32 i = 1; i < ring.log_degree(); ++i)
        exps.push_back(pow_mod(5, 1ULL << (i - 1), two_n));
    return exps;
}

inline RepackKeySet gen_repack_keys(const KeyContext& ctx, const SecretKey& sk, Rng& rng) {
    RepackKeySet set;
    set.sk_id = sk.id();
    set.exponents = repack_exponents(ctx.ring());
    for (std::size_t i = 0; i < set.exponents.size(); ++i) {
        u64 g = set.exponents[i];
        if (set.keys.count(g)) continue;
        Rng ri = rng.split(i);
        set.keys.emplace(g, ctx.galois_key_gen(sk, g, ri));
    }
    return set;
}

struct RepackStats {
    u64 automorphisms = 0;
};

// `cts` may contain null entries (treated as zero). All present inputs must
// share level and scale.
inline Ciphertext repack(const KeyContext& ctx, const std::vector<const Ciphertext*>& cts,
                         const RepackKeySet& keys, RepackStats* stats = nullptr) {
    const RingParams& ring = ctx.ring();
    u32 n = ring.degree();
    if (cts.size() > n) throw TetrisError("repack", "more inputs than ring coefficients");
    const Ciphertext* first = nullptr;
    for (auto* c : cts)
        if (c) { first = c; break; }
    if (!first) throw TetrisError("repack", "all-zero repack batch");
    int lvl = first->level();
    double scale = first->scale;
    for (auto* c : cts) {
        if (!c) continue;
        if (c->level() != lvl) throw TetrisError("repack", "repack inputs at mixed levels");
        if (c->scale != scale) throw TetrisError("repack", "repack inputs at mixed scales");
    }

    std::vector<u64> n_inv(ring.moduli().size());
    for (std::size_t i = 0; i < n_inv.size(); ++i) n_inv[i] = inv_mod(n, ring.moduli()[i]);

    std::vector<Ciphertext> c(n);
    std::vector<bool> live(n, false);
    for (std::size_t i = 0; i < cts.size(); ++i) {
        if (!cts[i]) continue;
        c[i] = *cts[i];
        c[i].to_coeff();
        for (auto& p : c[i].parts) p.mul_scalar_inplace(n_inv);
        live[i] = true;
    }

    auto mul_monomial_ct = [&](const Ciphertext& ct, u32 e) {
        Ciphertext out = ct;
        for (auto& p : out.parts) p = p.mul_monomial(e);
        return out;
    };

    for (u32 round = 0; round < ring.log_degree(); ++round) {
        u32 t = n >> (round + 1);
        u64 g = keys.exponents[round];
        const SwitchingKey& swk = keys.key(g);
        for (u32 j = 0; j < t; ++j) {
            bool lj = live[j], lh = live[j + t];
            if (!lj && !lh) continue;
            Ciphertext shifted;
            if (lh) shifted = mul_monomial_ct(c[j + t], t);
            Ciphertext sum, diff;
            if (lj && lh) {
                sum = c[j];
                sum.add_inplace(shifted);
                diff = c[j];
                diff.sub_inplace(shifted);
            } else if (lj) {
                sum = c[j];
                diff = c[j];
            } else {
                sum = shifted;
                diff = shifted;
                diff.negate_inplace();
            }
            Ciphertext rotated = ctx.apply_galois(diff, g, swk);
            if (stats) ++stats->automorphisms;
            sum.add_inplace(rotated);
            c[j] = std::move(sum);
            live[j] = true;
        }
    }
    return std::move(c[0]);
}

}  // namespace tetris
