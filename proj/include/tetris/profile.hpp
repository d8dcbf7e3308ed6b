#pragma once

#include "tetris/bootstrap.hpp"
#include "tetris/threshold.hpp"

namespace tetris {

// ---------------------------------------------------------------------------
// Parameter profiles. The desk-scale profiles preserve the modulus structure
// of the production-scale sets (one PFE prime, arithmetic primes for the two
// thresholds, bootstrap primes, auxiliary primes) at ring degrees a laptop
// can exercise; none of them target any security level.
// ---------------------------------------------------------------------------

struct Profile {
    std::string name;

    // small ring: PFE, repacking, merging source
    u32 n_small = 256;
    int q0_bits = 55;
    int p_small_bits = 54;
    u32 small_base2 = 30;
    u32 hw_small = 0;  // defaults to 2n/3

    // big ring: merge target, bootstrapping, thresholds
    u32 n_big = 1024;
    int arith_bits = 50;
    int c2s_bits = 60;
    int special_bits = 51;
    u32 special_count = 8;
    u32 gadget_group = 8;
    u32 hw_big = 32;
    EvalModConfig evalmod{30, 3, 16, 7, 0.65};

    double delta_tv = std::pow(2.0, 43.0);       // score scale (PFE through merge)
    double delta_evalmod = std::pow(2.0, 50.0);  // polynomial-stage working scale

    ThresholdParams th_local{8, 12, {15, 15, 15}, 1.0};
    ThresholdParams th_global{16, 20, {15, 15, 15, 15, 15}, 1.0};

    bool analytic_only = false;  // production-scale dimensions, never materialized
    bool thresholds_enabled = true;

    u32 hw_small_eff() const { return hw_small ? hw_small : 2 * n_small / 3; }

    u32 arith_levels() const {
        u32 lv1 = 1, lv2 = 1;
        for (u32 d : th_local.degrees) lv1 += u32(std::ceil(std::log2(double(d)))) + 1;
        for (u32 d : th_global.degrees) lv2 += u32(std::ceil(std::log2(double(d)))) + 1;
        return lv1 + lv2 + 1;
    }

    static Profile toy() {
        Profile p;
        p.name = "toy";
        return p;
    }

    // Unit-test variant: same structure at N = 256.
    static Profile toy_small() {
        Profile p;
        p.name = "toy-small";
        p.n_small = 64;
        p.n_big = 256;
        return p;
    }

    // Set I shape for the PFE/repacking phase; thresholds are out of this
    // profile's scope (there is no big ring at Set I).
    static Profile set1_only() {
        Profile p;
        p.name = "set1-only";
        p.n_small = 4096;
        p.thresholds_enabled = false;
        return p;
    }

    static Profile full_analytic() {
        Profile p;
        p.name = "full-analytic";
        p.n_small = 4096;
        p.n_big = 65536;
        p.analytic_only = true;
        return p;
    }

    static Profile by_name(const std::string& name) {
        if (name == "toy") return toy();
        if (name == "toy-small") return toy_small();
        if (name == "set1-only") return set1_only();
        if (name == "full-analytic") return full_analytic();
        throw TetrisError("profile", "unknown profile: " + name);
    }
};

// Chain memoization: Remez certification is deterministic, so one build per
// parameter set per process is enough.
inline const MinimaxChain& chain_cache(const ThresholdParams& params) {
    static std::map<std::string, MinimaxChain> cache;
    std::string key = std::to_string(params.alpha) + "/" + std::to_string(params.beta) + "/" +
                      std::to_string(u64(params.epsilon * 1e9));
    for (u32 d : params.degrees) key += "-" + std::to_string(d);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, build_chain(params)).first;
    return it->second;
}

// Materialized rings and evaluators for a profile; secret-independent and
// shareable across protocol instances.
class ProtocolContext {
public:
    explicit ProtocolContext(Profile profile) : profile_(std::move(profile)) {
        if (profile_.analytic_only)
            throw TetrisError("profile", "analytic profile cannot be materialized");
        u64 congruence = 2 * u64(std::max(profile_.n_small, profile_.n_big));
        auto q0 = find_ntt_primes(profile_.q0_bits, 1, congruence);
        auto p_small = find_ntt_primes(profile_.p_small_bits, 1, congruence, q0);
        std::vector<u64> small_chain = {q0[0], p_small[0]};
        ring_small_ = std::make_unique<RingParams>(profile_.n_small, small_chain, 1);
        ctx_small_ = std::make_unique<KeyContext>(
            *ring_small_, NoiseParams{3.2, profile_.hw_small_eff()},
            GadgetVector{1, profile_.small_base2});

        if (!profile_.thresholds_enabled) return;

        BootstrapParams bp;
        bp.slots = profile_.n_big / 2;
        bp.secret_hw = profile_.hw_big;
        bp.evalmod = profile_.evalmod;
        bp.delta_input = profile_.delta_tv;
        bp.delta_evalmod = profile_.delta_evalmod;
        u32 nq = 1 + profile_.arith_levels() + bp.depth();
        std::vector<u64> exclude = small_chain;
        auto arith = find_ntt_primes(profile_.arith_bits, nq - 2, congruence, exclude);
        exclude.insert(exclude.end(), arith.begin(), arith.end());
        auto top = find_ntt_primes(profile_.c2s_bits, 1, congruence, exclude);
        exclude.push_back(top[0]);
        auto specials = find_ntt_primes(profile_.special_bits, profile_.special_count,
                                        congruence, exclude);
        std::vector<u64> big_chain = {q0[0]};
        big_chain.insert(big_chain.end(), arith.begin(), arith.end());
        big_chain.push_back(top[0]);
        big_chain.insert(big_chain.end(), specials.begin(), specials.end());
        ring_big_ = std::make_unique<RingParams>(profile_.n_big, big_chain,
                                                 profile_.special_count);
        ctx_big_ = std::make_unique<KeyContext>(*ring_big_, NoiseParams{3.2, profile_.hw_big},
                                                GadgetVector{profile_.gadget_group, 0});
        ev_ = std::make_unique<Evaluator>(*ctx_big_);
        bts_ = std::make_unique<BootstrapEvaluator>(*ctx_big_, bp);
        chain_local_ = chain_cache(profile_.th_local);
        chain_global_ = chain_cache(profile_.th_global);
        derive_scale_plan();
    }

    const Profile& profile() const { return profile_; }
    const RingParams& ring_small() const { return *ring_small_; }
    const RingParams& ring_big() const { return *ring_big_; }
    const KeyContext& ctx_small() const { return *ctx_small_; }
    const KeyContext& ctx_big() const { return *ctx_big_; }
    const Evaluator& evaluator() const { return *ev_; }
    const BootstrapEvaluator& bts() const { return *bts_; }
    const MinimaxChain& chain_local() const { return chain_local_; }
    const MinimaxChain& chain_global() const { return chain_global_; }

    // Scales the scientist must use so operands line up with the pipeline.
    double delta_scores() const { return delta_scores_; }   // t0 (post Half-BTS)
    double delta_norm() const { return profile_.delta_evalmod; }
    double delta_count() const { return delta_count_; }     // t1 (post threshold 1)

    // Every automorphism exponent explore() will request on the big ring.
    std::vector<u64> galois_manifest() const {
        std::set<u64> exps;
        for (u64 g : bts_->required_galois_exponents()) exps.insert(g);
        for (u32 k = 1; k < profile_.n_big / 2; k <<= 1)
            exps.insert(rotation_exponent(*ring_big_, k));
        return {exps.begin(), exps.end()};
    }

private:
    // One throwaway end-to-end dry run pins the exact scales at the two points
    // where the scientist's encryptions enter the circuit.
    void derive_scale_plan();

    Profile profile_;
    std::unique_ptr<RingParams> ring_small_, ring_big_;
    std::unique_ptr<KeyContext> ctx_small_, ctx_big_;
    std::unique_ptr<Evaluator> ev_;
    std::unique_ptr<BootstrapEvaluator> bts_;
    MinimaxChain chain_local_, chain_global_;
    double delta_scores_ = 0, delta_count_ = 0;
};

inline void ProtocolContext::derive_scale_plan() {
    Rng rng(0x5ca1ab1e);
    auto kp = ctx_big_->keygen(rng);
    SecretKey sk = std::move(kp.first);
    EvalKeys keys;
    Rng krng = rng.split(1);
    keys.relin = ctx_big_->relin_key_gen(sk, krng);
    for (u64 g : bts_->required_galois_exponents())
        if (!keys.has(g)) keys.galois.emplace(g, ctx_big_->galois_key_gen(sk, g, krng));
    Poly zero(*ring_big_, 0, Form::coeff);
    Ciphertext ct = ctx_big_->encrypt(sk, zero, profile_.delta_tv, rng, Domain::coeffs);
    auto [l, r] = bts_->half_bts(*ev_, ct, keys);
    delta_scores_ = l.scale;
    Encoder enc(*ring_big_, profile_.n_big / 2);
    Poly zslots = enc.encode_slots(std::vector<cplx>(profile_.n_big / 2, cplx{0, 0}),
                                   delta_scores_, l.level());
    Ciphertext t0 = ctx_big_->encrypt(sk, zslots, delta_scores_, rng, Domain::slots);
    Poly znorm = enc.encode_slots(std::vector<cplx>(profile_.n_big / 2, cplx{0, 0}),
                                  delta_norm(), l.level());
    Ciphertext norm = ctx_big_->encrypt(sk, znorm, delta_norm(), rng, Domain::slots);
    Ciphertext th1 = eval_private_threshold(*ev_, l, t0, norm, chain_local_, keys);
    delta_count_ = th1.scale;
}

}  // namespace tetris
