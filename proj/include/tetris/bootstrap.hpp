#pragma once

#include <memory>

#include "tetris/ckks.hpp"
#include "tetris/remez.hpp"

namespace tetris {

// ---------------------------------------------------------------------------
// CKKS bootstrapping: ModRaise -> CoeffsToSlots -> EvalMod -> SlotsToCoeffs.
// Half-BTS skips the last step and hands back the refreshed message in the
// slots domain, split into its real and imaginary halves.
//
// EvalMod proxy: Chebyshev interpolant of a phase-shifted cosine at argument
// theta/2^r, followed by r cosine double-angle squarings (yielding sin(2 pi y)
// exactly at the lattice points), optionally composed with a low-degree
// arcsine to linearize larger messages.
// ---------------------------------------------------------------------------

struct EvalModConfig {
    u32 cheb_degree = 30;
    u32 double_angles = 3;
    u32 lattice_bound = 16;  // K: bound on the ModRaise integer polynomial
    u32 arcsine_degree = 7;  // 0 disables the compensation stage
    double arcsine_window = 0.65;  // |sin| range the truncated series covers
};

struct BootstrapParams {
    u32 slots = 0;            // N/2 at full packing
    u32 sparse_log_gap = 0;   // log2(N / 2n) when the message is sparse
    u32 secret_hw = 32;       // h of the dense secret the bound K was sized for
    u32 ephemeral_hw = 0;     // reserved; the sparse ephemeral-secret path is not used
    EvalModConfig evalmod;
    double delta_input = 0;   // scale of the exhausted input ciphertext
    double delta_evalmod = 0; // working scale of the polynomial stages

    u32 depth() const {
        u32 d = 1;  // CoeffsToSlots
        d += u32(std::ceil(std::log2(double(evalmod.cheb_degree)))) + 1;
        d += evalmod.double_angles;
        if (evalmod.arcsine_degree > 0)
            d += u32(std::ceil(std::log2(double(evalmod.arcsine_degree)))) + 1;
        else
            d += 1;  // explicit product restoring the message scale
        return d;
    }
};

class BootstrapEvaluator {
public:
    BootstrapEvaluator(const KeyContext& ctx, BootstrapParams params)
        : ctx_(&ctx), params_(params), encoder_(ctx.ring(), params.slots) {
        const RingParams& ring = ctx.ring();
        if (params_.slots != ring.degree() / 2)
            throw TetrisError("bootstrap", "plans assume full packing (n = N/2)");
        if (params_.delta_input <= 0 || params_.delta_evalmod <= 0)
            throw TetrisError("bootstrap", "scales must be set");
        q0_ = double(ring.modulus(0));
        int top = ring.max_level();
        if (int(params_.depth()) > top)
            throw TetrisError("bootstrap", "modulus chain shorter than the circuit depth");

        u32 n = params_.slots;
        double kk = double(params_.evalmod.lattice_bound) + 0.5;
        // CoeffsToSlots: kappa * SF^{-1}, kappa folding 1/(q (K+1/2)), the
        // transition from delta_input to delta_evalmod, and the 1/2 of the
        // real/imaginary split (so no scale relabeling perturbs the
        // fixed-point of the rescale chain).
        double kappa = 0.5 * params_.delta_input / (q0_ * kk);
        std::vector<std::vector<cplx>> m_c2s(n, std::vector<cplx>(n));
        std::vector<std::vector<cplx>> m_s2c(n, std::vector<cplx>(n));
        for (u32 j = 0; j < n; ++j) {
            std::vector<cplx> e(n, cplx{0, 0});
            e[j] = 1.0;
            auto col_inv = encoder_.dft_inv(e);   // column j of SF^{-1}
            auto col_fwd = encoder_.dft(e);       // column j of SF
            for (u32 i = 0; i < n; ++i) {
                m_c2s[i][j] = col_inv[i] * kappa;
                m_s2c[i][j] = col_fwd[i];
            }
        }
        double q_top = double(ring.modulus(u32(top)));
        double plan_scale_c2s = q_top * params_.delta_evalmod / params_.delta_input;
        c2s_ = std::make_unique<LinearTransformPlan>(
            encoder_, LinearTransformPlan::diagonals_of(m_c2s), plan_scale_c2s, top);
        s2c_ = std::make_unique<LinearTransformPlan>(
            encoder_, LinearTransformPlan::diagonals_of(m_s2c), q_top, top);

        // EvalMod stage 1: G(y) = cos((2 pi (K+1/2) y - pi/2) / 2^r) on [-1, 1]
        double r_pow = double(1u << params_.evalmod.double_angles);
        cheb_cos_ = chebyshev_fit(
            [&](long double y) {
                long double theta =
                    (2.0L * M_PI * (long double)kk * y - M_PI / 2.0L) / (long double)r_pow;
                return std::cos(theta);
            },
            params_.evalmod.cheb_degree);
        if (params_.evalmod.arcsine_degree > 0) {
            // truncated arcsine series evaluated on the raw sine value (valid
            // up to |v| ~ arcsine_window); the factor q/delta folds into the
            // coefficients so the output lands at the message scale
            long double c = (long double)q0_ / (long double)params_.delta_input / (2.0L * M_PI);
            std::vector<double> pow_coeffs(params_.evalmod.arcsine_degree + 1, 0.0);
            long double b = 1.0L;  // (2k)! / (4^k (k!)^2)
            for (u32 k = 0; 2 * k + 1 <= params_.evalmod.arcsine_degree; ++k) {
                pow_coeffs[2 * k + 1] = double(c * b / (long double)(2 * k + 1));
                b = b * (long double)(2 * k + 1) / (long double)(2 * k + 2);
            }
            cheb_asin_ = power_to_chebyshev(pow_coeffs);
        }
    }

    const BootstrapParams& params() const { return params_; }
    const Encoder& encoder() const { return encoder_; }

    // Every automorphism exponent half_bts (plus slots_to_coeffs) will request.
    std::vector<u64> required_galois_exponents() const {
        std::set<u64> exps;
        for (u64 g : c2s_->required_rotations()) exps.insert(g);
        for (u64 g : s2c_->required_rotations()) exps.insert(g);
        exps.insert(conjugation_exponent(ctx_->ring()));
        for (u64 g : trace_exponents()) exps.insert(g);
        return {exps.begin(), exps.end()};
    }

    std::vector<u64> trace_exponents() const {
        std::vector<u64> out;
        u32 nn = ctx_->ring().degree();
        for (u32 j = 0; j < params_.sparse_log_gap; ++j) out.push_back(nn / (1u << j) + 1);
        return out;
    }

    // Raises an exhausted level-0 ciphertext to the top of the chain; the
    // message picks up q * I(X) with ||I|| <= K.
    Ciphertext mod_raise(const Ciphertext& ct) const {
        if (ct.level() != 0) throw TetrisError("bootstrap", "mod_raise expects level 0");
        if (std::abs(ct.scale / params_.delta_input - 1.0) > 1e-9)
            throw TetrisError("bootstrap", "input scale does not match the profile");
        Ciphertext out = ct;
        out.to_coeff();
        int top = ctx_->ring().max_level();
        for (auto& p : out.parts) p = raise_level(p, top);
        out.noise_bound = ct.noise_bound + q0_ * double(params_.evalmod.lattice_bound);
        return out;
    }

    // Trace map: zeroes every coefficient whose degree is not a multiple of
    // 2^t, exactly. The 1/2^t correction is applied up front: scaling after
    // the keyswitched automorphisms would lift the switching noise to Q/2 on
    // odd parities, scaling before leaves every added noise term untouched.
    Ciphertext trace_map(const Evaluator& ev, const Ciphertext& ct, u32 t,
                         const EvalKeys& keys) const {
        Ciphertext acc = ct;
        std::vector<u64> inv(ctx_->ring().moduli().size());
        for (std::size_t i = 0; i < inv.size(); ++i)
            inv[i] = inv_mod(1ULL << t, ctx_->ring().moduli()[i]);
        for (auto& p : acc.parts) p.mul_scalar_inplace(inv);
        u32 nn = ctx_->ring().degree();
        for (u32 j = 0; j < t; ++j) {
            u64 g = nn / (1u << j) + 1;
            Ciphertext rot = ctx_->apply_galois(acc, g, keys.galois_key(g));
            acc = ev.add(acc, rot);
        }
        return acc;
    }

    // Homomorphic decode: coefficients become slot values, returned as the
    // (real, imaginary) pair of real-valued ciphertexts.
    std::pair<Ciphertext, Ciphertext> coeffs_to_slots(const Evaluator& ev, const Ciphertext& ct,
                                                      const EvalKeys& keys) const {
        Ciphertext in = ct;
        in.domain = Domain::slots;  // reinterpretation is the point of this step
        Ciphertext z = c2s_->apply(ev, in, keys);
        Ciphertext zc = ev.conjugate(z, keys);
        u32 nn = ctx_->ring().degree();
        // the plan already carries the 1/2: re = z + conj, im = (z - conj) * -i,
        // with -i the monomial X^{3N/2}
        Ciphertext re = ev.add(z, zc);
        Ciphertext im = ev.sub(z, zc);
        im.to_coeff();
        for (auto& p : im.parts) p = p.mul_monomial(3 * nn / 2);
        return {std::move(re), std::move(im)};
    }

    // Homomorphic modular reduction by q0: slot values q(I + frac) collapse to
    // the message, delivered at the score scale.
    Ciphertext eval_mod(const Evaluator& ev, const Ciphertext& ct, const EvalKeys& keys) const {
        Ciphertext v = eval_chebyshev(ev, ct, cheb_cos_, keys);
        for (u32 i = 0; i < params_.evalmod.double_angles; ++i) {
            Ciphertext sq = ev.mul_relin(v, v, keys);
            sq.to_coeff();
            sq.add_inplace(sq);
            v = ev.rescale(ev.add_scalar(sq, -1.0));
        }
        // v = sin(2 pi m / q)
        if (params_.evalmod.arcsine_degree > 0) {
            v = eval_chebyshev(ev, v, cheb_asin_, keys);  // -> m at the message scale
        } else {
            // linear small-angle readout: one product restores the scale
            u64 ql = ev.ring().modulus(u32(v.level()));
            v = ev.rescale(ev.mul_scalar(v, q0_ / (2.0 * M_PI * params_.delta_input), double(ql)));
        }
        return v;
    }

    Ciphertext slots_to_coeffs(const Evaluator& ev, const Ciphertext& ct_re,
                               const Ciphertext& ct_im, const EvalKeys& keys) const {
        u32 nn = ctx_->ring().degree();
        Ciphertext im = ct_im;
        im.to_coeff();
        for (auto& p : im.parts) p = p.mul_monomial(nn / 2);  // * i
        Ciphertext z = ev.add(ct_re, im);
        Ciphertext out = s2c_->apply(ev, z, keys);
        out.domain = Domain::coeffs;
        return out;
    }

    // The scheme-switching bootstrap: mod raise, homomorphic decode, modular
    // reduction; the message stays in the slots.
    std::pair<Ciphertext, Ciphertext> half_bts(const Evaluator& ev, const Ciphertext& ct,
                                               const EvalKeys& keys) const {
        if (ct.domain != Domain::coeffs)
            throw TetrisError("bootstrap", "half_bts expects a coefficients-domain input");
        Ciphertext raised = mod_raise(ct);
        if (params_.sparse_log_gap > 0)
            raised = trace_map(ev, raised, params_.sparse_log_gap, keys);
        auto [re, im] = coeffs_to_slots(ev, raised, keys);
        Ciphertext out_l = eval_mod(ev, re, keys);
        Ciphertext out_r = eval_mod(ev, im, keys);
        return {std::move(out_l), std::move(out_r)};
    }

    int output_level() const { return ctx_->ring().max_level() - int(params_.depth()); }

private:
    const KeyContext* ctx_;
    BootstrapParams params_;
    Encoder encoder_;
    double q0_ = 0;
    std::unique_ptr<LinearTransformPlan> c2s_, s2c_;
    std::vector<double> cheb_cos_, cheb_asin_;
};

}  // namespace tetris
