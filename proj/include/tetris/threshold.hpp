#pragma once

#include "tetris/ckks.hpp"
#include "tetris/remez.hpp"

namespace tetris {

// ---------------------------------------------------------------------------
// Composed minimax approximation of sign/step on [-1, -2^-alpha] u [2^-alpha, 1]
// and its private evaluation on ciphertexts.
// ---------------------------------------------------------------------------

struct ThresholdParams {
    u32 alpha = 8;                 // valid-input gap 2^-alpha
    u32 beta = 12;                 // output precision target (bits)
    std::vector<u32> degrees;      // odd stage degrees
    double epsilon = 1.0;          // minimum input spacing before normalization
};

struct ChainStage {
    u32 degree = 0;
    double gamma = 0, upper = 1;       // approximation domain of this stage
    std::vector<double> cheb;          // T-basis coeffs of p(upper * y), y in [-1,1]
    double error = 0;                  // certified sup error of the stage
};

struct MinimaxChain {
    ThresholdParams params;
    std::vector<ChainStage> stages;
    double sign_error = 0;     // certified |chain(x) - sign(x)| on the valid domain
    double achieved_beta = 0;  // -log2 of the step-scale error

    bool meets_target() const { return achieved_beta >= double(params.beta); }

    // Chebyshev coefficients as consumed in evaluation order: stage outputs
    // are pre-divided by the next stage's domain bound; the last stage is
    // halved so that adding 1/2 afterwards yields step().
    std::vector<double> eval_coeffs(std::size_t i) const {
        std::vector<double> c = stages[i].cheb;
        double f = (i + 1 < stages.size()) ? 1.0 / stages[i + 1].upper : 0.5;
        for (double& x : c) x *= f;
        return c;
    }

    // Plaintext evaluation of step(x) (exact mirror of the encrypted path).
    double eval_step(double x) const {
        long double y = x;  // stage 1 domain is [-1, 1]
        for (std::size_t i = 0; i < stages.size(); ++i) {
            const auto& c = stages[i].cheb;
            long double b1 = 0, b2 = 0;
            for (std::size_t k = c.size(); k-- > 1;) {
                long double t = 2 * y * b1 - b2 + c[k];
                b2 = b1;
                b1 = t;
            }
            long double v = y * b1 - b2 + c[0];
            if (i + 1 < stages.size()) y = v / (long double)stages[i + 1].upper;
            else y = v * 0.5L + 0.5L;
        }
        return double(y);
    }

    u32 levels_required() const {
        u32 lv = 1;  // the normalization product
        for (const auto& s : stages) lv += u32(std::ceil(std::log2(double(s.degree)))) + 1;
        return lv;
    }
};

// Builds the chain for the given sensitivity/precision/degree schedule. Each
// stage approximates sign on the image interval of its predecessor; the first
// stage starts at gap 2^-alpha.
inline MinimaxChain build_chain(const ThresholdParams& params) {
    if (params.degrees.empty()) throw TetrisError("threshold", "empty degree schedule");
    MinimaxChain chain;
    chain.params = params;
    long double gamma = std::pow(2.0L, -(long double)params.alpha);
    long double upper = 1.0L;
    for (std::size_t i = 0; i < params.degrees.size(); ++i) {
        u32 d = params.degrees[i];
        if (d % 2 == 0) throw TetrisError("threshold", "stage degrees must be odd");
        MinimaxResult r = remez_minimax(gamma, upper, d);
        ChainStage st;
        st.degree = d;
        st.gamma = double(gamma);
        st.upper = double(upper);
        st.error = double(r.error);
        st.cheb.assign(d + 1, 0.0);
        for (std::size_t j = 0; j < r.odd_coeffs.size(); ++j)
            st.cheb[2 * j + 1] = double(r.odd_coeffs[j]);
        chain.stages.push_back(std::move(st));
        gamma = 1.0L - r.error;
        upper = 1.0L + r.error;
    }
    // certify the composition on the step scale over the valid domain
    long double worst = 0;
    long double g0 = std::pow(2.0L, -(long double)params.alpha);
    const int grid = 20000;
    for (int i = 0; i <= grid; ++i) {
        long double x = g0 + (1.0L - g0) * (long double)i / grid;
        worst = std::max(worst, std::fabs((long double)chain.eval_step(double(x)) - 1.0L));
        worst = std::max(worst, std::fabs((long double)chain.eval_step(double(-x)) - 0.0L));
    }
    chain.sign_error = double(2 * worst);
    chain.achieved_beta = worst > 0 ? double(-std::log2(double(worst))) : 64.0;
    return chain;
}

// ---------------------------------------------------------------------------
// Private threshold evaluation: slots hold step((x - t + eps/2) * norm).
// The threshold and (for the local variant) the normalizer arrive encrypted.
// ---------------------------------------------------------------------------

namespace detail_threshold {

inline void check_levels(const Ciphertext& ct, const MinimaxChain& chain) {
    if (u32(ct.level()) < chain.levels_required())
        throw TetrisError("threshold",
                          "insufficient levels: need " + std::to_string(chain.levels_required()) +
                              ", have " + std::to_string(ct.level()));
}

inline Ciphertext run_stages(const Evaluator& ev, Ciphertext u, const MinimaxChain& chain,
                             const EvalKeys& keys) {
    for (std::size_t i = 0; i < chain.stages.size(); ++i)
        u = eval_chebyshev(ev, u, chain.eval_coeffs(i), keys);
    return ev.add_scalar(u, 0.5);
}

}  // namespace detail_threshold

// Encrypted threshold, encrypted normalizer (the local threshold of the
// protocol).
inline Ciphertext eval_private_threshold(const Evaluator& ev, const Ciphertext& ct_scores,
                                         const Ciphertext& ct_t, const Ciphertext& ct_norm,
                                         const MinimaxChain& chain, const EvalKeys& keys) {
    detail_threshold::check_levels(ct_scores, chain);
    Ciphertext diff = ev.sub(ct_scores, ct_t);
    diff = ev.add_scalar(diff, chain.params.epsilon / 2.0);
    Ciphertext u = ev.rescale(ev.mul_relin(diff, ct_norm, keys));
    return detail_threshold::run_stages(ev, u, chain, keys);
}

// Encrypted threshold, plaintext normalizer (the global threshold: Alg. 2
// multiplies by p^{-1} in the clear).
inline Ciphertext eval_private_threshold_plain_norm(const Evaluator& ev,
                                                    const Ciphertext& ct_scores,
                                                    const Ciphertext& ct_t, double norm,
                                                    const MinimaxChain& chain,
                                                    const EvalKeys& keys) {
    detail_threshold::check_levels(ct_scores, chain);
    Ciphertext diff = ev.sub(ct_scores, ct_t);
    diff = ev.add_scalar(diff, chain.params.epsilon / 2.0);
    u64 ql = ev.ring().modulus(u32(diff.level()));
    Ciphertext u = ev.rescale(ev.mul_scalar(diff, norm, double(ql)));
    return detail_threshold::run_stages(ev, u, chain, keys);
}

}  // namespace tetris
