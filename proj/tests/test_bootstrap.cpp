#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"
#include "tetris/bootstrap.hpp"

using namespace tetris;

namespace {

// Reduced-depth profile: N = 256, one 55-bit base prime, 45-bit working
// primes, a 60-bit prime for the homomorphic decode, three 60-bit specials.
struct BtsFixture {
    RingParams ring;
    KeyContext ctx;
    Evaluator ev;
    SecretKey sk;
    EvalKeys keys;
    BootstrapParams params;
    std::unique_ptr<BootstrapEvaluator> bts;

    explicit BtsFixture(u64 seed, u32 n = 256, int spare_levels = 2, u32 sparse_gap = 0)
        : ring(n, make_chain(n, spare_levels, sparse_gap), 3),
          ctx(ring, NoiseParams{3.2, 32}, GadgetVector{3, 0}),
          ev(ctx),
          sk(),
          keys() {
        params.slots = n / 2;
        params.sparse_log_gap = sparse_gap;
        params.secret_hw = 32;
        params.evalmod = EvalModConfig{30, 3, 16, 7, 0.65};
        params.delta_input = std::pow(2.0, 43.0);
        params.delta_evalmod = std::pow(2.0, 45.0);
        bts = std::make_unique<BootstrapEvaluator>(ctx, params);
        Rng rng(seed);
        auto kp = ctx.keygen(rng);
        sk = std::move(kp.first);
        Rng krng = rng.split(9);
        keys.relin = ctx.relin_key_gen(sk, krng);
        for (u64 g : bts->required_galois_exponents())
            if (!keys.has(g)) keys.galois.emplace(g, ctx.galois_key_gen(sk, g, krng));
    }

    static std::vector<u64> make_chain(u32 n, int spare, u32 sparse_gap) {
        BootstrapParams tmp;
        tmp.evalmod = EvalModConfig{30, 3, 16, 7, 0.65};
        tmp.slots = n / 2;
        tmp.sparse_log_gap = sparse_gap;
        tmp.delta_input = 1;
        tmp.delta_evalmod = 1;
        u32 depth = tmp.depth();
        auto q0 = find_ntt_primes(55, 1, 2 * u64(n));
        auto mid = find_ntt_primes(45, depth - 1 + u32(spare), 2 * u64(n), q0);
        auto top = find_ntt_primes(60, 4, 2 * u64(n), q0);
        std::vector<u64> chain;
        chain.push_back(q0[0]);
        chain.insert(chain.end(), mid.begin(), mid.end());
        chain.push_back(top[3]);                                   // decode level
        chain.insert(chain.end(), top.begin(), top.begin() + 3);  // specials
        return chain;
    }

    // Encrypts a full-density coefficient message at level 0.
    Ciphertext encrypt_coeffs(const std::vector<double>& v, Rng& rng) {
        Encoder enc(ring, ring.degree() / 2);
        Poly m = enc.encode_coeffs(v, params.delta_input, 0);
        return ctx.encrypt(sk, m, params.delta_input, rng, Domain::coeffs);
    }
};

// Scalar reference of the eval_mod proxy: the same cosine/double-angle/arcsine
// composition evaluated in long double.
double proxy_reference(const BootstrapParams& p, double q, double x) {
    long double kk = (long double)p.evalmod.lattice_bound + 0.5L;
    long double y = (long double)x / ((long double)q * kk);
    long double r_pow = (long double)(1u << p.evalmod.double_angles);
    long double theta = (2.0L * M_PI * kk * y - M_PI / 2.0L) / r_pow;
    long double v = std::cos(theta);
    for (u32 i = 0; i < p.evalmod.double_angles; ++i) v = 2 * v * v - 1;
    // truncated arcsine, mirroring the homomorphic compensation stage
    long double asin_t = 0, b = 1.0L;
    for (u32 n = 0; 2 * n + 1 <= p.evalmod.arcsine_degree; ++n) {
        long double vp = v;
        for (u32 t = 0; t < 2 * n; ++t) vp *= v;
        asin_t += b / (long double)(2 * n + 1) * vp;
        b = b * (long double)(2 * n + 1) / (long double)(2 * n + 2);
    }
    return double((long double)q * asin_t / (2.0L * M_PI));
}

}  // namespace

TEST_CASE("mod_raise: a noiseless encryption of zero lifts to exact multiples of q") {
    BtsFixture f(401);
    u64 q0 = f.ring.modulus(0);
    Rng rng(1);
    // noiseless ct: c0 = -a s exactly
    Poly a = sample_uniform(f.ring, 0, 0, rng);
    Poly a_eval = ntt_transform(a, Form::eval);
    Poly s = f.sk.shaped(0, 0);
    Poly c0 = a_eval;
    c0.mul_pointwise_inplace(s);
    c0.negate_inplace();
    Ciphertext ct;
    ct.parts = {ntt_transform(c0, Form::coeff), a};
    ct.scale = f.params.delta_input;
    ct.sk_id = f.sk.id();
    Ciphertext raised = f.bts->mod_raise(ct);
    Poly dec = f.ctx.decrypt(f.sk, raised);
    for (u32 i = 0; i < f.ring.degree(); ++i) {
        i128 v = Encoder::centered_value(dec, i);
        REQUIRE(v % i128(q0) == 0);
        i128 mult = v / i128(q0);
        REQUIRE(std::abs(double(i64(mult))) <= 16.0);
    }
}

TEST_CASE("mod_raise: the lattice polynomial stays within K over random ciphertexts") {
    BtsFixture f(403);
    u64 q0 = f.ring.modulus(0);
    Rng rng(5);
    double worst = 0;
    for (int t = 0; t < 100; ++t) {
        Poly zero(f.ring, 0, Form::coeff);
        Ciphertext ct = f.ctx.encrypt(f.sk, zero, f.params.delta_input, rng);
        Ciphertext raised = f.bts->mod_raise(ct);
        Poly dec = f.ctx.decrypt(f.sk, raised);
        for (u32 i = 0; i < f.ring.degree(); ++i) {
            i128 v = Encoder::centered_value(dec, i);
            double mult = std::round(double(i64(v / i128(q0))));
            worst = std::max(worst, std::abs(mult));
        }
    }
    REQUIRE(worst <= 16.0);
}

TEST_CASE("trace map: zeroes the coefficients at odd degrees") {
    BtsFixture f(407, 256, 2, 1);  // sparse gap 1: message lives in even degrees
    Rng rng(7);
    std::vector<double> v(256);
    for (auto& x : v) x = double(i64(rng.uniform(31)) - 15);
    Ciphertext ct = f.encrypt_coeffs(v, rng);
    Ciphertext raised = f.bts->mod_raise(ct);
    Ciphertext traced = f.bts->trace_map(f.ev, raised, 1, f.keys);
    Poly dec = f.ctx.decrypt(f.sk, traced);
    u64 q0 = f.ring.modulus(0);
    for (u32 i = 0; i < 256; ++i) {
        i128 raw = Encoder::centered_value(dec, i);
        // reduce mod q to strip the lattice part
        i64 rem = i64(raw % i128(q0));
        if (rem > i64(q0 / 2)) rem -= i64(q0);
        if (rem < -i64(q0 / 2)) rem += i64(q0);
        double val = double(rem) / f.params.delta_input;
        if (i % 2 == 1) REQUIRE(std::abs(val) < 0.01);
        else REQUIRE(std::abs(val - v[i]) < 0.01);
    }
}

TEST_CASE("coeffs_to_slots: slots hold the normalized coefficient pairs") {
    BtsFixture f(409);
    Rng rng(11);
    u32 n = 128;
    std::vector<double> v(256, 0.0);

    SUBCASE("zero input gives zero slots") {
        Ciphertext ct = f.encrypt_coeffs(v, rng);
        auto [re, im] = f.bts->coeffs_to_slots(f.ev, f.bts->mod_raise(ct), f.keys);
        auto sr = f.bts->encoder().decode_slots(f.ctx.decrypt(f.sk, re), re.scale);
        for (u32 i = 0; i < n; ++i) REQUIRE(std::abs(sr[i].real()) < 2.0);  // only q*I remains
    }

    SUBCASE("random input matches the direct DFT oracle") {
        for (auto& x : v) x = double(i64(rng.uniform(31)) - 15);
        Ciphertext ct = f.encrypt_coeffs(v, rng);
        // fresh ciphertext, no mod_raise: no lattice polynomial interferes
        Ciphertext lifted = f.bts->mod_raise(ct);
        auto [re, im] = f.bts->coeffs_to_slots(f.ev, lifted, f.keys);
        auto sr = f.bts->encoder().decode_slots(f.ctx.decrypt(f.sk, re), re.scale);
        auto si = f.bts->encoder().decode_slots(f.ctx.decrypt(f.sk, im), im.scale);
        double kk = 16.5, q0 = double(f.ring.modulus(0));
        double delta = f.params.delta_input;
        // slots are (m + qI)/(q(K+1/2)); compare m-parts after removing I via
        // rounding: mval/q(K+1/2) with mval = delta * v
        for (u32 i = 0; i < n; ++i) {
            double want_re = delta * v[i] / (q0 * kk);
            double want_im = delta * v[n + i] / (q0 * kk);
            double got_re = std::fmod(sr[i].real(), 1.0 / kk);
            double got_im = std::fmod(si[i].real(), 1.0 / kk);
            auto fold = [&](double g, double w) {
                double d = std::fmod(g - w, 1.0 / kk);
                if (d > 0.5 / kk) d -= 1.0 / kk;
                if (d < -0.5 / kk) d += 1.0 / kk;
                return std::abs(d);
            };
            REQUIRE(fold(got_re, want_re) < 1e-6);
            REQUIRE(fold(got_im, want_im) < 1e-6);
        }
    }
}

TEST_CASE("slots_to_coeffs: inverts coeffs_to_slots within 2^-12") {
    BtsFixture f(419);
    Rng rng(13);
    std::vector<double> v(256);
    for (auto& x : v) x = double(i64(rng.uniform(31)) - 15);
    // run the full half-bts (which removes q*I), then fold back to coefficients
    Ciphertext ct = f.encrypt_coeffs(v, rng);
    auto [l, r] = f.bts->half_bts(f.ev, ct, f.keys);
    Ciphertext back = f.bts->slots_to_coeffs(f.ev, l, r, f.keys);
    Encoder enc(f.ring, 128);
    Poly dec = f.ctx.decrypt(f.sk, back);
    if (dec.level() > 1) dec.drop_to_level(1);
    auto got = enc.decode_coeffs(dec, back.scale, 256);
    for (u32 i = 0; i < 256; ++i) REQUIRE(std::abs(got[i] - v[i]) < 15.0 * std::pow(2.0, -12.0));
}

TEST_CASE("eval_mod: scalar proxy reference is symmetric and accurate") {
    BootstrapParams p;
    p.evalmod = EvalModConfig{30, 3, 16, 7, 0.65};
    double q = std::pow(2.0, 55.0);

    SUBCASE("lattice points map to zero") {
        for (int j : {-16, -3, 0, 5, 16}) {
            double x = double(j) * q;
            REQUIRE(std::abs(proxy_reference(p, q, x)) < q * std::pow(2.0, -20.0));
        }
    }
    SUBCASE("offset 0.1 q is recovered within 2^-10 q") {
        for (int j : {-15, 0, 7}) {
            double x = double(j) * q + 0.1 * q;
            REQUIRE(std::abs(proxy_reference(p, q, x) - 0.1 * q) < q * std::pow(2.0, -10.0));
        }
    }
    SUBCASE("error curve is symmetric about lattice points") {
        for (double frac : {0.01, 0.05, 0.09}) {
            double ep = proxy_reference(p, q, 3 * q + frac * q) - frac * q;
            double em = proxy_reference(p, q, 3 * q - frac * q) + frac * q;
            REQUIRE(std::abs(std::abs(ep) - std::abs(em)) < q * std::pow(2.0, -20.0));
        }
    }
    SUBCASE("1024-point sweep against the exact modular reduction") {
        double worst = 0;
        for (int i = 0; i < 1024; ++i) {
            double frac = -0.1 + 0.2 * double(i) / 1023.0;
            int j = (i % 31) - 15;
            double x = double(j) * q + frac * q;
            worst = std::max(worst, std::abs(proxy_reference(p, q, x) - frac * q));
        }
        REQUIRE(worst < q * std::pow(2.0, -10.0));
    }
}

TEST_CASE("eval_mod: encrypted evaluation tracks the scalar reference") {
    BtsFixture f(421);
    Rng rng(17);
    u32 n = 128;
    double q0 = double(f.ring.modulus(0));
    double kk = 16.5;
    // slots = (q j + m) / (q (K+1/2)) as the decode stage would produce
    std::vector<cplx> y(n);
    std::vector<double> msg(n);
    for (u32 i = 0; i < n; ++i) {
        int j = int(rng.uniform(33)) - 16;
        msg[i] = (double(rng.uniform(2001)) - 1000.0) / 1000.0 * 0.05;  // |m| <= 0.05 q
        y[i] = cplx((double(j) + msg[i]) / kk, 0.0);
    }
    Poly m = f.bts->encoder().encode_slots(y, f.params.delta_evalmod, f.ring.max_level() - 1);
    Ciphertext ct = f.ctx.encrypt(f.sk, m, f.params.delta_evalmod, rng, Domain::slots);
    Ciphertext out = f.bts->eval_mod(f.ev, ct, f.keys);
    auto slots = f.bts->encoder().decode_slots(f.ctx.decrypt(f.sk, out), out.scale);
    for (u32 i = 0; i < n; ++i) {
        double want = msg[i] * q0 / f.params.delta_input;
        REQUIRE(std::abs(slots[i].real() - want) <
                q0 / f.params.delta_input * std::pow(2.0, -10.0));
    }
}

TEST_CASE("half_bts: zero ciphertext refreshes to a zero pair") {
    BtsFixture f(431);
    Rng rng(19);
    Ciphertext ct = f.encrypt_coeffs(std::vector<double>(256, 0.0), rng);
    auto [l, r] = f.bts->half_bts(f.ev, ct, f.keys);
    for (const Ciphertext* c : {&l, &r}) {
        auto slots = f.bts->encoder().decode_slots(f.ctx.decrypt(f.sk, *c), c->scale);
        for (u32 i = 0; i < 128; ++i) REQUIRE(std::abs(slots[i].real()) < 0.01);
    }
}

TEST_CASE("half_bts: integer grid recovered into slots with >= 10 bits") {
    BtsFixture f(433);
    Rng rng(23);
    std::vector<double> v(256);
    for (auto& x : v) x = double(i64(rng.uniform(31)) - 15);
    Ciphertext ct = f.encrypt_coeffs(v, rng);
    auto [l, r] = f.bts->half_bts(f.ev, ct, f.keys);
    REQUIRE(l.level() == f.bts->output_level());
    REQUIRE(l.domain == Domain::slots);
    auto sl = f.bts->encoder().decode_slots(f.ctx.decrypt(f.sk, l), l.scale);
    auto sr = f.bts->encoder().decode_slots(f.ctx.decrypt(f.sk, r), r.scale);
    double range = 30.0, worst = 0;
    int grid_fail = 0;
    for (u32 i = 0; i < 128; ++i) {
        worst = std::max(worst, std::abs(sl[i].real() - v[i]));
        worst = std::max(worst, std::abs(sr[i].real() - v[128 + i]));
        if (std::llround(sl[i].real()) != i64(v[i])) ++grid_fail;
        if (std::llround(sr[i].real()) != i64(v[128 + i])) ++grid_fail;
    }
    MESSAGE("half_bts precision bits: ", -std::log2(worst / range));
    REQUIRE(-std::log2(worst / range) >= 10.0);
    REQUIRE(grid_fail == 0);
}
