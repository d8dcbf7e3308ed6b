#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"
#include "tetris/cli.hpp"

// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// line. Criterion 4's second schedule is expected red: the certified optimum
// for five degree-15 stages from a 2^-16 gap is ~10.5 bits, not 20 (see the
// threshold unit suite for the certificates).

using namespace tetris;

namespace {

void report(int criterion, bool pass, const std::string& detail) {
    std::printf("[ACCEPTANCE] criterion %2d: %s  %s\n", criterion, pass ? "PASS" : "FAIL",
                detail.c_str());
    std::fflush(stdout);
}

struct SmallFixture {
    RingParams ring;
    KeyContext ctx;
    SecretKey sk;
    RepackKeySet keys;

    SmallFixture(u32 n, u64 seed, int q_bits = 55, int p_bits = 54, u32 base2 = 30)
        : ring(n,
               [&] {
                   auto q = find_ntt_primes(q_bits, 1, 2 * u64(n));
                   auto p = find_ntt_primes(p_bits, 1, 2 * u64(n), q);
                   return std::vector<u64>{q[0], p[0]};
               }(),
               1),
          ctx(ring, NoiseParams{3.2, 2 * n / 3}, GadgetVector{1, base2}),
          sk() {
        Rng rng(seed);
        auto kp = ctx.keygen(rng);
        sk = std::move(kp.first);
        Rng krng = rng.split(5);
        keys = gen_repack_keys(ctx, sk, krng);
    }
};

double repack_rms_noise(SmallFixture& f, double sigma_extra, u64 seed) {
    u32 n = f.ring.degree();
    i64 delta = 1 << 30;
    Rng r(seed);
    std::vector<Poly> msgs;
    std::vector<Ciphertext> cts;
    for (u32 i = 0; i < n; ++i) {
        std::vector<i64> coeffs = {(i64(r.uniform(17)) - 8) * delta};
        msgs.push_back(poly_from_i64(f.ring, coeffs, 0));
        Ciphertext ct = f.ctx.encrypt(f.sk, msgs.back(), double(delta), r);
        if (sigma_extra > 0) {
            Poly extra = sample_gaussian(f.ring, sigma_extra, 0, 0, r);
            ct.parts[0].add_inplace(extra);
        }
        cts.push_back(std::move(ct));
    }
    std::vector<const Ciphertext*> in;
    for (auto& c : cts) in.push_back(&c);
    Poly dec = f.ctx.decrypt(f.sk, repack(f.ctx, in, f.keys));
    // plaintext simulation of the butterfly as the exact reference
    std::vector<u64> n_inv(f.ring.moduli().size());
    for (std::size_t i = 0; i < n_inv.size(); ++i) n_inv[i] = inv_mod(n, f.ring.moduli()[i]);
    for (auto& p : msgs) p.mul_scalar_inplace(n_inv);
    auto exps = repack_exponents(f.ring);
    for (u32 round = 0; round < f.ring.log_degree(); ++round) {
        u32 t = n >> (round + 1);
        for (u32 j = 0; j < t; ++j) {
            Poly shifted = msgs[j + t].mul_monomial(t);
            Poly sum = poly_add(msgs[j], shifted);
            Poly diff = poly_sub(msgs[j], shifted);
            sum.add_inplace(automorphism_apply(diff, exps[round]));
            msgs[j] = std::move(sum);
        }
    }
    dec.sub_inplace(msgs[0]);
    double rms = 0;
    for (u32 i = 0; i < n; ++i) {
        double v = double(to_centered(dec.row(0)[i], f.ring.modulus(0)));
        rms += v * v;
    }
    return std::sqrt(rms / double(n));
}

const ProtocolContext& toy_context() {
    static ProtocolContext pc(Profile::toy());
    return pc;
}

const ProtocolContext& small_context() {
    static ProtocolContext pc(Profile::toy_small());
    return pc;
}

std::vector<FunctionSpec> random_specs(u32 n, std::size_t m, Rng& rng) {
    std::vector<FunctionSpec> specs(m);
    for (auto& s : specs) {
        s.lo = 0.0;
        s.hi = 2.0;
        s.table.resize(n);
        for (auto& v : s.table) v = double(rng.uniform(10));
        s.out_min = 0;
        s.out_max = 9;
    }
    return specs;
}

int oracle_bit(const Database& db, const SelectionMatrix& sel,
               const std::vector<FunctionSpec>& specs, double t0, double t1,
               std::size_t* count_out = nullptr) {
    auto selected = sel.apply(db);
    u32 n = u32(specs[0].table.size());
    std::size_t count = 0;
    for (const auto& row : selected) {
        double score = 0;
        for (std::size_t j = 0; j < specs.size(); ++j)
            score += specs[j].table[encode_input(row[j], specs[j].lo, specs[j].hi, n)];
        if (score >= t0) ++count;
    }
    if (count_out) *count_out = count;
    return double(count) >= t1 ? 1 : 0;
}

}  // namespace

TEST_CASE("criterion 1: repacking correctness, Set-I shape, zero failures") {
    double t_start = detail_protocol::now_s();
    i64 delta = 1 << 30;
    u64 failures = 0, trials_total = 0;
    struct Plan {
        u32 n;
        int trials;
    };
    for (Plan plan : {Plan{16, 500}, Plan{64, 300}, Plan{256, 200}}) {
        SmallFixture f(plan.n, 9000 + plan.n);
        Rng rng(17 + plan.n);
        for (int trial = 0; trial < plan.trials; ++trial) {
            std::vector<Ciphertext> cts;
            std::vector<i64> want(plan.n);
            for (u32 i = 0; i < plan.n; ++i) {
                std::vector<i64> coeffs(plan.n);
                for (auto& c : coeffs) c = (i64(rng.uniform(17)) - 8) * delta;
                want[i] = coeffs[0] / delta;
                cts.push_back(
                    f.ctx.encrypt(f.sk, poly_from_i64(f.ring, coeffs, 0), double(delta), rng));
            }
            std::vector<const Ciphertext*> in;
            for (auto& c : cts) in.push_back(&c);
            Poly dec = f.ctx.decrypt(f.sk, repack(f.ctx, in, f.keys));
            for (u32 i = 0; i < plan.n; ++i) {
                i64 got = std::llround(
                    double(to_centered(dec.row(0)[i], f.ring.modulus(0))) / double(delta));
                if (got != want[i]) ++failures;
            }
            ++trials_total;
        }
    }
    double elapsed = detail_protocol::now_s() - t_start;
    bool pass = failures == 0 && elapsed < 60.0;
    report(1, pass,
           std::to_string(trials_total) + " trials, " + std::to_string(failures) +
               " coefficient failures, " + std::to_string(elapsed) + " s");
    REQUIRE(failures == 0);
    REQUIRE(elapsed < 60.0);
}

TEST_CASE("criterion 2: repacking noise law") {
    // Log-log regression of output noise against input noise: a slope near
    // zero means the output is governed by the keyswitch term alone. The
    // fixture uses a 40-bit auxiliary prime so that term dominates the
    // 2^8-wide input sweep by orders of magnitude.
    SmallFixture f(256, 9300, 50, 40, 0);
    std::vector<double> xs, ys;
    for (int k = 0; k <= 8; ++k) {
        double sigma = 3.2 * double(1 << k);
        double out = 0;
        const int reps = 6;
        for (int r = 0; r < reps; ++r) out += repack_rms_noise(f, sigma, 777 + u64(k * reps + r));
        xs.push_back(std::log2(sigma));
        ys.push_back(std::log2(out / reps));
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= double(xs.size());
    my /= double(ys.size());
    double num = 0, den = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        num += (xs[i] - mx) * (ys[i] - my);
        den += (xs[i] - mx) * (xs[i] - mx);
    }
    double slope = num / den;

    // output noise tracks N across ring sizes
    std::vector<double> by_n;
    for (u32 n : {16u, 64u, 256u}) {
        SmallFixture g(n, 9400 + n, 50, 40, 0);
        double acc = 0;
        const int reps = 8;
        for (int r = 0; r < reps; ++r) acc += repack_rms_noise(g, 0.0, 881 + n + u64(r));
        by_n.push_back(acc / reps);
    }
    double r1 = by_n[1] / by_n[0], r2 = by_n[2] / by_n[1];
    bool scaling_ok = r1 >= 1.0 && r1 <= 16.0 && r2 >= 1.0 && r2 <= 16.0;

    bool pass = std::abs(slope) < 0.1 && scaling_ok;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "log-log slope %.4f (|.| < 0.1), per-4x-N noise ratios %.2f / %.2f in [1,16]",
                  slope, r1, r2);
    report(2, pass, buf);
    REQUIRE(std::abs(slope) < 0.1);
    REQUIRE(scaling_ok);
}

TEST_CASE("criterion 3: exhaustive LUT exactness and the off-grid bound") {
    u64 lut_violations = 0, offgrid_violations = 0;
    for (u32 n : {16u, 32u, 64u}) {
        SmallFixture f(n, 9500 + n);
        Rng rng(23 + n);
        double delta = double(1ULL << 40);
        FunctionSpec spec;
        spec.lo = 0;
        spec.hi = 2;
        spec.table.resize(n);
        for (auto& v : spec.table) v = double(rng.uniform(10));
        TestVector tv = build_test_vector(f.ctx, spec, f.sk, delta, rng);
        for (u32 i = 0; i < n; ++i) {
            Poly dec = f.ctx.decrypt(f.sk, lookup(tv, i));
            i64 got = std::llround(double(to_centered(dec.row(0)[0], f.ring.modulus(0))) / delta);
            if (got != i64(spec.table[i])) ++lut_violations;
        }
    }
    {
        // Lipschitz table on n = 64: off-grid inputs deviate at most by the
        // value change across one grid cell
        u32 n = 64;
        SmallFixture f(n, 9600);
        Rng rng(29);
        double delta = double(1ULL << 40);
        FunctionSpec spec;
        spec.lo = 0;
        spec.hi = 2;
        spec.table.resize(n);
        for (u32 i = 0; i < n; ++i) spec.table[i] = 4.5 + 4.5 * std::sin(double(i) * 0.2);
        TestVector tv = build_test_vector(f.ctx, spec, f.sk, delta, rng);
        auto f_cont = [&](double x) { return 4.5 + 4.5 * std::sin(x * double(n) / 2.0 * 0.2); };
        double lip = 4.5 * 0.2 * double(n) / 2.0;  // |f'| bound in x-units
        for (int t = 0; t < 10000; ++t) {
            double x = 2.0 * double(rng.uniform(1u << 30)) / double(1u << 30);
            if (x >= 2.0) continue;
            Poly dec = f.ctx.decrypt(f.sk, lookup(tv, encode_input(x, 0, 2, n)));
            double got = double(to_centered(dec.row(0)[0], f.ring.modulus(0))) / delta;
            double bound = lip * (2.0 / n) + 1.0 / delta + 1e-9;
            if (std::abs(got - f_cont(x)) > bound) ++offgrid_violations;
        }
    }
    bool pass = lut_violations == 0 && offgrid_violations == 0;
    report(3, pass,
           "lut violations " + std::to_string(lut_violations) + ", off-grid violations " +
               std::to_string(offgrid_violations) + " over 10^4 samples");
    REQUIRE(lut_violations == 0);
    REQUIRE(offgrid_violations == 0);
}

TEST_CASE("criterion 4: threshold chains against the Table-2 targets") {
    auto equioscillates = [](const ThresholdParams& p) {
        long double gamma = std::pow(2.0L, -(long double)p.alpha), upper = 1.0L;
        for (u32 d : p.degrees) {
            MinimaxResult r = remez_minimax(gamma, upper, d);
            if (r.nodes.size() != (d + 3) / 2) return false;
            int sign = 0;
            for (std::size_t i = 0; i < r.nodes.size(); ++i) {
                long double e = r.eval(r.nodes[i]) - 1.0L;
                if (std::fabs(std::fabs(e) - r.error) > 1e-10L + 1e-6L * r.error) return false;
                int s = e >= 0 ? 1 : -1;
                if (i > 0 && s != -sign) return false;
                sign = s;
            }
            gamma = 1.0L - r.error;
            upper = 1.0L + r.error;
        }
        return true;
    };

    const MinimaxChain& c1 = chain_cache(Profile::toy().th_local);
    const MinimaxChain& c2 = chain_cache(Profile::toy().th_global);

    auto grid_error = [](const MinimaxChain& c) {
        long double g = std::pow(2.0L, -(long double)c.params.alpha);
        double worst = 0;
        for (int i = 0; i <= 100000; ++i) {
            double x = double(g + (1.0L - g) * (long double)i / 100000.0L);
            worst = std::max(worst, std::abs(c.eval_step(x) - 1.0));
            worst = std::max(worst, std::abs(c.eval_step(-x)));
        }
        return worst;
    };

    bool cert1 = equioscillates(c1.params);
    bool cert2 = equioscillates(c2.params);
    double e1 = grid_error(c1), e2 = grid_error(c2);
    bool pass1 = e1 <= std::pow(2.0, -12.0) && cert1;
    bool within_one_bit = c2.achieved_beta >= double(c2.params.beta) - 1.0;
    bool pass2 = e2 <= std::pow(2.0, -20.0) || within_one_bit;

    char buf[240];
    std::snprintf(buf, sizeof buf,
                  "T1 err 2^%.2f (target 2^-12, cert %s); T2 err 2^%.2f = achieved beta %.2f vs "
                  "target 20 (cert %s); certified optimum for the declared degrees",
                  std::log2(e1), cert1 ? "ok" : "BAD", std::log2(e2), c2.achieved_beta,
                  cert2 ? "ok" : "BAD");
    report(4, pass1 && pass2, buf);
    REQUIRE(cert1);
    REQUIRE(cert2);
    REQUIRE(e1 <= std::pow(2.0, -12.0));
    // Faithful to the stated fallback: the achieved beta must come within one
    // bit of the target. Five certified-optimal degree-15 stages cannot, so
    // this stays red; the analysis lives in the threshold unit suite.
    REQUIRE(within_one_bit);
}

TEST_CASE("criterion 5: encrypted thresholds match the comparator on 10^4 slots") {
    const ProtocolContext& pc = small_context();
    const Evaluator& ev = pc.evaluator();
    u32 slots = pc.profile().n_big / 2;
    Rng rng(9700);
    Rng krng = rng.split(1);
    auto kp = pc.ctx_big().keygen(krng);
    SecretKey sk = std::move(kp.first);
    EvalKeys keys;
    Rng kg = krng.split(2);
    keys.relin = pc.ctx_big().relin_key_gen(sk, kg);
    Encoder enc(pc.ring_big(), slots);
    const MinimaxChain& chain = pc.chain_local();
    double delta = pc.profile().delta_evalmod;
    int lvl = int(chain.levels_required()) + 1;
    double t0 = 80.0, sum_max = 144.0;
    Ciphertext ct_t = pc.ctx_big().encrypt(
        sk, enc.encode_slots(std::vector<cplx>(slots, cplx{t0, 0}), delta, lvl), delta, krng,
        Domain::slots);
    Ciphertext ct_norm = pc.ctx_big().encrypt(
        sk, enc.encode_slots(std::vector<cplx>(slots, cplx{1.0 / sum_max, 0}), delta, lvl), delta,
        krng, Domain::slots);
    u64 mismatches = 0, tested = 0;
    while (tested < 10000) {
        std::vector<cplx> scores(slots);
        std::vector<int> want(slots);
        for (u32 i = 0; i < slots; ++i) {
            int s = int(rng.uniform(145));
            scores[i] = cplx(double(s), 0.0);
            want[i] = s >= int(t0) ? 1 : 0;
        }
        Ciphertext ct = pc.ctx_big().encrypt(sk, enc.encode_slots(scores, delta, lvl), delta,
                                             krng, Domain::slots);
        Ciphertext out = eval_private_threshold(ev, ct, ct_t, ct_norm, chain, keys);
        auto got = enc.decode_slots(pc.ctx_big().decrypt(sk, out), out.scale);
        for (u32 i = 0; i < slots && tested < 10000; ++i, ++tested)
            if ((got[i].real() >= 0.5 ? 1 : 0) != want[i]) ++mismatches;
    }
    report(5, mismatches == 0,
           std::to_string(tested) + " slots, " + std::to_string(mismatches) + " mismatches");
    REQUIRE(mismatches == 0);
}

TEST_CASE("criterion 6: Half-BTS recovers grid messages at desk scale") {
    const ProtocolContext& pc = toy_context();
    u32 n_big = pc.profile().n_big;
    Rng rng(9800);
    Rng krng = rng.split(1);
    auto kp = pc.ctx_big().keygen(krng);
    SecretKey sk = std::move(kp.first);
    EvalKeys keys;
    Rng kg = krng.split(2);
    keys.relin = pc.ctx_big().relin_key_gen(sk, kg);
    for (u64 g : pc.bts().required_galois_exponents())
        if (!keys.has(g)) keys.galois.emplace(g, pc.ctx_big().galois_key_gen(sk, g, kg));
    Encoder enc(pc.ring_big(), n_big / 2);
    double range = 144.0;
    u64 slots_tested = 0, grid_failures = 0;
    double worst = 0;
    while (slots_tested < 10000) {
        std::vector<double> v(n_big);
        for (auto& x : v) x = double(rng.uniform(145));
        Poly m = enc.encode_coeffs(v, pc.profile().delta_tv, 0);
        Ciphertext ct = pc.ctx_big().encrypt(sk, m, pc.profile().delta_tv, rng, Domain::coeffs);
        auto [l, r] = pc.bts().half_bts(pc.evaluator(), ct, keys);
        auto sl = enc.decode_slots(pc.ctx_big().decrypt(sk, l), l.scale);
        auto sr = enc.decode_slots(pc.ctx_big().decrypt(sk, r), r.scale);
        for (u32 i = 0; i < n_big / 2; ++i) {
            double e1 = std::abs(sl[i].real() - v[i]);
            double e2 = std::abs(sr[i].real() - v[n_big / 2 + i]);
            worst = std::max({worst, e1, e2});
            if (std::llround(sl[i].real()) != i64(v[i])) ++grid_failures;
            if (std::llround(sr[i].real()) != i64(v[n_big / 2 + i])) ++grid_failures;
            slots_tested += 2;
        }
    }
    double bits = -std::log2(worst / range);
    double fail_rate = double(grid_failures) / double(slots_tested);
    bool pass = bits >= 10.0 && fail_rate < 1e-3;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "%.2f bits over a 0..144 grid (>= 10), %llu/%llu grid failures (< 1e-3); "
                  "production-scale figures not asserted",
                  bits, (unsigned long long)grid_failures, (unsigned long long)slots_tested);
    report(6, pass, buf);
    REQUIRE(bits >= 10.0);
    REQUIRE(fail_rate < 1e-3);
}

TEST_CASE("criterion 7: end-to-end oracle equivalence at p = 2^12") {
    const ProtocolContext& pc = toy_context();
    double t_start = detail_protocol::now_s();
    u32 n = pc.ring_small().degree();
    std::size_t p = 4096, h = 16, m = 16;
    int mismatches = 0, ones = 0;
    for (int inst = 0; inst < 20; ++inst) {
        Rng rng(41000 + u64(inst) * 17);
        auto specs = random_specs(n, m, rng);
        Database db;
        for (std::size_t j = 0; j < h; ++j) db.attribute_names.push_back("a" + std::to_string(j));
        db.rows.assign(p, std::vector<double>(h));
        for (auto& row : db.rows)
            for (auto& x : row) x = std::clamp(1.0 + rng.normal(), 0.0, 1.9999);
        SelectionMatrix sel = SelectionMatrix::identity(h);
        double sum_max = 0;
        for (auto& s : specs) sum_max += s.max_value();
        double t0 = std::floor(sum_max * 0.5);
        if (inst < 2) {
            // engineered: a block of rows lands exactly on t0 (exercising the
            // eps/2 offset) and t1 sits exactly at the qualifying count
            std::vector<double> hit_row(h, 0.0);
            double target = t0;
            for (std::size_t j = 0; j < h && target > 0; ++j) {
                u32 best = 0;
                for (u32 k = 0; k < n; ++k)
                    if (specs[j].table[k] <= target && specs[j].table[k] > specs[j].table[best])
                        best = k;
                hit_row[j] = (double(best) + 0.5) * 2.0 / double(n);
                target -= specs[j].table[best];
            }
            if (target == 0)
                for (int r = 0; r < 64; ++r) db.rows[std::size_t(r)] = hit_row;
        }
        std::size_t count = 0;
        oracle_bit(db, sel, specs, t0, 1.0, &count);
        double t1 = inst % 2 == 0 ? double(std::max<std::size_t>(count, 1))
                                  : double(count + 1);  // boundary on both sides
        int want = oracle_bit(db, sel, specs, t0, t1);
        ScientistSetup s = scientist_setup(pc, specs, t0, t1, 52000 + u64(inst));
        Ciphertext bit = explore(pc, db, sel, s.query, s.keys);
        int got = decrypt_bit(pc, s.sk_big, bit);
        if (got != want) ++mismatches;
        ones += want;
    }
    double elapsed = detail_protocol::now_s() - t_start;
    bool pass = mismatches == 0;
    char buf[160];
    std::snprintf(buf, sizeof buf, "20 instances (%d expected yes), %d mismatches, %.0f s%s", ones,
                  mismatches, elapsed, elapsed < 600 ? " (under the 10 min target)" : " (over target)");
    report(7, pass, buf);
    REQUIRE(mismatches == 0);
}

TEST_CASE("criterion 8: partitioned runs match the monolithic bit") {
    const ProtocolContext& pc = small_context();
    u32 n = pc.ring_small().degree();
    std::size_t p = 512, h = 16;
    int mismatches = 0;
    for (int seed = 0; seed < 5; ++seed) {
        Rng rng(61000 + u64(seed));
        auto specs = random_specs(n, h, rng);
        Database db;
        for (std::size_t j = 0; j < h; ++j) db.attribute_names.push_back("a" + std::to_string(j));
        db.rows.assign(p, std::vector<double>(h));
        for (auto& row : db.rows)
            for (auto& x : row) x = std::clamp(1.0 + rng.normal(), 0.0, 1.9999);
        SelectionMatrix sel = SelectionMatrix::identity(h);
        double sum_max = 0;
        for (auto& s : specs) sum_max += s.max_value();
        double t0 = std::floor(sum_max * 0.5);
        std::size_t count = 0;
        oracle_bit(db, sel, specs, t0, 1.0, &count);
        double t1 = double(std::max<std::size_t>(count, 1));
        ScientistSetup s = scientist_setup(pc, specs, t0, t1, 62000 + u64(seed));
        int mono = decrypt_bit(pc, s.sk_big, explore(pc, db, sel, s.query, s.keys));

        // horizontal: two owners, half the rows each
        Database d1, d2;
        d1.attribute_names = d2.attribute_names = db.attribute_names;
        d1.rows.assign(db.rows.begin(), db.rows.begin() + long(p / 2));
        d2.rows.assign(db.rows.begin() + long(p / 2), db.rows.end());
        auto r1 = score_and_repack(pc, d1, sel, s.query, s.keys);
        auto r2 = score_and_repack(pc, d2, sel, s.query, s.keys);
        int horiz = decrypt_bit(
            pc, s.sk_big, merge_horizontal(pc, {r1, r2}, {d1.p(), d2.p()}, s.query, s.keys));

        // vertical: 8 + 8 attributes
        Database da, dbb;
        da.attribute_names.assign(db.attribute_names.begin(), db.attribute_names.begin() + 8);
        dbb.attribute_names.assign(db.attribute_names.begin() + 8, db.attribute_names.end());
        for (const auto& row : db.rows) {
            da.rows.emplace_back(row.begin(), row.begin() + 8);
            dbb.rows.emplace_back(row.begin() + 8, row.end());
        }
        Query qa = s.query, qb = s.query;
        qa.tvs.assign(s.query.tvs.begin(), s.query.tvs.begin() + 8);
        qb.tvs.assign(s.query.tvs.begin() + 8, s.query.tvs.end());
        auto ra = score_and_repack(pc, da, SelectionMatrix::identity(8), qa, s.keys);
        auto rb = score_and_repack(pc, dbb, SelectionMatrix::identity(8), qb, s.keys);
        int vert = decrypt_bit(pc, s.sk_big, merge_vertical(pc, {ra, rb}, p, s.query, s.keys));

        if (horiz != mono || vert != mono) ++mismatches;
    }
    report(8, mismatches == 0, "5 seeds x {horizontal, vertical}, " + std::to_string(mismatches) +
                                   " mismatches against monolithic");
    REQUIRE(mismatches == 0);
}

TEST_CASE("criterion 9: throughput harness and amortized flatness") {
    cli::BenchReport a = cli::bench_run("toy", 16384, 16, 4242, 1);
    a.print();
    cli::BenchReport b = cli::bench_run("toy", 32768, 16, 4242, 1);
    double ratio = b.amortized_ms() / a.amortized_ms();
    bool flat = ratio < 2.0 && ratio > 0.5;
    bool stages_present = a.stages.pfe_pack > 0 && a.stages.half_bts > 0 &&
                          a.stages.threshold1 > 0 && a.stages.threshold2 > 0 &&
                          a.stages.scientist_gen > 0 && a.stages.owner_gen >= 0;
    char buf[160];
    std::snprintf(buf, sizeof buf, "amortized %.3f ms/entry at 2^14, %.3f at 2^15 (ratio %.2f)",
                  a.amortized_ms(), b.amortized_ms(), ratio);
    report(9, flat && stages_present, buf);
    REQUIRE(flat);
    REQUIRE(stages_present);
}

TEST_CASE("criterion 10: serialization round trips and exact size formulas") {
    const ProtocolContext& pc = small_context();
    Rng rng(9900);
    auto specs = random_specs(pc.ring_small().degree(), 4, rng);
    ScientistSetup s = scientist_setup(pc, specs, 8.0, 4.0, 71000);
    u64 failures = 0;

    auto expect = [&](bool ok) {
        if (!ok) ++failures;
    };
    // ciphertexts at several levels
    for (const Ciphertext* ct : {&s.query.t0, &s.query.t1, &s.query.norm, &s.query.tvs[0].ct}) {
        auto bytes = serialize_ciphertext(*ct);
        Ciphertext back = deserialize_ciphertext(bytes, ct->ring());
        expect(serialize_ciphertext(back) == bytes);
        expect(bytes.size() == ciphertext_size(ct->ring(), ct->level(), u32(ct->parts.size())));
    }
    {
        auto bytes = serialize_switching_key(s.keys.merge);
        SwitchingKey back = deserialize_switching_key(bytes, pc.ring_big());
        expect(serialize_switching_key(back) == bytes);
        expect(bytes.size() == header_size(pc.ring_big()) +
                                   switching_key_body_size(pc.ring_big(), u32(back.b.size())));
    }
    {
        auto bytes = serialize_repack_keys(s.keys.repack);
        expect(serialize_repack_keys(deserialize_repack_keys(bytes, pc.ring_small())) == bytes);
    }
    {
        auto bytes = serialize_query(s.query);
        expect(serialize_query(deserialize_query(bytes, pc.ring_small(), pc.ring_big())) == bytes);
    }
    {
        auto bytes = serialize_eval_keyset(s.keys);
        expect(serialize_eval_keyset(deserialize_eval_keyset(bytes, pc.ring_small(),
                                                             pc.ring_big())) == bytes);
    }
    {
        auto bytes = serialize_chain(pc.chain_local());
        expect(serialize_chain(deserialize_chain(bytes)) == bytes);
    }
    {
        auto bytes = serialize_secret_key(s.sk_small);
        expect(deserialize_secret_key(bytes, pc.ring_small()).coeffs() == s.sk_small.coeffs());
    }
    report(10, failures == 0, std::to_string(failures) + " round-trip or size mismatches");
    REQUIRE(failures == 0);
}
