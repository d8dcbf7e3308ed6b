#pragma once

#include <complex>
#include <functional>
#include <map>
#include <set>

#include "tetris/rlwe.hpp"

namespace tetris {

using cplx = std::complex<double>;

// ---------------------------------------------------------------------------
// Encoder: coefficient and canonical (slots) encodings.
//
// Slots convention: n slots live at the primitive 4n-th roots psi^{5^j},
// psi = exp(i*pi/(2n)); a message polynomial in Y = X^{N/(2n)} of 2n
// coefficients splits as w = coeffs[0:n] + i*coeffs[n:2n], and slot j equals
// sum_t w[t] psi^{t*5^j}. Rotation phi_{5^k} shifts slots left by k,
// phi_{-1} conjugates.
// ---------------------------------------------------------------------------

class Encoder {
public:
    Encoder(const RingParams& ring, u32 nslots) : ring_(&ring), n_(nslots) {
        if (n_ < 2 || (n_ & (n_ - 1)) != 0 || n_ > ring.degree() / 2)
            throw TetrisError("ckks", "slot count must be a power of two <= N/2");
        u32 m = 4 * n_;
        psi_.resize(m);
        for (u32 t = 0; t < m; ++t) {
            double ang = M_PI * double(t) / double(2 * n_);
            psi_[t] = cplx(std::cos(ang), std::sin(ang));
        }
        rot5_.resize(n_);
        u64 g = 1;
        for (u32 j = 0; j < n_; ++j) {
            rot5_[j] = u32(g);
            g = (g * 5) % m;
        }
    }

    const RingParams& ring() const { return *ring_; }
    u32 slots() const { return n_; }

    // w -> slots (direct n^2 special DFT; plan construction and tests only
    // ever touch vectors of desk-scale length).
    std::vector<cplx> dft(const std::vector<cplx>& w) const {
        std::vector<cplx> out(n_);
        for (u32 j = 0; j < n_; ++j) {
            cplx acc{0, 0};
            for (u32 t = 0; t < n_; ++t)
                acc += w[t] * psi_[u32((u64(t) * rot5_[j]) % (4 * n_))];
            out[j] = acc;
        }
        return out;
    }

    std::vector<cplx> dft_inv(const std::vector<cplx>& v) const {
        std::vector<cplx> out(n_);
        for (u32 t = 0; t < n_; ++t) {
            cplx acc{0, 0};
            for (u32 j = 0; j < n_; ++j)
                acc += v[j] * std::conj(psi_[u32((u64(t) * rot5_[j]) % (4 * n_))]);
            out[t] = acc / double(n_);
        }
        return out;
    }

    Poly encode_slots(const std::vector<cplx>& v, double scale, int level) const {
        if (v.size() != n_) throw TetrisError("ckks", "slot vector length mismatch");
        std::vector<cplx> w = dft_inv(v);
        u32 stride = ring_->degree() / (2 * n_);
        Poly p(*ring_, level, Form::coeff);
        check_encoding_bound(w, scale, level);
        for (u32 t = 0; t < n_; ++t) {
            i64 re = round_half_away(w[t].real() * scale);
            i64 im = round_half_away(w[t].imag() * scale);
            for (int r = 0; r <= level; ++r) {
                u64 q = ring_->modulus(r);
                p.row(r)[std::size_t(t) * stride] = from_centered(re, q);
                p.row(r)[std::size_t(n_ + t) * stride] = from_centered(im, q);
            }
        }
        return p;
    }

    std::vector<cplx> decode_slots(const Poly& poly, double scale) const {
        std::vector<cplx> w(n_);
        u32 stride = ring_->degree() / (2 * n_);
        for (u32 t = 0; t < n_; ++t) {
            double re = double(centered_value(poly, std::size_t(t) * stride)) / scale;
            double im = double(centered_value(poly, std::size_t(n_ + t) * stride)) / scale;
            w[t] = cplx(re, im);
        }
        return dft(w);
    }

    Poly encode_coeffs(const std::vector<double>& v, double scale, int level) const {
        if (v.size() > ring_->degree()) throw TetrisError("ckks", "coeff vector too long");
        u32 stride = ring_->degree() / u32(v.size());
        Poly p(*ring_, level, Form::coeff);
        for (std::size_t t = 0; t < v.size(); ++t) {
            i64 c = round_half_away(v[t] * scale);
            if (std::abs(double(c)) * 2 >= double(ring_->modulus(0)) && level == 0)
                throw TetrisError("ckks", "plaintext overflows the level-0 modulus");
            for (int r = 0; r <= level; ++r)
                p.row(r)[t * stride] = from_centered(c, ring_->modulus(r));
        }
        return p;
    }

    std::vector<double> decode_coeffs(const Poly& poly, double scale, std::size_t count) const {
        u32 stride = ring_->degree() / u32(count);
        std::vector<double> v(count);
        for (std::size_t t = 0; t < count; ++t)
            v[t] = double(centered_value(poly, t * stride)) / scale;
        return v;
    }

    // Exact centered reconstruction from the first min(level, 1)+1 rows; the
    // decoded magnitudes in this artifact always fit two word-sized primes.
    static i128 centered_value(const Poly& p, std::size_t idx) {
        const RingParams& ring = p.ring();
        if (p.level() == 0) return to_centered(p.row(0)[idx], ring.modulus(0));
        u64 q0 = ring.modulus(0), q1 = ring.modulus(1);
        u64 r0 = p.row(0)[idx], r1 = p.row(1)[idx];
        u64 d = sub_mod(r1 % q1, r0 % q1, q1);
        u64 t = mul_mod(d, inv_mod(q0 % q1, q1), q1);
        i128 x = i128(r0) + i128(q0) * i128(t);
        i128 q = i128(q0) * i128(q1);
        if (x > q / 2) x -= q;
        return x;
    }

private:
    void check_encoding_bound(const std::vector<cplx>& w, double scale, int level) const {
        double bound = 0;
        for (const cplx& c : w) bound = std::max({bound, std::abs(c.real()), std::abs(c.imag())});
        if (level == 0 && bound * scale * 2 >= double(ring_->modulus(0)))
            throw TetrisError("ckks", "plaintext overflows the level-0 modulus");
    }

    const RingParams* ring_;
    u32 n_;
    std::vector<cplx> psi_;
    std::vector<u32> rot5_;
};

// ---------------------------------------------------------------------------
// Evaluation keys shared by the SIMD layer: one relinearization key and the
// Galois keys for every declared automorphism exponent.
// ---------------------------------------------------------------------------

struct EvalKeys {
    SwitchingKey relin;
    std::map<u64, SwitchingKey> galois;

    const SwitchingKey& galois_key(u64 exponent) const {
        auto it = galois.find(exponent);
        if (it == galois.end())
            throw TetrisError("ckks", "missing rotation key for exponent " + std::to_string(exponent));
        return it->second;
    }
    bool has(u64 exponent) const { return galois.count(exponent) != 0; }
};

inline u64 rotation_exponent(const RingParams& ring, u32 k) {
    u64 two_n = 2 * u64(ring.degree());
    return pow_mod(5, k, two_n);
}

inline u64 conjugation_exponent(const RingParams& ring) { return 2 * u64(ring.degree()) - 1; }

// ---------------------------------------------------------------------------
// Evaluator: approximate arithmetic with scaling-factor bookkeeping.
// Scales are tracked as reals; additions tolerate the relative drift that
// near-Delta prime chains produce (< 2^-20), anything larger is an error.
// ---------------------------------------------------------------------------

class Evaluator {
public:
    explicit Evaluator(const KeyContext& ctx) : ctx_(&ctx) {}

    const KeyContext& key_context() const { return *ctx_; }
    const RingParams& ring() const { return ctx_->ring(); }

    static void check_scales_match(double a, double b) {
        // near-Delta prime chains keep operand scales within ~2^-24 of each
        // other; anything past 1e-4 signals real bookkeeping damage
        if (std::abs(a / b - 1.0) > 1e-4)
            throw TetrisError("ckks", "scaling factors diverged beyond tolerance");
    }

    void align_levels(Ciphertext& a, Ciphertext& b) const {
        int lvl = std::min(a.level(), b.level());
        if (a.level() != lvl) { a.to_coeff(); a.drop_to_level(lvl); }
        if (b.level() != lvl) { b.to_coeff(); b.drop_to_level(lvl); }
    }

    Ciphertext add(const Ciphertext& a, const Ciphertext& b) const {
        Ciphertext x = a, y = b;
        align_levels(x, y);
        check_scales_match(x.scale, y.scale);
        if (x.form() != y.form()) { x.to_coeff(); y.to_coeff(); }
        x.add_inplace(y);
        return x;
    }

    Ciphertext sub(const Ciphertext& a, const Ciphertext& b) const {
        Ciphertext x = a, y = b;
        align_levels(x, y);
        check_scales_match(x.scale, y.scale);
        if (x.form() != y.form()) { x.to_coeff(); y.to_coeff(); }
        x.sub_inplace(y);
        return x;
    }

    // ct * ct -> degree-2 ciphertext at scale Delta_a * Delta_b.
    Ciphertext mul(const Ciphertext& a, const Ciphertext& b) const {
        if (a.domain != b.domain) throw TetrisError("ckks", "domain tag mismatch in mul");
        if (a.degree() != 1 || b.degree() != 1)
            throw TetrisError("ckks", "mul expects degree-1 operands");
        Ciphertext x = a, y = b;
        align_levels(x, y);
        if (x.level() == 0) throw TetrisError("ckks", "exhausted ciphertext: no level left to rescale");
        x.to_eval();
        y.to_eval();
        Poly p0 = x.parts[0];
        p0.mul_pointwise_inplace(y.parts[0]);
        Poly p1 = x.parts[0];
        p1.mul_pointwise_inplace(y.parts[1]);
        Poly p1b = x.parts[1];
        p1b.mul_pointwise_inplace(y.parts[0]);
        p1.add_inplace(p1b);
        Poly p2 = x.parts[1];
        p2.mul_pointwise_inplace(y.parts[1]);
        Ciphertext out;
        out.parts = {std::move(p0), std::move(p1), std::move(p2)};
        out.scale = x.scale * y.scale;
        out.domain = x.domain;
        out.sk_id = x.sk_id;
        out.noise_bound = x.noise_bound * y.scale + y.noise_bound * x.scale;
        return out;
    }

    Ciphertext mul_relin(const Ciphertext& a, const Ciphertext& b, const EvalKeys& keys) const {
        return ctx_->relinearize(mul(a, b), keys.relin);
    }

    // Plaintext operand product; `plain` may carry more rows than the
    // ciphertext (rows are matched by modulus index).
    Ciphertext mul_plain(const Ciphertext& ct, const Poly& plain_eval, double plain_scale) const {
        Ciphertext out = ct;
        out.to_eval();
        u32 n = ring().degree();
        for (auto& part : out.parts) {
            for (int r = 0; r < part.rows(); ++r) {
                u32 m = part.modulus_index(r);
                u64 q = ring().modulus(m);
                const u64* pv = plain_eval.row(int(m));
                u64* a = part.row(r);
                for (u32 i = 0; i < n; ++i) a[i] = mul_mod(a[i], pv[i], q);
            }
        }
        out.scale = ct.scale * plain_scale;
        out.noise_bound = ct.noise_bound * plain_scale;
        return out;
    }

    // Scalar products cost no NTT: residues scale by round(c * scale).
    Ciphertext mul_scalar(const Ciphertext& ct, double c, double scalar_scale) const {
        if (std::abs(c) * scalar_scale >= 9.0e18)
            throw TetrisError("ckks", "scalar multiplier exceeds the integer range");
        i64 v = round_half_away(c * scalar_scale);
        Ciphertext out = ct;
        std::vector<u64> per_mod(ring().moduli().size());
        for (std::size_t i = 0; i < per_mod.size(); ++i)
            per_mod[i] = from_centered(v, ring().moduli()[i]);
        for (auto& part : out.parts) part.mul_scalar_inplace(per_mod);
        out.scale = ct.scale * scalar_scale;
        return out;
    }

    // round(value) mod q for magnitudes beyond the 63-bit integer range
    // (constants at scale Delta^2 before a rescale).
    static u64 scaled_residue(double value, u64 q) {
        if (std::abs(value) < 9.0e18) return from_centered(round_half_away(value), q);
        long double r = std::fmod((long double)value, (long double)q);
        return from_centered((i64)llroundl(r), q);
    }

    // Adds the scalar c to every slot (or to the constant coefficient in the
    // coeffs domain): both reduce to adding round(c * Delta) everywhere or at
    // index zero.
    Ciphertext add_scalar(const Ciphertext& ct, double c) const {
        Ciphertext out = ct;
        Poly& p0 = out.parts[0];
        if (p0.form() == Form::eval) {
            for (int r = 0; r < p0.rows(); ++r) {
                u64 q = p0.row_modulus(r);
                u64 add = scaled_residue(c * ct.scale, q);
                u64* a = p0.row(r);
                for (u32 i = 0; i < ring().degree(); ++i) a[i] = add_mod(a[i], add, q);
            }
        } else {
            for (int r = 0; r < p0.rows(); ++r) {
                u64 q = p0.row_modulus(r);
                p0.row(r)[0] = add_mod(p0.row(r)[0], scaled_residue(c * ct.scale, q), q);
            }
        }
        return out;
    }

    Ciphertext rescale(const Ciphertext& ct) const {
        if (ct.level() == 0) throw TetrisError("ckks", "cannot rescale at level 0");
        Ciphertext out = ct;
        out.to_coeff();
        u64 ql = ring().modulus(u32(ct.level()));
        for (auto& p : out.parts) p = rescale_round(p);
        out.scale = ct.scale / double(ql);
        out.noise_bound = ct.noise_bound / double(ql) + 1.0;
        return out;
    }

    Ciphertext rotate(const Ciphertext& ct, u32 k, const EvalKeys& keys) const {
        if (k == 0) return ct;
        u64 g = rotation_exponent(ring(), k);
        return ctx_->apply_galois(ct, g, keys.galois_key(g));
    }

    Ciphertext conjugate(const Ciphertext& ct, const EvalKeys& keys) const {
        u64 g = conjugation_exponent(ring());
        return ctx_->apply_galois(ct, g, keys.galois_key(g));
    }

    // Hoisted automorphism batch: the gadget decomposition of c1 is computed
    // once and permuted per exponent.
    std::vector<Ciphertext> apply_galois_many(const Ciphertext& ct, const std::vector<u64>& exps,
                                              const EvalKeys& keys) const {
        if (ct.degree() != 1) throw TetrisError("ckks", "hoisting expects degree-1 input");
        Ciphertext src = ct;
        src.to_coeff();
        std::vector<Poly> digits = ctx_->plan().decompose(src.parts[1]);
        std::vector<Ciphertext> out;
        out.reserve(exps.size());
        for (u64 g : exps) {
            if (g == 1) {
                out.push_back(src);
                continue;
            }
            std::vector<Poly> rot_digits;
            rot_digits.reserve(digits.size());
            for (const Poly& d : digits) rot_digits.push_back(automorphism_apply(d, g));
            auto [d0, d1] = ctx_->ks_inner(rot_digits, keys.galois_key(g));
            Ciphertext r;
            Poly c0g = automorphism_apply(src.parts[0], g);
            c0g.add_inplace(d0);
            r.parts = {std::move(c0g), std::move(d1)};
            r.scale = ct.scale;
            r.domain = ct.domain;
            r.sk_id = ct.sk_id;
            r.noise_bound = ct.noise_bound + ctx_->ks_noise_estimate();
            out.push_back(std::move(r));
        }
        return out;
    }

    const KeyContext* ctx_;
};

// ---------------------------------------------------------------------------
// BSGS linear transform plan: the nonzero diagonals of an n x n matrix,
// encoded once and pre-rotated for the giant steps.
// ---------------------------------------------------------------------------

class LinearTransformPlan {
public:
    // diagonals: map diag index -> length-n complex vector
    LinearTransformPlan(const Encoder& enc, const std::map<u32, std::vector<cplx>>& diagonals,
                        double plain_scale, int encode_level)
        : n_(enc.slots()), plain_scale_(plain_scale), encode_level_(encode_level) {
        if (diagonals.empty()) throw TetrisError("ckks", "empty linear transform");
        double root = std::sqrt(double(diagonals.size()));
        u32 n1 = 1;
        while (double(n1 * 2) <= root * 1.42) n1 *= 2;
        n1_ = std::min(n1, n_);
        const RingParams& ring = enc.ring();
        for (const auto& [d, diag] : diagonals) {
            if (diag.size() != n_) throw TetrisError("ckks", "diagonal length mismatch");
            u32 g = d / n1_, b = d % n1_;
            std::vector<cplx> shifted(n_);
            u32 shift = g * n1_;  // pre-rotate right by g*n1
            for (u32 i = 0; i < n_; ++i) shifted[(i + shift) % n_] = diag[i];
            Poly p = enc.encode_slots(shifted, plain_scale, encode_level);
            p.ntt_forward();
            terms_.push_back(Term{g, b, std::move(p)});
            if (b != 0) baby_.insert(rotation_exponent(ring, b));
            if (g != 0) giant_.insert(rotation_exponent(ring, g * n1_));
        }
        for (u64 e : baby_) rotations_.push_back(e);
        for (u64 e : giant_) rotations_.push_back(e);
    }

    // Convenience: dense matrix -> diagonal map (tests, DFT plans).
    static std::map<u32, std::vector<cplx>> diagonals_of(const std::vector<std::vector<cplx>>& m) {
        u32 n = u32(m.size());
        std::map<u32, std::vector<cplx>> out;
        for (u32 d = 0; d < n; ++d) {
            std::vector<cplx> diag(n);
            bool nonzero = false;
            for (u32 i = 0; i < n; ++i) {
                diag[i] = m[i][(i + d) % n];
                if (std::abs(diag[i]) > 1e-300) nonzero = true;
            }
            if (nonzero) out.emplace(d, std::move(diag));
        }
        return out;
    }

    const std::vector<u64>& required_rotations() const { return rotations_; }
    double plain_scale() const { return plain_scale_; }
    u32 baby_count() const { return n1_; }

    // Applies M to the slot vector; consumes one level.
    Ciphertext apply(const Evaluator& ev, const Ciphertext& ct, const EvalKeys& keys) const {
        if (ct.domain != Domain::slots) throw TetrisError("ckks", "linear transform expects slots domain");
        // hoisted baby rotations
        std::set<u32> baby_idx;
        for (const Term& t : terms_) baby_idx.insert(t.b);
        std::vector<u64> baby_exps;
        std::vector<u32> baby_ks;
        for (u32 b : baby_idx) {
            baby_exps.push_back(b == 0 ? 1 : rotation_exponent(ev.ring(), b));
            baby_ks.push_back(b);
        }
        std::vector<Ciphertext> rotated = ev.apply_galois_many(ct, baby_exps, keys);
        std::map<u32, const Ciphertext*> rot_of;
        for (std::size_t i = 0; i < baby_ks.size(); ++i) rot_of[baby_ks[i]] = &rotated[i];
        for (auto& r : rotated) r.to_eval();

        // plaintext products per giant bucket accumulate lazily in 128 bits
        // (baby counts stay far below the 2^8 headroom over 60-bit operands)
        std::map<u32, std::vector<const Term*>> by_g;
        for (const Term& t : terms_) by_g[t.g].push_back(&t);
        const Ciphertext& proto = *rot_of.begin()->second;
        int lvl = proto.level();
        u32 n = ev.ring().degree();
        std::map<u32, Ciphertext> inner;  // giant index -> accumulated sum
        std::vector<u128> buf;
        for (auto& [g, ts] : by_g) {
            if (ts.size() > 256) throw TetrisError("ckks", "giant bucket exceeds lazy headroom");
            buf.assign(std::size_t(2) * (lvl + 1) * n, 0);
            for (const Term* t : ts) {
                const Ciphertext& rot = *rot_of.at(t->b);
                for (int part = 0; part < 2; ++part)
                    for (int r = 0; r <= lvl; ++r) {
                        const u64* rv = rot.parts[part].row(r);
                        const u64* pv = t->plain.row(r);
                        u128* acc = buf.data() + (std::size_t(part) * (lvl + 1) + r) * n;
                        for (u32 i = 0; i < n; ++i) acc[i] += u128(rv[i]) * pv[i];
                    }
            }
            Ciphertext sum;
            sum.parts = {Poly(ev.ring(), lvl, Form::eval), Poly(ev.ring(), lvl, Form::eval)};
            for (int part = 0; part < 2; ++part)
                for (int r = 0; r <= lvl; ++r) {
                    u64 q = ev.ring().modulus(u32(r));
                    const u128* acc = buf.data() + (std::size_t(part) * (lvl + 1) + r) * n;
                    u64* o = sum.parts[std::size_t(part)].row(r);
                    for (u32 i = 0; i < n; ++i) o[i] = u64(acc[i] % q);
                }
            sum.scale = proto.scale * plain_scale_;
            sum.domain = proto.domain;
            sum.sk_id = proto.sk_id;
            sum.noise_bound = proto.noise_bound * plain_scale_;
            inner.emplace(g, std::move(sum));
        }
        Ciphertext acc;
        bool first = true;
        for (auto& [g, sum] : inner) {
            Ciphertext term = g == 0 ? std::move(sum)
                                     : ev.rotate(sum, g * n1_, keys);
            if (first) { acc = std::move(term); first = false; }
            else {
                acc.to_coeff();
                term.to_coeff();
                acc.add_inplace(term);
            }
        }
        return ev.rescale(acc);
    }

private:
    struct Term {
        u32 g, b;
        Poly plain;  // eval form at encode_level
    };

    u32 n_;
    u32 n1_;
    double plain_scale_;
    int encode_level_;
    std::vector<Term> terms_;
    std::set<u64> baby_, giant_;
    std::vector<u64> rotations_;
};

// ---------------------------------------------------------------------------
// Chebyshev-basis polynomial evaluation. The input is assumed normalized to
// the basis domain [-1, 1]; T_k ladders are built once per call, depth is
// ceil(log2 d) plus one level for the coefficient combination.
// ---------------------------------------------------------------------------

inline Ciphertext eval_chebyshev(const Evaluator& ev, const Ciphertext& x,
                                 const std::vector<double>& cheb_coeffs, const EvalKeys& keys) {
    std::size_t d = cheb_coeffs.size() - 1;
    while (d > 0 && cheb_coeffs[d] == 0.0) --d;
    if (d == 0) {
        // degree-0: a fresh encoding of the constant
        Ciphertext out = ev.mul_scalar(x, 0.0, 1.0);
        out = ev.add_scalar(out, cheb_coeffs[0]);
        return out;
    }
    if (x.level() < int(std::ceil(std::log2(double(d)))) + 1)
        throw TetrisError("ckks", "insufficient levels for polynomial evaluation");
    // T_1..T_d via T_{a+b} = 2 T_a T_b - T_{|a-b|}; the doubling happens by
    // addition and T_{|a-b|} is lifted to the product's scale with a cheap
    // scalar product, so recorded scales never fork.
    std::map<std::size_t, Ciphertext> T;
    T.emplace(1, x);
    std::function<const Ciphertext&(std::size_t)> get = [&](std::size_t k) -> const Ciphertext& {
        auto it = T.find(k);
        if (it != T.end()) return it->second;
        std::size_t a = k / 2, b = k - a;
        const Ciphertext& ta = get(a);
        const Ciphertext& tb = get(b);
        Ciphertext prod = ev.mul_relin(ta, tb, keys);
        prod.to_coeff();
        prod.add_inplace(prod);  // 2 T_a T_b at scale Delta_a * Delta_b
        Ciphertext res;
        if (a == b) {
            res = ev.rescale(ev.add_scalar(prod, -1.0));  // T_0 = 1
        } else {
            Ciphertext tc = get(b - a);
            tc.to_coeff();
            if (tc.level() > prod.level()) tc.drop_to_level(prod.level());
            tc = ev.mul_scalar(tc, 1.0, prod.scale / tc.scale);
            Evaluator::check_scales_match(tc.scale, prod.scale);
            prod.sub_inplace(tc);
            res = ev.rescale(prod);
        }
        auto [pos, ok] = T.emplace(k, std::move(res));
        return pos->second;
    };
    for (std::size_t k = d; k >= 1; k /= 2) get(k);  // warm the ladder top-down
    // combination: sum_k c_k T_k at a common level, then one rescale
    int lvl = x.level();
    for (std::size_t k = 1; k <= d; ++k)
        if (cheb_coeffs[k] != 0.0) lvl = std::min(lvl, get(k).level());
    u64 q_comb = ev.ring().modulus(u32(lvl));
    double comb_scale = double(q_comb);
    Ciphertext acc;
    bool first = true;
    for (std::size_t k = 1; k <= d; ++k) {
        if (cheb_coeffs[k] == 0.0) continue;
        Ciphertext term = get(k);
        term.to_coeff();
        if (term.level() > lvl) term.drop_to_level(lvl);
        term = ev.mul_scalar(term, cheb_coeffs[k], comb_scale);
        if (first) { acc = std::move(term); first = false; }
        else {
            Evaluator::check_scales_match(acc.scale, term.scale);
            acc.add_inplace(term);
        }
    }
    if (cheb_coeffs[0] != 0.0) acc = ev.add_scalar(acc, cheb_coeffs[0]);
    return ev.rescale(acc);
}

// Converts power-basis coefficients on [-1,1] to the Chebyshev basis.
inline std::vector<double> power_to_chebyshev(const std::vector<double>& pow_coeffs) {
    // b_{k} tables via the recurrence x*T_k = (T_{k+1} + T_{k-1})/2
    std::size_t d = pow_coeffs.size();
    std::vector<std::vector<double>> t(d, std::vector<double>(d, 0.0));
    t[0][0] = 1.0;
    if (d > 1) t[1][1] = 1.0;
    for (std::size_t k = 2; k < d; ++k)
        for (std::size_t i = 0; i < d; ++i) {
            double v = -t[k - 2][i];
            if (i > 0) v += 2.0 * t[k - 1][i - 1];
            t[k][i] = v;
        }
    // solve upper-triangular system: pow = sum_k c_k t[k]
    std::vector<double> c(d, 0.0), rem = pow_coeffs;
    for (std::size_t k = d; k-- > 0;) {
        double lead = t[k][k];
        c[k] = rem[k] / lead;
        for (std::size_t i = 0; i <= k; ++i) rem[i] -= c[k] * t[k][i];
    }
    return c;
}

// Every slot receives the sum of all n slots: log2(n) rotate-and-add steps.
inline Ciphertext inner_sum(const Evaluator& ev, const Ciphertext& ct, u32 n,
                            const EvalKeys& keys) {
    if (ct.domain != Domain::slots) throw TetrisError("ckks", "inner_sum expects slots domain");
    if ((n & (n - 1)) != 0) throw TetrisError("ckks", "slot count must be a power of two");
    Ciphertext acc = ct;
    for (u32 k = 1; k < n; k <<= 1) {
        Ciphertext rot = ev.rotate(acc, k, keys);
        acc = ev.add(acc, rot);
    }
    return acc;
}

}  // namespace tetris
