#pragma once

#include <bit>
#include <cstring>

#include "tetris/bootstrap.hpp"
#include "tetris/pfe.hpp"
#include "tetris/repack.hpp"
#include "tetris/threshold.hpp"

namespace tetris {

// ---------------------------------------------------------------------------
// Little-endian, self-describing binary format. Every top-level object starts
// with { magic "TTRS", version, kind }; ring geometry rides along so readers
// can validate against their parameters. Switching keys store only the seed
// of their a-parts plus the b-parts.
// ---------------------------------------------------------------------------

enum class ObjectKind : u16 {
    ciphertext = 1,
    switching_key = 2,
    repack_keys = 3,
    eval_keyset = 4,
    query = 5,
    chain = 6,
    secret_key = 7,
};

inline constexpr u32 kMagic = 0x54545253;  // "TTRS"
inline constexpr u16 kVersion = 1;

class ByteWriter {
public:
    const std::vector<uint8_t>& bytes() const { return buf_; }
    std::vector<uint8_t> take() { return std::move(buf_); }

    void u8v(uint8_t v) { buf_.push_back(v); }
    void u16v(u16 v) { append(&v, 2); }
    void u32v(u32 v) { append(&v, 4); }
    void u64v(u64 v) { append(&v, 8); }
    void i64v(i64 v) { append(&v, 8); }
    void f64v(double v) {
        u64 bits = std::bit_cast<u64>(v);
        append(&bits, 8);
    }
    void raw(const void* p, std::size_t n) { append(p, n); }

private:
    void append(const void* p, std::size_t n) {
        const uint8_t* b = static_cast<const uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);  // little-endian hosts only
    }
    std::vector<uint8_t> buf_;
};

class ByteReader {
public:
    ByteReader(const uint8_t* data, std::size_t size) : p_(data), end_(data + size) {}
    explicit ByteReader(const std::vector<uint8_t>& v) : ByteReader(v.data(), v.size()) {}

    uint8_t u8v() { return *take(1); }
    u16 u16v() { return read<u16>(); }
    u32 u32v() { return read<u32>(); }
    u64 u64v() { return read<u64>(); }
    i64 i64v() { return read<i64>(); }
    double f64v() { return std::bit_cast<double>(read<u64>()); }
    bool done() const { return p_ == end_; }

private:
    template <class T>
    T read() {
        T v;
        std::memcpy(&v, take(sizeof(T)), sizeof(T));
        return v;
    }
    const uint8_t* take(std::size_t n) {
        if (p_ + n > end_) throw TetrisError("serialize", "truncated input");
        const uint8_t* r = p_;
        p_ += n;
        return r;
    }
    const uint8_t* p_;
    const uint8_t* end_;
};

// --- headers ---------------------------------------------------------------

inline void write_header(ByteWriter& w, ObjectKind kind, const RingParams& ring) {
    w.u32v(kMagic);
    w.u16v(kVersion);
    w.u16v(u16(kind));
    w.u32v(ring.degree());
    w.u32v(u32(ring.moduli().size()));
    w.u32v(ring.special_count());
    for (u64 q : ring.moduli()) w.u64v(q);
}

inline ObjectKind read_header(ByteReader& r, const RingParams& ring) {
    if (r.u32v() != kMagic) throw TetrisError("serialize", "bad magic");
    if (r.u16v() != kVersion) throw TetrisError("serialize", "unsupported version");
    ObjectKind kind = ObjectKind(r.u16v());
    if (r.u32v() != ring.degree()) throw TetrisError("serialize", "ring degree mismatch");
    u32 nmod = r.u32v();
    u32 nspecial = r.u32v();
    if (nmod != ring.moduli().size() || nspecial != ring.special_count())
        throw TetrisError("serialize", "modulus chain mismatch");
    for (u32 i = 0; i < nmod; ++i)
        if (r.u64v() != ring.modulus(i)) throw TetrisError("serialize", "modulus value mismatch");
    return kind;
}

inline std::size_t header_size(const RingParams& ring) { return 20 + 8 * ring.moduli().size(); }

// --- polynomials -----------------------------------------------------------

inline void write_poly(ByteWriter& w, const Poly& p) {
    w.u32v(u32(p.level()));
    w.u32v(u32(p.nspecial()));
    w.u8v(p.form() == Form::eval ? 1 : 0);
    for (int r = 0; r < p.rows(); ++r) w.raw(p.row(r), p.ring().degree() * sizeof(u64));
}

inline Poly read_poly(ByteReader& r, const RingParams& ring) {
    int level = int(r.u32v());
    int nspecial = int(r.u32v());
    Form form = r.u8v() ? Form::eval : Form::coeff;
    Poly p(ring, level, form, nspecial);
    for (int row = 0; row < p.rows(); ++row)
        for (u32 i = 0; i < ring.degree(); ++i) p.row(row)[i] = r.u64v();
    return p;
}

inline std::size_t poly_size(const RingParams& ring, int level, int nspecial) {
    return 9 + std::size_t(level + 1 + nspecial) * ring.degree() * 8;
}

// --- ciphertexts -----------------------------------------------------------

inline void write_ciphertext_body(ByteWriter& w, const Ciphertext& ct) {
    w.u32v(u32(ct.parts.size()));
    w.f64v(ct.scale);
    w.u8v(ct.domain == Domain::slots ? 1 : 0);
    w.u64v(ct.sk_id);
    w.f64v(ct.noise_bound);
    for (const Poly& p : ct.parts) write_poly(w, p);
}

inline Ciphertext read_ciphertext_body(ByteReader& r, const RingParams& ring) {
    Ciphertext ct;
    u32 parts = r.u32v();
    ct.scale = r.f64v();
    ct.domain = r.u8v() ? Domain::slots : Domain::coeffs;
    ct.sk_id = r.u64v();
    ct.noise_bound = r.f64v();
    for (u32 i = 0; i < parts; ++i) ct.parts.push_back(read_poly(r, ring));
    return ct;
}

inline std::vector<uint8_t> serialize_ciphertext(const Ciphertext& ct) {
    ByteWriter w;
    write_header(w, ObjectKind::ciphertext, ct.ring());
    write_ciphertext_body(w, ct);
    return w.take();
}

inline Ciphertext deserialize_ciphertext(const std::vector<uint8_t>& buf, const RingParams& ring) {
    ByteReader r(buf);
    if (read_header(r, ring) != ObjectKind::ciphertext)
        throw TetrisError("serialize", "object kind mismatch");
    return read_ciphertext_body(r, ring);
}

// Exact byte count of a serialized degree-1 ciphertext; a Set-I-shaped
// ciphertext at level l is 2 N (l+1) 8 bytes of residues plus headers.
inline std::size_t ciphertext_size(const RingParams& ring, int level, u32 parts = 2) {
    return header_size(ring) + 29 + parts * poly_size(ring, level, 0);
}

// --- switching keys (seed-compressed) ---------------------------------------

inline void write_switching_key_body(ByteWriter& w, const SwitchingKey& k) {
    w.u32v(k.gadget.group_size);
    w.u32v(k.gadget.base2_bits);
    w.u64v(k.from_id);
    w.u64v(k.to_id);
    w.u64v(k.a_seed);
    w.u32v(u32(k.b.size()));
    for (const Poly& p : k.b) write_poly(w, p);
}

inline SwitchingKey read_switching_key_body(ByteReader& r, const RingParams& ring) {
    SwitchingKey k;
    k.gadget.group_size = r.u32v();
    k.gadget.base2_bits = r.u32v();
    k.from_id = r.u64v();
    k.to_id = r.u64v();
    k.a_seed = r.u64v();
    u32 n = r.u32v();
    for (u32 i = 0; i < n; ++i) k.b.push_back(read_poly(r, ring));
    // regenerate the a-parts from the stored seed
    Rng ra(k.a_seed);
    int lvl = ring.max_level();
    int ksp = int(ring.special_count());
    for (u32 i = 0; i < n; ++i) {
        Rng ri = ra.split(i);
        Poly a = sample_uniform(ring, lvl, ksp, ri);
        a.ntt_forward();
        k.a.push_back(std::move(a));
    }
    return k;
}

inline std::vector<uint8_t> serialize_switching_key(const SwitchingKey& k) {
    ByteWriter w;
    write_header(w, ObjectKind::switching_key, k.ring());
    write_switching_key_body(w, k);
    return w.take();
}

inline SwitchingKey deserialize_switching_key(const std::vector<uint8_t>& buf,
                                              const RingParams& ring) {
    ByteReader r(buf);
    if (read_header(r, ring) != ObjectKind::switching_key)
        throw TetrisError("serialize", "object kind mismatch");
    return read_switching_key_body(r, ring);
}

inline std::size_t switching_key_body_size(const RingParams& ring, u32 digits) {
    return 36 + digits * poly_size(ring, ring.max_level(), int(ring.special_count()));
}

// --- repack key sets ---------------------------------------------------------

inline std::vector<uint8_t> serialize_repack_keys(const RepackKeySet& set) {
    const RingParams& ring = set.keys.begin()->second.ring();
    ByteWriter w;
    write_header(w, ObjectKind::repack_keys, ring);
    w.u64v(set.sk_id);
    w.u32v(u32(set.exponents.size()));
    for (u64 e : set.exponents) w.u64v(e);
    w.u32v(u32(set.keys.size()));
    for (const auto& [g, key] : set.keys) {
        w.u64v(g);
        write_switching_key_body(w, key);
    }
    return w.take();
}

inline RepackKeySet deserialize_repack_keys(const std::vector<uint8_t>& buf,
                                            const RingParams& ring) {
    ByteReader r(buf);
    if (read_header(r, ring) != ObjectKind::repack_keys)
        throw TetrisError("serialize", "object kind mismatch");
    RepackKeySet set;
    set.sk_id = r.u64v();
    u32 ne = r.u32v();
    for (u32 i = 0; i < ne; ++i) set.exponents.push_back(r.u64v());
    u32 nk = r.u32v();
    for (u32 i = 0; i < nk; ++i) {
        u64 g = r.u64v();
        set.keys.emplace(g, read_switching_key_body(r, ring));
    }
    return set;
}

// --- minimax chains -----------------------------------------------------------

inline void write_chain_body(ByteWriter& w, const MinimaxChain& c) {
    w.u32v(c.params.alpha);
    w.u32v(c.params.beta);
    w.f64v(c.params.epsilon);
    w.u32v(u32(c.params.degrees.size()));
    for (u32 d : c.params.degrees) w.u32v(d);
    w.f64v(c.sign_error);
    w.f64v(c.achieved_beta);
    w.u32v(u32(c.stages.size()));
    for (const auto& st : c.stages) {
        w.u32v(st.degree);
        w.f64v(st.gamma);
        w.f64v(st.upper);
        w.f64v(st.error);
        w.u32v(u32(st.cheb.size()));
        for (double x : st.cheb) w.f64v(x);
    }
}

inline MinimaxChain read_chain_body(ByteReader& r) {
    MinimaxChain c;
    c.params.alpha = r.u32v();
    c.params.beta = r.u32v();
    c.params.epsilon = r.f64v();
    u32 nd = r.u32v();
    for (u32 i = 0; i < nd; ++i) c.params.degrees.push_back(r.u32v());
    c.sign_error = r.f64v();
    c.achieved_beta = r.f64v();
    u32 ns = r.u32v();
    for (u32 i = 0; i < ns; ++i) {
        ChainStage st;
        st.degree = r.u32v();
        st.gamma = r.f64v();
        st.upper = r.f64v();
        st.error = r.f64v();
        u32 nc = r.u32v();
        st.cheb.resize(nc);
        for (auto& x : st.cheb) x = r.f64v();
        c.stages.push_back(std::move(st));
    }
    return c;
}

// Chains are ring-independent; they carry a slim header.
inline std::vector<uint8_t> serialize_chain(const MinimaxChain& c) {
    ByteWriter w;
    w.u32v(kMagic);
    w.u16v(kVersion);
    w.u16v(u16(ObjectKind::chain));
    write_chain_body(w, c);
    return w.take();
}

inline MinimaxChain deserialize_chain(const std::vector<uint8_t>& buf) {
    ByteReader r(buf);
    if (r.u32v() != kMagic) throw TetrisError("serialize", "bad magic");
    if (r.u16v() != kVersion) throw TetrisError("serialize", "unsupported version");
    if (ObjectKind(r.u16v()) != ObjectKind::chain)
        throw TetrisError("serialize", "object kind mismatch");
    return read_chain_body(r);
}

// --- secret keys ---------------------------------------------------------------

inline std::vector<uint8_t> serialize_secret_key(const SecretKey& sk) {
    ByteWriter w;
    write_header(w, ObjectKind::secret_key, sk.ring());
    w.u64v(sk.id());
    w.u32v(u32(sk.coeffs().size()));
    for (i64 c : sk.coeffs()) w.i64v(c);
    return w.take();
}

inline SecretKey deserialize_secret_key(const std::vector<uint8_t>& buf, const RingParams& ring) {
    ByteReader r(buf);
    if (read_header(r, ring) != ObjectKind::secret_key)
        throw TetrisError("serialize", "object kind mismatch");
    u64 id = r.u64v();
    u32 n = r.u32v();
    std::vector<i64> c(n);
    for (auto& x : c) x = r.i64v();
    return SecretKey(ring, std::move(c), id);
}

}  // namespace tetris
