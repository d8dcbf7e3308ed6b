#pragma once

#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "tetris/profile.hpp"
#include "tetris/repack.hpp"
#include "tetris/serialize.hpp"

namespace tetris {

// ---------------------------------------------------------------------------
// The two-party exploration protocol. Scientist and database owner live in
// one process as role functions exchanging serializable artifacts; explore()
// follows the pipeline: selection, private scoring, repack, merge, Half-BTS,
// local threshold, inner sum, global threshold.
// ---------------------------------------------------------------------------

struct Database {
    std::vector<std::string> attribute_names;
    std::vector<std::vector<double>> rows;  // p x h

    std::size_t p() const { return rows.size(); }
    std::size_t h() const { return attribute_names.size(); }

    void validate() const {
        if (rows.empty()) throw TetrisError("protocol", "database must have at least one row");
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (rows[i].size() != attribute_names.size())
                throw TetrisError("protocol", "row " + std::to_string(i) + " width mismatch");
    }
};

struct SelectionMatrix {
    std::vector<std::vector<double>> m;  // h x m

    std::size_t in_dim() const { return m.size(); }
    std::size_t out_dim() const { return m.empty() ? 0 : m[0].size(); }

    static SelectionMatrix identity(std::size_t h) {
        SelectionMatrix s;
        s.m.assign(h, std::vector<double>(h, 0.0));
        for (std::size_t i = 0; i < h; ++i) s.m[i][i] = 1.0;
        return s;
    }

    std::vector<std::vector<double>> apply(const Database& db) const {
        if (in_dim() != db.h()) throw TetrisError("protocol", "selection matrix height mismatch");
        std::vector<std::vector<double>> out(db.p(), std::vector<double>(out_dim(), 0.0));
        for (std::size_t i = 0; i < db.p(); ++i)
            for (std::size_t j = 0; j < out_dim(); ++j) {
                double acc = 0;
                for (std::size_t k = 0; k < in_dim(); ++k) acc += db.rows[i][k] * m[k][j];
                if (!std::isfinite(acc)) throw TetrisError("protocol", "selection overflow");
                out[i][j] = acc;
            }
        return out;
    }
};

struct Query {
    std::vector<TestVector> tvs;   // m encrypted scoring functions
    Ciphertext t0, t1, norm;       // thresholds + local normalizer, big ring
    ThresholdParams th_local, th_global;
    std::vector<u64> galois_manifest;
    u64 small_sk_id = 0, big_sk_id = 0;
    double sum_max = 0;  // published Sum max f_j the normalizer was built from
};

struct EvalKeySet {
    RepackKeySet repack;
    SwitchingKey merge;  // embedded small secret -> big secret
    EvalKeys big;        // relinearization + manifest Galois keys

    struct Sizes {
        std::size_t repack_bytes = 0, merge_bytes = 0, bootstrap_bytes = 0;
        std::size_t total() const { return repack_bytes + merge_bytes + bootstrap_bytes; }
    };
};

struct ScientistSetup {
    SecretKey sk_small, sk_big;
    EvalKeySet keys;
    Query query;
    EvalKeySet::Sizes key_sizes;
};

// Six stages in the reporting convention of the benchmark harness.
struct StageTimings {
    double scientist_gen = 0;
    double owner_gen = 0;
    double pfe_pack = 0;
    double half_bts = 0;
    double threshold1 = 0;
    double threshold2 = 0;
    u64 half_bts_calls = 0;

    double p_dependent_total() const { return pfe_pack + half_bts + threshold1 + threshold2; }
};

namespace detail_protocol {

inline double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

}  // namespace detail_protocol

// (i)-(ii) of the setup: secrets, evaluation keys, encrypted query.
inline ScientistSetup scientist_setup(const ProtocolContext& pc,
                                      const std::vector<FunctionSpec>& specs, double t0,
                                      double t1, u64 seed) {
    const Profile& prof = pc.profile();
    if (!prof.thresholds_enabled)
        throw TetrisError("protocol", "profile " + prof.name + " does not carry thresholds");
    for (const auto& s : specs) s.validate(pc.ring_small().degree());

    Rng rng(seed);
    Rng r_small = rng.split(1), r_big = rng.split(2), r_keys = rng.split(3), r_query = rng.split(4);

    ScientistSetup out{
        SecretKey(pc.ring_small(), NoiseParams{3.2, prof.hw_small_eff()}, r_small),
        SecretKey(pc.ring_big(), NoiseParams{3.2, prof.hw_big}, r_big),
        {},
        {},
        {}};

    double sum_max = 0;
    for (const auto& s : specs) sum_max += s.max_value();
    if (!(t0 >= 1.0 && t0 <= sum_max))
        throw TetrisError("protocol", "t0 outside the score range [1, sum max f]");
    if (t1 < 1.0) throw TetrisError("protocol", "t1 must require at least one row");

    // evaluation keys
    Rng r_rep = r_keys.split(1), r_merge = r_keys.split(2), r_relin = r_keys.split(3);
    out.keys.repack = gen_repack_keys(pc.ctx_small(), out.sk_small, r_rep);
    u32 stride = pc.ring_big().degree() / pc.ring_small().degree();
    SecretKey embedded = embed_secret(out.sk_small, pc.ring_big(), stride);
    out.keys.merge = pc.ctx_big().switch_key_gen(embedded, out.sk_big, r_merge);
    out.keys.big.relin = pc.ctx_big().relin_key_gen(out.sk_big, r_relin);
    std::vector<u64> manifest = pc.galois_manifest();
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        Rng rg = r_keys.split(100 + i);
        out.keys.big.galois.emplace(manifest[i],
                                    pc.ctx_big().galois_key_gen(out.sk_big, manifest[i], rg));
    }

    // encrypted query
    Query& q = out.query;
    for (std::size_t j = 0; j < specs.size(); ++j) {
        Rng rt = r_query.split(j);
        q.tvs.push_back(build_test_vector(pc.ctx_small(), specs[j], out.sk_small,
                                          prof.delta_tv, rt));
    }
    u32 slots = prof.n_big / 2;
    Encoder enc(pc.ring_big(), slots);
    int lvl = pc.bts().output_level();
    Rng rt0 = r_query.split(1000), rt1 = r_query.split(1001), rnrm = r_query.split(1002);
    q.t0 = pc.ctx_big().encrypt(
        out.sk_big, enc.encode_slots(std::vector<cplx>(slots, cplx{t0, 0}), pc.delta_scores(), lvl),
        pc.delta_scores(), rt0, Domain::slots);
    q.t1 = pc.ctx_big().encrypt(
        out.sk_big,
        enc.encode_slots(std::vector<cplx>(slots, cplx{t1, 0}), pc.delta_count(),
                         lvl - int(pc.chain_local().levels_required())),
        pc.delta_count(), rt1, Domain::slots);
    q.norm = pc.ctx_big().encrypt(
        out.sk_big,
        enc.encode_slots(std::vector<cplx>(slots, cplx{1.0 / sum_max, 0}), pc.delta_norm(), lvl),
        pc.delta_norm(), rnrm, Domain::slots);
    q.th_local = prof.th_local;
    q.th_global = prof.th_global;
    q.galois_manifest = manifest;
    q.small_sk_id = out.sk_small.id();
    q.big_sk_id = out.sk_big.id();
    q.sum_max = sum_max;

    // key-size accounting (serialized form)
    out.key_sizes.repack_bytes = serialize_repack_keys(out.keys.repack).size();
    out.key_sizes.merge_bytes = serialize_switching_key(out.keys.merge).size();
    std::size_t bts_bytes = serialize_switching_key(out.keys.big.relin).size();
    for (const auto& [g, k] : out.keys.big.galois) bts_bytes += serialize_switching_key(k).size();
    out.key_sizes.bootstrap_bytes = bts_bytes;
    return out;
}

// Lines 3-7 of the pipeline: selection, encrypted scoring, repacking.
inline std::vector<Ciphertext> score_and_repack(const ProtocolContext& pc, const Database& db,
                                                const SelectionMatrix& sel, const Query& query,
                                                const EvalKeySet& keys, int threads = 1) {
    db.validate();
    auto selected = sel.apply(db);
    if (!selected.empty() && selected[0].size() != query.tvs.size())
        throw TetrisError("protocol", "selection output width differs from the function count");
    u32 n = pc.ring_small().degree();
    std::size_t p = selected.size();
    std::size_t batches = (p + n - 1) / n;
    std::vector<Ciphertext> repacked(batches);
    std::exception_ptr failure;
    std::mutex fail_mu;
    auto run_batch = [&](std::size_t b) {
        try {
            std::size_t lo = b * n, hi = std::min(p, lo + n);
            std::vector<std::vector<double>> slice(selected.begin() + long(lo),
                                                   selected.begin() + long(hi));
            std::vector<Ciphertext> scores = eval_scores(slice, query.tvs);
            std::vector<const Ciphertext*> ptrs(n, nullptr);
            for (std::size_t i = 0; i < scores.size(); ++i) ptrs[i] = &scores[i];
            repacked[b] = repack(pc.ctx_small(), ptrs, keys.repack);
        } catch (...) {
            std::lock_guard<std::mutex> lk(fail_mu);
            if (!failure) failure = std::current_exception();
        }
    };
    if (threads <= 1 || batches <= 1) {
        for (std::size_t b = 0; b < batches; ++b) run_batch(b);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (;;) {
                    std::size_t b = next.fetch_add(1);
                    if (b >= batches) return;
                    run_batch(b);
                }
            });
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    return repacked;
}

// Lines 8-16: merge, Half-BTS, both thresholds. `p_total` is the row count
// the global normalizer divides by.
inline Ciphertext explore_from_repacked(const ProtocolContext& pc,
                                        const std::vector<Ciphertext>& repacked,
                                        std::size_t p_total, const Query& query,
                                        const EvalKeySet& keys, int threads = 1,
                                        StageTimings* timings = nullptr) {
    using detail_protocol::now_s;
    const Evaluator& ev = pc.evaluator();
    u32 arity = pc.ring_big().degree() / pc.ring_small().degree();
    std::size_t groups = (repacked.size() + arity - 1) / arity;
    if (groups == 0) throw TetrisError("protocol", "nothing to merge");

    for (const auto& ct : repacked)
        if (ct.sk_id != query.small_sk_id)
            throw TetrisError("protocol", "repacked ciphertexts under a foreign key");

    double t_start = now_s();
    std::vector<Ciphertext> merged(groups);
    for (std::size_t g = 0; g < groups; ++g) {
        std::vector<const Ciphertext*> batch(arity, nullptr);
        for (u32 k = 0; k < arity; ++k) {
            std::size_t idx = g * arity + k;
            if (idx < repacked.size()) batch[k] = &repacked[idx];
        }
        merged[g] = ring_merge_many(pc.ctx_big(), batch, keys.merge);
    }
    if (timings) timings->pfe_pack += now_s() - t_start;

    const MinimaxChain& chain1 = pc.chain_local();
    const MinimaxChain& chain2 = pc.chain_global();

    std::vector<Ciphertext> partial(groups);
    std::exception_ptr failure;
    std::mutex mu;
    double bts_time = 0, th1_time = 0;
    u64 bts_calls = 0;
    auto process = [&](std::size_t g) {
        try {
            double t0s = now_s();
            auto [ct_l, ct_r] = pc.bts().half_bts(ev, merged[g], keys.big);
            double t1s = now_s();
            Ciphertext b_l = eval_private_threshold(ev, ct_l, query.t0, query.norm, chain1,
                                                    keys.big);
            Ciphertext b_r = eval_private_threshold(ev, ct_r, query.t0, query.norm, chain1,
                                                    keys.big);
            b_l.add_inplace(b_r);
            double t2s = now_s();
            std::lock_guard<std::mutex> lk(mu);
            partial[g] = std::move(b_l);
            bts_time += t1s - t0s;
            th1_time += t2s - t1s;
            ++bts_calls;
        } catch (...) {
            std::lock_guard<std::mutex> lk(mu);
            if (!failure) failure = std::current_exception();
        }
    };
    if (threads <= 1 || groups <= 1) {
        for (std::size_t g = 0; g < groups; ++g) process(g);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (;;) {
                    std::size_t g = next.fetch_add(1);
                    if (g >= groups) return;
                    process(g);
                }
            });
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    if (timings) {
        timings->half_bts += bts_time;
        timings->threshold1 += th1_time;
        timings->half_bts_calls += bts_calls;
    }

    Ciphertext ct_score = std::move(partial[0]);
    for (std::size_t g = 1; g < groups; ++g) ct_score.add_inplace(partial[g]);

    double t_th2 = now_s();
    Ciphertext summed = inner_sum(ev, ct_score, pc.profile().n_big / 2, keys.big);
    Ciphertext bit = eval_private_threshold_plain_norm(ev, summed, query.t1,
                                                       1.0 / double(p_total), chain2, keys.big);
    if (timings) timings->threshold2 += now_s() - t_th2;
    return bit;
}

// Algorithm entry point: the full pipeline on one database.
inline Ciphertext explore(const ProtocolContext& pc, const Database& db,
                          const SelectionMatrix& sel, const Query& query, const EvalKeySet& keys,
                          int threads = 1, StageTimings* timings = nullptr) {
    double t0 = detail_protocol::now_s();
    std::vector<Ciphertext> repacked = score_and_repack(pc, db, sel, query, keys, threads);
    if (timings) timings->pfe_pack += detail_protocol::now_s() - t0;
    return explore_from_repacked(pc, repacked, db.p(), query, keys, threads, timings);
}

// Horizontally partitioned variant: each owner contributes its repacked score
// stream; the aggregate continues the pipeline unchanged.
inline Ciphertext merge_horizontal(const ProtocolContext& pc,
                                   const std::vector<std::vector<Ciphertext>>& partials,
                                   const std::vector<std::size_t>& row_counts, const Query& query,
                                   const EvalKeySet& keys, int threads = 1) {
    if (partials.size() != row_counts.size())
        throw TetrisError("protocol", "owner count mismatch");
    std::vector<Ciphertext> all;
    std::size_t p_total = 0;
    int level = -1;
    for (std::size_t o = 0; o < partials.size(); ++o) {
        for (const auto& ct : partials[o]) {
            if (level < 0) level = ct.level();
            if (ct.level() != level)
                throw TetrisError("protocol", "owners contributed ciphertexts at mixed levels");
            all.push_back(ct);
        }
        p_total += row_counts[o];
    }
    return explore_from_repacked(pc, all, p_total, query, keys, threads);
}

// Vertically partitioned variant: owners hold attribute subsets of the same
// rows; their aligned partial scores add before thresholding.
inline Ciphertext merge_vertical(const ProtocolContext& pc,
                                 const std::vector<std::vector<Ciphertext>>& partials,
                                 std::size_t p_rows, const Query& query, const EvalKeySet& keys,
                                 int threads = 1) {
    if (partials.empty()) throw TetrisError("protocol", "no owners");
    std::size_t batches = partials[0].size();
    for (const auto& o : partials)
        if (o.size() != batches)
            throw TetrisError("protocol", "owners disagree on the row batch count");
    std::vector<Ciphertext> summed = partials[0];
    for (std::size_t o = 1; o < partials.size(); ++o)
        for (std::size_t b = 0; b < batches; ++b) summed[b].add_inplace(partials[o][b]);
    return explore_from_repacked(pc, summed, p_rows, query, keys, threads);
}

// The scientist's readout: every slot of the result carries the same bit.
inline int decrypt_bit(const ProtocolContext& pc, const SecretKey& sk_big,
                       const Ciphertext& result) {
    Encoder enc(pc.ring_big(), pc.profile().n_big / 2);
    Poly dec = pc.ctx_big().decrypt(sk_big, result);
    auto slots = enc.decode_slots(dec, result.scale);
    int ones = 0, zeros = 0;
    for (const auto& s : slots) (s.real() >= 0.5 ? ones : zeros)++;
    if (ones != 0 && zeros != 0)
        throw TetrisError("protocol", "result slots disagree on the output bit");
    return ones ? 1 : 0;
}

// ---------------------------------------------------------------------------
// CSV database and key=value sidecar config.
// ---------------------------------------------------------------------------

inline void write_csv(const Database& db, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw TetrisError("protocol", "cannot open " + path + " for writing");
    for (std::size_t j = 0; j < db.attribute_names.size(); ++j)
        f << db.attribute_names[j] << (j + 1 < db.attribute_names.size() ? "," : "\n");
    f.setf(std::ios::fmtflags(0), std::ios::floatfield);
    f.precision(17);  // exact double round-trip
    for (const auto& row : db.rows) {
        for (std::size_t j = 0; j < row.size(); ++j)
            f << row[j] << (j + 1 < row.size() ? "," : "\n");
    }
}

inline Database read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw TetrisError("protocol", "cannot open " + path);
    Database db;
    std::string line;
    if (!std::getline(f, line)) throw TetrisError("protocol", "empty csv: " + path);
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) db.attribute_names.push_back(cell);
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::vector<double> row;
        std::size_t col = 0;
        while (std::getline(ls, cell, ',')) {
            ++col;
            try {
                std::size_t used = 0;
                double v = std::stod(cell, &used);
                if (used != cell.size()) throw std::invalid_argument(cell);
                row.push_back(v);
            } catch (const std::exception&) {
                throw TetrisError("protocol", "malformed value at line " + std::to_string(lineno) +
                                                  ", column " + std::to_string(col) + ": '" +
                                                  cell + "'");
            }
        }
        if (row.size() != db.attribute_names.size())
            throw TetrisError("protocol",
                              "line " + std::to_string(lineno) + " has " +
                                  std::to_string(row.size()) + " values, header declares " +
                                  std::to_string(db.attribute_names.size()));
        db.rows.push_back(std::move(row));
    }
    return db;
}

struct SidecarConfig {
    std::map<std::string, std::string> kv;

    std::string get(const std::string& key) const {
        auto it = kv.find(key);
        if (it == kv.end()) throw TetrisError("protocol", "missing config key: " + key);
        return it->second;
    }
    double get_double(const std::string& key) const { return std::stod(get(key)); }
    bool has(const std::string& key) const { return kv.count(key) != 0; }
};

inline void write_sidecar(const SidecarConfig& cfg, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw TetrisError("protocol", "cannot open " + path + " for writing");
    for (const auto& [k, v] : cfg.kv) f << k << "=" << v << "\n";
}

inline SidecarConfig read_sidecar(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw TetrisError("protocol", "cannot open " + path);
    SidecarConfig cfg;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw TetrisError("protocol", "malformed config line: " + line);
        cfg.kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Query and key-set serialization (the protocol's wire artifacts).
// ---------------------------------------------------------------------------

inline std::vector<uint8_t> serialize_query(const Query& q) {
    ByteWriter w;
    write_header(w, ObjectKind::query, q.t0.ring());
    w.u32v(u32(q.tvs.size()));
    for (const auto& tv : q.tvs) {
        write_ciphertext_body(w, tv.ct);
        w.f64v(tv.lo);
        w.f64v(tv.hi);
        w.f64v(tv.max_value);
    }
    write_ciphertext_body(w, q.t0);
    write_ciphertext_body(w, q.t1);
    write_ciphertext_body(w, q.norm);
    MinimaxChain c1, c2;  // only the parameter blocks travel
    c1.params = q.th_local;
    c2.params = q.th_global;
    write_chain_body(w, c1);
    write_chain_body(w, c2);
    w.u32v(u32(q.galois_manifest.size()));
    for (u64 g : q.galois_manifest) w.u64v(g);
    w.u64v(q.small_sk_id);
    w.u64v(q.big_sk_id);
    w.f64v(q.sum_max);
    return w.take();
}

inline Query deserialize_query(const std::vector<uint8_t>& buf, const RingParams& ring_small,
                               const RingParams& ring_big) {
    ByteReader r(buf);
    if (read_header(r, ring_big) != ObjectKind::query)
        throw TetrisError("serialize", "object kind mismatch");
    Query q;
    u32 m = r.u32v();
    for (u32 j = 0; j < m; ++j) {
        TestVector tv;
        tv.ct = read_ciphertext_body(r, ring_small);
        tv.lo = r.f64v();
        tv.hi = r.f64v();
        tv.max_value = r.f64v();
        q.tvs.push_back(std::move(tv));
    }
    q.t0 = read_ciphertext_body(r, ring_big);
    q.t1 = read_ciphertext_body(r, ring_big);
    q.norm = read_ciphertext_body(r, ring_big);
    q.th_local = read_chain_body(r).params;
    q.th_global = read_chain_body(r).params;
    u32 ng = r.u32v();
    for (u32 i = 0; i < ng; ++i) q.galois_manifest.push_back(r.u64v());
    q.small_sk_id = r.u64v();
    q.big_sk_id = r.u64v();
    q.sum_max = r.f64v();
    return q;
}

inline std::vector<uint8_t> serialize_eval_keyset(const EvalKeySet& ks) {
    ByteWriter w;
    write_header(w, ObjectKind::eval_keyset, ks.merge.ring());
    {
        auto rep = serialize_repack_keys(ks.repack);
        w.u64v(rep.size());
        w.raw(rep.data(), rep.size());
    }
    write_switching_key_body(w, ks.merge);
    write_switching_key_body(w, ks.big.relin);
    w.u32v(u32(ks.big.galois.size()));
    for (const auto& [g, k] : ks.big.galois) {
        w.u64v(g);
        write_switching_key_body(w, k);
    }
    return w.take();
}

inline EvalKeySet deserialize_eval_keyset(const std::vector<uint8_t>& buf,
                                          const RingParams& ring_small,
                                          const RingParams& ring_big) {
    ByteReader r(buf);
    if (read_header(r, ring_big) != ObjectKind::eval_keyset)
        throw TetrisError("serialize", "object kind mismatch");
    EvalKeySet ks;
    u64 rep_len = r.u64v();
    std::vector<uint8_t> rep(rep_len);
    for (auto& b : rep) b = r.u8v();
    ks.repack = deserialize_repack_keys(rep, ring_small);
    ks.merge = read_switching_key_body(r, ring_big);
    ks.big.relin = read_switching_key_body(r, ring_big);
    u32 ng = r.u32v();
    for (u32 i = 0; i < ng; ++i) {
        u64 g = r.u64v();
        ks.big.galois.emplace(g, read_switching_key_body(r, ring_big));
    }
    return ks;
}

}  // namespace tetris
