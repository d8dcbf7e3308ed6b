#pragma once

#include <cstdio>
#include <filesystem>

#include "tetris/protocol.hpp"

namespace tetris {

// ---------------------------------------------------------------------------
// Command implementations behind the CLI; the binary in tools/ is a thin
// argument parser over these. Decryption is the only command that reads a
// secret-key file, keeping the two-party boundary visible in the tooling.
// ---------------------------------------------------------------------------

namespace cli {

inline std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw TetrisError("cli", "cannot open " + path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw TetrisError("cli", "cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), long(bytes.size()));
}

// The context is expensive to build (plans plus the scale dry-run); commands
// within one process share it per profile.
inline const ProtocolContext& context_for(const std::string& profile_name) {
    static std::map<std::string, std::unique_ptr<ProtocolContext>> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lk(mu);
    auto it = cache.find(profile_name);
    if (it == cache.end()) {
        it = cache
                 .emplace(profile_name,
                          std::make_unique<ProtocolContext>(Profile::by_name(profile_name)))
                 .first;
    }
    return *it->second;
}

// Synthetic dataset: Gaussian(mu = 1, sigma = 1) clamped to [0, 2).
inline Database synth_dataset(std::size_t p, std::size_t h, u64 seed) {
    if (p < 1 || h < 1) throw TetrisError("cli", "dataset needs p, h >= 1");
    Rng rng(seed);
    Database db;
    for (std::size_t j = 0; j < h; ++j) db.attribute_names.push_back("attr" + std::to_string(j));
    db.rows.assign(p, std::vector<double>(h));
    for (auto& row : db.rows)
        for (auto& x : row) x = std::clamp(1.0 + rng.normal(), 0.0, std::nextafter(2.0, 0.0));
    return db;
}

inline int gen_dataset(std::size_t p, std::size_t h, u64 seed, const std::string& out_csv,
                       const std::string& profile_name) {
    Database db = synth_dataset(p, h, seed);
    write_csv(db, out_csv);
    SidecarConfig cfg;
    Profile prof = Profile::by_name(profile_name);
    cfg.kv["profile"] = prof.name;
    cfg.kv["p"] = std::to_string(p);
    cfg.kv["h"] = std::to_string(h);
    cfg.kv["seed"] = std::to_string(seed);
    cfg.kv["bounds.lo"] = "0";
    cfg.kv["bounds.hi"] = "2";
    cfg.kv["n"] = std::to_string(prof.n_small);
    cfg.kv["N"] = std::to_string(prof.n_big);
    cfg.kv["q0_bits"] = std::to_string(prof.q0_bits);
    cfg.kv["arith_bits"] = std::to_string(prof.arith_bits);
    cfg.kv["delta_tv_log2"] = std::to_string(int(std::log2(prof.delta_tv)));
    cfg.kv["delta_evalmod_log2"] = std::to_string(int(std::log2(prof.delta_evalmod)));
    auto chain_str = [](const ThresholdParams& t) {
        std::string s = std::to_string(t.alpha) + "/" + std::to_string(t.beta) + ":";
        for (std::size_t i = 0; i < t.degrees.size(); ++i)
            s += (i ? "," : "") + std::to_string(t.degrees[i]);
        return s;
    };
    cfg.kv["threshold1"] = chain_str(prof.th_local);
    cfg.kv["threshold2"] = chain_str(prof.th_global);
    write_sidecar(cfg, out_csv + ".config");
    std::printf("wrote %zu x %zu dataset to %s (+ .config)\n", p, h, out_csv.c_str());
    return 0;
}

// Scoring-function fixtures: seeded random-walk tables over Z_10, which keeps
// them Lipschitz on the grid.
inline std::vector<FunctionSpec> synth_functions(u32 n, std::size_t m, u64 seed) {
    Rng rng(seed);
    std::vector<FunctionSpec> specs(m);
    for (auto& s : specs) {
        s.lo = 0.0;
        s.hi = 2.0;
        s.table.resize(n);
        double v = double(rng.uniform(10));
        for (auto& t : s.table) {
            t = v;
            v = std::clamp(v + double(i64(rng.uniform(3)) - 1), 0.0, 9.0);
        }
        s.out_min = 0;
        s.out_max = 9;
    }
    return specs;
}

struct AnalyticSizeReport {
    double repack_mb = 0, merge_mb = 0, bootstrap_mb = 0, tv_mb = 0, thresholds_mb = 0;
    double total_mb() const { return repack_mb + merge_mb + bootstrap_mb + tv_mb + thresholds_mb; }
};

// Production-scale key material, computed from the serialization formulas without
// materializing anything. Set I feeds the PFE/repacking keys, Set III the
// bootstrapping keys.
inline AnalyticSizeReport analytic_sizes() {
    AnalyticSizeReport r;
    auto mb = [](double bytes) { return bytes / 1.0e6; };
    // Set I: n = 2^12, one 55-bit prime + one 54-bit special, base2 = 30
    double n1 = 4096;
    double set1_rows = 2;
    double set1_digits = 2;  // ceil(55 / 30)
    double repack_keys = 12;  // log2(n)
    double key1 = set1_digits * (9 + set1_rows * n1 * 8);
    r.repack_mb = mb(repack_keys * (key1 + 44));
    // merging: one key over N = 2^16 at q0 + five 61-bit specials
    double n3 = 65536;
    double merge_rows = 6;
    r.merge_mb = mb(1 * (9 + merge_rows * n3 * 8) + 56);
    // Set III: 24 q-primes + 5 specials; hybrid gadget with 5-prime digits
    double set3_rows = 29;
    double set3_digits = 5;
    double galois_keys = 56;  // DFT factors, conjugation, trace, inner sum
    double key3 = set3_digits * (9 + set3_rows * n3 * 8) + 36;
    r.bootstrap_mb = mb((galois_keys + 1) * key3);
    // 16 test vectors at Set I level 0 (two full polynomials each)
    r.tv_mb = mb(16 * (2 * (9 + 1 * n1 * 8) + 29));
    // t0, t1, normalizer at Set II consumption levels (~5 primes deep)
    r.thresholds_mb = mb(3 * (2 * (9 + 5 * n3 * 8) + 29));
    return r;
}

inline int keygen(const std::string& profile_name, u64 seed, std::size_t m, double t0, double t1,
                  const std::string& out_dir) {
    Profile prof = Profile::by_name(profile_name);
    if (prof.analytic_only) {
        AnalyticSizeReport r = analytic_sizes();
        std::printf("analytic key material at production-scale parameter sets (seed-compressed):\n");
        std::printf("  %-24s %10.2f MB\n", "Ring Packing Keys", r.repack_mb);
        std::printf("  %-24s %10.2f MB\n", "Ring Merging Keys", r.merge_mb);
        std::printf("  %-24s %10.2f MB\n", "Bootstrapping Keys", r.bootstrap_mb);
        std::printf("  %-24s %10.2f MB\n", "Encrypted functions", r.tv_mb);
        std::printf("  %-24s %10.2f MB\n", "Encrypted thresholds", r.thresholds_mb);
        std::printf("  %-24s %10.2f MB\n", "Total", r.total_mb());
        return 0;
    }
    if (!prof.thresholds_enabled)
        throw TetrisError("cli", "profile " + profile_name +
                                     " covers the scoring/packing phase only and has no protocol keys");
    const ProtocolContext& pc = context_for(profile_name);
    auto specs = synth_functions(pc.ring_small().degree(), m, splitmix64(seed ^ 0xf00d));
    ScientistSetup s = scientist_setup(pc, specs, t0, t1, seed);
    std::filesystem::create_directories(out_dir);
    write_file(out_dir + "/secret_small.bin", serialize_secret_key(s.sk_small));
    write_file(out_dir + "/secret_big.bin", serialize_secret_key(s.sk_big));
    write_file(out_dir + "/evalkeys.bin", serialize_eval_keyset(s.keys));
    write_file(out_dir + "/query.bin", serialize_query(s.query));
    std::printf("key material (serialized):\n");
    std::printf("  %-24s %10.2f MB\n", "Ring Packing Keys", double(s.key_sizes.repack_bytes) / 1e6);
    std::printf("  %-24s %10.2f MB\n", "Ring Merging Keys", double(s.key_sizes.merge_bytes) / 1e6);
    std::printf("  %-24s %10.2f MB\n", "Bootstrapping Keys",
                double(s.key_sizes.bootstrap_bytes) / 1e6);
    std::printf("wrote secrets, eval keys and query under %s\n", out_dir.c_str());
    return 0;
}

inline int query_gen(const std::string& profile_name, u64 seed, std::size_t m, double t0,
                     double t1, const std::string& out_dir) {
    // keygen already produces the query bound to the fresh secrets; a separate
    // query against existing secrets re-runs the scientist setup with the same
    // seed and rewrites only the query artifact.
    Profile prof = Profile::by_name(profile_name);
    if (prof.analytic_only || !prof.thresholds_enabled)
        throw TetrisError("cli", "profile " + profile_name + " cannot build protocol queries");
    const ProtocolContext& pc = context_for(profile_name);
    auto specs = synth_functions(pc.ring_small().degree(), m, splitmix64(seed ^ 0xf00d));
    ScientistSetup s = scientist_setup(pc, specs, t0, t1, seed);
    std::filesystem::create_directories(out_dir);
    write_file(out_dir + "/query.bin", serialize_query(s.query));
    std::printf("wrote query.bin (%zu functions, t0=%g, t1=%g)\n", m, t0, t1);
    return 0;
}

inline int evaluate(const std::string& profile_name, const std::string& db_csv,
                    const std::string& keys_dir, const std::string& out_path, int threads,
                    StageTimings* timings_out = nullptr) {
    const ProtocolContext& pc = context_for(profile_name);
    Database db = read_csv(db_csv);
    Query query = deserialize_query(read_file(keys_dir + "/query.bin"), pc.ring_small(),
                                    pc.ring_big());
    EvalKeySet keys = deserialize_eval_keyset(read_file(keys_dir + "/evalkeys.bin"),
                                              pc.ring_small(), pc.ring_big());
    SelectionMatrix sel = SelectionMatrix::identity(db.h());
    if (db.h() != query.tvs.size())
        throw TetrisError("cli", "database has " + std::to_string(db.h()) +
                                     " attributes, query expects " +
                                     std::to_string(query.tvs.size()));
    StageTimings tm;
    Ciphertext bit = explore(pc, db, sel, query, keys, threads, &tm);
    write_file(out_path, serialize_ciphertext(bit));
    if (timings_out) *timings_out = tm;
    std::printf("evaluated %zu rows; result written to %s\n", db.p(), out_path.c_str());
    return 0;
}

inline int decrypt(const std::string& profile_name, const std::string& sk_path,
                   const std::string& result_path) {
    const ProtocolContext& pc = context_for(profile_name);
    SecretKey sk = deserialize_secret_key(read_file(sk_path), pc.ring_big());
    Ciphertext bit = deserialize_ciphertext(read_file(result_path), pc.ring_big());
    int b = decrypt_bit(pc, sk, bit);
    std::printf("result bit: %d\n", b);
    return b == 0 || b == 1 ? 0 : 1;
}

struct BenchReport {
    StageTimings stages;
    std::size_t p = 0;
    std::size_t key_bytes = 0;
    u64 ciphertexts = 0;

    static const std::vector<std::string>& stage_names() {
        static const std::vector<std::string> names = {
            "Scientist Generation", "Database Owner Generation", "Private Function & Packing",
            "Half-BTS",             "Private Threshold 1",       "Private Threshold 2"};
        return names;
    }

    // p-dependent stages only; the generation stages and the final global
    // threshold are one-off costs.
    double amortized_ms() const {
        return (stages.pfe_pack + stages.half_bts + stages.threshold1) * 1000.0 / double(p);
    }

    void print() const {
        auto row = [&](const std::string& name, double total) {
            std::printf("  %-28s %9.2f s   %9.3f ms/entry\n", name.c_str(), total,
                        total * 1000.0 / double(p));
        };
        const auto& names = stage_names();
        std::printf("benchmark over %zu entries:\n", p);
        row(names[0], stages.scientist_gen);
        row(names[1], stages.owner_gen);
        row(names[2], stages.pfe_pack);
        row(names[3], stages.half_bts);
        row(names[4], stages.threshold1);
        row(names[5], stages.threshold2);
        double total = stages.scientist_gen + stages.owner_gen + stages.p_dependent_total();
        std::printf("  %-28s %9.2f s\n", "Total", total);
        std::printf("  amortized (entry-scaling stages): %.3f ms/entry\n", amortized_ms());
        std::printf("bench.p=%zu\n", p);
        std::printf("bench.scientist_gen_s=%.6f\n", stages.scientist_gen);
        std::printf("bench.owner_gen_s=%.6f\n", stages.owner_gen);
        std::printf("bench.pfe_pack_s=%.6f\n", stages.pfe_pack);
        std::printf("bench.half_bts_s=%.6f\n", stages.half_bts);
        std::printf("bench.threshold1_s=%.6f\n", stages.threshold1);
        std::printf("bench.threshold2_s=%.6f\n", stages.threshold2);
        std::printf("bench.half_bts_calls=%llu\n", (unsigned long long)stages.half_bts_calls);
        std::printf("bench.amortized_ms=%.6f\n", amortized_ms());
    }
};

inline BenchReport bench_run(const std::string& profile_name, std::size_t p, std::size_t h,
                             u64 seed, int threads) {
    using detail_protocol::now_s;
    Profile prof = Profile::by_name(profile_name);
    if (prof.analytic_only)
        throw TetrisError("cli", "the analytic profile reports sizes via keygen, not timings");
    BenchReport rep;
    rep.p = p;
    double t0 = now_s();
    const ProtocolContext& pc = context_for(profile_name);  // owner-side plans
    rep.stages.owner_gen = now_s() - t0;

    if (!prof.thresholds_enabled) {
        // scoring/packing phase only
        auto specs = synth_functions(pc.ring_small().degree(), h, splitmix64(seed ^ 0xf00d));
        t0 = now_s();
        Rng rng(seed);
        Rng r_small = rng.split(1);
        SecretKey sk(pc.ring_small(), NoiseParams{3.2, prof.hw_small_eff()}, r_small);
        Rng r_rep = rng.split(2);
        RepackKeySet rep_keys = gen_repack_keys(pc.ctx_small(), sk, r_rep);
        std::vector<TestVector> tvs;
        Rng r_tv = rng.split(3);
        for (std::size_t j = 0; j < specs.size(); ++j) {
            Rng rj = r_tv.split(j);
            tvs.push_back(build_test_vector(pc.ctx_small(), specs[j], sk, prof.delta_tv, rj));
        }
        rep.stages.scientist_gen = now_s() - t0;
        Database db = synth_dataset(p, h, seed);
        t0 = now_s();
        u32 n = pc.ring_small().degree();
        std::size_t batches = (p + n - 1) / n;
        for (std::size_t b = 0; b < batches; ++b) {
            std::size_t lo = b * n, hi = std::min(p, lo + n);
            std::vector<std::vector<double>> slice(db.rows.begin() + long(lo),
                                                   db.rows.begin() + long(hi));
            auto scores = eval_scores(slice, tvs);
            std::vector<const Ciphertext*> ptrs(n, nullptr);
            for (std::size_t i = 0; i < scores.size(); ++i) ptrs[i] = &scores[i];
            Ciphertext packed = repack(pc.ctx_small(), ptrs, rep_keys);
            ++rep.ciphertexts;
        }
        rep.stages.pfe_pack = now_s() - t0;
        return rep;
    }

    auto specs = synth_functions(pc.ring_small().degree(), h, splitmix64(seed ^ 0xf00d));
    double sum_max = 0;
    for (auto& s : specs) sum_max += s.max_value();
    t0 = now_s();
    ScientistSetup s = scientist_setup(pc, specs, std::floor(sum_max / 2), double(p) / 4.0, seed);
    rep.stages.scientist_gen = now_s() - t0;
    rep.key_bytes = s.key_sizes.total();
    Database db = synth_dataset(p, h, seed);
    Ciphertext bit = explore(pc, db, SelectionMatrix::identity(h), s.query, s.keys, threads,
                             &rep.stages);
    rep.ciphertexts = rep.stages.half_bts_calls;
    (void)bit;
    return rep;
}

inline int bench(const std::string& profile_name, std::size_t p, std::size_t h, u64 seed,
                 int threads) {
    BenchReport rep = bench_run(profile_name, p, h, seed, threads);
    rep.print();
    return 0;
}

}  // namespace cli
}  // namespace tetris
