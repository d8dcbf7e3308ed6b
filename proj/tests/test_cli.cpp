#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"
#include "tetris/cli.hpp"

using namespace tetris;

TEST_CASE("gen-dataset: deterministic, bounded, centered near 1") {
    std::string path = "/tmp/tetris_cli_ds.csv";

    SUBCASE("byte-identical per seed") {
        cli::gen_dataset(4, 2, 99, path, "toy-small");
        auto a = cli::read_file(path);
        cli::gen_dataset(4, 2, 99, path, "toy-small");
        auto b = cli::read_file(path);
        REQUIRE(a == b);
        cli::gen_dataset(4, 2, 100, path, "toy-small");
        REQUIRE(cli::read_file(path) != a);
    }

    SUBCASE("all values in [0, 2) over 10^5 samples") {
        Database db = cli::synth_dataset(12500, 8, 7);
        for (const auto& row : db.rows)
            for (double v : row) {
                REQUIRE(v >= 0.0);
                REQUIRE(v < 2.0);
            }
    }

    SUBCASE("sample mean within 1 +- 0.05") {
        Database db = cli::synth_dataset(100000, 1, 11);
        double sum = 0;
        for (const auto& row : db.rows) sum += row[0];
        double mean = sum / double(db.rows.size());
        REQUIRE(mean > 0.95);
        REQUIRE(mean < 1.05);
    }

    SUBCASE("sidecar config carries the profile shape") {
        cli::gen_dataset(4, 2, 99, path, "toy-small");
        SidecarConfig cfg = read_sidecar(path + ".config");
        REQUIRE(cfg.get("profile") == "toy-small");
        REQUIRE(cfg.get("bounds.hi") == "2");
        REQUIRE(cfg.get("n") == "64");
        REQUIRE(cfg.has("threshold1"));
    }
}

TEST_CASE("pipeline: keygen, evaluate, decrypt round-trip through files") {
    std::string dir = "/tmp/tetris_cli_run";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    std::string csv = dir + "/db.csv";

    cli::gen_dataset(96, 4, 5, csv, "toy-small");
    REQUIRE(cli::keygen("toy-small", 31337, 4, 10.0, 8.0, dir) == 0);
    StageTimings tm;
    REQUIRE(cli::evaluate("toy-small", csv, dir, dir + "/result.bin", 1, &tm) == 0);
    REQUIRE(tm.half_bts_calls == 1);  // ceil(96 / 256)
    int rc = cli::decrypt("toy-small", dir + "/secret_big.bin", dir + "/result.bin");
    REQUIRE(rc == 0);

    SUBCASE("the result matches the plaintext pipeline") {
        const ProtocolContext& pc = cli::context_for("toy-small");
        Database db = read_csv(csv);
        auto specs = cli::synth_functions(pc.ring_small().degree(), 4, splitmix64(31337 ^ 0xf00d));
        std::size_t count = 0;
        for (const auto& row : db.rows) {
            double score = 0;
            for (std::size_t j = 0; j < specs.size(); ++j)
                score += specs[j].table[encode_input(row[j], 0, 2, pc.ring_small().degree())];
            if (score >= 10.0) ++count;
        }
        int want = count >= 8 ? 1 : 0;
        SecretKey sk = deserialize_secret_key(cli::read_file(dir + "/secret_big.bin"),
                                              pc.ring_big());
        Ciphertext bit = deserialize_ciphertext(cli::read_file(dir + "/result.bin"), pc.ring_big());
        REQUIRE(decrypt_bit(pc, sk, bit) == want);
    }
}

TEST_CASE("evaluate: malformed csv fails with diagnostics, not a crash") {
    std::string dir = "/tmp/tetris_cli_bad";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    {
        std::ofstream f(dir + "/bad.csv");
        f << "a,b,c,d\n0.1,0.2,0.3,nope\n";
    }
    REQUIRE(cli::keygen("toy-small", 1, 4, 5.0, 2.0, dir) == 0);
    REQUIRE_THROWS_WITH_AS(cli::evaluate("toy-small", dir + "/bad.csv", dir, dir + "/r.bin", 1),
                           doctest::Contains("column 4"), TetrisError);
}

TEST_CASE("bench: stage rows carry the reporting names and recomputable totals") {
    const auto& names = cli::BenchReport::stage_names();
    REQUIRE(names == std::vector<std::string>{"Scientist Generation", "Database Owner Generation",
                                              "Private Function & Packing", "Half-BTS",
                                              "Private Threshold 1", "Private Threshold 2"});
    cli::BenchReport rep = cli::bench_run("toy-small", 300, 4, 17, 1);
    REQUIRE(rep.p == 300);
    REQUIRE(rep.stages.half_bts_calls == 2);  // ceil(300/256)
    REQUIRE(rep.stages.pfe_pack > 0);
    REQUIRE(rep.stages.half_bts > 0);
    REQUIRE(rep.stages.threshold1 > 0);
    REQUIRE(rep.stages.threshold2 > 0);
    REQUIRE(rep.stages.scientist_gen > 0);
    double amortized = rep.amortized_ms();
    double recomputed =
        (rep.stages.pfe_pack + rep.stages.half_bts + rep.stages.threshold1) * 1000.0 / 300.0;
    REQUIRE(std::abs(amortized - recomputed) < 1e-9);
}

TEST_CASE("analytic profile: production-scale sizes in the right orders of magnitude") {
    cli::AnalyticSizeReport r = cli::analytic_sizes();
    // bootstrapping dominates at whole-GB scale, packing keys at single MB
    REQUIRE(r.bootstrap_mb > 1000.0);
    REQUIRE(r.bootstrap_mb < 20000.0);
    REQUIRE(r.repack_mb > 0.5);
    REQUIRE(r.repack_mb < 10.0);
    REQUIRE(r.tv_mb > 0.5);
    REQUIRE(r.tv_mb < 2.0);
    REQUIRE(r.total_mb() > 1000.0);
    REQUIRE(cli::keygen("full-analytic", 0, 0, 0, 0, "/tmp/unused") == 0);
}

TEST_CASE("set1-only profile: scoring and packing phase at Set-I shape") {
    // n = 2^12, 55/54-bit chain, base2 = 30; repack a small batch
    cli::BenchReport rep = cli::bench_run("set1-only", 64, 4, 23, 1);
    REQUIRE(rep.ciphertexts == 1);
    REQUIRE(rep.stages.pfe_pack > 0);
    REQUIRE(rep.stages.half_bts == 0.0);
}
