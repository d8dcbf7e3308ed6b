#include <CLI11.hpp>

#include "tetris/cli.hpp"

using namespace tetris;

int main(int argc, char** argv) {
    CLI::App app{"TETRIS: private functional exploration over plaintext databases"};
    app.require_subcommand(1);

    std::string profile = "toy";
    app.add_option("--profile", profile, "parameter profile: toy, toy-small, set1-only, full-analytic")
        ->capture_default_str();

    // gen-dataset
    auto* gen = app.add_subcommand("gen-dataset", "synthesize a Gaussian dataset clamped to [0,2)");
    std::size_t gen_p = 1024, gen_h = 16;
    u64 gen_seed = 1;
    std::string gen_out = "dataset.csv";
    gen->add_option("-p,--rows", gen_p, "number of rows")->capture_default_str();
    gen->add_option("-a,--attributes", gen_h, "number of attributes")->capture_default_str();
    gen->add_option("-s,--seed", gen_seed, "generator seed")->capture_default_str();
    gen->add_option("-o,--out", gen_out, "output csv path")->capture_default_str();

    // keygen
    auto* kg = app.add_subcommand("keygen", "scientist setup: secrets, eval keys, query");
    u64 kg_seed = 1;
    std::size_t kg_m = 16;
    double kg_t0 = 70.0, kg_t1 = 256.0;
    std::string kg_out = "keys";
    kg->add_option("-s,--seed", kg_seed, "setup seed")->capture_default_str();
    kg->add_option("-m,--functions", kg_m, "number of scoring functions")->capture_default_str();
    kg->add_option("--t0", kg_t0, "local (per-row) threshold")->capture_default_str();
    kg->add_option("--t1", kg_t1, "global (row-count) threshold")->capture_default_str();
    kg->add_option("-o,--out-dir", kg_out, "output directory")->capture_default_str();

    // query-gen
    auto* qg = app.add_subcommand("query-gen", "rebuild the encrypted query for given thresholds");
    u64 qg_seed = 1;
    std::size_t qg_m = 16;
    double qg_t0 = 70.0, qg_t1 = 256.0;
    std::string qg_out = "keys";
    qg->add_option("-s,--seed", qg_seed, "setup seed (must match keygen)")->capture_default_str();
    qg->add_option("-m,--functions", qg_m, "number of scoring functions")->capture_default_str();
    qg->add_option("--t0", qg_t0, "local threshold")->capture_default_str();
    qg->add_option("--t1", qg_t1, "global threshold")->capture_default_str();
    qg->add_option("-o,--out-dir", qg_out, "output directory")->capture_default_str();

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "database-owner run of the exploration pipeline");
    std::string ev_db = "dataset.csv", ev_keys = "keys", ev_out = "result.bin";
    int ev_threads = 1;
    ev->add_option("--db", ev_db, "database csv")->capture_default_str();
    ev->add_option("--keys", ev_keys, "directory with query.bin and evalkeys.bin")
        ->capture_default_str();
    ev->add_option("-o,--out", ev_out, "result ciphertext path")->capture_default_str();
    ev->add_option("--threads", ev_threads, "worker threads for score batches")
        ->capture_default_str();

    // decrypt
    auto* de = app.add_subcommand("decrypt", "scientist readout of the result bit");
    std::string de_sk = "keys/secret_big.bin", de_in = "result.bin";
    de->add_option("--sk", de_sk, "big-ring secret key file")->capture_default_str();
    de->add_option("-i,--in", de_in, "result ciphertext path")->capture_default_str();

    // bench
    auto* be = app.add_subcommand("bench", "stage timings and amortized cost per entry");
    std::size_t be_p = 16384, be_h = 16;
    u64 be_seed = 1;
    int be_threads = 1;
    be->add_option("-p,--rows", be_p, "number of rows")->capture_default_str();
    be->add_option("-a,--attributes", be_h, "number of attributes")->capture_default_str();
    be->add_option("-s,--seed", be_seed, "seed")->capture_default_str();
    be->add_option("--threads", be_threads, "worker threads")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cli::gen_dataset(gen_p, gen_h, gen_seed, gen_out, profile);
        if (kg->parsed()) return cli::keygen(profile, kg_seed, kg_m, kg_t0, kg_t1, kg_out);
        if (qg->parsed()) return cli::query_gen(profile, qg_seed, qg_m, qg_t0, qg_t1, qg_out);
        if (ev->parsed()) return cli::evaluate(profile, ev_db, ev_keys, ev_out, ev_threads);
        if (de->parsed()) return cli::decrypt(profile, de_sk, de_in);
        if (be->parsed()) return cli::bench(profile, be_p, be_h, be_seed, be_threads);
    } catch (const TetrisError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
