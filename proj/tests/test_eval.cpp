#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "segicl/errors.hpp"
#include "segicl/eval.hpp"
#include "segicl/threads.hpp"
#include "support/helpers.hpp"

using namespace segicl;
using segicl::testsupport::check_throws_mentioning;
using segicl::testsupport::TempDir;

namespace {

ModelConfig tiny_model_config() {
    ModelConfig mc;
    mc.enc.hidden = 32;
    mc.enc.layers = 1;
    mc.enc.heads = 2;
    mc.enc.patch = 8;
    mc.enc.max_seq = 192;
    mc.enc.state_dim = 16;
    mc.dec.res = 8;
    mc.dec.base = 4;
    mc.dec.temb_dim = 8;
    mc.dec.cond_tokens = 2;
    mc.dec.token_dim = 8;
    mc.cond_hidden = 32;
    mc.init_seed = 99;
    return mc;
}

EpisodeSet small_corpus(const TempDir& dir, corpus::Split split, int n,
                        std::uint64_t seed) {
    corpus::CorpusConfig cc;
    const std::string out = dir.str() + "/" + corpus::split_name(split);
    corpus::build_split(cc, split, n, seed, out);
    return load_episodes(out);
}

// Brute-force dice oracle over explicit pixel sets.
double dice_oracle(const std::vector<std::uint8_t>& a,
                   const std::vector<std::uint8_t>& b) {
    long inter = 0, sa = 0, sb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sa += a[i] != 0;
        sb += b[i] != 0;
        inter += (a[i] != 0) && (b[i] != 0);
    }
    return (sa + sb == 0) ? 1.0 : 2.0 * double(inter) / double(sa + sb);
}

}  // namespace

TEST_CASE("dice: exact pixel-count arithmetic") {
    std::vector<std::uint8_t> full(1024, 1);
    std::vector<std::uint8_t> top(1024, 0);
    for (int i = 0; i < 512; ++i) top[std::size_t(i)] = 1;

    CHECK(eval::dice(full, full) == 1.0);
    CHECK(eval::dice(top, top) == 1.0);
    CHECK(eval::dice(top, full) == doctest::Approx(2.0 * 512 / 1536).epsilon(1e-12));

    std::vector<std::uint8_t> bottom(1024, 0);
    for (int i = 512; i < 1024; ++i) bottom[std::size_t(i)] = 1;
    CHECK(eval::dice(top, bottom) == 0.0);

    std::vector<std::uint8_t> empty(1024, 0);
    CHECK(eval::dice(empty, empty) == 1.0);
    CHECK(eval::dice(empty, full) == 0.0);

    check_throws_mentioning<contract_error>(
        [&] { eval::dice(top, std::vector<std::uint8_t>(64, 0)); },
        {"1024", "64"});
}

TEST_CASE("dice: symmetric, bounded, equals the oracle on random masks") {
    Rng rng(31);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<std::uint8_t> a(256), b(256);
        for (auto& v : a) v = rng.uniform() < 0.3 ? 1 : 0;
        for (auto& v : b) v = rng.uniform() < 0.3 ? 1 : 0;
        const double d = eval::dice(a, b);
        CHECK(d == eval::dice(b, a));
        CHECK(d >= 0.0);
        CHECK(d <= 1.0);
        CHECK(d == dice_oracle(a, b));
    }
}

TEST_CASE("monotone_means: report logic on published-style data") {
    CHECK(eval::monotone_means({73.95, 79.65, 85.13}));
    CHECK(eval::monotone_means({0.5, 0.5, 0.5}));
    CHECK_FALSE(eval::monotone_means({85.13, 79.65, 73.95}));
    CHECK_FALSE(eval::monotone_means({0.5, 0.7, 0.6}));
}

TEST_CASE("run_sweep: oracle stub scores 1.0 at every k") {
    TempDir dir("sweep_oracle");
    const auto set = small_corpus(dir, corpus::Split::test_id, 12, 91);

    eval::SweepConfig cfg;
    cfg.seed = 4;
    cfg.split = "test_id";
    cfg.checkpoint_id = "stub";
    const auto rep = eval::run_sweep(eval::oracle_predictor(), set, cfg);

    CHECK(rep.ks == std::vector<int>{0, 1, 3});
    for (int k : rep.ks) {
        CHECK(rep.per_k.at(k).mean == 1.0);
        CHECK(rep.per_k.at(k).stddev == 0.0);
        CHECK(rep.per_k.at(k).count == 12);
    }
    CHECK(rep.monotone);
    CHECK(rep.ratio_defined);
    CHECK(rep.ratio_3_over_0 == 1.0);
    CHECK(rep.episodes.size() == 36);
}

TEST_CASE("run_sweep: empty stub scores 0.0 and leaves the ratio undefined") {
    TempDir dir("sweep_empty");
    const auto set = small_corpus(dir, corpus::Split::test_id, 8, 92);

    eval::SweepConfig cfg;
    cfg.split = "test_id";
    const auto rep = eval::run_sweep(eval::empty_predictor(), set, cfg);
    for (int k : rep.ks) CHECK(rep.per_k.at(k).mean == 0.0);
    CHECK_FALSE(rep.ratio_defined);
    CHECK(rep.monotone);  // flat at zero
}

TEST_CASE("run_sweep: paired design and aggregation invariance") {
    TempDir dir("sweep_paired");
    const auto set = small_corpus(dir, corpus::Split::train, 10, 93);

    eval::SweepConfig cfg;
    cfg.seed = 77;
    cfg.split = "train";
    const auto rep = eval::run_sweep(eval::oracle_predictor(), set, cfg);

    // support prefixes and per-episode seeds agree across k
    for (const auto& er : rep.episodes) {
        REQUIRE(er.support_ids.size() == std::size_t(er.k));
        for (int j = 0; j < er.k; ++j) CHECK(er.support_ids[std::size_t(j)] == j);
        CHECK(er.seed == split_seed(77, std::uint64_t(er.index)));
    }

    // aggregates are permutation-invariant over episode order
    std::vector<double> k3;
    for (const auto& er : rep.episodes)
        if (er.k == 3) k3.push_back(er.dice);
    auto shuffled = k3;
    std::reverse(shuffled.begin(), shuffled.end());
    const double mean_a =
        std::accumulate(k3.begin(), k3.end(), 0.0) / double(k3.size());
    const double mean_b =
        std::accumulate(shuffled.begin(), shuffled.end(), 0.0) /
        double(shuffled.size());
    CHECK(mean_a == mean_b);
    CHECK(mean_a == rep.per_k.at(3).mean);
}

TEST_CASE("run_sweep: contract checks") {
    TempDir dir("sweep_bad");
    const auto set = small_corpus(dir, corpus::Split::test_id, 4, 94);

    eval::SweepConfig cfg;
    cfg.ks = {0, 4};
    check_throws_mentioning<contract_error>(
        [&] { eval::run_sweep(eval::oracle_predictor(), set, cfg); }, {"4", "3"});

    cfg.ks = {};
    CHECK_THROWS_AS(eval::run_sweep(eval::oracle_predictor(), set, cfg),
                    contract_error);

    EpisodeSet none;
    cfg.ks = {0};
    CHECK_THROWS_AS(eval::run_sweep(eval::oracle_predictor(), none, cfg),
                    contract_error);
}

TEST_CASE("run_sweep: model predictor is thread-count invariant") {
    TempDir dir("sweep_model");
    const auto set = small_corpus(dir, corpus::Split::test_id, 4, 95);
    Model model(tiny_model_config());

    eval::SweepConfig cfg;
    cfg.seed = 13;
    cfg.split = "test_id";
    cfg.ks = {0, 1, 3};
    cfg.checkpoint_id = "untrained";

    set_thread_count(1);
    const auto rep1 = eval::run_sweep(eval::model_predictor(model, 2), set, cfg);
    set_thread_count(2);
    const auto rep2 = eval::run_sweep(eval::model_predictor(model, 2), set, cfg);
    set_thread_count(0);

    // an 8x8 decoder scores against the block-majority ground truth
    for (const auto& er : rep1.episodes) {
        CHECK(er.dice >= 0.0);
        CHECK(er.dice <= 1.0);
    }
    CHECK(eval::report_csv({rep1}) == eval::report_csv({rep2}));
    CHECK(eval::report_jsonl({rep1}) == eval::report_jsonl({rep2}));
}

TEST_CASE("compare_splits: three splits, nine aggregate rows, stable bytes") {
    TempDir dir("compare");
    const auto id = small_corpus(dir, corpus::Split::test_id, 6, 96);
    const auto oodm = small_corpus(dir, corpus::Split::test_ood_modality, 6, 97);
    const auto oods = small_corpus(dir, corpus::Split::test_ood_structure, 6, 98);

    eval::SweepConfig cfg;
    cfg.seed = 21;
    const std::vector<std::pair<std::string, const EpisodeSet*>> splits{
        {"test_id", &id}, {"test_ood_modality", &oodm},
        {"test_ood_structure", &oods}};
    const auto reports =
        eval::compare_splits(eval::oracle_predictor(), splits, cfg);
    REQUIRE(reports.size() == 3);
    CHECK(reports[0].split == "test_id");
    CHECK(reports[2].split == "test_ood_structure");

    const auto csv = eval::report_csv(reports);
    std::stringstream ss(csv);
    std::string line;
    std::getline(ss, line);
    CHECK(line == "split,k,mean_dice,std,count,ratio_3_over_0");
    int rows = 0;
    while (std::getline(ss, line)) ++rows;
    CHECK(rows == 9);

    const auto again =
        eval::compare_splits(eval::oracle_predictor(), splits, cfg);
    CHECK(eval::report_csv(again) == csv);
    CHECK(csv.find("test_id,0,1.000000,0.000000,6,1.000000") != std::string::npos);

    const auto plot = eval::plot_csv(reports);
    CHECK(plot.find("series,k,mean,std") == 0);
    CHECK(plot.find("test_ood_modality,3,1.000000,0.000000") != std::string::npos);
}

TEST_CASE("report_jsonl: record structure") {
    TempDir dir("jsonl");
    const auto set = small_corpus(dir, corpus::Split::test_id, 3, 99);
    eval::SweepConfig cfg;
    cfg.split = "test_id";
    cfg.ks = {0, 3};
    const auto rep = eval::run_sweep(eval::empty_predictor(), set, cfg);
    const auto text = eval::report_jsonl({rep});

    int episode_lines = 0, aggregate_lines = 0, sweep_lines = 0;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (line.find("\"type\":\"episode\"") != std::string::npos) ++episode_lines;
        if (line.find("\"type\":\"aggregate\"") != std::string::npos)
            ++aggregate_lines;
        if (line.find("\"type\":\"sweep\"") != std::string::npos) ++sweep_lines;
    }
    CHECK(episode_lines == 6);
    CHECK(aggregate_lines == 2);
    CHECK(sweep_lines == 1);
    CHECK(text.find("\"ratio_3_over_0\":null") != std::string::npos);
}
