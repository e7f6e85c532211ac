#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "segicl/corpus.hpp"
#include "segicl/train.hpp"

namespace segicl::eval {

// 2|P∩G| / (|P|+|G|) in integer arithmetic; both masks empty scores 1.0.
double dice(const std::vector<std::uint8_t>& pred,
            const std::vector<std::uint8_t>& gt);

struct DiceStats {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation; 0 when count < 2
    int count = 0;
};

struct EpisodeResult {
    int index = 0;
    int k = 0;
    double dice = 0.0;
    std::vector<int> support_ids;  // supports fed to the predictor, in order
    std::uint64_t seed = 0;
};

struct ShotSweepReport {
    std::string split;
    std::string checkpoint_id;
    std::uint64_t seed = 0;
    std::vector<int> ks;
    std::map<int, DiceStats> per_k;
    std::vector<EpisodeResult> episodes;
    bool monotone = false;       // per-k means non-decreasing in ks order
    bool ratio_defined = false;  // requires ks with 0 and 3 and Dice(0) > 0.01
    double ratio_3_over_0 = 0.0;
};

// A prediction function: episode, shot count, episode seed -> binary mask.
// Lets sweeps run against the real model or against self-test stubs.
using Predictor = std::function<std::vector<std::uint8_t>(
    const corpus::Episode&, int k, std::uint64_t seed)>;

Predictor model_predictor(Model& model, int n_samples = 5);
Predictor oracle_predictor();
Predictor empty_predictor();

struct SweepConfig {
    std::vector<int> ks{0, 1, 3};
    int max_episodes = 0;  // 0 evaluates the whole set
    std::uint64_t seed = 0;
    std::string split;
    std::string checkpoint_id;
};

// Paired design: every k sees the same episodes, the same support prefix and
// the same per-episode seed. Episodes run in parallel; aggregation folds in
// episode-index order, so reports are byte-stable for any thread count.
ShotSweepReport run_sweep(const Predictor& predict, const EpisodeSet& set,
                          const SweepConfig& cfg);

// One sweep per named split, same sweep settings.
std::vector<ShotSweepReport> compare_splits(
    const Predictor& predict,
    const std::vector<std::pair<std::string, const EpisodeSet*>>& splits,
    SweepConfig cfg);

// True when the sequence never decreases.
bool monotone_means(const std::vector<double>& means);

// Summary CSV: split,k,mean_dice,std,count,ratio_3_over_0 (ratio cell empty
// when undefined).
std::string report_csv(const std::vector<ShotSweepReport>& reports);
// Machine-readable JSONL: episode records, aggregates, then sweep records.
std::string report_jsonl(const std::vector<ShotSweepReport>& reports);
// Plot series CSV: series,k,mean,std.
std::string plot_csv(const std::vector<ShotSweepReport>& reports);

}  // namespace segicl::eval
