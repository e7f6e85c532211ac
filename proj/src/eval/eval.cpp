#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>

#include "json.hpp"
#include "segicl/errors.hpp"
#include "segicl/eval.hpp"
#include "segicl/rng.hpp"

namespace segicl::eval {

using nlohmann::json;

double dice(const std::vector<std::uint8_t>& pred,
            const std::vector<std::uint8_t>& gt) {
    if (pred.size() != gt.size())
        throw contract_error("dice shapes differ: " + std::to_string(pred.size()) +
                             " vs " + std::to_string(gt.size()) + " pixels");
    long inter = 0, p = 0, g = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool a = pred[i] != 0, b = gt[i] != 0;
        inter += (a && b);
        p += a;
        g += b;
    }
    if (p + g == 0) return 1.0;
    return 2.0 * double(inter) / double(p + g);
}

Predictor model_predictor(Model& model, int n_samples) {
    return [&model, n_samples](const corpus::Episode& ep, int k,
                               std::uint64_t seed) {
        return infer(model, ep, k, n_samples, seed);
    };
}

Predictor oracle_predictor() {
    return [](const corpus::Episode& ep, int, std::uint64_t) {
        return ep.query.mask;
    };
}

Predictor empty_predictor() {
    return [](const corpus::Episode& ep, int, std::uint64_t) {
        return std::vector<std::uint8_t>(ep.query.mask.size(), 0);
    };
}

bool monotone_means(const std::vector<double>& means) {
    for (std::size_t i = 1; i < means.size(); ++i)
        if (means[i] < means[i - 1]) return false;
    return true;
}

namespace {

// Ground truth matched to the prediction resolution: a reduced-resolution
// prediction (smoke decoders) is scored against the block-majority mask.
std::vector<std::uint8_t> gt_at(const std::vector<std::uint8_t>& gt,
                                std::size_t pred_size) {
    if (pred_size == gt.size()) return gt;
    const int res = int(std::lround(std::sqrt(double(pred_size))));
    if (std::size_t(res) * std::size_t(res) != pred_size)
        throw contract_error("prediction with " + std::to_string(pred_size) +
                             " pixels is not square");
    return downsample_mask(gt, res);
}

DiceStats aggregate(const std::vector<double>& values) {
    DiceStats s;
    s.count = int(values.size());
    if (values.empty()) return s;
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / double(s.count);
    if (s.count > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(ss / double(s.count - 1));
    }
    return s;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

ShotSweepReport run_sweep(const Predictor& predict, const EpisodeSet& set,
                          const SweepConfig& cfg) {
    if (cfg.ks.empty()) throw contract_error("sweep needs at least one k");
    const int n_all = int(set.episodes.size());
    const int n = (cfg.max_episodes > 0) ? std::min(cfg.max_episodes, n_all)
                                         : n_all;
    if (n == 0) throw contract_error("sweep over an empty episode set");
    const int k_max = *std::max_element(cfg.ks.begin(), cfg.ks.end());
    for (const auto& ep : set.episodes)
        if (k_max > int(ep.supports.size()))
            throw contract_error("sweep needs k = " + std::to_string(k_max) +
                                 " supports, episode has " +
                                 std::to_string(ep.supports.size()));

    const int nk = int(cfg.ks.size());
    std::vector<double> scores(std::size_t(n) * nk);
    std::exception_ptr first_error;
    std::atomic<bool> failed{false};

#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
        if (failed.load(std::memory_order_relaxed)) continue;
        try {
            const auto& ep = set.episodes[std::size_t(i)];
            const std::uint64_t ep_seed = split_seed(cfg.seed, std::uint64_t(i));
            for (int j = 0; j < nk; ++j) {
                const auto pred = predict(ep, cfg.ks[std::size_t(j)], ep_seed);
                scores[std::size_t(i) * nk + j] =
                    dice(pred, gt_at(ep.query.mask, pred.size()));
            }
        } catch (...) {
#pragma omp critical
            if (!first_error) {
                first_error = std::current_exception();
                failed.store(true, std::memory_order_relaxed);
            }
        }
    }
    if (first_error) std::rethrow_exception(first_error);

    ShotSweepReport rep;
    rep.split = cfg.split;
    rep.checkpoint_id = cfg.checkpoint_id;
    rep.seed = cfg.seed;
    rep.ks = cfg.ks;
    rep.episodes.reserve(std::size_t(n) * nk);
    for (int j = 0; j < nk; ++j) {
        const int k = cfg.ks[std::size_t(j)];
        std::vector<double> col(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            col[std::size_t(i)] = scores[std::size_t(i) * nk + j];
            EpisodeResult er;
            er.index = i;
            er.k = k;
            er.dice = col[std::size_t(i)];
            er.seed = split_seed(cfg.seed, std::uint64_t(i));
            er.support_ids.resize(std::size_t(k));
            std::iota(er.support_ids.begin(), er.support_ids.end(), 0);
            rep.episodes.push_back(std::move(er));
        }
        rep.per_k[k] = aggregate(col);
    }

    std::vector<double> means;
    for (int k : cfg.ks) means.push_back(rep.per_k.at(k).mean);
    rep.monotone = monotone_means(means);
    if (rep.per_k.count(0) && rep.per_k.count(3) && rep.per_k.at(0).mean > 0.01) {
        rep.ratio_defined = true;
        rep.ratio_3_over_0 = rep.per_k.at(3).mean / rep.per_k.at(0).mean;
    }
    return rep;
}

std::vector<ShotSweepReport> compare_splits(
    const Predictor& predict,
    const std::vector<std::pair<std::string, const EpisodeSet*>>& splits,
    SweepConfig cfg) {
    std::vector<ShotSweepReport> reports;
    reports.reserve(splits.size());
    for (const auto& [name, set] : splits) {
        cfg.split = name;
        reports.push_back(run_sweep(predict, *set, cfg));
    }
    return reports;
}

std::string report_csv(const std::vector<ShotSweepReport>& reports) {
    std::string out = "split,k,mean_dice,std,count,ratio_3_over_0\n";
    for (const auto& rep : reports)
        for (int k : rep.ks) {
            const auto& s = rep.per_k.at(k);
            out += rep.split + "," + std::to_string(k) + "," + fmt(s.mean) + "," +
                   fmt(s.stddev) + "," + std::to_string(s.count) + ",";
            if (rep.ratio_defined) out += fmt(rep.ratio_3_over_0);
            out += "\n";
        }
    return out;
}

std::string report_jsonl(const std::vector<ShotSweepReport>& reports) {
    std::string out;
    for (const auto& rep : reports) {
        for (const auto& er : rep.episodes)
            out += json{{"type", "episode"},      {"split", rep.split},
                        {"k", er.k},              {"episode", er.index},
                        {"dice", er.dice},        {"support_ids", er.support_ids},
                        {"seed", er.seed}}
                       .dump() +
                   "\n";
        for (int k : rep.ks) {
            const auto& s = rep.per_k.at(k);
            out += json{{"type", "aggregate"}, {"split", rep.split},
                        {"k", k},              {"mean_dice", s.mean},
                        {"std", s.stddev},     {"count", s.count}}
                       .dump() +
                   "\n";
        }
        json sweep{{"type", "sweep"},
                   {"split", rep.split},
                   {"checkpoint_id", rep.checkpoint_id},
                   {"seed", rep.seed},
                   {"monotone", rep.monotone}};
        if (rep.ratio_defined)
            sweep["ratio_3_over_0"] = rep.ratio_3_over_0;
        else
            sweep["ratio_3_over_0"] = nullptr;
        out += sweep.dump() + "\n";
    }
    return out;
}

std::string plot_csv(const std::vector<ShotSweepReport>& reports) {
    std::string out = "series,k,mean,std\n";
    for (const auto& rep : reports)
        for (int k : rep.ks) {
            const auto& s = rep.per_k.at(k);
            out += rep.split + "," + std::to_string(k) + "," + fmt(s.mean) + "," +
                   fmt(s.stddev) + "\n";
        }
    return out;
}

}  // namespace segicl::eval
