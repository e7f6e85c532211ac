#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "segicl/errors.hpp"
#include "segicl/optim.hpp"
#include "segicl/train.hpp"
#include "segicl/util.hpp"

namespace segicl {

namespace fs = std::filesystem;

void ModelConfig::validate() const {
    enc.validate();
    dec.validate();
    if (cond_hidden <= 0)
        throw config_error("cond_hidden must be positive, got " +
                           std::to_string(cond_hidden));
    if (enc.state_dim != cond_dim())
        throw config_error(
            "projector state_dim " + std::to_string(enc.state_dim) +
            " must equal denoiser context width " + std::to_string(cond_dim()));
    if (corpus::kRes % dec.res != 0)
        throw config_error("denoiser res " + std::to_string(dec.res) +
                           " must divide the corpus resolution " +
                           std::to_string(corpus::kRes));
    NoiseSchedule probe(sched_steps, beta_start, beta_end);  // throws if bad
}

Model::Model(const ModelConfig& cfg)
    : cfg_((cfg.validate(), cfg)),
      init_rng_(cfg.init_seed),
      enc_(cfg.enc, Vocab::builtin(), init_rng_),
      cond_(init_rng_, cfg.cond_hidden, cfg.cond_dim()),
      dec_(cfg.dec, NoiseSchedule(cfg.sched_steps, cfg.beta_start, cfg.beta_end),
           init_rng_) {}

ParamRegistry Model::merged_params() {
    ParamRegistry reg;
    for (auto& [name, t] : enc_.params().params()) reg.add("enc." + name, t);
    for (auto& [name, t] : cond_.params().params()) reg.add("cond." + name, t);
    for (auto& [name, t] : dec_.params().params()) reg.add("dec." + name, t);
    return reg;
}

ParamRegistry Model::stage1_params() {
    ParamRegistry reg;
    for (auto& [name, t] : cond_.params().params()) reg.add("cond." + name, t);
    for (auto& [name, t] : dec_.params().params()) reg.add("dec." + name, t);
    return reg;
}

std::pair<std::uint64_t, std::uint64_t> Model::frozen_checksum() const {
    return {dec_.params().checksum(), cond_.params().checksum()};
}

void TrainConfig::validate() const {
    if (stage != 1 && stage != 2)
        throw config_error("stage must be 1 or 2, got " + std::to_string(stage));
    if (batch <= 0) throw config_error("batch must be positive");
    if (steps <= 0) throw config_error("steps must be positive");
    if (warmup < 0) throw config_error("warmup must be non-negative");
    if (!(lr > 0)) throw config_error("lr must be positive");
    if (!(aux_weight >= 0)) throw config_error("aux_weight must be non-negative");
    if (k_max < 0 || k_max > 3)
        throw config_error("k_max must be in [0, 3], got " + std::to_string(k_max));
    if (eval_every < 0) throw config_error("eval_every must be non-negative");
}

float lr_at(const TrainConfig& cfg, int step) {
    if (cfg.warmup > 0 && step <= cfg.warmup)
        return cfg.lr * float(step) / float(cfg.warmup);
    const double total = std::max(1, cfg.steps - cfg.warmup);
    const double progress = double(step - cfg.warmup) / total;
    return float(double(cfg.lr) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress)));
}

std::vector<std::uint8_t> downsample_mask(const std::vector<std::uint8_t>& mask,
                                          int res) {
    if (mask.size() != std::size_t(corpus::kRes) * corpus::kRes)
        throw dimension_error("mask has " + std::to_string(mask.size()) +
                              " pixels, expected " +
                              std::to_string(corpus::kRes * corpus::kRes));
    if (res <= 0 || corpus::kRes % res != 0)
        throw contract_error("res " + std::to_string(res) +
                             " must divide " + std::to_string(corpus::kRes));
    if (res == corpus::kRes) return mask;
    const int f = corpus::kRes / res;
    std::vector<std::uint8_t> out(std::size_t(res) * res);
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            int sum = 0;
            for (int dy = 0; dy < f; ++dy)
                for (int dx = 0; dx < f; ++dx)
                    sum += mask[std::size_t(y * f + dy) * corpus::kRes + (x * f + dx)];
            out[std::size_t(y) * res + x] = (2 * sum >= f * f) ? 1 : 0;
        }
    return out;
}

EpisodeSet load_episodes(const std::string& dir) {
    EpisodeSet set;
    set.manifest = corpus::load_manifest(dir);
    set.episodes.reserve(set.manifest.episodes.size());
    for (int i = 0; i < int(set.manifest.episodes.size()); ++i)
        set.episodes.push_back(corpus::load_episode(set.manifest, i));
    return set;
}

namespace {

// Append-only CSV logger; a header is written when the file starts empty.
class TrainLog {
public:
    explicit TrainLog(const std::string& path) {
        if (path.empty()) return;
        const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
        out_.open(path, std::ios::app);
        if (!out_) throw io_error("cannot open training log: " + path);
        if (fresh) out_ << "step,loss,aux_loss,lr,wall_ms\n";
    }
    void line(std::int64_t step, double loss, double aux, double lr,
              double wall_ms) {
        if (!out_.is_open()) return;
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%lld,%.8g,%.8g,%.8g,%.3f\n",
                      static_cast<long long>(step), loss, aux, lr, wall_ms);
        out_ << buf;
    }
    void flush() {
        if (out_.is_open()) out_.flush();
    }

private:
    std::ofstream out_;
};

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - t0)
        .count();
}

[[noreturn]] void abort_non_finite(Model& model, const TrainConfig& cfg,
                                   int stage, int step, double running,
                                   Rng& rng) {
    Graph::current().clear();
    std::string hint;
    if (!cfg.out_path.empty()) {
        const std::string snap = cfg.out_path + ".nan";
        CheckpointMeta meta;
        meta.config = model.config();
        meta.stage = stage;
        meta.step = step;
        meta.running_loss = running;
        meta.rng_state = rng.state();
        save_checkpoint(snap, model, meta);
        hint = "; diagnostic snapshot written to " + snap;
    }
    throw training_error("non-finite loss at stage " + std::to_string(stage) +
                         " step " + std::to_string(step) + hint);
}

void progress(const TrainConfig& cfg, int stage, int step, double loss,
              double running) {
    if (cfg.eval_every <= 0 || step % cfg.eval_every != 0) return;
    std::fprintf(stderr, "[stage%d] step %d/%d loss %.4f running %.4f\n", stage,
                 step, cfg.steps, loss, running);
}

}  // namespace

CheckpointMeta train_stage1(Model& model, const TrainConfig& cfg,
                            const EpisodeSet& corpus) {
    cfg.validate();
    if (corpus.episodes.empty()) throw contract_error("empty training corpus");

    const int res = model.config().dec.res;
    const int B = cfg.batch;
    ParamRegistry reg = model.stage1_params();
    AdamW opt(reg, {});
    Rng rng(split_seed(cfg.seed, 0x51a6e1));
    TrainLog log(cfg.log_path);

    double running = 0.0;
    for (int s = 1; s <= cfg.steps; ++s) {
        const auto t0 = std::chrono::steady_clock::now();

        std::vector<float> m0v;
        std::vector<float> condv;
        m0v.reserve(std::size_t(B) * res * res);
        condv.reserve(std::size_t(B) * corpus::kRes * corpus::kRes);
        std::vector<std::vector<std::string>> kws;
        kws.reserve(std::size_t(B));
        for (int b = 0; b < B; ++b) {
            const auto& ep = corpus.episodes[std::size_t(
                rng.uniform_int(0, std::int64_t(corpus.episodes.size()) - 1))];
            const auto small = downsample_mask(ep.query.mask, res);
            for (std::uint8_t px : small) m0v.push_back(px ? 1.0f : -1.0f);
            for (std::uint8_t px : ep.query.mask) condv.push_back(px ? 1.0f : -1.0f);
            kws.push_back({corpus::structure_word(ep.structure)});
        }
        auto m0 = from_vector<float>({B, 1, res, res}, m0v);
        auto cond = model.cond().encode_flat(
            from_vector<float>({B, corpus::kRes * corpus::kRes}, condv));
        auto loss = model.decoder().denoise_loss(m0, kws, cond, rng);

        const double l = loss.item();
        if (!std::isfinite(l)) abort_non_finite(model, cfg, 1, s, running, rng);
        reg.zero_grads();
        backward(loss);
        const float lr = lr_at(cfg, s);
        opt.step(lr);

        running = (s == 1) ? l : 0.98 * running + 0.02 * l;
        log.line(s, l, 0.0, lr, elapsed_ms(t0));
        progress(cfg, 1, s, l, running);
    }
    log.flush();

    CheckpointMeta meta;
    meta.config = model.config();
    meta.stage = 1;
    meta.step = cfg.steps;
    meta.running_loss = running;
    meta.rng_state = rng.state();
    if (!cfg.out_path.empty()) save_checkpoint(cfg.out_path, model, meta);
    return meta;
}

CheckpointMeta train_stage2(Model& model, const TrainConfig& cfg,
                            const EpisodeSet& corpus,
                            const CheckpointMeta& prior) {
    cfg.validate();
    if (corpus.episodes.empty()) throw contract_error("empty training corpus");
    if (prior.stage != 1)
        throw state_error("stage 2 requires a stage-1 checkpoint, got stage " +
                          std::to_string(prior.stage));

    const auto frozen_before = model.frozen_checksum();
    const int B = cfg.batch;
    AdamW opt(model.encoder().params(), {});
    Rng rng(split_seed(cfg.seed, 0x51a6e2));
    TrainLog log(cfg.log_path);

    double running = 0.0;
    for (int s = 1; s <= cfg.steps; ++s) {
        const auto t0 = std::chrono::steady_clock::now();

        Tensor reg_sum, aux_sum;
        for (int b = 0; b < B; ++b) {
            const auto& ep = corpus.episodes[std::size_t(
                rng.uniform_int(0, std::int64_t(corpus.episodes.size()) - 1))];
            const int k_cap = std::min(cfg.k_max, int(ep.supports.size()));
            const int k = int(rng.uniform_int(0, k_cap));

            auto seq = model.encoder().tokenize(ep, k);
            auto h = model.encoder().encode(seq);
            auto state = model.encoder().project(h, seq);
            Tensor target;
            {
                NoGrad ng;
                target = model.cond().encode_mask(ep.query.mask);
            }
            auto item = regression_loss(state, target);
            auto aux = model.encoder().aux_text_loss(h, seq);
            reg_sum = (b == 0) ? item : add(reg_sum, item);
            aux_sum = (b == 0) ? aux : add(aux_sum, aux);
        }
        auto loss_reg = mul_scalar(reg_sum, 1.0f / float(B));
        auto loss_aux = mul_scalar(aux_sum, 1.0f / float(B));
        auto total = add(loss_reg, mul_scalar(loss_aux, cfg.aux_weight));

        const double l = loss_reg.item();
        const double la = loss_aux.item();
        if (!std::isfinite(l + la)) abort_non_finite(model, cfg, 2, s, running, rng);
        model.encoder().params().zero_grads();
        backward(total);
        const float lr = lr_at(cfg, s);
        opt.step(lr);

        running = (s == 1) ? l : 0.98 * running + 0.02 * l;
        log.line(s, l, la, lr, elapsed_ms(t0));
        progress(cfg, 2, s, l, running);
    }
    log.flush();

    const auto frozen_after = model.frozen_checksum();
    if (frozen_after != frozen_before)
        throw training_error("frozen parameters drifted during stage 2");

    CheckpointMeta meta;
    meta.config = model.config();
    meta.stage = 2;
    meta.step = cfg.steps;
    meta.running_loss = running;
    meta.rng_state = rng.state();
    if (!cfg.out_path.empty()) save_checkpoint(cfg.out_path, model, meta);
    return meta;
}

std::vector<std::string> extract_keywords(const std::string& instruction,
                                          const KeywordEmbedding& kw) {
    std::vector<std::string> out;
    for (const auto& word : split_words(instruction))
        if (kw.row_of(word) != kw.unk_row()) out.push_back(word);
    return out;
}

std::vector<std::uint8_t> infer(Model& model, const corpus::Episode& ep, int k,
                                int n_samples, std::uint64_t seed) {
    if (k < 0 || k > int(ep.supports.size()))
        throw contract_error("k is " + std::to_string(k) + ", episode has " +
                             std::to_string(ep.supports.size()) + " supports");
    if (n_samples < 1)
        throw contract_error("n_samples must be at least 1, got " +
                             std::to_string(n_samples));

    NoGrad ng;
    auto seq = model.encoder().tokenize(ep, k);
    auto h = model.encoder().encode(seq);
    auto state = model.encoder().project(h, seq);
    const auto keywords = extract_keywords(ep.instruction, model.decoder().keywords());

    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(n_samples));
    for (int j = 0; j < n_samples; ++j)
        seeds[std::size_t(j)] = split_seed(seed, std::uint64_t(j));
    const auto samples = model.decoder().sample_batch(keywords, state, seeds);

    const std::size_t n = samples[0].size();
    std::vector<std::uint8_t> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (const auto& s : samples) mean += s[i];
        mean /= double(n_samples);
        out[i] = mean >= 0.5 ? 1 : 0;
    }
    return out;
}

}  // namespace segicl
