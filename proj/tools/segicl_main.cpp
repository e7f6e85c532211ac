// segicl: one binary for the whole pipeline. Subcommands: gen-data renders
// the synthetic corpus, train runs stage 1 (denoiser) or stage 2 (encoder),
// eval sweeps shot counts over the test splits, infer segments a single
// image. Exit codes: 0 success, 1 runtime or data failure, 2 usage error.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "segicl/corpus.hpp"
#include "segicl/errors.hpp"
#include "segicl/eval.hpp"
#include "segicl/png.hpp"
#include "segicl/rng.hpp"
#include "segicl/threads.hpp"
#include "segicl/train.hpp"
#include "segicl/util.hpp"

namespace fs = std::filesystem;
namespace corpus = segicl::corpus;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

class WallClock {
public:
    WallClock() : start_(std::chrono::steady_clock::now()) {}
    double ms() const {
        const auto d = std::chrono::steady_clock::now() - start_;
        return std::chrono::duration<double, std::milli>(d).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

std::string quote_arg(const std::string& a) {
    if (!a.empty() && a.find_first_of(" \t'\"") == std::string::npos) return a;
    std::string q = "'";
    for (char c : a) {
        if (c == '\'') q += "'\\''";
        else q += c;
    }
    q += '\'';
    return q;
}

std::string join_command_line(int argc, char** argv) {
    std::string s;
    for (int i = 0; i < argc; ++i) {
        if (i) s += ' ';
        s += quote_arg(argv[i]);
    }
    return s;
}

// --threads beats SEGICL_THREADS beats the OpenMP runtime default.
void apply_threads(int flag) {
    if (flag >= 0) {
        segicl::set_thread_count(flag);
        return;
    }
    if (const char* env = std::getenv("SEGICL_THREADS"))
        segicl::set_thread_count(std::max(0, std::atoi(env)));
}

// Every command writes one of these next to its outputs. The effective
// config is embedded verbatim so a run is replayable from the manifest
// alone, and each hash is recomputable from the named files: config_hash is
// FNV-1a of the compact config JSON, corpus_hash folds
// "<name>:<hex(hash_dir(dir))>\n" per split in listed order, and
// checkpoint_hash hashes the checkpoint file bytes.
void write_run_manifest(const std::string& path, const std::string& cmdline,
                        const json& config, std::uint64_t corpus_hash,
                        std::uint64_t checkpoint_hash, std::uint64_t seed,
                        double wall_ms) {
    json j;
    j["command_line"] = cmdline;
    j["config"] = config;
    j["config_hash"] = segicl::hex64(segicl::fnv1a64(config.dump()));
    j["corpus_hash"] = corpus_hash ? segicl::hex64(corpus_hash) : "";
    j["checkpoint_hash"] = checkpoint_hash ? segicl::hex64(checkpoint_hash) : "";
    j["seed"] = seed;
    j["tool_version"] = kVersion;
    j["wall_time_ms"] = wall_ms;
    segicl::write_text_file(path, j.dump(2) + "\n");
}

std::uint64_t fold_dir_hash(std::uint64_t h, const std::string& name,
                            const std::string& dir) {
    return segicl::fnv1a64(name + ":" + segicl::hex64(segicl::hash_dir(dir)) + "\n", h);
}

json model_json(const segicl::ModelConfig& m) {
    return json{
        {"enc",
         {{"hidden", m.enc.hidden},
          {"layers", m.enc.layers},
          {"heads", m.enc.heads},
          {"patch", m.enc.patch},
          {"max_seq", m.enc.max_seq},
          {"state_dim", m.enc.state_dim},
          {"aux_weight", m.enc.aux_weight}}},
        {"dec",
         {{"res", m.dec.res},
          {"base", m.dec.base},
          {"temb_dim", m.dec.temb_dim},
          {"cond_tokens", m.dec.cond_tokens},
          {"token_dim", m.dec.token_dim}}},
        {"cond_hidden", m.cond_hidden},
        {"sched_steps", m.sched_steps},
        {"beta_start", m.beta_start},
        {"beta_end", m.beta_end},
        {"init_seed", m.init_seed},
    };
}

// ------------------------------------------------------------------ presets

struct TrainPreset {
    segicl::ModelConfig model;
    int steps1 = 20000;
    int steps2 = 10000;
    int batch = 16;
    int warmup = 100;
    int eval_every = 500;
    float lr = 3e-4f;
};

TrainPreset resolve_preset(const std::string& name) {
    TrainPreset p;
    if (name == "default") return p;
    if (name == "smoke") {
        auto& m = p.model;
        m.enc.hidden = 32;
        m.enc.layers = 1;
        m.enc.heads = 2;
        m.enc.patch = 8;
        m.enc.max_seq = 192;
        m.enc.state_dim = 16;
        m.dec.res = 8;
        m.dec.base = 4;
        m.dec.temb_dim = 8;
        m.dec.cond_tokens = 2;
        m.dec.token_dim = 8;
        m.cond_hidden = 64;
        p.steps1 = 200;
        p.steps2 = 200;
        p.batch = 4;
        p.warmup = 20;
        p.eval_every = 50;
        p.lr = 2e-3f;
        return p;
    }
    if (name == "acceptance") {
        auto& m = p.model;
        m.enc.hidden = 64;
        m.enc.layers = 2;
        m.enc.heads = 4;
        m.enc.patch = 4;
        m.enc.max_seq = 512;
        m.enc.state_dim = 128;
        m.dec.res = 32;
        m.dec.base = 8;
        m.dec.temb_dim = 32;
        m.dec.cond_tokens = 4;
        m.dec.token_dim = 32;
        m.cond_hidden = 256;
        p.steps1 = 4000;
        p.steps2 = 1500;
        p.batch = 8;
        p.warmup = 100;
        p.eval_every = 200;
        p.lr = 1e-3f;
        return p;
    }
    throw segicl::config_error("unknown preset: " + name);
}

// ----------------------------------------------------------------- gen-data

struct GenArgs {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_given = false;
    int threads = -1;
};

int cmd_gen_data(const GenArgs& a, const std::string& cmdline) {
    WallClock clock;
    apply_threads(a.threads);
    corpus::CorpusConfig cfg;
    if (!a.config.empty()) cfg = corpus::parse_corpus_config(a.config);
    if (a.seed_given) cfg.seed = a.seed;

    fs::create_directories(a.out);
    const std::pair<corpus::Split, int> plan[] = {
        {corpus::Split::train, cfg.train_n},
        {corpus::Split::test_id, cfg.test_id_n},
        {corpus::Split::test_ood_modality, cfg.test_ood_modality_n},
        {corpus::Split::test_ood_structure, cfg.test_ood_structure_n},
    };
    std::uint64_t corpus_hash = segicl::kFnvOffset;
    for (const auto& [split, n] : plan) {
        const std::string name = corpus::split_name(split);
        const std::string dir = (fs::path(a.out) / name).string();
        corpus::build_split(cfg, split, n, cfg.seed, dir);
        const std::uint64_t h = segicl::hash_dir(dir);
        corpus_hash = segicl::fnv1a64(name + ":" + segicl::hex64(h) + "\n", corpus_hash);
        std::printf("%s: %d episodes -> %s (hash %s)\n", name.c_str(), n,
                    dir.c_str(), segicl::hex64(h).c_str());
    }
    segicl::write_text_file((fs::path(a.out) / "corpus.cfg").string(),
                            corpus::corpus_config_text(cfg));
    const json cfg_json = {
        {"seed", cfg.seed},
        {"train_n", cfg.train_n},
        {"test_id_n", cfg.test_id_n},
        {"test_ood_modality_n", cfg.test_ood_modality_n},
        {"test_ood_structure_n", cfg.test_ood_structure_n},
        {"k_supports", cfg.k_supports},
        {"m1_flip_prob", cfg.m1_flip_prob},
        {"m3_flip_prob", cfg.m3_flip_prob},
        {"out", a.out},
    };
    write_run_manifest((fs::path(a.out) / "run_manifest.json").string(), cmdline,
                       cfg_json, corpus_hash, 0, cfg.seed, clock.ms());
    std::printf("corpus hash: %s\n", segicl::hex64(corpus_hash).c_str());
    return 0;
}

// -------------------------------------------------------------------- train

struct TrainArgs {
    int stage = 1;
    std::string corpus;
    std::string out;
    std::string log;
    std::string from_ckpt;
    std::string preset = "default";
    bool smoke = false;
    std::int64_t steps = -1;
    std::int64_t batch = -1;
    std::int64_t warmup = -1;
    std::int64_t k_max = -1;
    std::int64_t eval_every = -1;
    double lr = -1.0;
    double aux_weight = -1.0;
    std::uint64_t seed = 0;
    int threads = -1;
};

int cmd_train(const TrainArgs& a, const std::string& cmdline) {
    WallClock clock;
    apply_threads(a.threads);
    const std::string preset_name = a.smoke ? "smoke" : a.preset;
    const TrainPreset p = resolve_preset(preset_name);

    segicl::TrainConfig tc;
    tc.stage = a.stage;
    tc.steps = a.steps >= 0 ? static_cast<int>(a.steps)
                            : (a.stage == 1 ? p.steps1 : p.steps2);
    tc.batch = a.batch >= 0 ? static_cast<int>(a.batch) : p.batch;
    tc.lr = a.lr >= 0 ? static_cast<float>(a.lr) : p.lr;
    tc.warmup = a.warmup >= 0 ? static_cast<int>(a.warmup) : p.warmup;
    tc.seed = a.seed;
    tc.aux_weight = a.aux_weight >= 0 ? static_cast<float>(a.aux_weight) : 0.1f;
    tc.k_max = a.k_max >= 0 ? static_cast<int>(a.k_max) : 3;
    tc.eval_every = a.eval_every >= 0 ? static_cast<int>(a.eval_every) : p.eval_every;
    tc.out_path = a.out.empty()
                      ? (preset_name == "smoke" ? "smoke_" : std::string()) +
                            "stage" + std::to_string(a.stage) + ".ckpt"
                      : a.out;
    tc.log_path = a.log.empty()
                      ? fs::path(tc.out_path).replace_extension(".csv").string()
                      : a.log;

    std::string corpus_dir = a.corpus;
    if (corpus_dir.empty()) {
        if (preset_name == "smoke") {
            // Self-contained smoke run: render a small train split in place.
            corpus_dir = tc.out_path + ".data";
            corpus::CorpusConfig cc;
            cc.seed = segicl::split_seed(tc.seed, 0xDA7A);
            std::error_code ec;
            fs::remove_all(corpus_dir, ec);
            corpus::build_split(cc, corpus::Split::train, 64, cc.seed, corpus_dir);
        } else {
            corpus_dir = "data/train";
        }
    }
    tc.corpus_dir = corpus_dir;
    {
        std::error_code ec;
        fs::remove(tc.log_path, ec);  // fresh log so reruns are byte-identical
    }

    const segicl::EpisodeSet set = segicl::load_episodes(tc.corpus_dir);

    std::unique_ptr<segicl::Model> model;
    segicl::ModelConfig mc;
    segicl::CheckpointMeta meta;
    if (a.stage == 1) {
        mc = p.model;
        mc.init_seed = tc.seed;
        model = std::make_unique<segicl::Model>(mc);
        meta = segicl::train_stage1(*model, tc, set);
    } else {
        if (a.from_ckpt.empty())
            throw segicl::config_error("train --stage 2 requires --from-ckpt");
        segicl::CheckpointMeta prior;
        model = segicl::load_checkpoint(a.from_ckpt, &prior);
        mc = prior.config;
        meta = segicl::train_stage2(*model, tc, set, prior);
    }

    const std::uint64_t ckpt_hash = segicl::hash_file(tc.out_path);
    const std::uint64_t corpus_hash =
        fold_dir_hash(segicl::kFnvOffset, "train", tc.corpus_dir);
    const json cfg_json = {
        {"stage", tc.stage},
        {"preset", preset_name},
        {"steps", tc.steps},
        {"batch", tc.batch},
        {"lr", tc.lr},
        {"warmup", tc.warmup},
        {"aux_weight", tc.aux_weight},
        {"k_max", tc.k_max},
        {"eval_every", tc.eval_every},
        {"corpus_dir", tc.corpus_dir},
        {"out_path", tc.out_path},
        {"log_path", tc.log_path},
        {"from_ckpt", a.from_ckpt},
        {"model", model_json(mc)},
    };
    write_run_manifest(tc.out_path + ".manifest.json", cmdline, cfg_json,
                       corpus_hash, ckpt_hash, tc.seed, clock.ms());
    std::printf("stage %d finished: step %lld, running loss %.6f\n", meta.stage,
                static_cast<long long>(meta.step), meta.running_loss);
    std::printf("checkpoint: %s (hash %s)\n", tc.out_path.c_str(),
                segicl::hex64(ckpt_hash).c_str());
    std::printf("log: %s\n", tc.log_path.c_str());
    return 0;
}

// --------------------------------------------------------------------- eval

struct EvalArgs {
    std::string ckpt;
    std::string stub;
    std::string data = "data";
    std::string out = "reports";
    std::string ks = "0,1,3";
    std::int64_t episodes = 0;
    int samples = 5;
    std::uint64_t seed = 0;
    int threads = -1;
};

std::vector<int> parse_ks(const std::string& s) {
    std::vector<int> ks;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            ks.push_back(v);
        } catch (const std::exception&) {
            throw segicl::config_error("--ks entry is not an integer: '" + item + "'");
        }
    }
    if (ks.empty()) throw segicl::config_error("--ks needs at least one shot count");
    return ks;
}

int cmd_eval(const EvalArgs& a, const std::string& cmdline) {
    WallClock clock;
    apply_threads(a.threads);
    if (a.ckpt.empty() == a.stub.empty())
        throw segicl::config_error("eval needs exactly one of --ckpt or --stub");

    segicl::eval::SweepConfig cfg;
    cfg.ks = parse_ks(a.ks);
    cfg.max_episodes = static_cast<int>(a.episodes);
    cfg.seed = a.seed;

    segicl::eval::Predictor pred;
    std::unique_ptr<segicl::Model> model;
    std::uint64_t ckpt_hash = 0;
    if (!a.stub.empty()) {
        pred = a.stub == "oracle" ? segicl::eval::oracle_predictor()
                                  : segicl::eval::empty_predictor();
        cfg.checkpoint_id = "stub:" + a.stub;
    } else {
        ckpt_hash = segicl::hash_file(a.ckpt);
        model = segicl::load_checkpoint(a.ckpt);
        pred = segicl::eval::model_predictor(*model, a.samples);
        cfg.checkpoint_id = segicl::hex64(ckpt_hash);
    }

    const std::vector<std::pair<std::string, std::string>> split_dirs = {
        {"in_dist", (fs::path(a.data) / "test_id").string()},
        {"ood_modality", (fs::path(a.data) / "test_ood_modality").string()},
        {"ood_structure", (fs::path(a.data) / "test_ood_structure").string()},
    };
    std::vector<segicl::EpisodeSet> sets;
    sets.reserve(split_dirs.size());
    for (const auto& [name, dir] : split_dirs) sets.push_back(segicl::load_episodes(dir));
    std::vector<std::pair<std::string, const segicl::EpisodeSet*>> named;
    named.reserve(sets.size());
    for (std::size_t i = 0; i < sets.size(); ++i)
        named.emplace_back(split_dirs[i].first, &sets[i]);

    const auto reports = segicl::eval::compare_splits(pred, named, cfg);

    fs::create_directories(a.out);
    const std::string csv = segicl::eval::report_csv(reports);
    segicl::write_text_file((fs::path(a.out) / "summary.csv").string(), csv);
    segicl::write_text_file((fs::path(a.out) / "report.jsonl").string(),
                            segicl::eval::report_jsonl(reports));
    segicl::write_text_file((fs::path(a.out) / "plot.csv").string(),
                            segicl::eval::plot_csv(reports));

    std::fputs(csv.c_str(), stdout);
    for (const auto& r : reports) {
        if (r.ratio_defined)
            std::printf("ratio(3/0) %s: %.6f\n", r.split.c_str(), r.ratio_3_over_0);
        else
            std::printf("ratio(3/0) %s: undefined\n", r.split.c_str());
    }

    std::uint64_t corpus_hash = segicl::kFnvOffset;
    for (const auto& [name, dir] : split_dirs)
        corpus_hash = fold_dir_hash(corpus_hash, name, dir);
    const json cfg_json = {
        {"data", a.data},    {"ckpt", a.ckpt},
        {"stub", a.stub},    {"ks", cfg.ks},
        {"episodes", cfg.max_episodes}, {"samples", a.samples},
        {"out", a.out},
    };
    write_run_manifest((fs::path(a.out) / "run_manifest.json").string(), cmdline,
                       cfg_json, corpus_hash, ckpt_hash, a.seed, clock.ms());
    std::printf("reports: %s\n", a.out.c_str());
    return 0;
}

// -------------------------------------------------------------------- infer

struct InferArgs {
    std::string ckpt;
    std::string image;
    std::string text;
    std::string out = "mask.png";
    std::vector<std::string> examples;
    int samples = 5;
    std::uint64_t seed = 0;
    int threads = -1;
};

int cmd_infer(const InferArgs& a, const std::string& cmdline) {
    WallClock clock;
    apply_threads(a.threads);
    if (a.examples.size() > 3)
        throw segicl::config_error("at most 3 --example pairs are supported, got " +
                                   std::to_string(a.examples.size()));
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& e : a.examples) {
        const auto comma = e.find(',');
        if (comma == std::string::npos || comma == 0 || comma + 1 == e.size())
            throw segicl::config_error("--example wants 'image.png,mask.png', got '" + e + "'");
        pairs.emplace_back(e.substr(0, comma), e.substr(comma + 1));
    }
    std::vector<std::string> inputs = {a.image};
    for (const auto& [img, msk] : pairs) {
        inputs.push_back(img);
        inputs.push_back(msk);
    }
    for (const auto& path : inputs)
        if (!fs::is_regular_file(path))
            throw segicl::config_error("cannot read input file: " + path);

    const auto expect_px = static_cast<std::size_t>(corpus::kRes) * corpus::kRes;
    const auto load_image = [&](const std::string& path) {
        const auto img = segicl::png::read_gray8(path);
        if (img.w != corpus::kRes || img.h != corpus::kRes)
            throw segicl::config_error(
                "image must be " + std::to_string(corpus::kRes) + "x" +
                std::to_string(corpus::kRes) + ", got " + std::to_string(img.w) +
                "x" + std::to_string(img.h) + ": " + path);
        return img.px;
    };

    corpus::Episode ep;
    ep.instruction = a.text;
    ep.query.image = load_image(a.image);
    ep.query.mask.assign(expect_px, 0);
    for (const auto& [img_path, mask_path] : pairs) {
        corpus::Sample s;
        s.image = load_image(img_path);
        s.mask = corpus::load_binary_mask(mask_path);
        if (s.mask.size() != expect_px)
            throw segicl::config_error("mask must be " + std::to_string(corpus::kRes) +
                                       "x" + std::to_string(corpus::kRes) + ": " +
                                       mask_path);
        ep.supports.push_back(std::move(s));
    }

    const std::uint64_t ckpt_hash = segicl::hash_file(a.ckpt);
    const auto model = segicl::load_checkpoint(a.ckpt);
    const auto mask = segicl::infer(*model, ep, static_cast<int>(pairs.size()),
                                    a.samples, a.seed);

    const int res = model->config().dec.res;
    std::vector<std::uint8_t> out_px(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) out_px[i] = mask[i] ? 255 : 0;
    segicl::png::write_gray8(a.out, out_px.data(), res, res);

    const auto fg = std::count(mask.begin(), mask.end(), std::uint8_t{1});
    std::printf("foreground pixels: %lld\n", static_cast<long long>(fg));
    std::printf("mask: %s (hash %s)\n", a.out.c_str(),
                segicl::hex64(segicl::hash_file(a.out)).c_str());

    const json cfg_json = {
        {"ckpt", a.ckpt},   {"image", a.image},     {"text", a.text},
        {"examples", a.examples}, {"samples", a.samples}, {"out", a.out},
    };
    write_run_manifest(a.out + ".manifest.json", cmdline, cfg_json, 0, ckpt_hash,
                       a.seed, clock.ms());
    return 0;
}

int usage_fail(const std::string& msg) {
    std::cerr << "usage error: " << msg << "\n";
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic in-context segmentation: data, training, evaluation, inference"};
    app.set_version_flag("--version", std::string("segicl ") + kVersion);
    app.require_subcommand(1);

    GenArgs g;
    TrainArgs t;
    EvalArgs e;
    InferArgs f;

    auto* gen = app.add_subcommand("gen-data", "render the four corpus splits");
    gen->add_option("--out", g.out, "output directory")->required();
    gen->add_option("--config", g.config, "corpus config file (key=value lines)");
    auto* gseed = gen->add_option("--seed", g.seed, "corpus seed (overrides the config file)");
    gen->add_option("--threads", g.threads, "cap worker threads");

    auto* tr = app.add_subcommand("train", "train stage 1 (denoiser) or stage 2 (encoder)");
    tr->add_option("--stage", t.stage, "1: conditional denoiser, 2: in-context encoder")
        ->required()
        ->check(CLI::IsMember({1, 2}));
    tr->add_option("--corpus", t.corpus,
                   "train split directory (default data/train; --smoke renders its own)");
    tr->add_option("--out", t.out, "checkpoint path (default stage<N>.ckpt)");
    tr->add_option("--log", t.log, "training CSV path (default <out stem>.csv)");
    tr->add_option("--from-ckpt", t.from_ckpt, "stage-1 checkpoint to start stage 2 from");
    tr->add_option("--preset", t.preset, "model and schedule size preset")
        ->check(CLI::IsMember({"default", "acceptance", "smoke"}));
    tr->add_flag("--smoke", t.smoke, "tiny fast run (same as --preset smoke)");
    tr->add_option("--steps", t.steps, "optimizer steps");
    tr->add_option("--batch", t.batch, "episodes per step");
    tr->add_option("--lr", t.lr, "peak learning rate");
    tr->add_option("--warmup", t.warmup, "linear warmup steps");
    tr->add_option("--seed", t.seed, "training seed (also seeds fresh stage-1 weights)");
    tr->add_option("--aux-weight", t.aux_weight, "stage-2 language loss weight");
    tr->add_option("--k-max", t.k_max, "stage-2 max in-context shots");
    tr->add_option("--eval-every", t.eval_every, "progress report period");
    tr->add_option("--threads", t.threads, "cap worker threads");

    auto* ev = app.add_subcommand("eval", "episodic Dice sweep over the test splits");
    ev->add_option("--ckpt", e.ckpt, "checkpoint to evaluate");
    ev->add_option("--stub", e.stub, "harness self-test predictor instead of a model")
        ->check(CLI::IsMember({"oracle", "empty"}));
    ev->add_option("--data", e.data, "corpus root holding the test_* splits");
    ev->add_option("--episodes", e.episodes, "episodes per split (0 = all)");
    ev->add_option("--ks", e.ks, "comma-separated shot counts");
    ev->add_option("--samples", e.samples, "diffusion samples averaged per prediction");
    ev->add_option("--seed", e.seed, "evaluation seed");
    ev->add_option("--out", e.out, "report directory");
    ev->add_option("--threads", e.threads, "cap worker threads");

    auto* in = app.add_subcommand("infer", "segment one image with up to 3 in-context examples");
    in->add_option("--ckpt", f.ckpt, "checkpoint")->required();
    in->add_option("--image", f.image, "query image PNG (grayscale)")->required();
    in->add_option("--text", f.text, "instruction text")->required();
    in->add_option("--example", f.examples,
                   "support pair as image.png,mask.png (repeatable, up to 3)");
    in->add_option("--out", f.out, "output mask PNG");
    in->add_option("--samples", f.samples, "diffusion samples to average");
    in->add_option("--seed", f.seed, "sampling seed");
    in->add_option("--threads", f.threads, "cap worker threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& ex) {
        const int code = app.exit(ex);
        return code == 0 ? 0 : 2;
    }
    g.seed_given = gseed->count() > 0;

    const std::string cmdline = join_command_line(argc, argv);
    try {
        if (gen->parsed()) return cmd_gen_data(g, cmdline);
        if (tr->parsed()) return cmd_train(t, cmdline);
        if (ev->parsed()) return cmd_eval(e, cmdline);
        if (in->parsed()) return cmd_infer(f, cmdline);
    } catch (const segicl::config_error& ex) {
        return usage_fail(ex.what());
    } catch (const segicl::vocab_error& ex) {
        return usage_fail(ex.what());
    } catch (const segicl::contract_error& ex) {
        return usage_fail(ex.what());
    } catch (const segicl::capacity_error& ex) {
        return usage_fail(ex.what());
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 2;
}
