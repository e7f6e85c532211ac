#include "segicl/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "segicl/errors.hpp"
#include "segicl/png.hpp"
#include "segicl/rng.hpp"
#include "segicl/util.hpp"

namespace segicl::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

std::string modality_name(Modality m) {
    switch (m) {
        case Modality::M0_flat: return "M0_flat";
        case Modality::M1_textured: return "M1_textured";
        case Modality::M2_inverted: return "M2_inverted";
        case Modality::M3_speckle: return "M3_speckle";
    }
    throw config_error("modality_name: bad id");
}

std::string structure_name(Structure s) {
    switch (s) {
        case Structure::disc: return "disc";
        case Structure::ring: return "ring";
        case Structure::blob_pair: return "blob_pair";
        case Structure::wedge: return "wedge";
    }
    throw config_error("structure_name: bad id");
}

Modality modality_from_name(const std::string& s) {
    if (s == "M0_flat") return Modality::M0_flat;
    if (s == "M1_textured") return Modality::M1_textured;
    if (s == "M2_inverted") return Modality::M2_inverted;
    if (s == "M3_speckle") return Modality::M3_speckle;
    throw config_error("unknown modality: " + s);
}

Structure structure_from_name(const std::string& s) {
    if (s == "disc") return Structure::disc;
    if (s == "ring") return Structure::ring;
    if (s == "blob_pair") return Structure::blob_pair;
    if (s == "wedge") return Structure::wedge;
    throw config_error("unknown structure: " + s);
}

std::string modality_word(Modality m) {
    switch (m) {
        case Modality::M0_flat: return "flat";
        case Modality::M1_textured: return "textured";
        case Modality::M2_inverted: return "inverted";
        case Modality::M3_speckle: return "speckle";
    }
    throw config_error("modality_word: bad id");
}

std::string structure_word(Structure s) {
    switch (s) {
        case Structure::disc: return "disc";
        case Structure::ring: return "ring";
        case Structure::blob_pair: return "blobs";
        case Structure::wedge: return "wedge";
    }
    throw config_error("structure_word: bad id");
}

std::string split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::test_id: return "test_id";
        case Split::test_ood_modality: return "test_ood_modality";
        case Split::test_ood_structure: return "test_ood_structure";
    }
    throw config_error("split_name: bad id");
}

Split split_from_name(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test_id") return Split::test_id;
    if (s == "test_ood_modality") return Split::test_ood_modality;
    if (s == "test_ood_structure") return Split::test_ood_structure;
    throw config_error("unknown split: " + s);
}

namespace {

struct RenderParams {
    double bg_lo, bg_hi;    // background base intensity range
    double gap_lo, gap_hi;  // |foreground - background| offset range
    double sign;            // +1 foreground brighter, -1 darker
    double texture_amp;     // low-frequency texture amplitude
    double gauss_sigma;
    double speckle_prob;    // per-pixel multiplicative speckle density
};

RenderParams params_for(Modality m) {
    switch (m) {
        case Modality::M0_flat:
            return {0.15, 0.35, 0.25, 0.45, +1.0, 0.0, 0.03, 0.0};
        case Modality::M1_textured:
            return {0.25, 0.45, 0.25, 0.45, +1.0, 0.08, 0.05, 0.0};
        case Modality::M2_inverted:
            return {0.65, 0.85, 0.25, 0.50, -1.0, 0.0, 0.03, 0.0};
        case Modality::M3_speckle:
            return {0.35, 0.55, 0.22, 0.40, +1.0, 0.0, 0.04, 0.08};
    }
    throw config_error("params_for: bad modality");
}

double flip_prob(Modality m, const CorpusConfig& cfg) {
    if (m == Modality::M1_textured) return cfg.m1_flip_prob;
    if (m == Modality::M3_speckle) return cfg.m3_flip_prob;
    return 0.0;
}

constexpr double kPi = 3.14159265358979323846;

std::vector<std::uint8_t> sample_mask(Structure s, Rng& rng) {
    std::vector<std::uint8_t> mask(kRes * kRes, 0);
    auto set_disc = [&mask](double cx, double cy, double r_out, double r_in) {
        for (int y = 0; y < kRes; ++y)
            for (int x = 0; x < kRes; ++x) {
                const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                if (d2 <= r_out * r_out && d2 >= r_in * r_in)
                    mask[static_cast<std::size_t>(y * kRes + x)] = 1;
            }
    };
    switch (s) {
        case Structure::disc: {
            const double cx = rng.uniform(10, 22), cy = rng.uniform(10, 22);
            set_disc(cx, cy, rng.uniform(4.0, 9.0), 0.0);
            break;
        }
        case Structure::ring: {
            const double cx = rng.uniform(10, 22), cy = rng.uniform(10, 22);
            const double r = rng.uniform(5.5, 10.0);
            set_disc(cx, cy, r, r * rng.uniform(0.45, 0.65));
            break;
        }
        case Structure::blob_pair: {
            const double r1 = rng.uniform(3.0, 5.5), r2 = rng.uniform(3.0, 5.5);
            const double x1 = rng.uniform(r1 + 1, kRes - r1 - 1);
            const double y1 = rng.uniform(r1 + 1, kRes - r1 - 1);
            const double x2 = rng.uniform(r2 + 1, kRes - r2 - 1);
            const double y2 = rng.uniform(r2 + 1, kRes - r2 - 1);
            const double dist = std::hypot(x2 - x1, y2 - y1);
            if (dist < r1 + r2 + 2.0) return {};  // overlapping draw, reject
            set_disc(x1, y1, r1, 0.0);
            set_disc(x2, y2, r2, 0.0);
            break;
        }
        case Structure::wedge: {
            const double cx = rng.uniform(12, 20), cy = rng.uniform(12, 20);
            const double r = rng.uniform(7.0, 12.0);
            const double span = rng.uniform(60.0, 140.0) * kPi / 180.0;
            const double start = rng.uniform(0.0, 2.0 * kPi);
            for (int y = 0; y < kRes; ++y)
                for (int x = 0; x < kRes; ++x) {
                    const double dx = x - cx, dy = y - cy;
                    if (dx * dx + dy * dy > r * r) continue;
                    double a = std::atan2(dy, dx) - start;
                    a -= 2.0 * kPi * std::floor(a / (2.0 * kPi));
                    if (a <= span) mask[static_cast<std::size_t>(y * kRes + x)] = 1;
                }
            break;
        }
    }
    return mask;
}

Sample render_with(Modality m, Structure s, bool flip, std::uint64_t seed,
                   const CorpusConfig&) {
    const RenderParams p = params_for(m);
    Rng rng(seed);
    for (int attempt = 0; attempt < 100; ++attempt) {
        auto mask = sample_mask(s, rng);
        if (mask.empty()) continue;
        const long area = std::count(mask.begin(), mask.end(), std::uint8_t(1));
        const double frac = static_cast<double>(area) / (kRes * kRes);
        if (frac < 0.01 || frac > 0.60) continue;

        const double bg = rng.uniform(p.bg_lo, p.bg_hi);
        const double gap = rng.uniform(p.gap_lo, p.gap_hi);
        const double sign = p.sign * (flip ? -1.0 : 1.0);
        const double fg = std::clamp(bg + sign * gap, 0.05, 0.95);

        double ax = 0, ay = 0, bx = 0, by = 0;
        if (p.texture_amp > 0) {
            ax = rng.uniform(0.2, 0.7);
            ay = rng.uniform(0.2, 0.7);
            bx = rng.uniform(0.0, 2.0 * kPi);
            by = rng.uniform(0.0, 2.0 * kPi);
        }

        std::vector<double> img(kRes * kRes);
        double fg_sum = 0, bg_sum = 0;
        for (int y = 0; y < kRes; ++y)
            for (int x = 0; x < kRes; ++x) {
                const std::size_t i = static_cast<std::size_t>(y * kRes + x);
                double v = mask[i] ? fg : bg;
                if (p.texture_amp > 0)
                    v += p.texture_amp * std::sin(ax * x + bx) * std::sin(ay * y + by);
                img[i] = v;
                (mask[i] ? fg_sum : bg_sum) += v;
            }
        const double fg_mean = fg_sum / static_cast<double>(area);
        const double bg_mean = bg_sum / static_cast<double>(kRes * kRes - area);
        if (std::abs(fg_mean - bg_mean) < 0.15) continue;  // structure not visible

        for (auto& v : img) v += rng.normal() * p.gauss_sigma;
        if (p.speckle_prob > 0)
            for (auto& v : img)
                if (rng.uniform() < p.speckle_prob) v *= rng.uniform(0.5, 1.5);

        Sample out;
        out.mask = std::move(mask);
        out.image.resize(img.size());
        for (std::size_t i = 0; i < img.size(); ++i)
            out.image[i] = static_cast<std::uint8_t>(
                std::lround(std::clamp(img[i], 0.0, 1.0) * 255.0));
        return out;
    }
    throw generation_error("render_sample: no valid sample after 100 attempts for " +
                           modality_name(m) + "/" + structure_name(s));
}

struct Pools {
    std::vector<Modality> modalities;
    std::vector<Structure> structures;
};

// Training never sees M3_speckle or ring; each OOD split isolates one axis.
Pools pools_for(Split split) {
    const std::vector<Modality> in_dist{Modality::M0_flat, Modality::M1_textured,
                                        Modality::M2_inverted};
    const std::vector<Structure> in_struct{Structure::disc, Structure::blob_pair,
                                           Structure::wedge};
    switch (split) {
        case Split::train:
        case Split::test_id:
            return {in_dist, in_struct};
        case Split::test_ood_modality:
            return {{Modality::M3_speckle}, in_struct};
        case Split::test_ood_structure:
            return {in_dist, {Structure::ring}};
    }
    throw config_error("pools_for: bad split");
}

}  // namespace

Sample render_sample(Modality m, Structure s, std::uint64_t seed,
                     const CorpusConfig& cfg) {
    Rng r(seed);
    const bool flip = r.uniform() < flip_prob(m, cfg);
    return render_with(m, s, flip, split_seed(seed, 0x5eed), cfg);
}

Sample render_sample(Modality m, Structure s, std::uint64_t seed) {
    return render_sample(m, s, seed, CorpusConfig{});
}

std::string make_instruction(Structure s, Modality m) {
    return "segment the " + structure_word(s) + " in this " + modality_word(m) +
           " image";
}

CorpusConfig parse_corpus_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot open " + path);
    CorpusConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto words = split_words(line);
        if (words.empty()) continue;
        std::string joined;
        for (const auto& w : words) joined += w;
        const auto eq = joined.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 >= joined.size())
            throw config_error("config: expected key=value at " + path + ":" +
                               std::to_string(lineno));
        const std::string key = joined.substr(0, eq);
        const std::string val = joined.substr(eq + 1);
        try {
            if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "train_n") cfg.train_n = std::stoi(val);
            else if (key == "test_id_n") cfg.test_id_n = std::stoi(val);
            else if (key == "test_ood_modality_n") cfg.test_ood_modality_n = std::stoi(val);
            else if (key == "test_ood_structure_n") cfg.test_ood_structure_n = std::stoi(val);
            else if (key == "k_supports") cfg.k_supports = std::stoi(val);
            else if (key == "m1_flip_prob") cfg.m1_flip_prob = std::stod(val);
            else if (key == "m3_flip_prob") cfg.m3_flip_prob = std::stod(val);
            else throw config_error("config: unknown key '" + key + "' in " + path);
        } catch (const config_error&) {
            throw;
        } catch (const std::exception&) {
            throw config_error("config: bad value for '" + key + "' in " + path);
        }
    }
    if (cfg.train_n < 1 || cfg.test_id_n < 1 || cfg.test_ood_modality_n < 1 ||
        cfg.test_ood_structure_n < 1)
        throw config_error("config: split sizes must be >= 1");
    if (cfg.k_supports < 3 || cfg.k_supports > 8)
        throw config_error("config: k_supports must be in [3, 8]");
    if (cfg.m1_flip_prob < 0 || cfg.m1_flip_prob > 1 || cfg.m3_flip_prob < 0 ||
        cfg.m3_flip_prob > 1)
        throw config_error("config: flip probabilities must be in [0, 1]");
    return cfg;
}

std::string corpus_config_text(const CorpusConfig& cfg) {
    std::ostringstream os;
    os << "# synthetic corpus generator settings\n"
       << "seed = " << cfg.seed << "            # master seed; determines every byte\n"
       << "train_n = " << cfg.train_n << "\n"
       << "test_id_n = " << cfg.test_id_n << "\n"
       << "test_ood_modality_n = " << cfg.test_ood_modality_n << "\n"
       << "test_ood_structure_n = " << cfg.test_ood_structure_n << "\n"
       << "k_supports = " << cfg.k_supports << "       # support pairs stored per episode\n"
       << "m1_flip_prob = " << cfg.m1_flip_prob
       << "   # chance a textured episode flips contrast polarity\n"
       << "m3_flip_prob = " << cfg.m3_flip_prob
       << "   # chance a speckle episode flips contrast polarity\n";
    return os.str();
}

CorpusManifest build_split(const CorpusConfig& cfg, Split split, int n,
                           std::uint64_t seed, const std::string& out_dir) {
    if (n < 1) throw config_error("build_split: n must be >= 1");
    const Pools pools = pools_for(split);
    const int k = cfg.k_supports;

    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "images", ec);
    fs::create_directories(fs::path(out_dir) / "masks", ec);
    if (ec) throw io_error("build_split: cannot create " + out_dir);

    CorpusManifest manifest;
    manifest.format_version = 1;
    manifest.split = split_name(split);
    manifest.root_dir = out_dir;
    manifest.episodes.resize(static_cast<std::size_t>(n));

    const std::uint64_t split_salt =
        split_seed(seed, static_cast<std::uint64_t>(split) + 101);

    // Episodes are independent: seeds are pre-split and files never collide.
    std::string first_error;
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
        try {
            const std::uint64_t ep_seed = split_seed(split_salt, static_cast<std::uint64_t>(i));
            Rng er(ep_seed);
            const auto modality = pools.modalities[static_cast<std::size_t>(
                er.uniform_int(0, static_cast<std::int64_t>(pools.modalities.size()) - 1))];
            const auto structure = pools.structures[static_cast<std::size_t>(
                er.uniform_int(0, static_cast<std::int64_t>(pools.structures.size()) - 1))];
            const bool flip = er.uniform() < flip_prob(modality, cfg);

            EpisodeRecord rec;
            rec.index = i;
            rec.modality = modality;
            rec.structure = structure;
            rec.seed = ep_seed;
            rec.instruction = make_instruction(structure, modality);

            char tag[32];
            for (int j = 0; j <= k; ++j) {
                const auto sample = render_with(modality, structure, flip,
                                                split_seed(ep_seed, static_cast<std::uint64_t>(j) + 1),
                                                cfg);
                if (j < k) std::snprintf(tag, sizeof(tag), "ep%06d_s%d.png", i, j);
                else std::snprintf(tag, sizeof(tag), "ep%06d_q.png", i);
                const std::string img_rel = std::string("images/") + tag;
                const std::string mask_rel = std::string("masks/") + tag;
                png::write_gray8((fs::path(out_dir) / img_rel).string(),
                                 sample.image.data(), kRes, kRes);
                std::vector<std::uint8_t> mask255(sample.mask.size());
                for (std::size_t p = 0; p < mask255.size(); ++p)
                    mask255[p] = sample.mask[p] ? 255 : 0;
                png::write_gray8((fs::path(out_dir) / mask_rel).string(), mask255.data(),
                                 kRes, kRes);
                rec.images.push_back(img_rel);
                rec.masks.push_back(mask_rel);
            }
            manifest.episodes[static_cast<std::size_t>(i)] = std::move(rec);
        } catch (const std::exception& e) {
#pragma omp critical
            if (first_error.empty()) first_error = e.what();
        }
    }
    if (!first_error.empty()) throw io_error("build_split: " + first_error);

    std::ostringstream os;
    json header;
    header["count"] = n;
    header["format_version"] = manifest.format_version;
    header["split"] = manifest.split;
    os << header.dump() << "\n";
    for (const auto& rec : manifest.episodes) {
        json j;
        j["index"] = rec.index;
        j["modality"] = modality_name(rec.modality);
        j["structure"] = structure_name(rec.structure);
        j["seed"] = rec.seed;
        j["images"] = rec.images;
        j["masks"] = rec.masks;
        j["instruction"] = rec.instruction;
        os << j.dump() << "\n";
    }
    write_text_file((fs::path(out_dir) / "manifest.jsonl").string(), os.str());
    return manifest;
}

CorpusManifest load_manifest(const std::string& dir) {
    const std::string path = (fs::path(dir) / "manifest.jsonl").string();
    std::ifstream in(path);
    if (!in) throw io_error("load_manifest: cannot open " + path);

    CorpusManifest manifest;
    manifest.root_dir = dir;
    std::string line;
    if (!std::getline(in, line)) throw io_error("load_manifest: empty " + path);
    try {
        const json header = json::parse(line);
        manifest.format_version = header.at("format_version").get<int>();
        manifest.split = header.at("split").get<std::string>();
        const int count = header.at("count").get<int>();

        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const json j = json::parse(line);
            EpisodeRecord rec;
            rec.index = j.at("index").get<int>();
            rec.modality = modality_from_name(j.at("modality").get<std::string>());
            rec.structure = structure_from_name(j.at("structure").get<std::string>());
            rec.seed = j.at("seed").get<std::uint64_t>();
            rec.images = j.at("images").get<std::vector<std::string>>();
            rec.masks = j.at("masks").get<std::vector<std::string>>();
            rec.instruction = j.at("instruction").get<std::string>();
            manifest.episodes.push_back(std::move(rec));
        }
        if (static_cast<int>(manifest.episodes.size()) != count)
            throw io_error("load_manifest: header count " + std::to_string(count) +
                           " != " + std::to_string(manifest.episodes.size()) +
                           " records in " + path);
    } catch (const json::exception& e) {
        throw io_error("load_manifest: bad json in " + path + ": " + e.what());
    }

    for (const auto& rec : manifest.episodes)
        for (const auto& rel : {rec.images, rec.masks})
            for (const auto& f : rel)
                if (!fs::exists(fs::path(dir) / f))
                    throw io_error("load_manifest: missing file " +
                                   (fs::path(dir) / f).string());
    return manifest;
}

std::vector<std::uint8_t> load_binary_mask(const std::string& path) {
    const auto img = png::read_gray8(path);
    std::vector<std::uint8_t> mask(img.px.size());
    for (std::size_t i = 0; i < img.px.size(); ++i) {
        if (img.px[i] == 0) mask[i] = 0;
        else if (img.px[i] == 255) mask[i] = 1;
        else throw io_error("mask not binary {0,255}: " + path);
    }
    return mask;
}

Episode load_episode(const CorpusManifest& manifest, int index) {
    if (index < 0 || index >= static_cast<int>(manifest.episodes.size()))
        throw contract_error("load_episode: index " + std::to_string(index) +
                             " out of range [0, " +
                             std::to_string(manifest.episodes.size()) + ")");
    const auto& rec = manifest.episodes[static_cast<std::size_t>(index)];
    Episode ep;
    ep.modality = rec.modality;
    ep.structure = rec.structure;
    ep.seed = rec.seed;
    ep.instruction = rec.instruction;

    const int total = static_cast<int>(rec.images.size());
    for (int j = 0; j < total; ++j) {
        const auto img_path = (fs::path(manifest.root_dir) / rec.images[static_cast<std::size_t>(j)]).string();
        const auto mask_path = (fs::path(manifest.root_dir) / rec.masks[static_cast<std::size_t>(j)]).string();
        Sample s;
        const auto img = png::read_gray8(img_path);
        if (img.w != kRes || img.h != kRes)
            throw io_error("load_episode: bad dimensions in " + img_path);
        s.image = img.px;
        s.mask = load_binary_mask(mask_path);
        if (j + 1 == total) ep.query = std::move(s);
        else ep.supports.push_back(std::move(s));
    }
    return ep;
}

std::vector<std::uint8_t> threshold_baseline(const std::vector<std::uint8_t>& image,
                                             bool bright_foreground) {
    const auto [mn, mx] = std::minmax_element(image.begin(), image.end());
    const int thr = (static_cast<int>(*mn) + static_cast<int>(*mx)) / 2;
    std::vector<std::uint8_t> mask(image.size());
    for (std::size_t i = 0; i < image.size(); ++i)
        mask[i] = bright_foreground ? (image[i] > thr) : (image[i] < thr);
    return mask;
}

std::vector<float> image_to_float(const std::vector<std::uint8_t>& image) {
    std::vector<float> out(image.size());
    for (std::size_t i = 0; i < image.size(); ++i)
        out[i] = static_cast<float>(image[i]) / 255.0f;
    return out;
}

std::vector<float> mask_to_float(const std::vector<std::uint8_t>& mask) {
    std::vector<float> out(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i)
        out[i] = mask[i] ? 1.0f : 0.0f;
    return out;
}

}  // namespace segicl::corpus
