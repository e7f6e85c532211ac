#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "segicl/errors.hpp"
#include "segicl/train.hpp"
#include "segicl/util.hpp"

namespace segicl {

using nlohmann::json;

namespace {

constexpr char kMagic[] = "SGICL1\n";
constexpr std::size_t kMagicLen = 7;

json enc_to_json(const EncoderConfig& c) {
    return json{{"hidden", c.hidden},     {"layers", c.layers},
                {"heads", c.heads},       {"patch", c.patch},
                {"max_seq", c.max_seq},   {"state_dim", c.state_dim},
                {"aux_weight", c.aux_weight}};
}

EncoderConfig enc_from_json(const json& j) {
    EncoderConfig c;
    c.hidden = j.at("hidden").get<int>();
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.patch = j.at("patch").get<int>();
    c.max_seq = j.at("max_seq").get<int>();
    c.state_dim = j.at("state_dim").get<int>();
    c.aux_weight = j.at("aux_weight").get<float>();
    return c;
}

json dec_to_json(const DenoiserConfig& c) {
    return json{{"res", c.res},
                {"base", c.base},
                {"temb_dim", c.temb_dim},
                {"cond_tokens", c.cond_tokens},
                {"token_dim", c.token_dim}};
}

DenoiserConfig dec_from_json(const json& j) {
    DenoiserConfig c;
    c.res = j.at("res").get<int>();
    c.base = j.at("base").get<int>();
    c.temb_dim = j.at("temb_dim").get<int>();
    c.cond_tokens = j.at("cond_tokens").get<int>();
    c.token_dim = j.at("token_dim").get<int>();
    return c;
}

json config_to_json(const ModelConfig& c) {
    return json{{"encoder", enc_to_json(c.enc)},
                {"denoiser", dec_to_json(c.dec)},
                {"cond_hidden", c.cond_hidden},
                {"sched_steps", c.sched_steps},
                {"beta_start", c.beta_start},
                {"beta_end", c.beta_end},
                {"init_seed", c.init_seed}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.enc = enc_from_json(j.at("encoder"));
    c.dec = dec_from_json(j.at("denoiser"));
    c.cond_hidden = j.at("cond_hidden").get<int>();
    c.sched_steps = j.at("sched_steps").get<int>();
    c.beta_start = j.at("beta_start").get<double>();
    c.beta_end = j.at("beta_end").get<double>();
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
    return c;
}

void write_u64_le(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64_le(std::istream& in, const std::string& path) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw io_error("checkpoint truncated in header length: " + path);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

struct Header {
    CheckpointMeta meta;
    json tensors;             // array of {name, shape, offset}
    std::uint64_t payload_at; // absolute file offset of the payload region
};

Header read_header(std::istream& in, const std::string& path) {
    char magic[kMagicLen];
    in.read(magic, kMagicLen);
    if (!in || std::memcmp(magic, kMagic, kMagicLen) != 0)
        throw io_error("bad checkpoint magic: " + path);
    const std::uint64_t len = read_u64_le(in, path);
    if (len == 0 || len > (1u << 26))
        throw io_error("implausible checkpoint header length: " + path);
    std::string text(len, '\0');
    in.read(text.data(), std::streamsize(len));
    if (!in) throw io_error("checkpoint truncated in header: " + path);

    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw io_error("checkpoint header is not valid json: " + path + ": " +
                       e.what());
    }
    Header h;
    try {
        h.meta.format_version = j.at("format_version").get<int>();
        if (h.meta.format_version != 1)
            throw state_error("unsupported checkpoint format_version " +
                              std::to_string(h.meta.format_version));
        h.meta.config = config_from_json(j.at("config"));
        h.meta.stage = j.at("stage").get<int>();
        h.meta.step = j.at("step").get<std::int64_t>();
        h.meta.running_loss = j.at("running_loss").get<double>();
        h.meta.rng_state = j.at("rng_state").get<std::string>();
        h.tensors = j.at("tensors");
        if (!h.tensors.is_array())
            throw state_error("checkpoint tensor table is not an array");
    } catch (const json::exception& e) {
        throw io_error("checkpoint header field missing or mistyped: " + path +
                       ": " + e.what());
    }
    h.payload_at = kMagicLen + 8 + len;
    return h;
}

}  // namespace

void save_checkpoint(const std::string& path, Model& model,
                     const CheckpointMeta& meta) {
    ParamRegistry reg = model.merged_params();

    json tensors = json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : reg.params()) {
        tensors.push_back(
            json{{"name", name}, {"shape", t.shape}, {"offset", offset}});
        offset += std::uint64_t(t.numel()) * sizeof(float);
    }
    const json header{{"format_version", meta.format_version},
                      {"config", config_to_json(meta.config)},
                      {"stage", meta.stage},
                      {"step", meta.step},
                      {"running_loss", meta.running_loss},
                      {"rng_state", meta.rng_state},
                      {"tensors", tensors}};
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write checkpoint: " + path);
    out.write(kMagic, kMagicLen);
    write_u64_le(out, text.size());
    out.write(text.data(), std::streamsize(text.size()));
    for (const auto& [name, t] : reg.params())
        out.write(reinterpret_cast<const char*>(t.ptr()),
                  std::streamsize(t.numel() * sizeof(float)));
    out.flush();
    if (!out) throw io_error("short write saving checkpoint: " + path);
}

CheckpointMeta peek_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open checkpoint: " + path);
    return read_header(in, path).meta;
}

std::unique_ptr<Model> load_checkpoint(const std::string& path,
                                       CheckpointMeta* meta_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open checkpoint: " + path);
    Header h = read_header(in, path);

    auto model = std::make_unique<Model>(h.meta.config);
    ParamRegistry reg = model->merged_params();
    if (h.tensors.size() != reg.params().size())
        throw state_error("checkpoint holds " + std::to_string(h.tensors.size()) +
                          " tensors, model expects " +
                          std::to_string(reg.params().size()));

    std::vector<std::string> expect_names;
    expect_names.reserve(reg.params().size());
    for (const auto& [name, t] : reg.params()) expect_names.push_back(name);

    std::uint64_t expect_offset = 0;
    std::size_t i = 0;
    for (const auto& entry : h.tensors) {
        std::string name;
        std::vector<int> shape;
        std::uint64_t offset = 0;
        try {
            name = entry.at("name").get<std::string>();
            shape = entry.at("shape").get<std::vector<int>>();
            offset = entry.at("offset").get<std::uint64_t>();
        } catch (const json::exception& e) {
            throw io_error("checkpoint tensor entry malformed: " + path + ": " +
                           e.what());
        }
        if (name != expect_names[i])
            throw state_error("checkpoint tensor '" + name +
                              "' where model expects '" + expect_names[i] + "'");
        ++i;
        TensorBase<float>& t = reg.at(name);
        if (shape != t.shape)
            throw state_error("checkpoint tensor '" + name + "' has shape " +
                              shape_to_string(shape) + ", model expects " +
                              shape_to_string(t.shape));
        if (offset != expect_offset)
            throw state_error("checkpoint tensor '" + name +
                              "' has offset " + std::to_string(offset) +
                              ", expected " + std::to_string(expect_offset));
        in.seekg(std::streamoff(h.payload_at + offset));
        in.read(reinterpret_cast<char*>(t.data->data()),
                std::streamsize(t.numel() * sizeof(float)));
        if (!in)
            throw state_error("checkpoint payload truncated at tensor '" + name +
                              "'");
        expect_offset += std::uint64_t(t.numel()) * sizeof(float);
    }
    if (meta_out) *meta_out = h.meta;
    return model;
}

}  // namespace segicl
