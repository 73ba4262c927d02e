#include "uareg/model.hpp"
#include "uareg/common.hpp"

#include <cstring>
#include <fstream>
#include <map>

using json = nlohmann::json;

namespace uareg {

void ModelConfig::validate() const {
    if (in_channels < 1) throw Error("model needs at least one input channel");
    if (stem_channels < 1) throw Error("stem channels must be positive");
    if (stage_widths.empty()) throw Error("model needs at least one residual stage");
    std::int64_t prev = 0;
    for (std::int64_t w : stage_widths) {
        if (w < 1) throw Error("stage widths must be positive");
        if (w < prev) throw Error("stage widths must be nondecreasing");
        prev = w;
    }
    if (blocks_per_stage < 1) throw Error("blocks per stage must be >= 1");
    if (n_classes < 2) throw Error("model needs at least two classes");
    if (attention_heads < 1 || stage_widths.back() % attention_heads != 0)
        throw Error("attention heads must divide the final width");
    if (crop_frames < 8) throw Error("crop length too small for the stem");
}

json ModelConfig::to_json() const {
    return json{{"in_channels", in_channels},
                {"stem_channels", stem_channels},
                {"stage_widths", stage_widths},
                {"blocks_per_stage", blocks_per_stage},
                {"attention_heads", attention_heads},
                {"n_classes", n_classes},
                {"crop_frames", crop_frames},
                {"stem_freq_stride_above", stem_freq_stride_above}};
}

ModelConfig ModelConfig::from_json(const json& j) {
    ModelConfig cfg;
    cfg.in_channels = j.value("in_channels", cfg.in_channels);
    cfg.stem_channels = j.value("stem_channels", cfg.stem_channels);
    cfg.stage_widths = j.value("stage_widths", cfg.stage_widths);
    cfg.blocks_per_stage = j.value("blocks_per_stage", cfg.blocks_per_stage);
    cfg.attention_heads = j.value("attention_heads", cfg.attention_heads);
    cfg.n_classes = j.value("n_classes", cfg.n_classes);
    cfg.crop_frames = j.value("crop_frames", cfg.crop_frames);
    cfg.stem_freq_stride_above = j.value("stem_freq_stride_above", cfg.stem_freq_stride_above);
    cfg.validate();
    return cfg;
}

namespace {

constexpr char kMagic[8] = {'U', 'A', 'M', 'O', 'D', 'E', 'L', '1'};

void put_u32(std::ofstream& out, std::uint32_t v) {
    const unsigned char b[4] = {
        static_cast<unsigned char>(v & 0xFF), static_cast<unsigned char>((v >> 8) & 0xFF),
        static_cast<unsigned char>((v >> 16) & 0xFF), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error("truncated checkpoint: " + path);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_entry(std::ofstream& out, const std::string& name, const ad::Tensor<float>& t) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::int64_t d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * 4));
}

} // namespace

void save_checkpoint(const Model<float>& model, const std::string& path, const json& extra) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint: " + path);
    out.write(kMagic, 8);
    put_u32(out, static_cast<std::uint32_t>(model.params.size() + model.buffers.size()));
    for (const auto& [name, p] : model.params) write_entry(out, name, p->value);
    for (const auto& [name, t] : model.buffers) write_entry(out, name, *t);

    json trailer = extra;
    trailer["model"] = model.cfg.to_json();
    out << trailer.dump();
    if (!out) throw Error("cannot write checkpoint: " + path);
}

std::pair<Model<float>, json> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("unreadable checkpoint: " + path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw Error("not a checkpoint file: " + path);

    const std::uint32_t count = read_u32(in, path);
    std::map<std::string, ad::Tensor<float>> entries;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = read_u32(in, path);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) throw Error("truncated checkpoint: " + path);
        const std::uint32_t rank = read_u32(in, path);
        std::vector<std::int64_t> shape(rank);
        for (std::uint32_t d = 0; d < rank; ++d) shape[d] = read_u32(in, path);
        ad::Tensor<float> t(shape);
        if (!in.read(reinterpret_cast<char*>(t.values.data()),
                     static_cast<std::streamsize>(t.values.size() * 4)))
            throw Error("truncated checkpoint payload: " + path);
        entries.emplace(std::move(name), std::move(t));
    }

    std::string trailer((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (trailer.empty()) throw Error("checkpoint missing config trailer: " + path);
    json j;
    try {
        j = json::parse(trailer);
    } catch (const json::exception& e) {
        throw Error("malformed checkpoint trailer " + path + ": " + e.what());
    }
    if (!j.contains("model")) throw Error("checkpoint trailer lacks model config: " + path);

    Rng rng(0); // placeholder init, every tensor is overwritten below
    Model<float> model = build_model<float>(ModelConfig::from_json(j["model"]), rng);
    auto take = [&entries, &path](const std::string& name, ad::Tensor<float>& dst) {
        const auto it = entries.find(name);
        if (it == entries.end()) throw Error("checkpoint " + path + " missing tensor " + name);
        if (it->second.shape != dst.shape)
            throw Error("checkpoint tensor " + name + " has shape " +
                        ad::shape_str(it->second.shape) + ", expected " + ad::shape_str(dst.shape));
        dst = it->second;
    };
    for (auto& [name, p] : model.params) take(name, p->value);
    for (auto& [name, t] : model.buffers) take(name, *t);
    return {std::move(model), std::move(j)};
}

} // namespace uareg
