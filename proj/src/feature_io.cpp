#include "uareg/feature_io.hpp"
#include "uareg/common.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>

using json = nlohmann::json;

namespace uareg {

namespace {

constexpr char kMagic[8] = {'U', 'A', 'S', 'P', 'E', 'C', '1', '\0'};

void put_u32(std::ofstream& out, std::uint32_t v) {
    const unsigned char b[4] = {
        static_cast<unsigned char>(v & 0xFF), static_cast<unsigned char>((v >> 8) & 0xFF),
        static_cast<unsigned char>((v >> 16) & 0xFF), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

} // namespace

void save_feature(const Spectrogram& spec, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write feature file: " + path);
    out.write(kMagic, 8);
    put_u32(out, static_cast<std::uint32_t>(spec.values.rows));
    put_u32(out, static_cast<std::uint32_t>(spec.values.cols));
    static_assert(sizeof(float) == 4);
    out.write(reinterpret_cast<const char*>(spec.values.data.data()),
              static_cast<std::streamsize>(spec.values.data.size() * 4));
    const json trailer{{"feature", spec.meta.feature_kind},
                       {"sample_rate", spec.meta.sample_rate},
                       {"f_lo", spec.meta.band.f_lo},
                       {"f_hi", spec.meta.band.f_hi},
                       {"config_hash", spec.meta.config_hash},
                       {"record_id", spec.meta.record_id},
                       {"offset_s", spec.meta.offset_s}};
    out << trailer.dump();
    if (!out) throw Error("cannot write feature file: " + path);
}

Spectrogram load_feature(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("unreadable feature file: " + path);

    unsigned char header[16];
    if (!in.read(reinterpret_cast<char*>(header), 16))
        throw Error("corrupt header in feature file: " + path);
    if (std::memcmp(header, kMagic, 8) != 0)
        throw Error("corrupt header in feature file: " + path);

    Spectrogram spec;
    const std::uint32_t rows = get_u32(header + 8);
    const std::uint32_t cols = get_u32(header + 12);
    spec.values = Matrix(rows, cols);
    const std::streamsize payload = static_cast<std::streamsize>(spec.values.data.size() * 4);
    if (!in.read(reinterpret_cast<char*>(spec.values.data.data()), payload))
        throw Error("payload mismatch in feature file: " + path);

    std::string trailer((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (trailer.empty()) throw Error("missing trailer in feature file: " + path);
    json j;
    try {
        j = json::parse(trailer);
    } catch (const json::exception& e) {
        throw Error("malformed trailer in feature file " + path + ": " + e.what());
    }
    spec.meta.feature_kind = j.value("feature", "");
    spec.meta.sample_rate = j.value("sample_rate", 0.0);
    spec.meta.band.f_lo = j.value("f_lo", 0.0);
    spec.meta.band.f_hi = j.value("f_hi", 0.0);
    spec.meta.config_hash = j.value("config_hash", "");
    spec.meta.record_id = j.value("record_id", "");
    spec.meta.offset_s = j.value("offset_s", 0.0);
    return spec;
}

} // namespace uareg
