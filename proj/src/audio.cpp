#include "uareg/audio.hpp"
#include "uareg/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace uareg {

namespace {

struct FmtChunk {
    std::uint16_t format = 0;
    std::uint16_t channels = 0;
    std::uint32_t sample_rate = 0;
    std::uint16_t bits = 0;
};

std::uint16_t read_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

// Walks RIFF chunks; returns fmt and the raw data payload. data may be
// nullptr when the caller only wants the header (wav_info).
void parse_wav(const std::string& path, FmtChunk& fmt, std::vector<unsigned char>* data,
               std::uint64_t* data_bytes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("unreadable file: " + path);

    unsigned char riff[12];
    if (!in.read(reinterpret_cast<char*>(riff), 12)) throw Error("unreadable file: " + path);
    if (std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(riff + 8, "WAVE", 4) != 0)
        throw Error("not a RIFF/WAVE file: " + path);

    bool have_fmt = false;
    bool have_data = false;
    unsigned char hdr[8];
    while (in.read(reinterpret_cast<char*>(hdr), 8)) {
        const std::uint32_t size = read_u32(hdr + 4);
        if (std::memcmp(hdr, "fmt ", 4) == 0) {
            std::vector<unsigned char> buf(size);
            if (!in.read(reinterpret_cast<char*>(buf.data()), size))
                throw Error("truncated fmt chunk: " + path);
            if (size < 16) throw Error("malformed fmt chunk: " + path);
            fmt.format = read_u16(buf.data() + 0);
            fmt.channels = read_u16(buf.data() + 2);
            fmt.sample_rate = read_u32(buf.data() + 4);
            fmt.bits = read_u16(buf.data() + 14);
            if (fmt.format == 0xFFFE) {
                // WAVE_FORMAT_EXTENSIBLE: real format is the GUID head.
                if (size < 40) throw Error("malformed extensible fmt chunk: " + path);
                fmt.format = read_u16(buf.data() + 24);
            }
            have_fmt = true;
        } else if (std::memcmp(hdr, "data", 4) == 0) {
            have_data = true;
            if (data_bytes) *data_bytes = size;
            if (data) {
                data->resize(size);
                in.read(reinterpret_cast<char*>(data->data()), size);
                // Tolerate a header that overstates the payload.
                data->resize(static_cast<std::size_t>(in.gcount()));
                if (data_bytes) *data_bytes = data->size();
            }
            break;
        } else {
            // Skip unknown chunk; sizes are padded to even length.
            in.seekg(size + (size & 1), std::ios::cur);
        }
    }
    if (!have_fmt || !have_data) throw Error("missing fmt or data chunk: " + path);
    if (fmt.channels == 0 || fmt.sample_rate == 0) throw Error("malformed fmt chunk: " + path);
    if (fmt.format == 1) {
        if (fmt.bits != 8 && fmt.bits != 16 && fmt.bits != 24 && fmt.bits != 32)
            throw Error("unsupported PCM bit depth " + std::to_string(fmt.bits) + ": " + path);
    } else if (fmt.format == 3) {
        if (fmt.bits != 32) throw Error("unsupported float bit depth " + std::to_string(fmt.bits) + ": " + path);
    } else {
        throw Error("unsupported WAV codec " + std::to_string(fmt.format) + ": " + path);
    }
}

double decode_sample(const unsigned char* p, std::uint16_t format, std::uint16_t bits) {
    if (format == 3) {
        float v;
        std::memcpy(&v, p, 4);
        return v;
    }
    switch (bits) {
        case 8:
            return (static_cast<int>(p[0]) - 128) / 128.0;
        case 16: {
            const auto v = static_cast<std::int16_t>(read_u16(p));
            return v / 32768.0;
        }
        case 24: {
            std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
            if (v & 0x800000) v |= ~0xFFFFFF; // sign extend
            return v / 8388608.0;
        }
        default: {
            const auto v = static_cast<std::int32_t>(read_u32(p));
            return v / 2147483648.0;
        }
    }
}

} // namespace

AudioSignal load_wav(const std::string& path) {
    FmtChunk fmt;
    std::vector<unsigned char> data;
    std::uint64_t data_bytes = 0;
    parse_wav(path, fmt, &data, &data_bytes);

    const std::size_t bytes_per_sample = fmt.bits / 8;
    const std::size_t frame_bytes = bytes_per_sample * fmt.channels;
    const std::size_t n_frames = frame_bytes ? data.size() / frame_bytes : 0;
    if (n_frames == 0) throw Error("zero-length audio: " + path);

    AudioSignal out;
    out.sample_rate = fmt.sample_rate;
    out.record_id = std::filesystem::path(path).stem().string();
    out.samples.resize(n_frames);
    for (std::size_t i = 0; i < n_frames; ++i) {
        const unsigned char* frame = data.data() + i * frame_bytes;
        double acc = 0.0;
        for (std::uint16_t c = 0; c < fmt.channels; ++c)
            acc += decode_sample(frame + c * bytes_per_sample, fmt.format, fmt.bits);
        out.samples[i] = static_cast<float>(acc / fmt.channels);
    }
    return out;
}

WavInfo wav_info(const std::string& path) {
    FmtChunk fmt;
    std::uint64_t data_bytes = 0;
    parse_wav(path, fmt, nullptr, &data_bytes);
    WavInfo info;
    info.sample_rate = fmt.sample_rate;
    info.channels = fmt.channels;
    info.frames = data_bytes / (static_cast<std::uint64_t>(fmt.bits / 8) * fmt.channels);
    return info;
}

void save_wav_16bit(const std::string& path, const std::vector<float>& samples, double sample_rate) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write file: " + path);

    const std::uint32_t sr = static_cast<std::uint32_t>(std::llround(sample_rate));
    const std::uint32_t data_size = static_cast<std::uint32_t>(samples.size() * 2);
    const std::uint32_t riff_size = 36 + data_size;

    auto put_u16 = [&](std::uint16_t v) {
        const unsigned char b[2] = {static_cast<unsigned char>(v & 0xFF),
                                    static_cast<unsigned char>(v >> 8)};
        out.write(reinterpret_cast<const char*>(b), 2);
    };
    auto put_u32 = [&](std::uint32_t v) {
        const unsigned char b[4] = {
            static_cast<unsigned char>(v & 0xFF), static_cast<unsigned char>((v >> 8) & 0xFF),
            static_cast<unsigned char>((v >> 16) & 0xFF), static_cast<unsigned char>(v >> 24)};
        out.write(reinterpret_cast<const char*>(b), 4);
    };

    out.write("RIFF", 4);
    put_u32(riff_size);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    put_u32(16);
    put_u16(1);  // PCM
    put_u16(1);  // mono
    put_u32(sr);
    put_u32(sr * 2); // byte rate
    put_u16(2);      // block align
    put_u16(16);     // bits
    out.write("data", 4);
    put_u32(data_size);
    for (float s : samples) {
        const double clamped = std::clamp(static_cast<double>(s), -1.0, 1.0);
        put_u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(clamped * 32767.0))));
    }
    if (!out) throw Error("cannot write file: " + path);
}

std::int64_t seconds_to_samples(double seconds, double sample_rate) {
    return std::llround(seconds * sample_rate);
}

std::int64_t segment_count(std::uint64_t n_samples, double sample_rate, double seg_len_s, double overlap_s) {
    if (seg_len_s <= 0.0) throw Error("segment length must be positive");
    if (overlap_s < 0.0 || overlap_s >= seg_len_s)
        throw Error("overlap must lie in [0, segment length)");
    const std::int64_t L = seconds_to_samples(seg_len_s, sample_rate);
    const std::int64_t H = seconds_to_samples(seg_len_s - overlap_s, sample_rate);
    if (L <= 0 || H <= 0) throw Error("segment grid degenerates at this sample rate");
    const auto S = static_cast<std::int64_t>(n_samples);
    if (S < L) return 0;
    return (S - L) / H + 1;
}

std::vector<AudioSegment> segment(const AudioSignal& signal, double seg_len_s, double overlap_s) {
    const std::int64_t count =
        segment_count(signal.samples.size(), signal.sample_rate, seg_len_s, overlap_s);
    const std::int64_t L = seconds_to_samples(seg_len_s, signal.sample_rate);
    const std::int64_t H = seconds_to_samples(seg_len_s - overlap_s, signal.sample_rate);

    std::vector<AudioSegment> out;
    out.reserve(static_cast<std::size_t>(count));
    for (std::int64_t k = 0; k < count; ++k) {
        const std::int64_t start = k * H;
        AudioSegment seg;
        seg.sample_rate = signal.sample_rate;
        seg.record_id = signal.record_id;
        seg.offset_s = static_cast<double>(start) / signal.sample_rate;
        seg.duration_s = seg_len_s;
        seg.samples.assign(signal.samples.begin() + start, signal.samples.begin() + start + L);
        out.push_back(std::move(seg));
    }
    return out;
}

AudioSegment cut_segment(const AudioSignal& signal, double offset_s, double seg_len_s) {
    const std::int64_t start = seconds_to_samples(offset_s, signal.sample_rate);
    const std::int64_t L = seconds_to_samples(seg_len_s, signal.sample_rate);
    if (start < 0 || L <= 0 || start + L > static_cast<std::int64_t>(signal.samples.size()))
        throw Error("segment [" + std::to_string(offset_s) + ", +" + std::to_string(seg_len_s) +
                    "s) out of range for record " + signal.record_id);
    AudioSegment seg;
    seg.sample_rate = signal.sample_rate;
    seg.record_id = signal.record_id;
    seg.offset_s = offset_s;
    seg.duration_s = seg_len_s;
    seg.samples.assign(signal.samples.begin() + start, signal.samples.begin() + start + L);
    return seg;
}

} // namespace uareg
