#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace uareg {

// Mono waveform, amplitudes in [-1, 1].
struct AudioSignal {
    std::vector<float> samples;
    double sample_rate = 0.0;
    std::string record_id;

    double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

// Fixed-length cut of a source track.
struct AudioSegment {
    std::vector<float> samples;
    double sample_rate = 0.0;
    std::string record_id;
    double offset_s = 0.0;
    double duration_s = 0.0;
};

struct WavInfo {
    double sample_rate = 0.0;
    std::uint32_t channels = 0;
    std::uint64_t frames = 0; // samples per channel
};

// PCM WAV reader: 8/16/24/32-bit integer and 32-bit float, any channel
// count (averaged to mono). record_id is the file stem.
AudioSignal load_wav(const std::string& path);

// Header-only probe, cheap for long files.
WavInfo wav_info(const std::string& path);

// 16-bit PCM writer, used by the synthetic-dataset generator.
void save_wav_16bit(const std::string& path, const std::vector<float>& samples, double sample_rate);

// Cut seg_len_s windows every (seg_len_s - overlap_s) seconds. Offsets are
// exact multiples of the hop; trailing audio shorter than seg_len_s is
// dropped. Returns empty when the track is shorter than one segment.
std::vector<AudioSegment> segment(const AudioSignal& signal, double seg_len_s, double overlap_s);

// Slice one segment without materializing the rest.
AudioSegment cut_segment(const AudioSignal& signal, double offset_s, double seg_len_s);

// Segment-grid helpers shared by segment() and the manifest builder.
std::int64_t segment_count(std::uint64_t n_samples, double sample_rate, double seg_len_s, double overlap_s);
std::int64_t seconds_to_samples(double seconds, double sample_rate); // nearest sample

} // namespace uareg
