#pragma once

#include "uareg/dsp.hpp"

#include <string>

namespace uareg {

// Binary feature file: magic "UASPEC1\0", little-endian u32 rows and cols,
// rows*cols float32 row-major, then a JSON trailer with the metadata.
void save_feature(const Spectrogram& spec, const std::string& path);
Spectrogram load_feature(const std::string& path);

} // namespace uareg
