#ifndef OTSEP_WAV_HPP
#define OTSEP_WAV_HPP

#include "otsep/dsp.hpp"

#include <string>

namespace otsep {

// Reads a mono 16-bit PCM RIFF WAV file; samples normalized to [-1, 1).
// Throws std::runtime_error on malformed files or unsupported formats.
TimeSignal load_wav(const std::string& path);

// Writes mono 16-bit PCM; samples clipped to [-1, 1) before quantization.
void save_wav(const std::string& path, const TimeSignal& sig);

}  // namespace otsep

#endif
