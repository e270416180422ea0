#pragma once

#include <filesystem>
#include <vector>

#include "sibf/stft.hpp"

namespace sibf {

enum class WavEncoding { Pcm16, Float32 };

// Reads PCM16 or IEEE float32 WAV (plain or WAVE_FORMAT_EXTENSIBLE). One
// TimeSignal per channel. Throws std::runtime_error on malformed files. A data
// chunk whose declared size runs past the end of the file is read up to the
// last complete frame.
std::vector<TimeSignal> read_wav(const std::filesystem::path& path);

// All channels must share length and sample rate. PCM16 clips to [-1, 1).
void write_wav(const std::filesystem::path& path, const std::vector<TimeSignal>& channels,
               WavEncoding encoding = WavEncoding::Float32);

// Multichannel observation from either one multichannel file or several
// mono files of identical length and rate.
std::vector<TimeSignal> read_observation(const std::vector<std::filesystem::path>& paths);

}  // namespace sibf
