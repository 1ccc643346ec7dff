#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace amx {

inline constexpr int kSampleRate = 16000;

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = kSampleRate;
};

// Reads RIFF/WAVE, PCM 16-bit, mono, 16 kHz. Samples are scaled by 1/32768.
// Wrong format fields raise FormatError naming the field; a truncated file
// raises ParseError.
Waveform load_wav(const std::filesystem::path& path);
Waveform parse_wav(std::span<const std::uint8_t> bytes);

// Writes canonical 44-byte-header PCM16 mono WAV.
void write_wav(const std::filesystem::path& path, std::span<const std::int16_t> samples,
               int sample_rate = kSampleRate, int channels = 1);

// Rounds and saturates [-1, 1] samples to int16.
std::vector<std::int16_t> to_pcm16(std::span<const double> samples);

}  // namespace amx
