#include "amx/features/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "amx/error.hpp"

namespace amx {

namespace {

std::uint32_t read_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}

std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

}  // namespace

Waveform parse_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw ParseError("wav: truncated RIFF header");
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("wav: not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  std::size_t pos = 12;
  while (true) {
    if (pos + 8 > bytes.size()) {
      throw ParseError(have_fmt ? "wav: missing data chunk" : "wav: missing fmt chunk");
    }
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + 16 > bytes.size()) throw ParseError("wav: truncated fmt chunk");
      const std::uint8_t* f = bytes.data() + body;
      const auto format = read_u16(f);
      const auto channels = read_u16(f + 2);
      const auto rate = read_u32(f + 4);
      const auto bits = read_u16(f + 14);
      if (format != 1) throw FormatError("wav: audio_format " + std::to_string(format) + " != 1 (PCM)");
      if (channels != 1) throw FormatError("wav: channels " + std::to_string(channels) + " != 1");
      if (rate != kSampleRate) {
        throw FormatError("wav: sample_rate " + std::to_string(rate) + " != " +
                          std::to_string(kSampleRate));
      }
      if (bits != 16) throw FormatError("wav: bits_per_sample " + std::to_string(bits) + " != 16");
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw FormatError("wav: data chunk before fmt chunk");
      if (body + size > bytes.size()) throw ParseError("wav: truncated data chunk");
      if (size % 2 != 0) throw ParseError("wav: odd data chunk size");
      Waveform w;
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const auto raw = static_cast<std::int16_t>(read_u16(bytes.data() + body + 2 * i));
        w.samples[i] = static_cast<double>(raw) / 32768.0;
      }
      return w;
    }
    pos = body + size + (size & 1u);
  }
}

Waveform load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("wav: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return parse_wav(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_wav(const std::filesystem::path& path, std::span<const std::int16_t> samples,
               int sample_rate, int channels) {
  std::string out;
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, static_cast<std::uint16_t>(channels));
  put_u32(out, static_cast<std::uint32_t>(sample_rate));
  put_u32(out, static_cast<std::uint32_t>(sample_rate * channels * 2));
  put_u16(out, static_cast<std::uint16_t>(channels * 2));
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);
  for (auto s : samples) put_u16(out, static_cast<std::uint16_t>(s));
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("wav: cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

std::vector<std::int16_t> to_pcm16(std::span<const double> samples) {
  std::vector<std::int16_t> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double v = std::round(samples[i] * 32768.0);
    out[i] = static_cast<std::int16_t>(std::clamp(v, -32768.0, 32767.0));
  }
  return out;
}

}  // namespace amx
