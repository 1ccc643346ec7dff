#include "proxy_corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "amx/features/wav.hpp"
#include "amx/rng.hpp"

namespace amx::testing {

namespace {

enum class Kind { kVoiced, kNasal, kFrication, kBurst, kSilence };

// Formants interpolate linearly from `from` to `to` across the segment.
struct Segment {
  Kind kind;
  double duration;
  std::array<double, 3> from{};
  std::array<double, 3> to{};
  double amplitude = 1.0;
  // Frication / burst band.
  double band_hz = 0.0;
  double band_width = 0.0;
};

Segment vowel(double dur, std::array<double, 3> a, std::array<double, 3> b, double amp = 1.0) {
  return {Kind::kVoiced, dur, a, b, amp};
}
Segment nasal(double dur, double amp = 0.35) { return {Kind::kNasal, dur, {280, 1000, 2300}, {280, 1000, 2300}, amp}; }
Segment fric(double dur, double hz, double bw, double amp) {
  return {Kind::kFrication, dur, {}, {}, amp, hz, bw};
}
Segment burst(double hz, double amp = 0.6) { return {Kind::kBurst, 0.018, {}, {}, amp, hz, 2500}; }
Segment gap(double dur) { return {Kind::kSilence, dur}; }

const std::map<std::string, std::vector<Segment>>& lexicon() {
  static const std::map<std::string, std::vector<Segment>> words = {
      {"yes", {vowel(0.06, {300, 2200, 3000}, {330, 2100, 2900}), vowel(0.16, {330, 2100, 2900}, {560, 1800, 2600}),
               fric(0.14, 5500, 2500, 0.45)}},
      {"no", {nasal(0.07), vowel(0.24, {520, 950, 2400}, {360, 780, 2300})}},
      {"up", {vowel(0.2, {680, 1250, 2500}, {640, 1180, 2450}), gap(0.06), burst(1200)}},
      {"down", {burst(3500, 0.5), vowel(0.24, {760, 1300, 2500}, {420, 900, 2300}), nasal(0.08)}},
      {"left", {vowel(0.07, {360, 1100, 2600}, {380, 1300, 2600}), vowel(0.14, {400, 1500, 2600}, {560, 1800, 2600}),
                fric(0.08, 3000, 3000, 0.18), gap(0.04), burst(4000, 0.4)}},
      {"right", {vowel(0.07, {420, 1250, 1600}, {450, 1200, 1700}), vowel(0.22, {760, 1300, 2500}, {360, 2200, 2900}),
                 gap(0.05), burst(4000, 0.45)}},
      {"on", {vowel(0.2, {720, 1100, 2500}, {700, 1150, 2500}), nasal(0.1)}},
      {"off", {vowel(0.2, {620, 950, 2500}, {600, 1000, 2500}), fric(0.14, 3000, 3000, 0.22)}},
      {"stop", {fric(0.13, 5500, 2500, 0.45), gap(0.03), burst(4000, 0.35), vowel(0.16, {720, 1100, 2500},
                                                                               {700, 1150, 2500}), gap(0.06),
                burst(1200, 0.45)}},
      {"go", {burst(1800, 0.5), vowel(0.26, {520, 950, 2400}, {380, 800, 2300})}},
  };
  return words;
}

struct Speaker {
  double f0;
  double formant_scale;
  double rate;
  double effort;
  double noise;
  double tilt;
};

Speaker make_speaker(std::uint64_t seed) {
  Rng rng(seed);
  Speaker s;
  const bool high = rng.uniform() < 0.5;
  s.f0 = high ? rng.uniform(170, 260) : rng.uniform(85, 150);
  s.formant_scale = (high ? 1.12 : 0.96) * rng.uniform(0.92, 1.08);
  s.rate = rng.uniform(0.75, 1.3);
  s.effort = rng.uniform(0.4, 1.0);
  s.noise = rng.uniform(0.0001, 0.001);
  s.tilt = rng.uniform(0.85, 0.97);
  return s;
}

// Two-pole resonator, unity gain at DC scaled by (1 - r).
struct Resonator {
  double y1 = 0, y2 = 0;
  double step(double x, double hz, double bw) {
    const double r = std::exp(-std::numbers::pi * bw / kSampleRate);
    const double c = 2.0 * r * std::cos(2.0 * std::numbers::pi * hz / kSampleRate);
    const double y = (1.0 - r) * x + c * y1 - r * r * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

}  // namespace

const std::vector<std::string>& proxy_words() {
  static const std::vector<std::string> words = {"yes", "no", "up", "down", "left", "right", "on", "off", "stop", "go"};
  return words;
}

std::vector<double> synthesize_word(const std::string& word, std::uint64_t speaker_seed, std::uint64_t take_seed) {
  const auto it = lexicon().find(word);
  if (it == lexicon().end()) throw std::invalid_argument("proxy corpus: unknown word " + word);
  const Speaker spk = make_speaker(speaker_seed);
  Rng rng(take_seed);

  const double rate = spk.rate * rng.uniform(0.85, 1.15);
  const double f0 = spk.f0 * rng.uniform(0.9, 1.1);
  const double f0_slope = rng.uniform(-0.35, 0.1);
  std::vector<double> out(kSampleRate, 0.0);
  std::size_t pos = static_cast<std::size_t>(rng.uniform(0.1, 0.3) * kSampleRate);

  Resonator f1, f2, f3, band;
  double phase = 0.0, lowpass = 0.0;
  std::size_t total = 0;
  for (const auto& seg : it->second) total += static_cast<std::size_t>(seg.duration / rate * kSampleRate);
  std::size_t done = 0;
  for (const auto& seg : it->second) {
    const auto n = static_cast<std::size_t>(seg.duration / rate * kSampleRate);
    // Per-segment jitter keeps tokens of one word from being identical.
    std::array<double, 3> jitter;
    for (auto& j : jitter) j = rng.uniform(0.95, 1.05) * spk.formant_scale;
    const double amp = seg.amplitude * spk.effort * rng.uniform(0.85, 1.15);
    for (std::size_t i = 0; i < n && pos < out.size(); ++i, ++pos, ++done) {
      const double t = n > 1 ? double(i) / double(n - 1) : 0.0;
      const double env = std::min({1.0, double(i) / 160.0, double(n - i) / 160.0});
      double s = 0.0;
      switch (seg.kind) {
        case Kind::kVoiced:
        case Kind::kNasal: {
          const double pitch = f0 * (1.0 + f0_slope * double(done) / double(std::max<std::size_t>(total, 1)));
          phase += pitch / kSampleRate;
          if (phase >= 1.0) phase -= 1.0;
          const double pulse = (phase < 0.5 ? 2.0 * phase : 2.0 - 2.0 * phase) - 0.5 + 0.05 * rng.normal();
          lowpass = spk.tilt * lowpass + (1.0 - spk.tilt) * pulse * 8.0;
          const double src = pulse - lowpass;
          double hz[3];
          for (int k = 0; k < 3; ++k) hz[k] = ((1.0 - t) * seg.from[k] + t * seg.to[k]) * jitter[k];
          s = 3.0 * f1.step(src, hz[0], 90) + 2.0 * f2.step(src, hz[1], 120) + 1.2 * f3.step(src, hz[2], 180);
          break;
        }
        case Kind::kFrication:
        case Kind::kBurst: {
          const double hz = std::min(seg.band_hz * jitter[1], 7400.0);
          s = 6.0 * band.step(rng.normal(), hz, seg.band_width);
          break;
        }
        case Kind::kSilence:
          break;
      }
      out[pos] += amp * env * s;
    }
  }
  double peak = 0.0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  const double gain = peak > 0.0 ? rng.uniform(0.3, 0.8) / peak : 0.0;
  const double noise = spk.noise * rng.uniform(0.5, 2.0);
  for (auto& v : out) v = std::clamp(v * gain + noise * rng.normal(), -1.0, 1.0);
  return out;
}

void write_proxy_corpus(const std::filesystem::path& root, const ProxyCorpusOptions& options) {
  std::ostringstream tag;
  tag << "speakers=" << options.speakers << " takes=" << options.takes_per_speaker << " seed=" << options.seed
      << " v3";
  const auto marker = root / ".complete";
  {
    std::ifstream in(marker);
    std::string line;
    if (in && std::getline(in, line) && line == tag.str()) return;
  }
  std::filesystem::remove_all(root);
  const auto& words = proxy_words();
  for (std::size_t w = 0; w < words.size(); ++w) {
    std::filesystem::create_directories(root / words[w]);
    for (std::size_t s = 0; s < options.speakers; ++s) {
      const std::uint64_t speaker_seed = mix_seed(options.seed, s);
      char id[16];
      std::snprintf(id, sizeof id, "%08llx", static_cast<unsigned long long>(speaker_seed & 0xffffffffull));
      for (std::size_t k = 0; k < options.takes_per_speaker; ++k) {
        const std::uint64_t take_seed = mix_seed(speaker_seed, w * 1000 + k);
        const auto samples = synthesize_word(words[w], speaker_seed, take_seed);
        write_wav(root / words[w] / (std::string(id) + "_nohash_" + std::to_string(k) + ".wav"), to_pcm16(samples));
      }
    }
  }
  std::ofstream(marker) << tag.str() << '\n';
}

}  // namespace amx::testing
