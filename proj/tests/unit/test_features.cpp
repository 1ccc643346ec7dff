#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "amx/error.hpp"
#include "amx/features/spectral.hpp"
#include "amx/io/csv.hpp"
#include "amx/rng.hpp"

using namespace amx;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "amx_test_features";
  fs::create_directories(dir);
  return dir / name;
}

Waveform sine(double hz, double amplitude, std::size_t n = 16000) {
  Waveform w;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    w.samples[i] = amplitude * std::sin(2.0 * std::numbers::pi * hz * double(i) / 16000.0);
  }
  return w;
}

Waveform noise(std::uint64_t seed, std::size_t n = 16000, double amplitude = 1.0) {
  Rng rng(seed);
  Waveform w;
  w.samples.resize(n);
  for (auto& s : w.samples) s = amplitude * rng.uniform(-1.0, 1.0);
  return w;
}

}  // namespace

TEST_CASE("load_wav") {
  SUBCASE("int sample 16384 scales to 0.5") {
    const std::vector<std::int16_t> s = {16384, -32768, 0};
    write_wav(temp_path("half.wav"), s);
    auto w = load_wav(temp_path("half.wav"));
    REQUIRE(w.samples.size() == 3);
    CHECK(w.samples[0] == 0.5);
    CHECK(w.samples[1] == -1.0);
  }
  SUBCASE("write then read preserves random int16 samples") {
    Rng rng(3);
    std::vector<std::int16_t> s(4000);
    for (auto& v : s) v = static_cast<std::int16_t>(int(rng.below(65536)) - 32768);
    write_wav(temp_path("roundtrip.wav"), s);
    const auto back = to_pcm16(load_wav(temp_path("roundtrip.wav")).samples);
    CHECK(back == s);
  }
  SUBCASE("8 kHz file names the offending field") {
    const std::vector<std::int16_t> s(100, 0);
    write_wav(temp_path("8k.wav"), s, 8000);
    try {
      load_wav(temp_path("8k.wav"));
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("sample_rate 8000 != 16000") != std::string::npos);
    }
  }
  SUBCASE("stereo is rejected") {
    const std::vector<std::int16_t> s(100, 0);
    write_wav(temp_path("stereo.wav"), s, 16000, 2);
    CHECK_THROWS_AS(load_wav(temp_path("stereo.wav")), FormatError);
  }
  SUBCASE("truncated file is a parse error") {
    const std::vector<std::int16_t> s(1000, 7);
    write_wav(temp_path("trunc.wav"), s);
    fs::resize_file(temp_path("trunc.wav"), 600);
    CHECK_THROWS_AS(load_wav(temp_path("trunc.wav")), ParseError);
    fs::resize_file(temp_path("trunc.wav"), 20);
    CHECK_THROWS_AS(load_wav(temp_path("trunc.wav")), ParseError);
  }
}

TEST_CASE("stft") {
  SUBCASE("silence gives zero magnitudes") {
    Waveform w;
    w.samples.assign(16000, 0.0);
    for (double m : stft(w).magnitudes) CHECK(m == 0.0);
  }
  SUBCASE("frame count and 1 kHz peak bin") {
    const auto s = stft(sine(1000.0, 1.0));
    CHECK(s.frames == (16000 - 1024) / 256 + 1);
    CHECK(s.bins == 513);
    for (std::size_t t = 0; t < s.frames; ++t) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < s.bins; ++k) {
        if (s.at(k, t) > s.at(best, t)) best = k;
      }
      CHECK(best == 64);
    }
  }
  SUBCASE("random frame matches a naive DFT") {
    const auto w = noise(4, 1024);
    const auto s = stft(w);  // padded to one second; frame 0 is the original samples
    const auto win = periodic_hann(1024);
    for (std::size_t k = 0; k < 513; k += 7) {
      std::complex<double> acc = 0.0;
      for (std::size_t n = 0; n < 1024; ++n) {
        const double ang = -2.0 * std::numbers::pi * double(k * n) / 1024.0;
        acc += w.samples[n] * win[n] * std::complex<double>(std::cos(ang), std::sin(ang));
      }
      CHECK(s.at(k, 0) == doctest::Approx(std::abs(acc)).epsilon(1e-6));
    }
  }
  SUBCASE("magnitudes scale linearly") {
    auto w = noise(5);
    auto w2 = w;
    for (auto& v : w2.samples) v *= 0.37;
    const auto a = stft(w);
    const auto b = stft(w2);
    for (std::size_t i = 0; i < a.magnitudes.size(); i += 97) {
      CHECK(b.magnitudes[i] == doctest::Approx(0.37 * a.magnitudes[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("mel_filterbank") {
  CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)).epsilon(1e-12));
  CHECK(hz_to_mel(700.0) == doctest::Approx(781.17).epsilon(1e-5));

  const auto fb = mel_filterbank();
  REQUIRE(fb.mels == 80);
  REQUIRE(fb.bins == 513);
  for (std::size_t m = 0; m < fb.mels; ++m) {
    double mx = 0.0;
    for (std::size_t k = 0; k < fb.bins; ++k) {
      CHECK(fb.at(m, k) >= 0.0);
      mx = std::max(mx, fb.at(m, k));
    }
    CHECK(mx == 1.0);
  }
  // Independent inversion: centers sit at equally spaced mel positions.
  const double lo = 2595.0 * std::log10(1.0 + 125.0 / 700.0);
  const double hi = 2595.0 * std::log10(1.0 + 7600.0 / 700.0);
  for (std::size_t m = 0; m < fb.mels; ++m) {
    const double expected_mel = lo + (hi - lo) * double(m + 1) / 81.0;
    const double expected_hz = 700.0 * (std::pow(10.0, expected_mel / 2595.0) - 1.0);
    CHECK(fb.center_hz[m] == doctest::Approx(expected_hz).epsilon(1e-9));
    if (m) CHECK(fb.center_hz[m] > fb.center_hz[m - 1]);
  }

  CHECK_THROWS_AS(mel_filterbank({.fmin = 8000, .fmax = 7600}), ConfigError);
  CHECK_THROWS_AS(mel_filterbank({.fmax = 9000}), ConfigError);
}

TEST_CASE("log_mel") {
  SUBCASE("one second yields 59 analysis frames padded to 64") {
    CHECK(kAnalysisFrames == 59);
    const auto g = log_mel(noise(6));
    for (std::size_t m = 0; m < 80; ++m) {
      for (std::size_t t = 59; t < 64; ++t) CHECK(g.at(m, t) == 0.0f);
    }
  }
  SUBCASE("digital silence maps to all zeros") {
    Waveform w;
    w.samples.assign(16000, 0.0);
    CHECK(log_mel(w) == FeatureGrid());
  }
  SUBCASE("full-scale white noise lies strictly inside (0, 1] on analysis frames") {
    const auto g = log_mel(noise(7));
    for (std::size_t m = 0; m < 80; ++m) {
      for (std::size_t t = 0; t < kAnalysisFrames; ++t) {
        CHECK(g.at(m, t) > 0.0f);
        CHECK(g.at(m, t) <= 1.0f);
      }
    }
  }
  SUBCASE("any input length gives an 80x64 grid in [0, 1]") {
    for (std::size_t n : {0u, 10u, 1023u, 1024u, 9000u, 16000u, 24000u}) {
      const auto g = log_mel(noise(8 + n, n, 0.3));
      CHECK(g.values().size() == 80 * 64);
      for (float v : g.values()) CHECK((v >= 0.0f && v <= 1.0f));
    }
  }
  SUBCASE("deterministic") {
    CHECK(log_mel(noise(9)) == log_mel(noise(9)));
  }
}

TEST_CASE("feature grid CSV keeps 9 significant digits") {
  const auto g = log_mel(sine(440.0, 0.5));
  std::stringstream ss;
  io::write_matrix_csv(ss, g.values(), 80, 64, 9);
  {
    std::ofstream f(temp_path("grid.csv"));
    f << ss.str();
  }
  const auto m = io::read_matrix_csv(temp_path("grid.csv"));
  CHECK(m.rows == 80);
  CHECK(m.cols == 64);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    CHECK(static_cast<float>(m.values[i]) == g.values()[i]);
  }
}
