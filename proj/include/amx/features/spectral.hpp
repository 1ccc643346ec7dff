#pragma once

#include <cstddef>
#include <vector>

#include "amx/features/feature_grid.hpp"
#include "amx/features/wav.hpp"

namespace amx {

struct StftConfig {
  int n_fft = 1024;
  int hop = 256;
};

// Row-major magnitude grid: bins rows (n_fft/2 + 1) by frames columns.
struct Spectrogram {
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<double> magnitudes;

  double at(std::size_t bin, std::size_t frame) const { return magnitudes[bin * frames + frame]; }
};

struct MelConfig {
  int n_mels = 80;
  int n_fft = 1024;
  int sample_rate = kSampleRate;
  double fmin = 125.0;
  double fmax = 7600.0;
};

// Row-major n_mels x (n_fft/2 + 1).
struct MelFilterbank {
  std::size_t mels = 0;
  std::size_t bins = 0;
  std::vector<double> weights;
  std::vector<double> center_hz;

  double at(std::size_t mel, std::size_t bin) const { return weights[mel * bins + bin]; }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

std::vector<double> periodic_hann(int n);

// One-sided magnitude STFT with a periodic Hann window and no centering.
// Inputs shorter than n_fft are zero-padded to one second first.
Spectrogram stft(const Waveform& w, const StftConfig& config = {});

// Triangular filters on the HTK mel scale, each row scaled to peak 1.
// Invalid band edges raise ConfigError.
MelFilterbank mel_filterbank(const MelConfig& config = {});

// Pads or trims to one second, mel-projects the STFT, converts to dB,
// clamps to [-100, 20] dB, maps linearly to [0, 1], and pads or trims to 64
// frames (padding is 0, i.e. -100 dB).
FeatureGrid log_mel(const Waveform& w);

// Number of analysis frames in a one-second clip.
inline constexpr std::size_t kAnalysisFrames = (16000 - 1024) / 256 + 1;

}  // namespace amx
