#include "amx/features/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "amx/error.hpp"

namespace amx {

namespace {

// FFTW planning is not thread-safe; plans are created once per size under a
// lock and then executed through the thread-safe new-array interface.
class RealFftPlan {
 public:
  explicit RealFftPlan(int n) : n_(n) {
    double* in = fftw_alloc_real(std::size_t(n));
    fftw_complex* out = fftw_alloc_complex(std::size_t(n / 2 + 1));
    plan_ = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
    if (!plan_) throw Error("fftw: plan creation failed for n=" + std::to_string(n));
  }
  ~RealFftPlan() { fftw_destroy_plan(plan_); }
  RealFftPlan(const RealFftPlan&) = delete;
  RealFftPlan& operator=(const RealFftPlan&) = delete;

  // in: n reals, out: n/2+1 complex; both fftw-allocated.
  void execute(double* in, fftw_complex* out) const { fftw_execute_dft_r2c(plan_, in, out); }
  int size() const { return n_; }

  static const RealFftPlan& get(int n) {
    static std::mutex mu;
    static std::map<int, std::unique_ptr<RealFftPlan>> plans;
    std::lock_guard lock(mu);
    auto& slot = plans[n];
    if (!slot) slot = std::make_unique<RealFftPlan>(n);
    return *slot;
  }

 private:
  int n_;
  fftw_plan plan_;
};

struct FftwBuffers {
  double* in;
  fftw_complex* out;
  explicit FftwBuffers(int n)
      : in(fftw_alloc_real(std::size_t(n))), out(fftw_alloc_complex(std::size_t(n / 2 + 1))) {}
  ~FftwBuffers() {
    fftw_free(in);
    fftw_free(out);
  }
  FftwBuffers(const FftwBuffers&) = delete;
  FftwBuffers& operator=(const FftwBuffers&) = delete;
};

constexpr double kMelFloor = 1e-5;
constexpr double kMinDb = -100.0;
constexpr double kMaxDb = 20.0;

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> periodic_hann(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

Spectrogram stft(const Waveform& w, const StftConfig& config) {
  if (config.n_fft <= 0 || config.hop <= 0) throw ConfigError("stft: n_fft and hop must be positive");
  std::vector<double> x = w.samples;
  if (x.size() < std::size_t(config.n_fft)) {
    x.resize(std::max<std::size_t>(std::size_t(kSampleRate), std::size_t(config.n_fft)), 0.0);
  }
  const std::size_t n_fft = std::size_t(config.n_fft);
  const std::size_t frames = (x.size() - n_fft) / std::size_t(config.hop) + 1;
  Spectrogram s;
  s.bins = n_fft / 2 + 1;
  s.frames = frames;
  s.magnitudes.assign(s.bins * frames, 0.0);

  const auto window = periodic_hann(config.n_fft);
  const auto& plan = RealFftPlan::get(config.n_fft);
  FftwBuffers buf(config.n_fft);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* frame = x.data() + t * std::size_t(config.hop);
    for (std::size_t i = 0; i < n_fft; ++i) buf.in[i] = frame[i] * window[i];
    plan.execute(buf.in, buf.out);
    for (std::size_t k = 0; k < s.bins; ++k) {
      s.magnitudes[k * frames + t] = std::hypot(buf.out[k][0], buf.out[k][1]);
    }
  }
  return s;
}

MelFilterbank mel_filterbank(const MelConfig& config) {
  if (config.n_mels <= 0 || config.n_fft <= 0 || config.sample_rate <= 0) {
    throw ConfigError("mel_filterbank: sizes must be positive");
  }
  if (!(config.fmin >= 0.0 && config.fmin < config.fmax &&
        config.fmax <= config.sample_rate / 2.0)) {
    throw ConfigError("mel_filterbank: need 0 <= fmin < fmax <= sr/2, got fmin=" +
                      std::to_string(config.fmin) + " fmax=" + std::to_string(config.fmax));
  }
  MelFilterbank fb;
  fb.mels = std::size_t(config.n_mels);
  fb.bins = std::size_t(config.n_fft / 2 + 1);
  fb.weights.assign(fb.mels * fb.bins, 0.0);

  const double lo = hz_to_mel(config.fmin);
  const double hi = hz_to_mel(config.fmax);
  std::vector<double> edges(fb.mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * double(i) / double(fb.mels + 1));
  }
  fb.center_hz.assign(edges.begin() + 1, edges.end() - 1);

  for (std::size_t m = 0; m < fb.mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    double peak = 0.0;
    for (std::size_t k = 0; k < fb.bins; ++k) {
      const double f = double(k) * config.sample_rate / config.n_fft;
      double v = 0.0;
      if (f > left && f <= center) {
        v = (f - left) / (center - left);
      } else if (f > center && f < right) {
        v = (right - f) / (right - center);
      }
      fb.weights[m * fb.bins + k] = v;
      peak = std::max(peak, v);
    }
    if (peak <= 0.0) {
      throw ConfigError("mel_filterbank: filter " + std::to_string(m) +
                        " covers no FFT bin; reduce n_mels or increase n_fft");
    }
    for (std::size_t k = 0; k < fb.bins; ++k) fb.weights[m * fb.bins + k] /= peak;
  }
  return fb;
}

FeatureGrid log_mel(const Waveform& w) {
  if (w.sample_rate != kSampleRate) {
    throw FormatError("log_mel: sample_rate " + std::to_string(w.sample_rate) + " != 16000");
  }
  Waveform clip;
  clip.samples.assign(w.samples.begin(),
                      w.samples.begin() + std::min<std::size_t>(w.samples.size(), kSampleRate));
  clip.samples.resize(kSampleRate, 0.0);

  static const MelFilterbank fb = mel_filterbank();
  const Spectrogram spec = stft(clip);

  std::vector<float> grid(FeatureGrid::kSize, 0.0f);
  const std::size_t frames = std::min(spec.frames, FeatureGrid::kFrames);
  for (std::size_t m = 0; m < fb.mels; ++m) {
    for (std::size_t t = 0; t < frames; ++t) {
      double e = 0.0;
      for (std::size_t k = 0; k < fb.bins; ++k) {
        const double wgt = fb.weights[m * fb.bins + k];
        if (wgt != 0.0) e += wgt * spec.magnitudes[k * spec.frames + t];
      }
      const double db = std::clamp(20.0 * std::log10(e + kMelFloor), kMinDb, kMaxDb);
      grid[m * FeatureGrid::kFrames + t] = to_feature_range((db - kMinDb) / (kMaxDb - kMinDb));
    }
  }
  return FeatureGrid(std::move(grid));
}

}  // namespace amx
