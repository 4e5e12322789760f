// Copyright 2026 The specadapt Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "specadapt/mel-frontend.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

namespace specadapt {

namespace {

bool IsPowerOfTwo(int n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 FFT.
void Fft(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * M_PI / static_cast<double>(len);
    std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

// Reflective index (no edge repetition), valid for any i when n >= 2.
std::int64_t ReflectIndex(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  std::int64_t period = 2 * (n - 1);
  std::int64_t m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - m;
}

}  // namespace

int MelConfig::WindowSamples() const {
  return static_cast<int>(std::lround(window_ms * sample_rate_hz / 1000.0));
}

int MelConfig::HopSamples() const {
  return static_cast<int>(std::lround(hop_ms * sample_rate_hz / 1000.0));
}

void MelConfig::Validate() const {
  if (sample_rate_hz <= 0) throw ConfigError("mel.sample_rate_hz must be positive");
  if (n_mels < 1) throw ConfigError("mel.n_mels must be >= 1");
  if (f_max_hz > sample_rate_hz / 2.0) {
    throw ConfigError("mel.f_max_hz exceeds Nyquist");
  }
  if (f_min_hz < 0 || f_min_hz >= f_max_hz) {
    throw ConfigError("mel.f_min_hz must lie in [0, f_max_hz)");
  }
  if (hop_ms <= 0 || hop_ms > window_ms) {
    throw ConfigError("mel.hop_ms must be in (0, window_ms]");
  }
  if (n_fft < WindowSamples()) {
    throw ConfigError("mel.n_fft must cover the window length");
  }
  if (!IsPowerOfTwo(n_fft)) throw ConfigError("mel.n_fft must be a power of two");
  if (log_floor <= 0) throw ConfigError("mel.log_floor must be positive");
}

std::uint64_t MelConfig::Hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](double v) { h = HashBytes(&v, sizeof(v), h); };
  mix(sample_rate_hz);
  mix(window_ms);
  mix(hop_ms);
  mix(n_fft);
  mix(n_mels);
  mix(f_min_hz);
  mix(f_max_hz);
  mix(log_floor);
  return h;
}

MelSpectrogram MakeMelSpectrogram(Tensor values, const MelConfig& config) {
  if (values.ndim() != 2 || values.dim(0) != config.n_mels) {
    throw std::invalid_argument("mel matrix must be [n_mels, L]");
  }
  if (values.dim(1) < 1) throw std::invalid_argument("mel matrix needs L >= 1");
  return MelSpectrogram{std::move(values), config};
}

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double MelToHz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

Tensor BuildMelFilterbank(const MelConfig& config) {
  config.Validate();
  const int n_bins = config.n_fft / 2 + 1;
  const double mel_lo = HzToMel(config.f_min_hz);
  const double mel_hi = HzToMel(config.f_max_hz);
  // n_mels + 2 boundary points; filter m spans (edge[m], edge[m+2]) with its
  // peak at edge[m+1].
  std::vector<double> edges(static_cast<std::size_t>(config.n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                              (config.n_mels + 1);
    edges[i] = MelToHz(mel);
  }
  const double hz_per_bin =
      static_cast<double>(config.sample_rate_hz) / config.n_fft;
  Tensor fb({config.n_mels, n_bins});
  for (int m = 0; m < config.n_mels; ++m) {
    double left = edges[static_cast<std::size_t>(m)];
    double center = edges[static_cast<std::size_t>(m) + 1];
    double right = edges[static_cast<std::size_t>(m) + 2];
    bool any = false;
    for (int k = 0; k < n_bins; ++k) {
      double f = k * hz_per_bin;
      double v = 0.0;
      if (f > left && f < right) {
        v = f <= center ? (f - left) / (center - left)
                        : (right - f) / (right - center);
      }
      fb.At(m, k) = v;
      any = any || v > 0;
    }
    if (!any) {
      // Narrow filter fell between FFT bins; give it the nearest bin so the
      // row keeps a positive sum.
      int k = static_cast<int>(std::lround(center / hz_per_bin));
      k = std::clamp(k, 0, n_bins - 1);
      fb.At(m, k) = 1.0;
    }
  }
  return fb;
}

std::vector<double> MelFilterCenters(const MelConfig& config) {
  const double mel_lo = HzToMel(config.f_min_hz);
  const double mel_hi = HzToMel(config.f_max_hz);
  std::vector<double> centers(static_cast<std::size_t>(config.n_mels));
  for (int m = 0; m < config.n_mels; ++m) {
    double mel = mel_lo + (mel_hi - mel_lo) * (m + 1.0) / (config.n_mels + 1);
    centers[static_cast<std::size_t>(m)] = MelToHz(mel);
  }
  return centers;
}

MelSpectrogram ComputeLogMel(std::span<const double> audio,
                             const MelConfig& config) {
  config.Validate();
  if (audio.empty()) throw std::invalid_argument("audio is empty");
  for (double s : audio) {
    if (!std::isfinite(s)) throw std::invalid_argument("audio contains non-finite samples");
  }
  const int win = config.WindowSamples();
  const int hop = config.HopSamples();
  const std::int64_t n = static_cast<std::int64_t>(audio.size());
  const int frames = static_cast<int>((n + hop - 1) / hop);  // ceil(n / hop)

  std::vector<double> hann(static_cast<std::size_t>(win));
  for (int i = 0; i < win; ++i) {
    hann[static_cast<std::size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * M_PI * i / (win - 1));
  }

  Tensor fb = BuildMelFilterbank(config);
  const int n_bins = config.n_fft / 2 + 1;
  Tensor out({config.n_mels, frames});
  const double floor_log = std::log(config.log_floor);

  std::vector<std::complex<double>> buf(static_cast<std::size_t>(config.n_fft));
  std::vector<double> power(static_cast<std::size_t>(n_bins));
  for (int t = 0; t < frames; ++t) {
    std::int64_t center = static_cast<std::int64_t>(t) * hop;
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
    for (int i = 0; i < win; ++i) {
      std::int64_t idx = ReflectIndex(center - win / 2 + i, n);
      buf[static_cast<std::size_t>(i)] =
          audio[static_cast<std::size_t>(idx)] * hann[static_cast<std::size_t>(i)];
    }
    Fft(buf);
    for (int k = 0; k < n_bins; ++k) {
      power[static_cast<std::size_t>(k)] = std::norm(buf[static_cast<std::size_t>(k)]);
    }
    for (int m = 0; m < config.n_mels; ++m) {
      double e = 0.0;
      for (int k = 0; k < n_bins; ++k) e += fb.At(m, k) * power[static_cast<std::size_t>(k)];
      out.At(m, t) = e > config.log_floor ? std::log(e) : floor_log;
    }
  }
  return MakeMelSpectrogram(std::move(out), config);
}

void SpecAugmentPolicy::Validate() const {
  if (n_freq_masks < 0 || n_time_masks < 0) {
    throw ConfigError("specaugment mask counts must be >= 0");
  }
  if (max_freq_width < 0 || max_time_width < 0) {
    throw ConfigError("specaugment mask widths must be >= 0");
  }
  if (max_time_frac < 0 || max_time_frac > 1) {
    throw ConfigError("specaugment.max_time_frac must be in [0, 1]");
  }
}

MelSpectrogram SpecAugment(const MelSpectrogram& mel,
                           const SpecAugmentPolicy& policy, std::uint64_t seed) {
  policy.Validate();
  const int n_mels = mel.bands();
  const int L = mel.frames();
  Tensor out = mel.values.Clone();
  double fill = 0.0;
  if (policy.fill == SpecAugmentPolicy::Fill::kMean) {
    double s = 0.0;
    for (std::int64_t i = 0; i < out.numel(); ++i) s += out[i];
    fill = s / static_cast<double>(out.numel());
  }
  Rng rng(seed);
  int fmax = std::min(policy.max_freq_width, n_mels);
  for (int i = 0; i < policy.n_freq_masks; ++i) {
    int width = rng.UniformInt(0, fmax);
    int start = rng.UniformInt(0, n_mels - width);
    for (int m = start; m < start + width; ++m) {
      for (int t = 0; t < L; ++t) out.At(m, t) = fill;
    }
  }
  int tmax = std::min(policy.max_time_width,
                      static_cast<int>(policy.max_time_frac * L));
  for (int i = 0; i < policy.n_time_masks; ++i) {
    int width = rng.UniformInt(0, tmax);
    int start = rng.UniformInt(0, L - width);
    for (int t = start; t < start + width; ++t) {
      for (int m = 0; m < n_mels; ++m) out.At(m, t) = fill;
    }
  }
  return MelSpectrogram{std::move(out), mel.config};
}

}  // namespace specadapt
