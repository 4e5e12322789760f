// Copyright 2026 The specadapt Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// PCM -> log-mel spectrogram front-end and SpecAugment masking.

#ifndef SPECADAPT_MEL_FRONTEND_H_
#define SPECADAPT_MEL_FRONTEND_H_

#include <cstdint>
#include <span>
#include <vector>

#include "specadapt/common.h"
#include "specadapt/tensor.h"

namespace specadapt {

struct MelConfig {
  int sample_rate_hz = 16000;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int n_fft = 512;
  int n_mels = 80;
  double f_min_hz = 0.0;
  double f_max_hz = 8000.0;
  double log_floor = 1e-5;

  int WindowSamples() const;
  int HopSamples() const;
  void Validate() const;  // throws ConfigError naming the offending field
  std::uint64_t Hash() const;
  bool operator==(const MelConfig&) const = default;
};

struct MelSpectrogram {
  Tensor values;  // [n_mels, L], log energies
  MelConfig config;

  int bands() const { return values.defined() ? values.dim(0) : 0; }
  int frames() const { return values.defined() ? values.dim(1) : 0; }
};

MelSpectrogram MakeMelSpectrogram(Tensor values, const MelConfig& config);

// HTK mel scale.
double HzToMel(double hz);
double MelToHz(double mel);

// Triangular filter matrix [n_mels, n_fft/2 + 1]. Rows are unimodal with
// contiguous support inside (f_min, f_max) and positive sum.
Tensor BuildMelFilterbank(const MelConfig& config);

// Center frequencies (Hz) of each filter, increasing in the band index.
std::vector<double> MelFilterCenters(const MelConfig& config);

// STFT power spectrum -> mel -> log with flooring. Frames are centered at
// t*hop with reflective padding, so L = ceil(n_samples / hop).
MelSpectrogram ComputeLogMel(std::span<const double> audio, const MelConfig& config);

struct SpecAugmentPolicy {
  int n_freq_masks = 2;
  int max_freq_width = 27;
  int n_time_masks = 2;
  int max_time_width = 10;
  // Cap on time-mask width as a fraction of L, applied on top of
  // max_time_width (mirrors the usual adaptive policy).
  double max_time_frac = 0.05;
  enum class Fill { kZero, kMean } fill = Fill::kZero;

  void Validate() const;
};

// Masks up to n_freq_masks frequency bands and n_time_masks time spans with
// the fill value; all other cells are bit-identical to the input.
MelSpectrogram SpecAugment(const MelSpectrogram& mel,
                           const SpecAugmentPolicy& policy, std::uint64_t seed);

}  // namespace specadapt

#endif  // SPECADAPT_MEL_FRONTEND_H_
