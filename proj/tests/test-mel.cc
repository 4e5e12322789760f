// Copyright 2026 The specadapt Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "specadapt/common.h"
#include "specadapt/mel-frontend.h"

using namespace specadapt;

namespace {

// Independent mel-scale oracle, coded from the HTK formula rather than the
// library helpers.
double OracleHzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double OracleMelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelConfig DefaultConfig() { return MelConfig{}; }

}  // namespace

TEST_CASE("filterbank rows have contiguous support covering the band") {
  MelConfig cfg = DefaultConfig();
  Tensor fb = BuildMelFilterbank(cfg);
  REQUIRE(fb.shape() == std::vector<int>{80, 257});

  const double hz_per_bin = cfg.sample_rate_hz / static_cast<double>(cfg.n_fft);
  std::set<int> covered;
  for (int m = 0; m < 80; ++m) {
    int first = -1, last = -1;
    double sum = 0;
    for (int k = 0; k < 257; ++k) {
      double v = fb.At(m, k);
      CHECK(v >= 0.0);
      sum += v;
      if (v > 0) {
        if (first < 0) first = k;
        last = k;
        covered.insert(k);
      }
    }
    CHECK(sum > 0.0);
    // Contiguity: no zero gaps inside [first, last].
    for (int k = first; k <= last; ++k) CHECK(fb.At(m, k) > 0.0);
    // Support within (f_min, f_max).
    CHECK(first * hz_per_bin >= cfg.f_min_hz);
    CHECK(last * hz_per_bin <= cfg.f_max_hz);
    // Unimodal: rises then falls.
    int peak = first;
    for (int k = first; k <= last; ++k) {
      if (fb.At(m, k) > fb.At(m, peak)) peak = k;
    }
    for (int k = first; k < peak; ++k) CHECK(fb.At(m, k) <= fb.At(m, k + 1) + 1e-12);
    for (int k = peak; k < last; ++k) CHECK(fb.At(m, k) >= fb.At(m, k + 1) - 1e-12);
  }
  // Union of supports reaches up to the bin of 8 kHz.
  int nyq8k = static_cast<int>(8000.0 / hz_per_bin);
  int max_covered = *covered.rbegin();
  CHECK(max_covered >= nyq8k - 2);
}

TEST_CASE("single-band filterbank spans the range") {
  MelConfig cfg = DefaultConfig();
  cfg.n_mels = 1;
  Tensor fb = BuildMelFilterbank(cfg);
  REQUIRE(fb.shape() == std::vector<int>{1, 257});
  double peak = 0;
  for (int k = 0; k < 257; ++k) peak = std::max(peak, fb.At(0, k));
  CHECK(peak > 0.0);
}

TEST_CASE("filter centers increase and match the mel-scale oracle") {
  MelConfig cfg = DefaultConfig();
  auto centers = MelFilterCenters(cfg);
  double mel_lo = OracleHzToMel(cfg.f_min_hz);
  double mel_hi = OracleHzToMel(cfg.f_max_hz);
  for (int m = 0; m < cfg.n_mels; ++m) {
    double expect = OracleMelToHz(mel_lo + (mel_hi - mel_lo) * (m + 1.0) / (cfg.n_mels + 1));
    CHECK(centers[static_cast<std::size_t>(m)] == doctest::Approx(expect).epsilon(1e-9));
    if (m > 0) CHECK(centers[static_cast<std::size_t>(m)] > centers[static_cast<std::size_t>(m) - 1]);
    // hz -> mel -> hz round-trip stays put.
    CHECK(OracleMelToHz(OracleHzToMel(centers[static_cast<std::size_t>(m)])) ==
          doctest::Approx(centers[static_cast<std::size_t>(m)]).epsilon(1e-9));
  }
}

TEST_CASE("rejects f_max beyond Nyquist") {
  MelConfig cfg = DefaultConfig();
  cfg.f_max_hz = 9000.0;
  CHECK_THROWS_AS(BuildMelFilterbank(cfg), ConfigError);
}

TEST_CASE("frame count is ceil(n / hop)") {
  MelConfig cfg = DefaultConfig();
  std::vector<double> audio(16000, 0.0);
  for (std::size_t i = 0; i < audio.size(); ++i) {
    audio[i] = 0.1 * std::sin(2 * M_PI * 440.0 * static_cast<double>(i) / 16000.0);
  }
  auto mel = ComputeLogMel(audio, cfg);
  CHECK(mel.frames() == 100);
  CHECK(mel.bands() == 80);

  std::vector<double> odd(16001, 0.01);
  CHECK(ComputeLogMel(odd, cfg).frames() == 101);
  std::vector<double> shorter(15999, 0.01);
  CHECK(ComputeLogMel(shorter, cfg).frames() == 100);
}

TEST_CASE("silence hits the log floor everywhere") {
  MelConfig cfg = DefaultConfig();
  std::vector<double> audio(8000, 0.0);
  auto mel = ComputeLogMel(audio, cfg);
  double floor_log = std::log(cfg.log_floor);
  for (std::int64_t i = 0; i < mel.values.numel(); ++i) {
    CHECK(mel.values[i] == floor_log);
  }
}

TEST_CASE("pure tone peaks at the filter nearest its frequency") {
  MelConfig cfg = DefaultConfig();
  const double f0 = 1000.0;
  std::vector<double> audio(16000);
  for (std::size_t i = 0; i < audio.size(); ++i) {
    audio[i] = 0.5 * std::sin(2 * M_PI * f0 * static_cast<double>(i) / 16000.0);
  }
  auto mel = ComputeLogMel(audio, cfg);
  auto centers = MelFilterCenters(cfg);
  int nearest = 0;
  for (int m = 1; m < cfg.n_mels; ++m) {
    if (std::fabs(centers[static_cast<std::size_t>(m)] - f0) <
        std::fabs(centers[static_cast<std::size_t>(nearest)] - f0)) {
      nearest = m;
    }
  }
  // Interior frames (border frames see reflected, tapered windows).
  for (int t = 10; t < mel.frames() - 10; ++t) {
    int argmax = 0;
    for (int m = 1; m < cfg.n_mels; ++m) {
      if (mel.values.At(m, t) > mel.values.At(argmax, t)) argmax = m;
    }
    CHECK(std::abs(argmax - nearest) <= 1);
  }
}

TEST_CASE("longer audio never yields fewer frames") {
  MelConfig cfg = DefaultConfig();
  Rng rng(99);
  int prev_frames = 0;
  for (int n = 400; n <= 4000; n += 317) {
    std::vector<double> audio(static_cast<std::size_t>(n));
    for (auto& s : audio) s = 0.1 * rng.Normal();
    int frames = ComputeLogMel(audio, cfg).frames();
    CHECK(frames >= prev_frames);
    prev_frames = frames;
  }
}

TEST_CASE("all outputs respect the log floor") {
  MelConfig cfg = DefaultConfig();
  Rng rng(7);
  std::vector<double> audio(5000);
  for (auto& s : audio) s = rng.Normal();
  auto mel = ComputeLogMel(audio, cfg);
  double floor_log = std::log(cfg.log_floor);
  for (std::int64_t i = 0; i < mel.values.numel(); ++i) {
    CHECK(mel.values[i] >= floor_log);
  }
}

TEST_CASE("empty or non-finite audio is rejected") {
  MelConfig cfg = DefaultConfig();
  std::vector<double> empty;
  CHECK_THROWS(ComputeLogMel(empty, cfg));
  std::vector<double> bad(1000, 0.0);
  bad[500] = std::nan("");
  CHECK_THROWS(ComputeLogMel(bad, cfg));
}

namespace {
MelSpectrogram RandomMel(int n_mels, int L, std::uint64_t seed) {
  MelConfig cfg;
  cfg.n_mels = n_mels;
  Tensor t({n_mels, L});
  Rng rng(seed);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.Normal();
  return MakeMelSpectrogram(std::move(t), cfg);
}
}  // namespace

TEST_CASE("no-op SpecAugment policy returns identical values") {
  auto mel = RandomMel(80, 120, 5);
  SpecAugmentPolicy p;
  p.n_freq_masks = 0;
  p.n_time_masks = 0;
  auto out = SpecAugment(mel, p, 123);
  for (std::int64_t i = 0; i < mel.values.numel(); ++i) {
    CHECK(out.values[i] == mel.values[i]);
  }
}

TEST_CASE("single frequency mask is one contiguous band, rest untouched") {
  auto mel = RandomMel(80, 60, 6);
  SpecAugmentPolicy p;
  p.n_freq_masks = 1;
  p.max_freq_width = 10;
  p.n_time_masks = 0;
  // Pick a seed whose drawn width is nonzero.
  for (std::uint64_t seed = 0;; ++seed) {
    auto out = SpecAugment(mel, p, seed);
    std::vector<int> changed_rows;
    for (int m = 0; m < 80; ++m) {
      bool changed = false;
      for (int t = 0; t < 60; ++t) {
        if (out.values.At(m, t) != mel.values.At(m, t)) changed = true;
      }
      if (changed) changed_rows.push_back(m);
    }
    if (changed_rows.empty()) continue;  // width drew zero; try next seed
    CHECK(changed_rows.size() <= 10);
    for (std::size_t i = 1; i < changed_rows.size(); ++i) {
      CHECK(changed_rows[i] == changed_rows[i - 1] + 1);
    }
    // Masked rows are fully filled with zeros.
    for (int m : changed_rows) {
      for (int t = 0; t < 60; ++t) CHECK(out.values.At(m, t) == 0.0);
    }
    break;
  }
}

TEST_CASE("SpecAugment is deterministic given the seed") {
  auto mel = RandomMel(80, 200, 8);
  SpecAugmentPolicy p;
  auto a = SpecAugment(mel, p, 42);
  auto b = SpecAugment(mel, p, 42);
  for (std::int64_t i = 0; i < a.values.numel(); ++i) {
    CHECK(a.values[i] == b.values[i]);
  }
}

TEST_CASE("SpecAugment changes at most the policy-bounded cell count") {
  auto mel = RandomMel(80, 100, 9);
  SpecAugmentPolicy p;
  p.n_freq_masks = 2;
  p.max_freq_width = 7;
  p.n_time_masks = 2;
  p.max_time_width = 9;
  p.max_time_frac = 1.0;
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    auto out = SpecAugment(mel, p, seed);
    std::int64_t changed = 0;
    for (std::int64_t i = 0; i < mel.values.numel(); ++i) {
      if (out.values[i] != mel.values[i]) ++changed;
    }
    CHECK(changed <= 2 * 7 * 100 + 2 * 9 * 80);
  }
}
