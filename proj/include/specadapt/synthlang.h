// Copyright 2026 The specadapt Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Deterministic synthetic language used as the text-to-mel front-end: each
// token has a fixed spectro-temporal stamp; "real" renders add harmonic
// detail and noise, "blurry" renders smooth the same layout with a Gaussian
// kernel the way regression-trained synthesizers do. Token pairs (2j, 2j+1)
// are acoustic near-twins, so recognition under noise leans on the language
// statistics -- the property the text-only adaptation experiments exercise.

#ifndef SPECADAPT_SYNTHLANG_H_
#define SPECADAPT_SYNTHLANG_H_

#include <cstdint>
#include <string>
#include <vector>

#include "specadapt/mel-frontend.h"
#include "specadapt/tensor.h"

namespace specadapt {

struct SynthLangConfig {
  int vocab = 24;  // even; tokens (2j, 2j+1) are near-twins
  int base_frames = 8;
  int n_mels = 80;
  double duration_jitter = 0.25;   // +-25% per token
  double detail_amp = 0.25;        // harmonic fine-detail amplitude
  double noise_sigma = 0.55;       // additive log-domain noise
  double blur_sigma_freq = 3.0;    // blurry-render Gaussian widths
  double blur_sigma_time = 1.5;
  int twin_offset_bins = 3;        // upper-band shift separating twins
  int max_pitch_shift = 2;         // speaker pitch range, in mel bins
  double min_energy_scale = 0.5;
  double max_energy_scale = 2.0;
  double max_formant_tilt = 0.5;
  std::uint64_t pattern_seed = 7;

  void Validate() const;
  std::uint64_t Hash() const;
};

struct SpeakerEmbedding {
  std::vector<double> vec;  // raw embedding, d_spk = 3
  int pitch_shift_bins = 0;
  double energy_scale = 1.0;
  double formant_tilt = 0.0;
};

SpeakerEmbedding IdentitySpeaker();

struct DomainGrammar {
  Tensor transition;  // [V, V], row-stochastic
  Tensor start;       // [V], stochastic
  int min_len = 3;
  int max_len = 8;

  void Validate() const;
};

// Token id <-> syllable text. Twins share a consonant: "ba"/"bi", ...
std::string TokenToSyllable(int id);
std::string TokensToText(const std::vector<int>& tokens);
std::vector<int> TextToTokens(const std::string& text, int vocab);

class SynthLang {
 public:
  explicit SynthLang(const SynthLangConfig& config);

  const SynthLangConfig& config() const { return config_; }
  const Tensor& pattern(int token) const;
  double pattern_floor() const { return kPatternFloor; }

  SpeakerEmbedding SampleSpeaker(std::uint64_t seed) const;

  // Fine-detail + noise render ("recorded speech").
  MelSpectrogram RenderReal(const std::vector<int>& tokens,
                            const SpeakerEmbedding& speaker,
                            std::uint64_t seed) const;
  // Gaussian-smoothed render of the same token layout ("synthesized").
  // Shares the duration stream with RenderReal, so shapes always agree.
  MelSpectrogram RenderBlurry(const std::vector<int>& tokens,
                              const SpeakerEmbedding& speaker,
                              std::uint64_t seed) const;

  // Per-token realized frame counts for a render seed.
  std::vector<int> RealizedDurations(const std::vector<int>& tokens,
                                     std::uint64_t seed) const;

  std::uint64_t ParamsHash() const;

  static constexpr double kPatternFloor = -8.0;
  static constexpr double kPatternPeak = 0.0;

 private:
  Tensor RenderBase(const std::vector<int>& tokens,
                    const SpeakerEmbedding& speaker, std::uint64_t seed) const;

  SynthLangConfig config_;
  std::vector<Tensor> patterns_;
  MelConfig mel_config_;
};

// Domain grammars share pair-level structure but prefer opposite twin
// members (A mostly even tokens, B mostly odd).
DomainGrammar MakeDomainGrammar(const SynthLangConfig& config, char domain,
                                std::uint64_t seed, int min_len = 3,
                                int max_len = 8);

std::vector<int> SampleText(const DomainGrammar& grammar, std::uint64_t seed);

struct CorpusOptions {
  int n = 100;
  bool with_audio = true;
  bool paired = false;  // also store the blurry render alongside the real one
  char domain = 'A';
  std::uint64_t seed = 0;
};

// Writes <out_dir>/manifest.jsonl (and mel files under <out_dir>/mels when
// with_audio). Returns the manifest path. Entry i derives every random
// stream from hash(seed, i), so output is schedule-independent.
std::string GenerateCorpus(const SynthLang& synth, const DomainGrammar& grammar,
                           const CorpusOptions& options,
                           const std::string& out_dir);

// <id>.real.melbin -> <id>.blurry.melbin.
std::string BlurryPathFor(const std::string& real_path);

}  // namespace specadapt

#endif  // SPECADAPT_SYNTHLANG_H_
