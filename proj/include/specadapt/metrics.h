// Copyright 2026 The specadapt Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Evaluation: WER with full edit-distance accounting, spectral distance,
// and the training-overhead benchmark comparing the audio path against the
// on-the-fly text paths.

#ifndef SPECADAPT_METRICS_H_
#define SPECADAPT_METRICS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "specadapt/asr.h"
#include "specadapt/enhancer.h"
#include "specadapt/mel-frontend.h"
#include "specadapt/synthlang.h"

namespace specadapt {

struct WerCounts {
  std::int64_t substitutions = 0;
  std::int64_t deletions = 0;
  std::int64_t insertions = 0;
  std::int64_t n_ref_tokens = 0;

  std::int64_t errors() const { return substitutions + deletions + insertions; }
  double wer() const {
    return n_ref_tokens > 0 ? static_cast<double>(errors()) / static_cast<double>(n_ref_tokens)
                            : 0.0;
  }
};

struct UtteranceWer {
  std::string id;
  WerCounts counts;
};

struct WerReport {
  WerCounts total;
  std::vector<UtteranceWer> utterances;

  std::string ToJson() const;
};

// Minimum-edit-distance alignment; ties prefer substitutions over
// insertion+deletion pairs. Reference must be non-empty.
WerCounts Wer(const std::vector<int>& ref, const std::vector<int>& hyp);

// Greedy-decodes every manifest entry (stored spectrograms or WAV) and
// aggregates counts over the corpus; never invokes the synthesizer.
WerReport Evaluate(const std::string& manifest_path, AsrParams& asr,
                   const MelConfig& mel_config, int vocab);

// Root-mean-square difference of log-mel values.
double LogSpectralDistance(const MelSpectrogram& a, const MelSpectrogram& b);

struct OverheadReport {
  double audio_mean_s = 0, audio_std_s = 0;
  double text_mean_s = 0, text_std_s = 0;
  double enhancer_mean_s = 0, enhancer_std_s = 0;
  double factor_audio = 1.0;
  double factor_text = 0;
  double factor_enhancer = 0;
  int n_batches = 0;
  int warmup_batches = 0;
  std::string host;

  std::string ToJson() const;
};

struct BenchmarkOptions {
  int n_batches = 20;
  int warmup_batches = 3;
  int batch_size = 8;
  std::uint64_t seed = 0;
};

// Times one training batch (augment + forward + backward + update) on the
// same utterances through three input paths: stored spectrograms, on-the-fly
// blurry synthesis, and synthesis plus enhancement.
OverheadReport BenchmarkOverhead(const SynthLang& synth,
                                 const EnhancerParams& enhancer,
                                 const AsrConfig& asr_config,
                                 const SpecAugmentPolicy& specaugment,
                                 const BenchmarkOptions& options);

}  // namespace specadapt

#endif  // SPECADAPT_METRICS_H_
