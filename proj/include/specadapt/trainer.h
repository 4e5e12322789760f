// Copyright 2026 The specadapt Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Hybrid training loop: interleaved epochs of real-audio batches and
// text batches synthesized on the fly through the frozen renderer (and
// optional enhancer), driving CTC training of the recognizer.

#ifndef SPECADAPT_TRAINER_H_
#define SPECADAPT_TRAINER_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "specadapt/asr.h"
#include "specadapt/enhancer.h"
#include "specadapt/mel-frontend.h"
#include "specadapt/synthlang.h"

namespace specadapt {

struct TrainPlan {
  std::string audio_manifest;  // needed when ratio.first > 0
  std::string text_manifest;   // needed when ratio.second > 0
  std::pair<int, int> ratio{1, 0};  // audio : text batches per epoch
  int batch_size = 8;
  int total_steps = 1000;
  double lr_max = 1e-4;
  double warmup_frac = 0.2;
  double weight_decay = 1e-3;
  double grad_clip = 1.0;  // applied to enhancer-fed text batches
  std::uint64_t seed = 0;
  bool use_enhancer = false;
  SpecAugmentPolicy specaugment;
  int checkpoint_every = 0;  // 0 = only the caller's final save

  void Validate() const;
};

enum class BatchKind { kAudio, kText };

struct BatchPlanItem {
  BatchKind kind = BatchKind::kAudio;
  std::vector<int> sample_ids;
  int step_index = 0;
};

// Audio batches partition a shuffled permutation (no replacement); text
// batches draw with replacement. Per epoch the batch counts satisfy the
// ratio within rounding.
std::vector<BatchPlanItem> MakeEpochSchedule(int n_audio, int n_text,
                                             std::pair<int, int> ratio,
                                             int batch_size, std::uint64_t seed);

// Linear ramp to lr_max over warmup_frac of the run, then cosine decay to 0.
double CosineWarmupLr(std::int64_t step, std::int64_t total_steps,
                      double warmup_frac, double lr_max);

// Blurry render per text with a freshly sampled speaker (derived from seed
// and utterance index), enhanced when an enhancer is given.
std::vector<MelSpectrogram> TextBatchToMels(
    const std::vector<std::vector<int>>& texts, const SynthLang& synth,
    const EnhancerParams* enhancer, std::uint64_t seed);

struct TrainLogRow {
  std::int64_t step = 0;
  char kind = 'a';  // 'a' audio, 't' text
  double loss = 0;
  double lr = 0;
};

using CheckpointFn = std::function<void(std::int64_t step, const AsrParams&)>;

// Runs the interleaved schedule for plan.total_steps AdamW steps. The
// renderer and enhancer are never modified. Throws on non-finite loss.
std::vector<TrainLogRow> RunTraining(const TrainPlan& plan, AsrParams& asr,
                                     const SynthLang& synth,
                                     const EnhancerParams* enhancer,
                                     const MelConfig& mel_config,
                                     const CheckpointFn& checkpoint_fn = {});

void WriteTrainLogCsv(const std::string& path, const std::vector<TrainLogRow>& log);

}  // namespace specadapt

#endif  // SPECADAPT_TRAINER_H_
