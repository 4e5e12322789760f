// Copyright 2026 The specadapt Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "specadapt/trainer.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "specadapt/io.h"

namespace specadapt {

namespace a = specadapt::ad;

void TrainPlan::Validate() const {
  if (ratio.first < 0 || ratio.second < 0 || (ratio.first == 0 && ratio.second == 0)) {
    throw ConfigError("train.ratio components must be >= 0 and not both 0");
  }
  if (ratio.first > 0 && audio_manifest.empty()) {
    throw ConfigError("train.audio_manifest required for a nonzero audio ratio");
  }
  if (ratio.second > 0 && text_manifest.empty()) {
    throw ConfigError("train.text_manifest required for a nonzero text ratio");
  }
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (total_steps < 1) throw ConfigError("train.total_steps must be >= 1");
  if (warmup_frac < 0 || warmup_frac > 1) {
    throw ConfigError("train.warmup_frac must be in [0, 1]");
  }
  if (lr_max <= 0) throw ConfigError("train.lr_max must be positive");
  if (weight_decay < 0) throw ConfigError("train.weight_decay must be >= 0");
  specaugment.Validate();
}

std::vector<BatchPlanItem> MakeEpochSchedule(int n_audio, int n_text,
                                             std::pair<int, int> ratio,
                                             int batch_size, std::uint64_t seed) {
  if (ratio.first < 0 || ratio.second < 0 || (ratio.first == 0 && ratio.second == 0)) {
    throw ConfigError("schedule ratio components must be >= 0 and not both 0");
  }
  if (ratio.first > 0 && n_audio < batch_size) {
    throw ConfigError("audio manifest smaller than one batch");
  }
  if (ratio.second > 0 && n_text < 1) {
    throw ConfigError("text manifest is empty");
  }
  int audio_batches = ratio.first > 0 ? n_audio / batch_size : 0;
  int text_batches;
  if (ratio.first > 0) {
    text_batches = ratio.second > 0
                       ? static_cast<int>(std::llround(
                             static_cast<double>(audio_batches) * ratio.second / ratio.first))
                       : 0;
  } else {
    text_batches = std::max(1, n_text / batch_size);
  }

  Rng rng(MixSeed(seed, 0x5c4e));
  // Audio epoch: shuffled permutation, chunked without replacement.
  std::vector<int> audio_ids(static_cast<std::size_t>(n_audio));
  for (int i = 0; i < n_audio; ++i) audio_ids[static_cast<std::size_t>(i)] = i;
  for (int i = n_audio - 1; i > 0; --i) {
    std::swap(audio_ids[static_cast<std::size_t>(i)],
              audio_ids[static_cast<std::size_t>(rng.UniformInt(0, i))]);
  }

  std::vector<BatchPlanItem> items;
  items.reserve(static_cast<std::size_t>(audio_batches + text_batches));
  for (int b = 0; b < audio_batches; ++b) {
    BatchPlanItem item;
    item.kind = BatchKind::kAudio;
    item.sample_ids.assign(audio_ids.begin() + static_cast<std::ptrdiff_t>(b) * batch_size,
                           audio_ids.begin() + static_cast<std::ptrdiff_t>(b + 1) * batch_size);
    items.push_back(std::move(item));
  }
  for (int b = 0; b < text_batches; ++b) {
    BatchPlanItem item;
    item.kind = BatchKind::kText;
    for (int i = 0; i < batch_size; ++i) {
      item.sample_ids.push_back(rng.UniformInt(0, n_text - 1));
    }
    items.push_back(std::move(item));
  }
  // Deterministic interleave.
  for (int i = static_cast<int>(items.size()) - 1; i > 0; --i) {
    std::swap(items[static_cast<std::size_t>(i)],
              items[static_cast<std::size_t>(rng.UniformInt(0, i))]);
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    items[i].step_index = static_cast<int>(i);
  }
  return items;
}

double CosineWarmupLr(std::int64_t step, std::int64_t total_steps,
                      double warmup_frac, double lr_max) {
  if (step < 0 || step > total_steps) {
    throw std::invalid_argument("lr schedule step out of range");
  }
  std::int64_t warmup = static_cast<std::int64_t>(std::llround(warmup_frac * static_cast<double>(total_steps)));
  if (warmup > 0 && step <= warmup) {
    return lr_max * static_cast<double>(step) / static_cast<double>(warmup);
  }
  if (total_steps == warmup) return 0.0;
  double progress = static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
  return lr_max * 0.5 * (1.0 + std::cos(M_PI * progress));
}

std::vector<MelSpectrogram> TextBatchToMels(
    const std::vector<std::vector<int>>& texts, const SynthLang& synth,
    const EnhancerParams* enhancer, std::uint64_t seed) {
  if (texts.empty()) throw std::invalid_argument("text batch is empty");
  std::vector<MelSpectrogram> out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    auto speaker = synth.SampleSpeaker(MixSeed(seed, 2 * i));
    auto blurry = synth.RenderBlurry(texts[i], speaker, MixSeed(seed, 2 * i + 1));
    if (enhancer) {
      out.push_back(Enhance(blurry, MixSeed(seed, 0xE000 + i), *enhancer));
    } else {
      out.push_back(std::move(blurry));
    }
  }
  return out;
}

namespace {

struct AudioEntry {
  std::string path;
  std::vector<int> tokens;
};

}  // namespace

std::vector<TrainLogRow> RunTraining(const TrainPlan& plan, AsrParams& asr,
                                     const SynthLang& synth,
                                     const EnhancerParams* enhancer,
                                     const MelConfig& mel_config,
                                     const CheckpointFn& checkpoint_fn) {
  plan.Validate();
  const int vocab = synth.config().vocab;

  std::vector<AudioEntry> audio_entries;
  if (plan.ratio.first > 0) {
    for (const auto& e : ReadManifest(plan.audio_manifest)) {
      if (!e.audio_path) {
        throw ConfigError("train.audio_manifest entry " + e.id + " has no audio_path");
      }
      audio_entries.push_back({*e.audio_path, TextToTokens(e.text, vocab)});
    }
  }
  std::vector<std::vector<int>> text_entries;
  if (plan.ratio.second > 0) {
    for (const auto& e : ReadManifest(plan.text_manifest)) {
      text_entries.push_back(TextToTokens(e.text, vocab));
    }
  }

  std::unordered_map<std::string, MelSpectrogram> mel_cache;
  auto load_mel = [&](const std::string& path) -> const MelSpectrogram& {
    auto it = mel_cache.find(path);
    if (it == mel_cache.end()) {
      it = mel_cache.emplace(path, ReadMelBin(path, mel_config)).first;
    }
    return it->second;
  };

  Adam opt({0.9, 0.999, 1e-8, plan.weight_decay});
  std::vector<TrainLogRow> log;
  log.reserve(static_cast<std::size_t>(plan.total_steps));

  std::int64_t step = 0;
  std::uint64_t epoch = 0;
  while (step < plan.total_steps) {
    auto schedule = MakeEpochSchedule(static_cast<int>(audio_entries.size()),
                                      static_cast<int>(text_entries.size()),
                                      plan.ratio, plan.batch_size,
                                      MixSeed(plan.seed, epoch));
    ++epoch;
    for (const auto& item : schedule) {
      if (step >= plan.total_steps) break;
      ++step;

      std::vector<MelSpectrogram> mels;
      std::vector<std::vector<int>> targets;
      if (item.kind == BatchKind::kAudio) {
        for (int id : item.sample_ids) {
          const auto& entry = audio_entries[static_cast<std::size_t>(id)];
          mels.push_back(load_mel(entry.path));
          targets.push_back(entry.tokens);
        }
      } else {
        for (int id : item.sample_ids) {
          targets.push_back(text_entries[static_cast<std::size_t>(id)]);
        }
        mels = TextBatchToMels(targets, synth, enhancer,
                               MixSeed(MixSeed(plan.seed, 0x7e87), static_cast<std::uint64_t>(step)));
      }
      // SpecAugment on every batch of either kind.
      for (std::size_t i = 0; i < mels.size(); ++i) {
        mels[i] = SpecAugment(mels[i], plan.specaugment,
                              MixSeed(MixSeed(plan.seed, 0x5BA0 + static_cast<std::uint64_t>(step)), i));
      }

      // Padded batch forward; per-sample CTC on the true lengths.
      const AsrConfig& cfg = asr.config;
      int max_t = 0;
      std::vector<int> lengths;
      for (const auto& m : mels) {
        lengths.push_back(m.frames());
        max_t = std::max(max_t, m.frames());
      }
      const int B = static_cast<int>(mels.size());
      Tensor batch({B, cfg.n_mels, max_t});
      for (int b = 0; b < B; ++b) {
        const auto& v = mels[static_cast<std::size_t>(b)].values;
        int L = v.dim(1);
        for (int m = 0; m < cfg.n_mels; ++m) {
          for (int t = 0; t < max_t; ++t) {
            batch.data()[(static_cast<std::int64_t>(b) * cfg.n_mels + m) * max_t + t] =
                v.At(m, std::min(t, L - 1));
          }
        }
      }
      ParamVars pv(asr.params);
      auto get = [&pv](const std::string& n) { return pv[n]; };
      a::Var logits = detail::AsrForward(cfg, get, batch, lengths, AsrMode::kTrain,
                                         &asr.running);
      a::Var loss_sum;
      for (int b = 0; b < B; ++b) {
        int keep = detail::SubsampledLength(cfg, lengths[static_cast<std::size_t>(b)]);
        a::Var sample = a::Reshape(
            a::Slice(a::Slice(logits, 0, b, 1), 1, 0, keep), {keep, cfg.vocab_size});
        a::Var l = detail::CtcLossVar(sample, targets[static_cast<std::size_t>(b)]);
        loss_sum = loss_sum.defined() ? a::Add(loss_sum, l) : l;
      }
      a::Var loss = a::ScalarMul(loss_sum, 1.0 / B);
      double loss_val = loss.value().ScalarValue();
      if (!std::isfinite(loss_val)) {
        throw std::runtime_error("non-finite training loss at step " + std::to_string(step));
      }

      auto grads = a::Grad(loss, pv.vars());
      std::vector<Tensor> gvals;
      gvals.reserve(grads.size());
      for (auto& g : grads) gvals.push_back(g.value());
      if (item.kind == BatchKind::kText && plan.use_enhancer && plan.grad_clip > 0) {
        ClipGlobalNorm(gvals, plan.grad_clip);
      }
      double lr = CosineWarmupLr(step, plan.total_steps, plan.warmup_frac, plan.lr_max);
      opt.Step(asr.params, gvals, lr);

      log.push_back({step, item.kind == BatchKind::kAudio ? 'a' : 't', loss_val, lr});
      if (checkpoint_fn && plan.checkpoint_every > 0 && step % plan.checkpoint_every == 0) {
        checkpoint_fn(step, asr);
      }
    }
  }
  return log;
}

void WriteTrainLogCsv(const std::string& path, const std::vector<TrainLogRow>& log) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write log: " + path);
  os << "step,kind,loss,lr\n";
  os.precision(17);
  for (const auto& row : log) {
    os << row.step << "," << row.kind << "," << row.loss << "," << row.lr << "\n";
  }
}

}  // namespace specadapt
