// Copyright 2026 The specadapt Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "specadapt/io.h"
#include "specadapt/trainer.h"

using namespace specadapt;

namespace {

std::string TempDir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("specadapt-trainer-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

struct Counts {
  int audio = 0;
  int text = 0;
};

Counts CountKinds(const std::vector<BatchPlanItem>& items) {
  Counts c;
  for (const auto& it : items) {
    if (it.kind == BatchKind::kAudio) ++c.audio;
    else ++c.text;
  }
  return c;
}

}  // namespace

TEST_CASE("schedule honors the declared ratio") {
  auto items = MakeEpochSchedule(80, 500, {1, 2}, 8, 3);
  auto c = CountKinds(items);
  CHECK(c.audio == 10);
  CHECK(c.text == 20);
  // Step indices are consecutive.
  for (std::size_t i = 0; i < items.size(); ++i) {
    CHECK(items[i].step_index == static_cast<int>(i));
  }
}

TEST_CASE("pure-audio and pure-text schedules") {
  auto audio_only = MakeEpochSchedule(40, 0, {1, 0}, 8, 4);
  auto ca = CountKinds(audio_only);
  CHECK(ca.audio == 5);
  CHECK(ca.text == 0);

  auto text_only = MakeEpochSchedule(0, 64, {0, 1}, 8, 4);
  auto ct = CountKinds(text_only);
  CHECK(ct.audio == 0);
  CHECK(ct.text == 8);
}

TEST_CASE("audio samples appear at most once per epoch, text with replacement") {
  auto items = MakeEpochSchedule(64, 10, {1, 1}, 8, 5);
  std::map<int, int> audio_seen;
  for (const auto& it : items) {
    if (it.kind != BatchKind::kAudio) continue;
    CHECK(it.sample_ids.size() == 8);
    for (int id : it.sample_ids) {
      CHECK(id >= 0);
      CHECK(id < 64);
      ++audio_seen[id];
    }
  }
  for (auto& [id, n] : audio_seen) CHECK(n == 1);
}

TEST_CASE("schedule ratio exactness across many shapes") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (auto [ra, rt] : {std::pair{1, 1}, {1, 2}, {2, 1}, {1, 3}}) {
      auto items = MakeEpochSchedule(96, 300, {ra, rt}, 8, seed);
      auto c = CountKinds(items);
      CHECK(std::fabs(static_cast<double>(c.text) -
                      static_cast<double>(rt) / ra * c.audio) <= 1.0);
    }
  }
}

TEST_CASE("schedule rejects impossible inputs") {
  CHECK_THROWS_AS(MakeEpochSchedule(4, 10, {1, 1}, 8, 0), ConfigError);
  CHECK_THROWS_AS(MakeEpochSchedule(10, 0, {1, 1}, 8, 0), ConfigError);
  CHECK_THROWS_AS(MakeEpochSchedule(10, 10, {0, 0}, 8, 0), ConfigError);
}

TEST_CASE("cosine warmup learning rate") {
  CHECK(CosineWarmupLr(0, 100, 0.2, 1e-4) == 0.0);
  CHECK(CosineWarmupLr(20, 100, 0.2, 1e-4) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(CosineWarmupLr(100, 100, 0.2, 1e-4) == doctest::Approx(0.0).epsilon(1e-12));
  // Midpoint of the decay phase: half the peak.
  CHECK(CosineWarmupLr(60, 100, 0.2, 1e-4) == doctest::Approx(5e-5).epsilon(1e-9));
  // Ramp is linear.
  CHECK(CosineWarmupLr(10, 100, 0.2, 1e-4) == doctest::Approx(5e-5).epsilon(1e-9));
  CHECK_THROWS(CosineWarmupLr(101, 100, 0.2, 1e-4));
}

TEST_CASE("text batches pass through the renderer untouched without enhancer") {
  SynthLangConfig scfg;
  SynthLang synth(scfg);
  auto grammar = MakeDomainGrammar(scfg, 'A', 5);
  std::vector<std::vector<int>> texts;
  for (std::uint64_t s = 0; s < 4; ++s) texts.push_back(SampleText(grammar, s));

  auto batch = TextBatchToMels(texts, synth, nullptr, 77);
  REQUIRE(batch.size() == 4);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    auto spk = synth.SampleSpeaker(MixSeed(77, 2 * i));
    auto expect = synth.RenderBlurry(texts[i], spk, MixSeed(77, 2 * i + 1));
    REQUIRE(batch[i].values.shape() == expect.values.shape());
    for (std::int64_t k = 0; k < expect.values.numel(); ++k) {
      CHECK(batch[i].values[k] == expect.values[k]);
    }
  }

  // Identity enhancer (zeroed residual projections) changes nothing.
  EnhancerConfig ecfg;
  ecfg.latent_dim = 8;
  ecfg.style_depth = 1;
  ecfg.capacity = 2;
  ecfg.max_feature_maps = 8;
  EnhancerParams enh = InitEnhancer(ecfg, 3);
  for (int i = 0; i < ecfg.n_blocks; ++i) {
    std::string p = "blocks." + std::to_string(i) + ".to_res.";
    for (const char* leaf : {"w", "b"}) {
      Tensor& t = enh.generator.Get(p + leaf);
      for (std::int64_t k = 0; k < t.numel(); ++k) t[k] = 0.0;
    }
  }
  auto with_identity = TextBatchToMels(texts, synth, &enh, 77);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    for (std::int64_t k = 0; k < batch[i].values.numel(); ++k) {
      CHECK(with_identity[i].values[k] == batch[i].values[k]);
    }
  }

  // Determinism.
  auto again = TextBatchToMels(texts, synth, nullptr, 77);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    for (std::int64_t k = 0; k < batch[i].values.numel(); ++k) {
      CHECK(again[i].values[k] == batch[i].values[k]);
    }
  }
}

TEST_CASE("run_training leaves the front-end frozen and logs every step") {
  SynthLangConfig scfg;
  SynthLang synth(scfg);
  auto grammar = MakeDomainGrammar(scfg, 'A', 5);
  auto dir = TempDir("run");
  CorpusOptions opt;
  opt.n = 24;
  opt.seed = 9;
  auto manifest = GenerateCorpus(synth, grammar, opt, dir);

  TrainPlan plan;
  plan.audio_manifest = manifest;
  plan.text_manifest = manifest;
  plan.ratio = {1, 1};
  plan.batch_size = 4;
  plan.total_steps = 6;
  plan.seed = 31;
  plan.specaugment.n_freq_masks = 1;
  plan.specaugment.n_time_masks = 1;

  AsrConfig acfg;
  acfg.d_model = 16;
  acfg.vocab_size = scfg.vocab + 1;
  AsrParams asr = InitAsr(acfg, 2);

  std::uint64_t synth_hash = synth.ParamsHash();
  auto log = RunTraining(plan, asr, synth, nullptr, MelConfig{});
  CHECK(synth.ParamsHash() == synth_hash);
  REQUIRE(log.size() == 6);
  int audio_steps = 0, text_steps = 0;
  for (const auto& row : log) {
    CHECK(std::isfinite(row.loss));
    CHECK(row.lr >= 0);
    if (row.kind == 'a') ++audio_steps;
    if (row.kind == 't') ++text_steps;
  }
  CHECK(audio_steps + text_steps == 6);
  CHECK(text_steps > 0);

  // Reproducibility: identical plan and init give identical loss logs.
  AsrParams asr2 = InitAsr(acfg, 2);
  auto log2 = RunTraining(plan, asr2, synth, nullptr, MelConfig{});
  REQUIRE(log2.size() == log.size());
  for (std::size_t i = 0; i < log.size(); ++i) {
    CHECK(log[i].loss == log2[i].loss);
    CHECK(log[i].kind == log2[i].kind);
  }
  CHECK(asr.Hash() == asr2.Hash());

  // Enhancer hash is untouched by training when present.
  EnhancerConfig ecfg;
  ecfg.latent_dim = 8;
  ecfg.style_depth = 1;
  ecfg.capacity = 2;
  ecfg.max_feature_maps = 8;
  EnhancerParams enh = InitEnhancer(ecfg, 4);
  std::uint64_t enh_hash = enh.Hash();
  plan.use_enhancer = true;
  plan.total_steps = 3;
  AsrParams asr3 = InitAsr(acfg, 2);
  auto log3 = RunTraining(plan, asr3, synth, &enh, MelConfig{});
  CHECK(enh.Hash() == enh_hash);
  CHECK(log3.size() == 3);

  WriteTrainLogCsv(dir + "/log.csv", log);
  std::ifstream is(dir + "/log.csv");
  std::string header;
  std::getline(is, header);
  CHECK(header == "step,kind,loss,lr");
  std::filesystem::remove_all(dir);
}
