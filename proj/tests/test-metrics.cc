// Copyright 2026 The specadapt Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <vector>

#include "specadapt/io.h"
#include "specadapt/metrics.h"

using namespace specadapt;

namespace {

// Exhaustive edit-script search: enumerates every alignment, returning the
// set of (S, D, I) triples of minimum total cost.
void EnumerateScripts(const std::vector<int>& ref, const std::vector<int>& hyp,
                      std::size_t i, std::size_t j, int s, int d, int ins,
                      std::set<std::tuple<int, int, int>>& out, int budget) {
  if (s + d + ins > budget) return;
  if (i == ref.size() && j == hyp.size()) {
    out.insert({s, d, ins});
    return;
  }
  if (i < ref.size() && j < hyp.size()) {
    EnumerateScripts(ref, hyp, i + 1, j + 1, s + (ref[i] != hyp[j] ? 1 : 0), d, ins, out, budget);
  }
  if (i < ref.size()) EnumerateScripts(ref, hyp, i + 1, j, s, d + 1, ins, out, budget);
  if (j < hyp.size()) EnumerateScripts(ref, hyp, i, j + 1, s, d, ins + 1, out, budget);
}

std::set<std::tuple<int, int, int>> MinimalScripts(const std::vector<int>& ref,
                                                   const std::vector<int>& hyp) {
  std::set<std::tuple<int, int, int>> all;
  int budget = static_cast<int>(ref.size() + hyp.size());
  EnumerateScripts(ref, hyp, 0, 0, 0, 0, 0, all, budget);
  int best = budget + 1;
  for (const auto& [s, d, i] : all) best = std::min(best, s + d + i);
  std::set<std::tuple<int, int, int>> minimal;
  for (const auto& [s, d, i] : all) {
    if (s + d + i == best) minimal.insert({s, d, i});
  }
  return minimal;
}

MelSpectrogram RandomMel(int L, std::uint64_t seed) {
  MelConfig cfg;
  Tensor t({80, L});
  Rng rng(seed);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.Normal();
  return MakeMelSpectrogram(std::move(t), cfg);
}

}  // namespace

TEST_CASE("wer hand cases") {
  CHECK(Wer({1, 2, 3}, {1, 2, 3}).errors() == 0);
  CHECK(Wer({1, 2, 3}, {1, 2, 3}).wer() == 0.0);

  // "the cat sat" vs "the cat": one deletion.
  auto c = Wer({1, 2, 3}, {1, 2});
  CHECK(c.deletions == 1);
  CHECK(c.substitutions == 0);
  CHECK(c.insertions == 0);
  CHECK(c.wer() == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  // Empty hypothesis: all deletions, WER 1.
  auto e = Wer({1, 2, 3, 4}, {});
  CHECK(e.deletions == 4);
  CHECK(e.wer() == 1.0);

  std::vector<int> empty;
  CHECK_THROWS(Wer(empty, {1}));
}

TEST_CASE("wer ties prefer substitutions over insertion plus deletion") {
  // ref "ab", hyp "ba": two substitutions rather than ins+del.
  auto c = Wer({1, 2}, {2, 1});
  CHECK(c.errors() == 2);
  CHECK(c.substitutions == 2);
  CHECK(c.insertions == 0);
  CHECK(c.deletions == 0);
}

TEST_CASE("wer matches exhaustive edit-script search on random pairs") {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    int rl = rng.UniformInt(1, 6);
    int hl = rng.UniformInt(0, 6);
    std::vector<int> ref, hyp;
    for (int i = 0; i < rl; ++i) ref.push_back(rng.UniformInt(0, 3));
    for (int i = 0; i < hl; ++i) hyp.push_back(rng.UniformInt(0, 3));
    auto counts = Wer(ref, hyp);
    auto minimal = MinimalScripts(ref, hyp);
    auto triple = std::tuple<int, int, int>{static_cast<int>(counts.substitutions),
                                            static_cast<int>(counts.deletions),
                                            static_cast<int>(counts.insertions)};
    // The DP result is a minimal script...
    CHECK(minimal.count(triple) == 1);
    // ...and among minimal scripts it maximizes substitutions.
    int max_subs = 0;
    for (const auto& [s, d, i] : minimal) max_subs = std::max(max_subs, s);
    CHECK(static_cast<int>(counts.substitutions) == max_subs);
  }
}

TEST_CASE("corpus wer aggregates counts, not rates") {
  // Utterance A: 0 errors over 4 tokens; utterance B: 1 error over 2 tokens.
  // Corpus WER = 1/6, not mean(0, 1/2).
  WerReport report;
  auto a = Wer({1, 2, 3, 4}, {1, 2, 3, 4});
  auto b = Wer({1, 2}, {1, 3});
  report.total.substitutions = a.substitutions + b.substitutions;
  report.total.deletions = a.deletions + b.deletions;
  report.total.insertions = a.insertions + b.insertions;
  report.total.n_ref_tokens = a.n_ref_tokens + b.n_ref_tokens;
  CHECK(report.total.wer() == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("log spectral distance basics and pseudometric properties") {
  auto x = RandomMel(30, 3);
  CHECK(LogSpectralDistance(x, x) == 0.0);

  auto shifted = x;
  shifted.values = x.values.Clone();
  for (std::int64_t i = 0; i < shifted.values.numel(); ++i) shifted.values[i] += 1.0;
  CHECK(LogSpectralDistance(shifted, x) == doctest::Approx(1.0).epsilon(1e-12));

  auto y = RandomMel(30, 4);
  auto z = RandomMel(30, 5);
  CHECK(LogSpectralDistance(x, y) == doctest::Approx(LogSpectralDistance(y, x)).epsilon(1e-12));
  CHECK(LogSpectralDistance(x, z) <=
        LogSpectralDistance(x, y) + LogSpectralDistance(y, z) + 1e-12);

  auto small = RandomMel(29, 6);
  CHECK_THROWS(LogSpectralDistance(x, small));
}

TEST_CASE("evaluation is independent of manifest order and exact on an oracle") {
  SynthLangConfig scfg;
  scfg.noise_sigma = 0;
  scfg.detail_amp = 0;
  scfg.duration_jitter = 0;
  SynthLang synth(scfg);
  auto grammar = MakeDomainGrammar(scfg, 'A', 5);
  auto dir = std::filesystem::temp_directory_path() / "specadapt-eval";
  std::filesystem::remove_all(dir);
  CorpusOptions opt;
  opt.n = 6;
  opt.seed = 21;
  auto manifest = GenerateCorpus(synth, grammar, opt, dir.string());

  AsrConfig acfg;
  acfg.d_model = 16;
  acfg.vocab_size = scfg.vocab + 1;
  AsrParams asr = InitAsr(acfg, 7);

  auto r1 = Evaluate(manifest, asr, MelConfig{}, scfg.vocab);
  CHECK(r1.utterances.size() == 6);
  CHECK(r1.total.n_ref_tokens > 0);

  // Permute the manifest: aggregate counts unchanged.
  auto entries = ReadManifest(manifest);
  std::rotate(entries.begin(), entries.begin() + 2, entries.end());
  auto shuffled = (dir / "shuffled.jsonl").string();
  WriteManifest(shuffled, entries);
  auto r2 = Evaluate(shuffled, asr, MelConfig{}, scfg.vocab);
  CHECK(r1.total.substitutions == r2.total.substitutions);
  CHECK(r1.total.deletions == r2.total.deletions);
  CHECK(r1.total.insertions == r2.total.insertions);
  CHECK(r1.total.n_ref_tokens == r2.total.n_ref_tokens);

  // Determinism.
  auto r3 = Evaluate(manifest, asr, MelConfig{}, scfg.vocab);
  CHECK(r1.ToJson() == r3.ToJson());
  std::filesystem::remove_all(dir);
}

TEST_CASE("benchmark reports all three paths with sane factors") {
  SynthLangConfig scfg;
  SynthLang synth(scfg);
  EnhancerConfig ecfg;
  ecfg.latent_dim = 8;
  ecfg.style_depth = 1;
  ecfg.capacity = 2;
  ecfg.max_feature_maps = 16;
  EnhancerParams enh = InitEnhancer(ecfg, 1);

  AsrConfig acfg;
  acfg.d_model = 12;
  acfg.vocab_size = scfg.vocab + 1;

  BenchmarkOptions opt;
  opt.n_batches = 10;
  opt.warmup_batches = 1;
  opt.batch_size = 2;
  auto report = BenchmarkOverhead(synth, enh, acfg, SpecAugmentPolicy{}, opt);
  CHECK(report.audio_mean_s > 0);
  CHECK(report.text_mean_s > 0);
  CHECK(report.enhancer_mean_s > 0);
  CHECK(report.factor_audio == 1.0);
  CHECK(report.factor_text > 0);
  CHECK(report.factor_enhancer >= report.factor_text * 0.5);
  CHECK(report.n_batches == 10);
  CHECK(!report.host.empty());
  CHECK(report.ToJson().find("text_enhancer") != std::string::npos);

  BenchmarkOptions bad;
  bad.n_batches = 5;
  CHECK_THROWS_AS(BenchmarkOverhead(synth, enh, acfg, SpecAugmentPolicy{}, bad), ConfigError);
}
