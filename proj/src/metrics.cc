// Copyright 2026 The specadapt Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "specadapt/metrics.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "specadapt/io.h"
#include "specadapt/trainer.h"

namespace specadapt {

namespace a = specadapt::ad;
using json = nlohmann::json;

WerCounts Wer(const std::vector<int>& ref, const std::vector<int>& hyp) {
  if (ref.empty()) throw std::invalid_argument("wer: empty reference");
  const int n = static_cast<int>(ref.size());
  const int m = static_cast<int>(hyp.size());
  // DP over (errors, -substitutions), compared lexicographically, so among
  // minimum-error alignments the one with the most substitutions wins.
  struct Cell {
    int errors;
    int subs;  // substitutions along the best path
  };
  auto better = [](const Cell& x, const Cell& y) {
    if (x.errors != y.errors) return x.errors < y.errors;
    return x.subs > y.subs;
  };
  std::vector<std::vector<Cell>> dp(static_cast<std::size_t>(n + 1),
                                    std::vector<Cell>(static_cast<std::size_t>(m + 1)));
  std::vector<std::vector<int>> ins_count(static_cast<std::size_t>(n + 1),
                                          std::vector<int>(static_cast<std::size_t>(m + 1), 0));
  for (int i = 0; i <= n; ++i) {
    dp[static_cast<std::size_t>(i)][0] = {i, 0};
  }
  for (int j = 0; j <= m; ++j) {
    dp[0][static_cast<std::size_t>(j)] = {j, 0};
    ins_count[0][static_cast<std::size_t>(j)] = j;
  }
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= m; ++j) {
      bool match = ref[static_cast<std::size_t>(i - 1)] == hyp[static_cast<std::size_t>(j - 1)];
      Cell diag = dp[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j - 1)];
      Cell via_diag{diag.errors + (match ? 0 : 1), diag.subs + (match ? 0 : 1)};
      int ins_diag = ins_count[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j - 1)];
      Cell del = dp[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j)];
      Cell via_del{del.errors + 1, del.subs};
      int ins_del = ins_count[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j)];
      Cell ins = dp[static_cast<std::size_t>(i)][static_cast<std::size_t>(j - 1)];
      Cell via_ins{ins.errors + 1, ins.subs};
      int ins_ins = ins_count[static_cast<std::size_t>(i)][static_cast<std::size_t>(j - 1)] + 1;

      Cell best = via_diag;
      int best_ins = ins_diag;
      if (better(via_del, best)) {
        best = via_del;
        best_ins = ins_del;
      }
      if (better(via_ins, best)) {
        best = via_ins;
        best_ins = ins_ins;
      }
      dp[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = best;
      ins_count[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = best_ins;
    }
  }
  const Cell final_cell = dp[static_cast<std::size_t>(n)][static_cast<std::size_t>(m)];
  WerCounts c;
  c.n_ref_tokens = n;
  c.substitutions = final_cell.subs;
  c.insertions = ins_count[static_cast<std::size_t>(n)][static_cast<std::size_t>(m)];
  c.deletions = final_cell.errors - c.substitutions - c.insertions;
  return c;
}

std::string WerReport::ToJson() const {
  json j;
  j["wer"] = total.wer();
  j["substitutions"] = total.substitutions;
  j["deletions"] = total.deletions;
  j["insertions"] = total.insertions;
  j["n_ref_tokens"] = total.n_ref_tokens;
  json per;
  for (const auto& u : utterances) {
    json uj;
    uj["id"] = u.id;
    uj["wer"] = u.counts.wer();
    uj["substitutions"] = u.counts.substitutions;
    uj["deletions"] = u.counts.deletions;
    uj["insertions"] = u.counts.insertions;
    uj["n_ref_tokens"] = u.counts.n_ref_tokens;
    per.push_back(uj);
  }
  j["utterances"] = per;
  return j.dump(2);
}

WerReport Evaluate(const std::string& manifest_path, AsrParams& asr,
                   const MelConfig& mel_config, int vocab) {
  auto entries = ReadManifest(manifest_path);
  WerReport report;
  for (const auto& e : entries) {
    if (!e.audio_path) {
      throw std::runtime_error("evaluate: manifest entry " + e.id + " has no audio");
    }
    MelSpectrogram mel = [&]() {
      const std::string& p = *e.audio_path;
      if (p.size() >= 4 && p.compare(p.size() - 4, 4, ".wav") == 0) {
        int rate = 0;
        auto samples = ReadWavMono16(p, &rate);
        if (rate != mel_config.sample_rate_hz) {
          throw std::runtime_error("evaluate: sample rate mismatch in " + p);
        }
        return ComputeLogMel(samples, mel_config);
      }
      return ReadMelBin(p, mel_config);
    }();
    Tensor logits = Encode(mel, asr, AsrMode::kEval);
    auto hyp = GreedyCtcDecode(logits);
    auto ref = TextToTokens(e.text, vocab);
    WerCounts counts = Wer(ref, hyp);
    report.total.substitutions += counts.substitutions;
    report.total.deletions += counts.deletions;
    report.total.insertions += counts.insertions;
    report.total.n_ref_tokens += counts.n_ref_tokens;
    report.utterances.push_back({e.id, counts});
  }
  return report;
}

double LogSpectralDistance(const MelSpectrogram& a, const MelSpectrogram& b) {
  if (a.values.shape() != b.values.shape()) {
    throw std::invalid_argument("log_spectral_distance shape mismatch");
  }
  double acc = 0;
  for (std::int64_t i = 0; i < a.values.numel(); ++i) {
    double d = a.values[i] - b.values[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(a.values.numel()));
}

std::string OverheadReport::ToJson() const {
  json j;
  j["audio"] = {{"mean_s", audio_mean_s}, {"std_s", audio_std_s}, {"factor", factor_audio}};
  j["text_blurry"] = {{"mean_s", text_mean_s}, {"std_s", text_std_s}, {"factor", factor_text}};
  j["text_enhancer"] = {{"mean_s", enhancer_mean_s},
                        {"std_s", enhancer_std_s},
                        {"factor", factor_enhancer}};
  j["n_batches"] = n_batches;
  j["warmup_batches"] = warmup_batches;
  j["host"] = host;
  return j.dump(2);
}

namespace {

std::string HostDescriptor() {
  std::string model = "unknown-cpu";
  std::ifstream cpuinfo("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpuinfo, line)) {
    if (line.rfind("model name", 0) == 0) {
      auto pos = line.find(':');
      if (pos != std::string::npos) model = line.substr(pos + 2);
      break;
    }
  }
  return model;
}

struct PathStats {
  double mean = 0, stddev = 0;
};

PathStats Summarize(const std::vector<double>& xs) {
  PathStats s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  double var = 0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(xs.size()));
  return s;
}

}  // namespace

OverheadReport BenchmarkOverhead(const SynthLang& synth,
                                 const EnhancerParams& enhancer,
                                 const AsrConfig& asr_config,
                                 const SpecAugmentPolicy& specaugment,
                                 const BenchmarkOptions& options) {
  if (options.n_batches < 10) {
    throw ConfigError("benchmark.n_batches must be >= 10");
  }
  auto grammar = MakeDomainGrammar(synth.config(), 'A', options.seed);
  // One fixed utterance set; identical batch shapes across all three paths.
  std::vector<std::vector<int>> texts;
  std::vector<SpeakerEmbedding> speakers;
  std::vector<std::uint64_t> render_seeds;
  std::vector<MelSpectrogram> stored;  // audio-path fixture
  for (int i = 0; i < options.batch_size; ++i) {
    std::uint64_t es = MixSeed(options.seed, static_cast<std::uint64_t>(i));
    texts.push_back(SampleText(grammar, MixSeed(es, 1)));
    speakers.push_back(synth.SampleSpeaker(MixSeed(es, 2)));
    render_seeds.push_back(MixSeed(es, 3));
    stored.push_back(synth.RenderReal(texts.back(), speakers.back(), render_seeds.back()));
  }

  auto run_path = [&](int path) {
    AsrParams asr = InitAsr(asr_config, 123);
    Adam opt({0.9, 0.999, 1e-8, 1e-3});
    std::vector<double> times;
    for (int iter = 0; iter < options.warmup_batches + options.n_batches; ++iter) {
      auto t0 = std::chrono::steady_clock::now();
      std::vector<MelSpectrogram> mels;
      if (path == 0) {
        mels = stored;
      } else {
        for (int i = 0; i < options.batch_size; ++i) {
          auto blurry = synth.RenderBlurry(texts[static_cast<std::size_t>(i)],
                                           speakers[static_cast<std::size_t>(i)],
                                           render_seeds[static_cast<std::size_t>(i)]);
          if (path == 2) {
            mels.push_back(Enhance(
                blurry,
                MixSeed(options.seed, 0xE000 + static_cast<std::uint64_t>(iter * 100 + i)),
                enhancer));
          } else {
            mels.push_back(std::move(blurry));
          }
        }
      }
      for (std::size_t i = 0; i < mels.size(); ++i) {
        mels[i] = SpecAugment(mels[i], specaugment,
                              MixSeed(options.seed, static_cast<std::uint64_t>(iter * 100 + static_cast<int>(i))));
      }
      // One training step.
      int max_t = 0;
      std::vector<int> lengths;
      for (const auto& m : mels) {
        lengths.push_back(m.frames());
        max_t = std::max(max_t, m.frames());
      }
      const int B = static_cast<int>(mels.size());
      Tensor batch({B, asr_config.n_mels, max_t});
      for (int b = 0; b < B; ++b) {
        const auto& v = mels[static_cast<std::size_t>(b)].values;
        int L = v.dim(1);
        for (int m = 0; m < asr_config.n_mels; ++m) {
          for (int t = 0; t < max_t; ++t) {
            batch.data()[(static_cast<std::int64_t>(b) * asr_config.n_mels + m) * max_t + t] =
                v.At(m, std::min(t, L - 1));
          }
        }
      }
      ParamVars pv(asr.params);
      auto get = [&pv](const std::string& n) { return pv[n]; };
      a::Var logits = detail::AsrForward(asr_config, get, batch, lengths,
                                         AsrMode::kTrain, &asr.running);
      int tp = logits.value().dim(1);
      (void)tp;
      a::Var loss_sum;
      for (int b = 0; b < B; ++b) {
        int keep = detail::SubsampledLength(asr_config, lengths[static_cast<std::size_t>(b)]);
        a::Var sample = a::Reshape(
            a::Slice(a::Slice(logits, 0, b, 1), 1, 0, keep), {keep, asr_config.vocab_size});
        a::Var l = detail::CtcLossVar(sample, texts[static_cast<std::size_t>(b)]);
        loss_sum = loss_sum.defined() ? a::Add(loss_sum, l) : l;
      }
      a::Var loss = a::ScalarMul(loss_sum, 1.0 / B);
      auto grads = a::Grad(loss, pv.vars());
      std::vector<Tensor> gvals;
      for (auto& g : grads) gvals.push_back(g.value());
      opt.Step(asr.params, gvals, 1e-4);
      auto t1 = std::chrono::steady_clock::now();
      if (iter >= options.warmup_batches) {
        times.push_back(std::chrono::duration<double>(t1 - t0).count());
      }
    }
    return Summarize(times);
  };

  PathStats audio = run_path(0);
  PathStats text = run_path(1);
  PathStats enh = run_path(2);

  OverheadReport report;
  report.audio_mean_s = audio.mean;
  report.audio_std_s = audio.stddev;
  report.text_mean_s = text.mean;
  report.text_std_s = text.stddev;
  report.enhancer_mean_s = enh.mean;
  report.enhancer_std_s = enh.stddev;
  report.factor_audio = 1.0;
  report.factor_text = text.mean / audio.mean;
  report.factor_enhancer = enh.mean / audio.mean;
  report.n_batches = options.n_batches;
  report.warmup_batches = options.warmup_batches;
  report.host = HostDescriptor();
  return report;
}

}  // namespace specadapt
