// Copyright 2026 The specadapt Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "specadapt/synthlang.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "specadapt/io.h"

namespace specadapt {

namespace {

constexpr std::uint64_t kDurationSalt = 0xD17A;
constexpr std::uint64_t kDetailSalt = 0xDE7A;
constexpr std::uint64_t kNoiseSalt = 0x015E;
constexpr std::uint64_t kSpeakerSalt = 0x5bea;

const char* kConsonants[12] = {"b", "d", "g", "k", "m", "n",
                               "p", "r", "s", "t", "v", "z"};
const char* kVowels[2] = {"a", "i"};

std::vector<double> GaussKernel(double sigma) {
  if (sigma <= 0) return {1.0};
  int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

int SampleCategorical(const Tensor& probs, int offset, int n, Rng& rng) {
  double u = rng.Uniform();
  double acc = 0;
  for (int i = 0; i < n; ++i) {
    acc += probs[offset + i];
    if (u < acc) return i;
  }
  return n - 1;
}

}  // namespace

void SynthLangConfig::Validate() const {
  if (vocab < 2 || vocab % 2 != 0 || vocab > 24) {
    throw ConfigError("synthlang.vocab must be even and in [2, 24]");
  }
  if (base_frames < 2) throw ConfigError("synthlang.base_frames must be >= 2");
  if (n_mels < 16) throw ConfigError("synthlang.n_mels must be >= 16");
  if (duration_jitter < 0 || duration_jitter > 0.5) {
    throw ConfigError("synthlang.duration_jitter must be in [0, 0.5]");
  }
  if (noise_sigma < 0) throw ConfigError("synthlang.noise_sigma must be >= 0");
  if (detail_amp < 0) throw ConfigError("synthlang.detail_amp must be >= 0");
  if (blur_sigma_freq < 0 || blur_sigma_time < 0) {
    throw ConfigError("synthlang.blur_sigma must be >= 0");
  }
  if (min_energy_scale <= 0 || max_energy_scale < min_energy_scale) {
    throw ConfigError("synthlang.energy_scale range invalid");
  }
}

std::uint64_t SynthLangConfig::Hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](double v) { h = HashBytes(&v, sizeof(v), h); };
  mix(vocab);
  mix(base_frames);
  mix(n_mels);
  mix(duration_jitter);
  mix(detail_amp);
  mix(noise_sigma);
  mix(blur_sigma_freq);
  mix(blur_sigma_time);
  mix(twin_offset_bins);
  mix(max_pitch_shift);
  mix(min_energy_scale);
  mix(max_energy_scale);
  mix(max_formant_tilt);
  mix(static_cast<double>(pattern_seed));
  return h;
}

SpeakerEmbedding IdentitySpeaker() {
  SpeakerEmbedding s;
  s.vec = {0.5, 0.5, 0.5};
  return s;
}

void DomainGrammar::Validate() const {
  if (transition.ndim() != 2 || transition.dim(0) != transition.dim(1)) {
    throw ConfigError("grammar.transition must be square");
  }
  int v = transition.dim(0);
  for (int r = 0; r < v; ++r) {
    double sum = 0;
    for (int c = 0; c < v; ++c) {
      if (transition.At(r, c) < 0) throw ConfigError("grammar.transition has negative entry");
      sum += transition.At(r, c);
    }
    if (std::fabs(sum - 1.0) > 1e-9) {
      throw ConfigError("grammar.transition row " + std::to_string(r) + " does not sum to 1");
    }
  }
  if (min_len < 1 || max_len < min_len) {
    throw ConfigError("grammar.length range invalid");
  }
}

std::string TokenToSyllable(int id) {
  if (id < 0 || id >= 24) throw std::invalid_argument("token id out of range");
  return std::string(kConsonants[id / 2]) + kVowels[id % 2];
}

std::string TokensToText(const std::vector<int>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += TokenToSyllable(tokens[i]);
  }
  return out;
}

std::vector<int> TextToTokens(const std::string& text, int vocab) {
  std::vector<int> out;
  std::istringstream is(text);
  std::string syl;
  while (is >> syl) {
    int id = -1;
    for (int k = 0; k < 24; ++k) {
      if (TokenToSyllable(k) == syl) {
        id = k;
        break;
      }
    }
    if (id < 0 || id >= vocab) {
      throw std::invalid_argument("unknown token: " + syl);
    }
    out.push_back(id);
  }
  return out;
}

SynthLang::SynthLang(const SynthLangConfig& config) : config_(config) {
  config_.Validate();
  mel_config_.n_mels = config_.n_mels;
  const int n_mels = config_.n_mels;
  const int tb = config_.base_frames;
  patterns_.reserve(static_cast<std::size_t>(config_.vocab));
  for (int k = 0; k < config_.vocab; ++k) {
    int pair = k / 2;
    int member = k % 2;
    // Two spectral bands; twins share the lower band and phases, the upper
    // band moves by twin_offset_bins.
    double r1 = 4.0 + 3.0 * pair;
    double r2 = 44.0 + 2.0 * pair + (member ? config_.twin_offset_bins : 0);
    Rng phase_rng(MixSeed(config_.pattern_seed, static_cast<std::uint64_t>(pair)));
    double phi1 = phase_rng.Uniform() * 2 * M_PI;
    double phi2 = phase_rng.Uniform() * 2 * M_PI;
    Tensor p({n_mels, tb});
    for (int t = 0; t < tb; ++t) {
      double env1 = 0.55 + 0.45 * std::cos(2 * M_PI * (t + 0.5) / tb + phi1);
      double env2 = 0.55 + 0.45 * std::cos(2 * M_PI * (t + 0.5) / tb + phi2);
      for (int m = 0; m < n_mels; ++m) {
        double a1 = std::exp(-0.5 * (m - r1) * (m - r1) / (1.5 * 1.5));
        double a2 = std::exp(-0.5 * (m - r2) * (m - r2) / (1.5 * 1.5));
        double range = kPatternPeak - kPatternFloor;
        p.At(m, t) = kPatternFloor + range * std::min(1.0, a1 * env1 + a2 * env2);
      }
    }
    patterns_.push_back(std::move(p));
  }
}

const Tensor& SynthLang::pattern(int token) const {
  if (token < 0 || token >= config_.vocab) {
    throw std::invalid_argument("unknown token id " + std::to_string(token));
  }
  return patterns_[static_cast<std::size_t>(token)];
}

SpeakerEmbedding SampleSpeakerImpl(const SynthLangConfig& cfg, std::uint64_t seed) {
  Rng rng(MixSeed(seed, kSpeakerSalt));
  SpeakerEmbedding s;
  double u1 = rng.Uniform();
  double u2 = rng.Uniform();
  double u3 = rng.Uniform();
  s.vec = {u1, u2, u3};
  s.pitch_shift_bins = static_cast<int>(
      std::lround((u1 * 2 - 1) * cfg.max_pitch_shift));
  s.energy_scale = std::exp(std::log(cfg.min_energy_scale) +
                            u2 * (std::log(cfg.max_energy_scale) -
                                  std::log(cfg.min_energy_scale)));
  s.formant_tilt = (u3 * 2 - 1) * cfg.max_formant_tilt;
  return s;
}

SpeakerEmbedding SynthLang::SampleSpeaker(std::uint64_t seed) const {
  return SampleSpeakerImpl(config_, seed);
}

std::vector<int> SynthLang::RealizedDurations(const std::vector<int>& tokens,
                                              std::uint64_t seed) const {
  Rng rng(MixSeed(seed, kDurationSalt));
  std::vector<int> durs;
  durs.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    double u = 1.0 + (config_.duration_jitter > 0
                          ? rng.Uniform(-config_.duration_jitter, config_.duration_jitter)
                          : 0.0);
    int d = std::max(2, static_cast<int>(std::lround(config_.base_frames * u)));
    durs.push_back(d);
  }
  return durs;
}

Tensor SynthLang::RenderBase(const std::vector<int>& tokens,
                             const SpeakerEmbedding& speaker,
                             std::uint64_t seed) const {
  if (tokens.empty()) throw std::invalid_argument("empty token sequence");
  for (int t : tokens) {
    if (t < 0 || t >= config_.vocab) {
      throw std::invalid_argument("unknown token id " + std::to_string(t));
    }
  }
  auto durs = RealizedDurations(tokens, seed);
  int total = 0;
  for (int d : durs) total += d;
  const int n_mels = config_.n_mels;
  Tensor out({n_mels, total});
  const double log_energy = std::log(speaker.energy_scale);
  int col = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Tensor& p = patterns_[static_cast<std::size_t>(tokens[i])];
    int d = durs[i];
    for (int c = 0; c < d; ++c) {
      int src = c * config_.base_frames / d;  // identity when d == base
      for (int m = 0; m < n_mels; ++m) {
        int ms = m - speaker.pitch_shift_bins;
        double v = (ms >= 0 && ms < n_mels) ? p.At(ms, src) : kPatternFloor;
        v += log_energy;
        v += speaker.formant_tilt * (2.0 * m / (n_mels - 1) - 1.0);
        out.At(m, col) = v;
      }
      ++col;
    }
  }
  return out;
}

MelSpectrogram SynthLang::RenderReal(const std::vector<int>& tokens,
                                     const SpeakerEmbedding& speaker,
                                     std::uint64_t seed) const {
  Tensor base = RenderBase(tokens, speaker, seed);
  const int n_mels = base.dim(0);
  const int L = base.dim(1);
  Rng detail_rng(MixSeed(seed, kDetailSalt));
  Rng noise_rng(MixSeed(seed, kNoiseSalt));
  const double floor_log = std::log(mel_config_.log_floor);
  // Period-4 ripple along frequency with a per-frame phase: structure the
  // blur destroys and frequency-pooled losses cannot see.
  for (int t = 0; t < L; ++t) {
    double psi = detail_rng.Uniform() * 2 * M_PI;
    for (int m = 0; m < n_mels; ++m) {
      double v = base.At(m, t);
      v += config_.detail_amp * std::sin(M_PI * m / 2.0 + psi);
      v += config_.noise_sigma * noise_rng.Normal();
      base.At(m, t) = std::max(v, floor_log);
    }
  }
  return MakeMelSpectrogram(std::move(base), mel_config_);
}

MelSpectrogram SynthLang::RenderBlurry(const std::vector<int>& tokens,
                                       const SpeakerEmbedding& speaker,
                                       std::uint64_t seed) const {
  Tensor base = RenderBase(tokens, speaker, seed);
  const int n_mels = base.dim(0);
  const int L = base.dim(1);
  auto kf = GaussKernel(config_.blur_sigma_freq);
  auto kt = GaussKernel(config_.blur_sigma_time);
  int rf = static_cast<int>(kf.size() / 2);
  int rt = static_cast<int>(kt.size() / 2);
  Tensor tmp({n_mels, L});
  for (int t = 0; t < L; ++t) {
    for (int m = 0; m < n_mels; ++m) {
      double acc = 0;
      for (int i = -rf; i <= rf; ++i) {
        int mm = std::clamp(m + i, 0, n_mels - 1);
        acc += kf[static_cast<std::size_t>(i + rf)] * base.At(mm, t);
      }
      tmp.At(m, t) = acc;
    }
  }
  Tensor out({n_mels, L});
  for (int m = 0; m < n_mels; ++m) {
    for (int t = 0; t < L; ++t) {
      double acc = 0;
      for (int i = -rt; i <= rt; ++i) {
        int tt = std::clamp(t + i, 0, L - 1);
        acc += kt[static_cast<std::size_t>(i + rt)] * tmp.At(m, tt);
      }
      out.At(m, t) = acc;
    }
  }
  return MakeMelSpectrogram(std::move(out), mel_config_);
}

std::uint64_t SynthLang::ParamsHash() const {
  std::uint64_t h = config_.Hash();
  for (const auto& p : patterns_) h = p.HashValues(h);
  return h;
}

DomainGrammar MakeDomainGrammar(const SynthLangConfig& config, char domain,
                                std::uint64_t seed, int min_len, int max_len) {
  if (domain != 'A' && domain != 'B') {
    throw ConfigError("domain must be 'A' or 'B'");
  }
  const int v = config.vocab;
  const int pairs = v / 2;
  // Pair-level structure is shared between domains (same seed); the domains
  // differ in which twin member they prefer.
  Rng rng(MixSeed(seed, 0x96a11));
  Tensor pair_trans({pairs, pairs});
  for (int j = 0; j < pairs; ++j) {
    double sum = 0;
    for (int j2 = 0; j2 < pairs; ++j2) {
      double w = std::exp(1.2 * rng.Normal());
      pair_trans.At(j, j2) = w;
      sum += w;
    }
    for (int j2 = 0; j2 < pairs; ++j2) pair_trans.At(j, j2) /= sum;
  }
  double p_even = domain == 'A' ? 0.85 : 0.15;
  DomainGrammar g;
  g.min_len = min_len;
  g.max_len = max_len;
  g.transition = Tensor({v, v});
  g.start = Tensor({v});
  for (int from = 0; from < v; ++from) {
    int j = from / 2;
    for (int j2 = 0; j2 < pairs; ++j2) {
      g.transition.At(from, 2 * j2) = pair_trans.At(j, j2) * p_even;
      g.transition.At(from, 2 * j2 + 1) = pair_trans.At(j, j2) * (1 - p_even);
    }
  }
  for (int j2 = 0; j2 < pairs; ++j2) {
    g.start[2 * j2] = p_even / pairs;
    g.start[2 * j2 + 1] = (1 - p_even) / pairs;
  }
  g.Validate();
  return g;
}

std::vector<int> SampleText(const DomainGrammar& grammar, std::uint64_t seed) {
  grammar.Validate();
  const int v = grammar.transition.dim(0);
  Rng rng(MixSeed(seed, 0x7e57));
  int len = rng.UniformInt(grammar.min_len, grammar.max_len);
  std::vector<int> tokens;
  tokens.reserve(static_cast<std::size_t>(len));
  int cur = SampleCategorical(grammar.start, 0, v, rng);
  tokens.push_back(cur);
  for (int i = 1; i < len; ++i) {
    cur = SampleCategorical(grammar.transition, cur * v, v, rng);
    tokens.push_back(cur);
  }
  return tokens;
}

std::string BlurryPathFor(const std::string& real_path) {
  const std::string suffix = ".real.melbin";
  if (real_path.size() < suffix.size() ||
      real_path.compare(real_path.size() - suffix.size(), suffix.size(), suffix) != 0) {
    throw std::invalid_argument("not a paired real mel path: " + real_path);
  }
  return real_path.substr(0, real_path.size() - suffix.size()) + ".blurry.melbin";
}

std::string GenerateCorpus(const SynthLang& synth, const DomainGrammar& grammar,
                           const CorpusOptions& options,
                           const std::string& out_dir) {
  if (options.n < 1) throw ConfigError("corpus.n must be >= 1");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create out_dir: " + out_dir);
  std::string mel_dir = out_dir + "/mels";
  if (options.with_audio) {
    fs::create_directories(mel_dir, ec);
    if (ec) throw std::runtime_error("cannot create mel dir: " + mel_dir);
  }
  std::vector<ManifestEntry> entries;
  entries.reserve(static_cast<std::size_t>(options.n));
  for (int i = 0; i < options.n; ++i) {
    std::uint64_t entry_seed = MixSeed(options.seed, static_cast<std::uint64_t>(i));
    auto tokens = SampleText(grammar, MixSeed(entry_seed, 1));
    ManifestEntry e;
    std::ostringstream id;
    id << options.domain;
    id.fill('0');
    id.width(5);
    id << i;
    e.id = id.str();
    e.text = TokensToText(tokens);
    e.domain = options.domain;
    if (options.with_audio) {
      auto speaker = synth.SampleSpeaker(MixSeed(entry_seed, 2));
      std::uint64_t render_seed = MixSeed(entry_seed, 3);
      auto real = synth.RenderReal(tokens, speaker, render_seed);
      std::string real_path = mel_dir + "/" + e.id + ".real.melbin";
      WriteMelBin(real_path, real);
      if (options.paired) {
        auto blurry = synth.RenderBlurry(tokens, speaker, render_seed);
        WriteMelBin(BlurryPathFor(real_path), blurry);
      }
      e.audio_path = real_path;
    }
    entries.push_back(std::move(e));
  }
  std::string manifest_path = out_dir + "/manifest.jsonl";
  WriteManifest(manifest_path, entries);
  return manifest_path;
}

}  // namespace specadapt
