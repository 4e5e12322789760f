// Copyright 2026 The specadapt Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "specadapt/enhancer.h"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "specadapt/io.h"

namespace specadapt {

namespace a = specadapt::ad;
using json = nlohmann::json;

namespace {

constexpr std::uint64_t kLatentSalt = 0x1a7e;
constexpr std::uint64_t kNoiseSalt = 0x40153;

using Getter = std::function<a::Var(const std::string&)>;

Getter FrozenGetter(const ParamMap& pm) {
  return [&pm](const std::string& n) { return a::Constant(pm.Get(n)); };
}

Getter LeafGetter(const ParamVars& pv) {
  return [&pv](const std::string& n) { return pv[n]; };
}

int ChMin(const EnhancerConfig& cfg, int raw) {
  return std::min(cfg.max_feature_maps, raw);
}

// Output channels of generator block i (0-based; later blocks are thinner).
int GenBlockChannels(const EnhancerConfig& cfg, int i) {
  return ChMin(cfg, cfg.capacity << (cfg.n_blocks - 1 - i));
}

int GenStartChannels(const EnhancerConfig& cfg) {
  return ChMin(cfg, cfg.capacity << cfg.n_blocks);
}

int DiscStageChannels(const EnhancerConfig& cfg, int i) {
  return ChMin(cfg, cfg.capacity << i);
}

Tensor PadColsEdge(const Tensor& m, int target) {
  int rows = m.dim(0), cols = m.dim(1);
  if (cols >= target) return m;
  Tensor out({rows, target});
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < target; ++c) {
      out.At(r, c) = m.At(r, std::min(c, cols - 1));
    }
  }
  return out;
}

Tensor CropCols(const Tensor& m, int start, int len) {
  int rows = m.dim(0);
  Tensor out({rows, len});
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < len; ++c) out.At(r, c) = m.At(r, start + c);
  }
  return out;
}

Tensor NormalizeTensor(const Tensor& raw, double lo, double hi) {
  Tensor out = raw.Clone();
  double s = 2.0 / (hi - lo);
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = (out[i] - lo) * s - 1.0;
  return out;
}

// Style network: latent -> modulation vector.
a::Var StyleForward(const EnhancerConfig& cfg, const Getter& g, const Tensor& z) {
  a::Var w = a::Constant(z.Reshaped({1, cfg.latent_dim}));
  for (int d = 0; d < cfg.style_depth; ++d) {
    std::string p = "style." + std::to_string(d);
    w = a::LeakyRelu(a::Add(a::MatMul(w, g(p + ".w")), g(p + ".b")), 0.2);
  }
  return w;
}

// Weight-modulated 3x3 (or 1x1) convolution with demodulation.
a::Var ModConv(const Getter& g, const std::string& prefix, const a::Var& x,
               const a::Var& style, int pad) {
  a::Var s = a::Add(a::MatMul(style, g(prefix + ".mod_w")), g(prefix + ".mod_b"));
  int ci = s.value().dim(1);
  a::Var wmod = a::Mul(g(prefix + ".w"), a::Reshape(s, {1, ci, 1, 1}));
  a::Var demod = a::PowScalar(
      a::ScalarAdd(a::SumAxes(a::Mul(wmod, wmod), {1, 2, 3}, true), 1e-8), -0.5);
  a::Var wfin = a::Mul(wmod, demod);
  int co = wfin.value().dim(0);
  a::Var y = a::Conv2d(x, wfin, 1, 1, pad, pad);
  return a::Add(y, a::Reshape(g(prefix + ".b"), {1, co, 1, 1}));
}

// Residual for one sample: [1,1,n_mels,W] in normalized units.
a::Var GenForwardSample(const EnhancerConfig& cfg, const Getter& g,
                        const Tensor& blurry_norm, const Tensor& z,
                        const Tensor& noise) {
  a::Var style = StyleForward(cfg, g, z);
  a::Var cond_full = a::Constant(
      blurry_norm.Reshaped({1, 1, cfg.n_mels, blurry_norm.dim(1)}));
  int w0 = noise.dim(1);
  a::Var x = a::Constant(noise.Reshaped({1, 1, cfg.base_freq, w0}));
  int c0 = GenStartChannels(cfg);
  x = a::LeakyRelu(
      a::Add(a::Conv2d(x, g("input.w"), 1, 1, 0, 0),
             a::Reshape(g("input.b"), {1, c0, 1, 1})),
      0.2);
  a::Var acc;
  for (int i = 0; i < cfg.n_blocks; ++i) {
    std::string p = "blocks." + std::to_string(i);
    x = a::UpsampleNearest2d(x, 2, 2);
    // Conditioning at the block's operating resolution, broadcast over
    // feature channels; the last block sees the full-resolution input.
    int factor = 1 << (cfg.n_blocks - 1 - i);
    a::Var cond = factor == 1 ? cond_full : a::AvgPool2d(cond_full, factor, factor);
    x = a::Add(x, cond);
    x = a::LeakyRelu(ModConv(g, p + ".conv0", x, style, 1), 0.2);
    x = a::LeakyRelu(ModConv(g, p + ".conv1", x, style, 1), 0.2);
    a::Var r = a::Add(a::Conv2d(x, g(p + ".to_res.w"), 1, 1, 0, 0),
                      a::Reshape(g(p + ".to_res.b"), {1, 1, 1, 1}));
    acc = acc.defined() ? a::Add(a::UpsampleNearest2d(acc, 2, 2), r) : r;
  }
  return acc;
}

// Per-sample residuals for a batch; latents is [B, latent_dim].
std::vector<a::Var> GenForwardBatch(const EnhancerConfig& cfg, const Getter& g,
                                    const Tensor& blurry_norm_batch,
                                    const Tensor& latents, const Tensor& noise) {
  int B = blurry_norm_batch.dim(0);
  int W = blurry_norm_batch.dim(3);
  std::vector<a::Var> accs;
  accs.reserve(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    Tensor bl({cfg.n_mels, W});
    std::copy(blurry_norm_batch.data() + static_cast<std::int64_t>(b) * cfg.n_mels * W,
              blurry_norm_batch.data() + static_cast<std::int64_t>(b + 1) * cfg.n_mels * W,
              bl.data());
    Tensor z({cfg.latent_dim});
    std::copy(latents.data() + static_cast<std::int64_t>(b) * cfg.latent_dim,
              latents.data() + static_cast<std::int64_t>(b + 1) * cfg.latent_dim,
              z.data());
    accs.push_back(GenForwardSample(cfg, g, bl, z, noise));
  }
  return accs;
}

// Scores [B] for a normalized batch [B,1,n_mels,W].
a::Var DiscForward(const EnhancerConfig& cfg, const Getter& g, const a::Var& x) {
  int B = x.value().dim(0);
  int c0 = DiscStageChannels(cfg, 0);
  a::Var h = a::LeakyRelu(
      a::Add(a::Conv2d(x, g("from.w"), 1, 1, 0, 0),
             a::Reshape(g("from.b"), {1, c0, 1, 1})),
      0.2);
  for (int i = 0; i < cfg.n_blocks; ++i) {
    std::string p = "stage." + std::to_string(i);
    int co = DiscStageChannels(cfg, i + 1);
    h = a::LeakyRelu(a::Add(a::Conv2d(h, g(p + ".w"), 1, 1, 1, 1),
                            a::Reshape(g(p + ".b"), {1, co, 1, 1})),
                     0.2);
    h = a::AvgPool2d(h, 2, 2);
  }
  // Pool away time, keep the frequency profile, project to a logit.
  h = a::MeanAxes(h, {3}, false);                       // [B, C, base_freq]
  int feat = h.value().dim(1) * h.value().dim(2);
  h = a::Reshape(h, {B, feat});
  a::Var scores = a::Add(a::MatMul(h, g("head.w")), g("head.b"));
  return a::Reshape(scores, {B});
}

a::Var NormalizeVar(const a::Var& raw, double lo, double hi) {
  return a::ScalarAdd(a::ScalarMul(a::ScalarAdd(raw, -lo), 2.0 / (hi - lo)), -1.0);
}

void CheckMelInput(const MelSpectrogram& mel, const EnhancerConfig& cfg,
                   const char* who) {
  if (mel.bands() != cfg.n_mels) {
    throw std::invalid_argument(std::string(who) + ": expected " +
                                std::to_string(cfg.n_mels) + " mel bands, got " +
                                std::to_string(mel.bands()));
  }
  if (mel.frames() < 16) {
    throw std::invalid_argument(std::string(who) + ": needs L >= 16");
  }
}

}  // namespace

void EnhancerConfig::Validate() const {
  if (base_freq < 1) throw ConfigError("enhancer.base_freq must be >= 1");
  if ((base_freq << n_blocks) != n_mels) {
    throw ConfigError("enhancer.n_blocks must satisfy n_mels = base_freq * 2^n_blocks");
  }
  if (latent_dim < 1) throw ConfigError("enhancer.latent_dim must be >= 1");
  if (style_depth < 1) throw ConfigError("enhancer.style_depth must be >= 1");
  if (capacity < 1) throw ConfigError("enhancer.capacity must be >= 1");
  if (max_feature_maps < 1) throw ConfigError("enhancer.max_feature_maps must be >= 1");
  if (gp_every < 1) throw ConfigError("enhancer.gp_every must be >= 1");
  if (gp_weight < 0) throw ConfigError("enhancer.gp_weight must be >= 0");
  if (consistency_weight < 0) throw ConfigError("enhancer.consistency_weight must be >= 0");
  if (lr <= 0) throw ConfigError("enhancer.lr must be positive");
  if (lr_d < 0) throw ConfigError("enhancer.lr_d must be >= 0");
  if (batch_size < 1) throw ConfigError("enhancer.batch_size must be >= 1");
  if (train_window < 16 || train_window % 16 != 0) {
    throw ConfigError("enhancer.train_window must be a positive multiple of 16");
  }
  if (n_mels % 4 != 0) throw ConfigError("enhancer.n_mels must be divisible by 4");
}

std::string EnhancerConfig::ToJson() const {
  json j;
  j["n_mels"] = n_mels;
  j["base_freq"] = base_freq;
  j["latent_dim"] = latent_dim;
  j["style_depth"] = style_depth;
  j["capacity"] = capacity;
  j["max_feature_maps"] = max_feature_maps;
  j["n_blocks"] = n_blocks;
  j["gp_every"] = gp_every;
  j["gp_weight"] = gp_weight;
  j["consistency_weight"] = consistency_weight;
  j["adam_beta1"] = adam_beta1;
  j["adam_beta2"] = adam_beta2;
  j["lr"] = lr;
  j["lr_d"] = lr_d;
  j["batch_size"] = batch_size;
  j["train_window"] = train_window;
  return j.dump();
}

EnhancerConfig EnhancerConfig::FromJson(const std::string& text) {
  json j = json::parse(text);
  EnhancerConfig c;
  c.n_mels = j.value("n_mels", c.n_mels);
  c.base_freq = j.value("base_freq", c.base_freq);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.style_depth = j.value("style_depth", c.style_depth);
  c.capacity = j.value("capacity", c.capacity);
  c.max_feature_maps = j.value("max_feature_maps", c.max_feature_maps);
  c.n_blocks = j.value("n_blocks", c.n_blocks);
  c.gp_every = j.value("gp_every", c.gp_every);
  c.gp_weight = j.value("gp_weight", c.gp_weight);
  c.consistency_weight = j.value("consistency_weight", c.consistency_weight);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.lr = j.value("lr", c.lr);
  c.lr_d = j.value("lr_d", c.lr_d);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.train_window = j.value("train_window", c.train_window);
  return c;
}

std::uint64_t EnhancerParams::Hash() const {
  std::uint64_t h = generator.Hash();
  h = HashBytes(&noise_seed, sizeof(noise_seed), h);
  h = HashBytes(&norm_lo, sizeof(norm_lo), h);
  h = HashBytes(&norm_hi, sizeof(norm_hi), h);
  std::uint64_t hd = discriminator.Hash();
  h = HashBytes(&hd, sizeof(hd), h);
  return h;
}

EnhancerParams InitEnhancer(const EnhancerConfig& config, std::uint64_t seed) {
  config.Validate();
  EnhancerParams params;
  params.config = config;
  params.noise_seed = MixSeed(seed, kNoiseSalt);
  Rng rng(MixSeed(seed, 0xE44a));

  ParamMap& g = params.generator;
  for (int d = 0; d < config.style_depth; ++d) {
    std::string p = "style." + std::to_string(d);
    g.Add(p + ".w", HeInit({config.latent_dim, config.latent_dim}, config.latent_dim, rng));
    g.Add(p + ".b", Tensor::Zeros({config.latent_dim}));
  }
  int c0 = GenStartChannels(config);
  g.Add("input.w", HeInit({c0, 1, 1, 1}, 1, rng));
  g.Add("input.b", Tensor::Zeros({c0}));
  int cin = c0;
  for (int i = 0; i < config.n_blocks; ++i) {
    std::string p = "blocks." + std::to_string(i);
    int cout = GenBlockChannels(config, i);
    g.Add(p + ".conv0.w", HeInit({cout, cin, 3, 3}, cin * 9, rng));
    g.Add(p + ".conv0.mod_w", HeInit({config.latent_dim, cin}, config.latent_dim, rng, 0.1));
    g.Add(p + ".conv0.mod_b", Tensor::Full({cin}, 1.0));
    g.Add(p + ".conv0.b", Tensor::Zeros({cout}));
    g.Add(p + ".conv1.w", HeInit({cout, cout, 3, 3}, cout * 9, rng));
    g.Add(p + ".conv1.mod_w", HeInit({config.latent_dim, cout}, config.latent_dim, rng, 0.1));
    g.Add(p + ".conv1.mod_b", Tensor::Full({cout}, 1.0));
    g.Add(p + ".conv1.b", Tensor::Zeros({cout}));
    // Small residual init: training starts near the identity map.
    g.Add(p + ".to_res.w", HeInit({1, cout, 1, 1}, cout, rng, 0.05));
    g.Add(p + ".to_res.b", Tensor::Zeros({1}));
    cin = cout;
  }

  ParamMap& d = params.discriminator;
  int dc0 = DiscStageChannels(config, 0);
  d.Add("from.w", HeInit({dc0, 1, 1, 1}, 1, rng));
  d.Add("from.b", Tensor::Zeros({dc0}));
  for (int i = 0; i < config.n_blocks; ++i) {
    std::string p = "stage." + std::to_string(i);
    int din = DiscStageChannels(config, i);
    int dout = DiscStageChannels(config, i + 1);
    d.Add(p + ".w", HeInit({dout, din, 3, 3}, din * 9, rng));
    d.Add(p + ".b", Tensor::Zeros({dout}));
  }
  int feat = DiscStageChannels(config, config.n_blocks) * config.base_freq;
  d.Add("head.w", HeInit({feat, 1}, feat, rng));
  d.Add("head.b", Tensor::Zeros({1}));
  return params;
}

Tensor NoiseBase(const EnhancerParams& params, int width) {
  if (width < 1) throw std::invalid_argument("noise base width must be >= 1");
  Tensor t({params.config.base_freq, width});
  for (int c = 0; c < width; ++c) {
    Rng rng(MixSeed(params.noise_seed, static_cast<std::uint64_t>(c)));
    for (int r = 0; r < params.config.base_freq; ++r) t.At(r, c) = rng.Normal();
  }
  return t;
}

MelSpectrogram Enhance(const MelSpectrogram& blurry, std::uint64_t latent_seed,
                       const EnhancerParams& params) {
  const EnhancerConfig& cfg = params.config;
  CheckMelInput(blurry, cfg, "enhance");
  const int L = blurry.frames();
  const int Lp = ((L + 15) / 16) * 16;
  Tensor padded = PadColsEdge(blurry.values, Lp);
  Tensor blurry_norm = NormalizeTensor(padded, params.norm_lo, params.norm_hi);
  Tensor noise = NoiseBase(params, Lp / 16);
  Rng zr(MixSeed(latent_seed, kLatentSalt));
  Tensor z({cfg.latent_dim});
  for (std::int64_t i = 0; i < z.numel(); ++i) z[i] = zr.Normal();

  Getter g = FrozenGetter(params.generator);
  a::Var acc = GenForwardSample(cfg, g, blurry_norm, z, noise);
  const Tensor& res = acc.value();  // [1,1,n_mels,Lp], normalized units
  double scale = (params.norm_hi - params.norm_lo) / 2.0;
  Tensor out({cfg.n_mels, L});
  for (int m = 0; m < cfg.n_mels; ++m) {
    for (int t = 0; t < L; ++t) {
      out.At(m, t) = blurry.values.At(m, t) +
                     res[static_cast<std::int64_t>(m) * Lp + t] * scale;
    }
  }
  return MakeMelSpectrogram(std::move(out), blurry.config);
}

double Discriminate(const MelSpectrogram& mel, const EnhancerParams& params) {
  const EnhancerConfig& cfg = params.config;
  CheckMelInput(mel, cfg, "discriminate");
  const int Lp = ((mel.frames() + 15) / 16) * 16;
  Tensor padded = PadColsEdge(mel.values, Lp);
  Tensor norm = NormalizeTensor(padded, params.norm_lo, params.norm_hi);
  a::Var x = a::Constant(norm.Reshaped({1, 1, cfg.n_mels, Lp}));
  a::Var scores = DiscForward(cfg, FrozenGetter(params.discriminator), x);
  return scores.value()[0];
}

double HingeDLoss(std::span<const double> real_scores,
                  std::span<const double> fake_scores) {
  if (real_scores.empty() || fake_scores.empty()) {
    throw std::invalid_argument("hinge_d_loss needs non-empty score vectors");
  }
  double lr = 0, lf = 0;
  for (double r : real_scores) lr += std::max(0.0, 1.0 - r);
  for (double f : fake_scores) lf += std::max(0.0, 1.0 + f);
  return lr / static_cast<double>(real_scores.size()) +
         lf / static_cast<double>(fake_scores.size());
}

double HingeGLoss(std::span<const double> fake_scores) {
  if (fake_scores.empty()) {
    throw std::invalid_argument("hinge_g_loss needs non-empty scores");
  }
  double s = 0;
  for (double f : fake_scores) s += f;
  return -s / static_cast<double>(fake_scores.size());
}

namespace detail {

double R1Penalty(const std::function<a::Var(const a::Var&)>& disc,
                 const Tensor& batch, double gp_weight) {
  a::Var x = a::Leaf(batch.Clone());
  a::Var scores = disc(x);
  a::Var total = a::Sum(scores);
  a::Var gx = a::Grad(total, {x})[0];
  double b = batch.dim(0);
  a::Var pen = a::ScalarMul(a::Sum(a::Mul(gx, gx)), gp_weight / (2.0 * b));
  return pen.value().ScalarValue();
}

a::Var HingeDLossVar(const a::Var& real_scores, const a::Var& fake_scores) {
  return a::Add(a::Mean(a::Relu(a::ScalarAdd(a::Neg(real_scores), 1.0))),
                a::Mean(a::Relu(a::ScalarAdd(fake_scores, 1.0))));
}

a::Var HingeGLossVar(const a::Var& fake_scores) {
  return a::Neg(a::Mean(fake_scores));
}

a::Var ConsistencyLossVar(const a::Var& fake, const a::Var& real) {
  a::Var pf = a::AvgPool2d(fake, 4, 1);
  a::Var pr = a::AvgPool2d(real, 4, 1);
  return a::Mean(a::Abs(a::Sub(pf, pr)));
}

}  // namespace detail

double GradientPenalty(const std::vector<MelSpectrogram>& real_batch,
                       const EnhancerParams& params) {
  if (real_batch.empty()) throw std::invalid_argument("gradient_penalty needs a batch");
  const EnhancerConfig& cfg = params.config;
  const int L = real_batch[0].frames();
  for (const auto& m : real_batch) {
    CheckMelInput(m, cfg, "gradient_penalty");
    if (m.frames() != L) {
      throw std::invalid_argument("gradient_penalty batch must share one shape");
    }
  }
  const int Lp = ((L + 15) / 16) * 16;
  int B = static_cast<int>(real_batch.size());
  Tensor batch({B, 1, cfg.n_mels, Lp});
  for (int b = 0; b < B; ++b) {
    Tensor padded = PadColsEdge(real_batch[static_cast<std::size_t>(b)].values, Lp);
    std::copy(padded.data(), padded.data() + padded.numel(),
              batch.data() + static_cast<std::int64_t>(b) * cfg.n_mels * Lp);
  }
  Getter g = FrozenGetter(params.discriminator);
  double lo = params.norm_lo, hi = params.norm_hi;
  auto disc = [&](const a::Var& x) {
    return DiscForward(cfg, g, NormalizeVar(x, lo, hi));
  };
  return detail::R1Penalty(disc, batch, cfg.gp_weight);
}

double ConsistencyLoss(const MelSpectrogram& fake, const MelSpectrogram& real) {
  if (fake.values.shape() != real.values.shape()) {
    throw std::invalid_argument("consistency_loss shape mismatch");
  }
  if (fake.bands() % 4 != 0) {
    throw std::invalid_argument("consistency_loss needs band count divisible by 4");
  }
  a::Var f = a::Constant(fake.values.Reshaped({1, 1, fake.bands(), fake.frames()}));
  a::Var r = a::Constant(real.values.Reshaped({1, 1, real.bands(), real.frames()}));
  return detail::ConsistencyLossVar(f, r).value().ScalarValue();
}

std::vector<GanStepReport> TrainEnhancer(EnhancerParams& params,
                                         const std::vector<MelPair>& pairs,
                                         int steps, std::uint64_t seed) {
  const EnhancerConfig& cfg = params.config;
  cfg.Validate();
  if (pairs.empty()) throw std::invalid_argument("train_enhancer needs at least one pair");
  for (const auto& [bl, re] : pairs) {
    if (bl.values.shape() != re.values.shape()) {
      throw std::invalid_argument("pair shapes disagree");
    }
    if (bl.bands() != cfg.n_mels) {
      throw std::invalid_argument("pair band count mismatch");
    }
  }
  if (params.step == 0) {
    double lo = 1e300, hi = -1e300;
    for (const auto& [bl, re] : pairs) {
      lo = std::min({lo, bl.values.MinValue(), re.values.MinValue()});
      hi = std::max({hi, bl.values.MaxValue(), re.values.MaxValue()});
    }
    if (hi <= lo) hi = lo + 1.0;
    params.norm_lo = lo;
    params.norm_hi = hi;
  }

  const int W = cfg.train_window;
  const int B = cfg.batch_size;
  const double scale = (params.norm_hi - params.norm_lo) / 2.0;
  Adam adam_g({cfg.adam_beta1, cfg.adam_beta2, 1e-8, 0.0});
  Adam adam_d({cfg.adam_beta1, cfg.adam_beta2, 1e-8, 0.0});
  Rng rng(MixSeed(seed, 0x6a11));
  Tensor noise = NoiseBase(params, W / 16);

  std::vector<GanStepReport> reports;
  reports.reserve(static_cast<std::size_t>(steps));
  for (int s = 0; s < steps; ++s) {
    ++params.step;
    // Random fixed-width crops.
    Tensor real_raw({B, 1, cfg.n_mels, W});
    Tensor blurry_raw({B, 1, cfg.n_mels, W});
    for (int b = 0; b < B; ++b) {
      const auto& [bl, re] = pairs[static_cast<std::size_t>(
          rng.UniformInt(0, static_cast<int>(pairs.size()) - 1))];
      int L = re.frames();
      Tensor rt, bt;
      if (L >= W) {
        int start = rng.UniformInt(0, L - W);
        rt = CropCols(re.values, start, W);
        bt = CropCols(bl.values, start, W);
      } else {
        rt = PadColsEdge(re.values, W);
        bt = PadColsEdge(bl.values, W);
      }
      std::copy(rt.data(), rt.data() + rt.numel(),
                real_raw.data() + static_cast<std::int64_t>(b) * cfg.n_mels * W);
      std::copy(bt.data(), bt.data() + bt.numel(),
                blurry_raw.data() + static_cast<std::int64_t>(b) * cfg.n_mels * W);
    }
    Tensor real_norm = NormalizeTensor(real_raw, params.norm_lo, params.norm_hi);
    Tensor blurry_norm = NormalizeTensor(blurry_raw, params.norm_lo, params.norm_hi);
    Tensor latents({B, cfg.latent_dim});
    for (std::int64_t i = 0; i < latents.numel(); ++i) latents[i] = rng.Normal();

    GanStepReport rep;
    rep.step = params.step;

    // One generator forward per step; its values feed the discriminator
    // update as constants and its graph is reused for the generator update.
    ParamVars pv_g(params.generator);
    auto fake_accs = GenForwardBatch(cfg, LeafGetter(pv_g), blurry_norm, latents, noise);
    Tensor fake_norm = blurry_norm.Clone();
    for (int b = 0; b < B; ++b) {
      const Tensor& acc = fake_accs[static_cast<std::size_t>(b)].value();
      double* dst = fake_norm.data() + static_cast<std::int64_t>(b) * cfg.n_mels * W;
      for (std::int64_t i = 0; i < acc.numel(); ++i) dst[i] += acc[i];
    }

    // ---- Discriminator update (generator values fixed) ----
    {
      ParamVars pv(params.discriminator);
      Getter dget = LeafGetter(pv);
      bool with_gp = params.step % cfg.gp_every == 0;
      a::Var d_total;
      a::Var real_scores;
      if (with_gp) {
        // R1 on the normalized representation the network consumes.
        a::Var x = a::Leaf(real_norm.Clone());
        real_scores = DiscForward(cfg, dget, x);
        a::Var gx = a::Grad(a::Sum(real_scores), {x})[0];
        a::Var pen = a::ScalarMul(a::Sum(a::Mul(gx, gx)), cfg.gp_weight / (2.0 * B));
        rep.gp = pen.value().ScalarValue();
        a::Var fake_scores = DiscForward(cfg, dget, a::Constant(fake_norm));
        a::Var hinge = detail::HingeDLossVar(real_scores, fake_scores);
        rep.d_loss = hinge.value().ScalarValue();
        rep.mean_real_score = a::Mean(real_scores).value().ScalarValue();
        rep.mean_fake_score = a::Mean(fake_scores).value().ScalarValue();
        d_total = a::Add(hinge, pen);
      } else {
        real_scores = DiscForward(cfg, dget, a::Constant(real_norm));
        a::Var fake_scores = DiscForward(cfg, dget, a::Constant(fake_norm));
        a::Var hinge = detail::HingeDLossVar(real_scores, fake_scores);
        rep.d_loss = hinge.value().ScalarValue();
        rep.mean_real_score = a::Mean(real_scores).value().ScalarValue();
        rep.mean_fake_score = a::Mean(fake_scores).value().ScalarValue();
        d_total = hinge;
      }
      if (!std::isfinite(d_total.value().ScalarValue())) {
        throw std::runtime_error("non-finite discriminator loss at step " +
                                 std::to_string(params.step));
      }
      auto grads = a::Grad(d_total, pv.vars());
      std::vector<Tensor> gvals;
      gvals.reserve(grads.size());
      for (auto& gv : grads) gvals.push_back(gv.value());
      adam_d.Step(params.discriminator, gvals, cfg.lr_d > 0 ? cfg.lr_d : cfg.lr);
    }

    // ---- Generator update (discriminator frozen, post-update) ----
    {
      std::vector<a::Var> fake_parts;
      fake_parts.reserve(static_cast<std::size_t>(B));
      for (int b = 0; b < B; ++b) {
        Tensor bn({1, 1, cfg.n_mels, W});
        std::copy(blurry_norm.data() + static_cast<std::int64_t>(b) * cfg.n_mels * W,
                  blurry_norm.data() + static_cast<std::int64_t>(b + 1) * cfg.n_mels * W,
                  bn.data());
        fake_parts.push_back(a::Add(a::Constant(bn), fake_accs[static_cast<std::size_t>(b)]));
      }
      a::Var fake_norm = a::Concat(fake_parts, 0);
      a::Var scores = DiscForward(cfg, FrozenGetter(params.discriminator), fake_norm);
      a::Var g_adv = detail::HingeGLossVar(scores);
      // Consistency in raw units: fake_raw = blurry_raw + scale * residual.
      std::vector<a::Var> acc_parts;
      for (auto& acc : fake_accs) acc_parts.push_back(acc);
      a::Var acc_all = a::Concat(acc_parts, 0);
      a::Var fake_raw = a::Add(a::Constant(blurry_raw), a::ScalarMul(acc_all, scale));
      a::Var cons = detail::ConsistencyLossVar(fake_raw, a::Constant(real_raw));
      a::Var g_total = a::Add(g_adv, a::ScalarMul(cons, cfg.consistency_weight));
      rep.g_adv = g_adv.value().ScalarValue();
      rep.consistency = cons.value().ScalarValue();
      rep.g_loss = g_total.value().ScalarValue();
      if (!std::isfinite(rep.g_loss)) {
        throw std::runtime_error("non-finite generator loss at step " +
                                 std::to_string(params.step));
      }
      auto grads = a::Grad(g_total, pv_g.vars());
      std::vector<Tensor> gvals;
      gvals.reserve(grads.size());
      for (auto& gv : grads) gvals.push_back(gv.value());
      adam_g.Step(params.generator, gvals, cfg.lr);
    }
    reports.push_back(rep);
  }
  return reports;
}

void SaveEnhancerCheckpoint(const std::string& path, const EnhancerParams& params) {
  Checkpoint ckpt;
  ckpt.component = "enhancer";
  ckpt.config_json = params.config.ToJson();
  json extra;
  extra["noise_seed"] = params.noise_seed;
  extra["norm_lo"] = params.norm_lo;
  extra["norm_hi"] = params.norm_hi;
  extra["step"] = params.step;
  ckpt.extra_json = extra.dump();
  ckpt.groups.emplace_back("generator", params.generator);
  ckpt.groups.emplace_back("discriminator", params.discriminator);
  SaveCheckpoint(path, ckpt);
}

EnhancerParams LoadEnhancerCheckpoint(const std::string& path) {
  Checkpoint ckpt = LoadCheckpoint(path);
  if (ckpt.component != "enhancer") {
    throw std::runtime_error("checkpoint is not an enhancer: " + path);
  }
  EnhancerParams params;
  params.config = EnhancerConfig::FromJson(ckpt.config_json);
  json extra = json::parse(ckpt.extra_json);
  params.noise_seed = extra.at("noise_seed").get<std::uint64_t>();
  params.norm_lo = extra.at("norm_lo").get<double>();
  params.norm_hi = extra.at("norm_hi").get<double>();
  params.step = extra.at("step").get<std::int64_t>();
  for (auto& [name, pm] : ckpt.groups) {
    if (name == "generator") params.generator = std::move(pm);
    if (name == "discriminator") params.discriminator = std::move(pm);
  }
  return params;
}

}  // namespace specadapt
