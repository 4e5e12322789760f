// Copyright 2026 The specadapt Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "specadapt/asr.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "specadapt/io.h"

namespace specadapt {

namespace a = specadapt::ad;
using json = nlohmann::json;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kBnMomentum = 0.1;
constexpr double kMaskValue = -1e30;

double LogSumExp2(double x, double y) {
  if (x == kNegInf) return y;
  if (y == kNegInf) return x;
  double m = std::max(x, y);
  return m + std::log(std::exp(x - m) + std::exp(y - m));
}

double LogSumExp3(double x, double y, double z) {
  return LogSumExp2(LogSumExp2(x, y), z);
}

using Getter = std::function<a::Var(const std::string&)>;

// LayerNorm over the last axis of [.., d] with affine.
a::Var LayerNorm(const a::Var& x, const a::Var& gamma, const a::Var& beta) {
  a::Var mean = a::MeanAxes(x, {-1}, true);
  a::Var centered = a::Sub(x, mean);
  a::Var var = a::MeanAxes(a::Mul(centered, centered), {-1}, true);
  a::Var inv = a::PowScalar(a::ScalarAdd(var, kBnEps), -0.5);
  return a::Add(a::Mul(a::Mul(centered, inv), gamma), beta);
}

// x: [B, T, d] @ w: [d, k] as one flat GEMM.
a::Var LinearBTD(const a::Var& x, const a::Var& w) {
  const auto& s = x.value().shape();
  a::Var flat = a::Reshape(x, {s[0] * s[1], s[2]});
  a::Var y = a::MatMul(flat, w);
  return a::Reshape(y, {s[0], s[1], w.value().dim(1)});
}

}  // namespace

std::string NormModeName(NormMode mode) {
  switch (mode) {
    case NormMode::kLayerNorm: return "LN";
    case NormMode::kBatchNorm: return "BN";
    case NormMode::kFusedBatchNorm: return "FusedBN";
  }
  throw std::logic_error("bad norm mode");
}

NormMode NormModeFromName(const std::string& name) {
  if (name == "LN") return NormMode::kLayerNorm;
  if (name == "BN") return NormMode::kBatchNorm;
  if (name == "FusedBN") return NormMode::kFusedBatchNorm;
  throw ConfigError("asr.norm_mode must be LN, BN, or FusedBN");
}

void AsrConfig::Validate() const {
  if (n_mels < 1) throw ConfigError("asr.n_mels must be >= 1");
  if (d_model < 1) throw ConfigError("asr.d_model must be >= 1");
  if (n_blocks < 1) throw ConfigError("asr.n_blocks must be >= 1");
  if (subsampling < 1) throw ConfigError("asr.subsampling must be >= 1");
  if (conv_kernel < 1 || conv_kernel % 2 == 0) {
    throw ConfigError("asr.conv_kernel must be odd and >= 1");
  }
  if (vocab_size < 2) throw ConfigError("asr.vocab_size must be >= 2");
}

std::string AsrConfig::ToJson() const {
  json j;
  j["n_mels"] = n_mels;
  j["d_model"] = d_model;
  j["n_blocks"] = n_blocks;
  j["subsampling"] = subsampling;
  j["conv_kernel"] = conv_kernel;
  j["vocab_size"] = vocab_size;
  j["norm_mode"] = NormModeName(norm_mode);
  return j.dump();
}

AsrConfig AsrConfig::FromJson(const std::string& text) {
  json j = json::parse(text);
  AsrConfig c;
  c.n_mels = j.value("n_mels", c.n_mels);
  c.d_model = j.value("d_model", c.d_model);
  c.n_blocks = j.value("n_blocks", c.n_blocks);
  c.subsampling = j.value("subsampling", c.subsampling);
  c.conv_kernel = j.value("conv_kernel", c.conv_kernel);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.norm_mode = NormModeFromName(j.value("norm_mode", std::string("LN")));
  return c;
}

std::uint64_t AsrParams::Hash() const {
  std::uint64_t h = params.Hash();
  std::uint64_t hr = running.Hash();
  h = HashBytes(&hr, sizeof(hr), h);
  h = HashString(config.ToJson(), h);
  return h;
}

AsrParams InitAsr(const AsrConfig& config, std::uint64_t seed) {
  config.Validate();
  AsrParams p;
  p.config = config;
  Rng rng(MixSeed(seed, 0xa54));
  ParamMap& m = p.params;
  const int d = config.d_model;
  m.Add("sub.w", HeInit({d, config.n_mels, 1, 3}, config.n_mels * 3, rng));
  m.Add("sub.b", Tensor::Zeros({d}));
  for (int i = 0; i < config.n_blocks; ++i) {
    std::string b = "b" + std::to_string(i) + ".";
    m.Add(b + "ln1.g", Tensor::Full({d}, 1.0));
    m.Add(b + "ln1.b", Tensor::Zeros({d}));
    m.Add(b + "attn.wq", HeInit({d, d}, d, rng));
    m.Add(b + "attn.wk", HeInit({d, d}, d, rng));
    m.Add(b + "attn.wv", HeInit({d, d}, d, rng));
    m.Add(b + "attn.wo", HeInit({d, d}, d, rng));
    m.Add(b + "attn.bo", Tensor::Zeros({d}));
    m.Add(b + "ln2.g", Tensor::Full({d}, 1.0));
    m.Add(b + "ln2.b", Tensor::Zeros({d}));
    m.Add(b + "conv.p1.w", HeInit({d, d}, d, rng));
    m.Add(b + "conv.p1.b", Tensor::Zeros({d}));
    m.Add(b + "conv.dw.w", HeInit({d, config.conv_kernel}, config.conv_kernel, rng));
    switch (config.norm_mode) {
      case NormMode::kLayerNorm:
        m.Add(b + "conv.lnc.g", Tensor::Full({d}, 1.0));
        m.Add(b + "conv.lnc.b", Tensor::Zeros({d}));
        break;
      case NormMode::kBatchNorm:
        m.Add(b + "conv.bn.g", Tensor::Full({d}, 1.0));
        m.Add(b + "conv.bn.b", Tensor::Zeros({d}));
        p.running.Add(b + "conv.bn.mean", Tensor::Zeros({d}));
        p.running.Add(b + "conv.bn.var", Tensor::Full({d}, 1.0));
        break;
      case NormMode::kFusedBatchNorm:
        m.Add(b + "conv.fold.w", Tensor::Full({d}, 1.0));
        m.Add(b + "conv.fold.b", Tensor::Zeros({d}));
        break;
    }
    m.Add(b + "conv.p2.w", HeInit({d, d}, d, rng));
    m.Add(b + "conv.p2.b", Tensor::Zeros({d}));
    m.Add(b + "ln3.g", Tensor::Full({d}, 1.0));
    m.Add(b + "ln3.b", Tensor::Zeros({d}));
    m.Add(b + "ffn.w1", HeInit({d, 2 * d}, d, rng));
    m.Add(b + "ffn.b1", Tensor::Zeros({2 * d}));
    m.Add(b + "ffn.w2", HeInit({2 * d, d}, 2 * d, rng));
    m.Add(b + "ffn.b2", Tensor::Zeros({d}));
  }
  m.Add("final_ln.g", Tensor::Full({d}, 1.0));
  m.Add("final_ln.b", Tensor::Zeros({d}));
  m.Add("head.w", HeInit({d, config.vocab_size}, d, rng));
  m.Add("head.b", Tensor::Zeros({config.vocab_size}));
  return p;
}

namespace detail {

int SubsampledLength(const AsrConfig& cfg, int frames) {
  return (frames + cfg.subsampling - 1) / cfg.subsampling;
}

ad::Var AsrForward(const AsrConfig& cfg, const Getter& get, const Tensor& batch,
                   const std::vector<int>& lengths, AsrMode mode,
                   ParamMap* running) {
  const int B = batch.dim(0);
  const int T = batch.dim(2);
  const int d = cfg.d_model;
  if (batch.dim(1) != cfg.n_mels) {
    throw std::invalid_argument("encode: expected " + std::to_string(cfg.n_mels) +
                                " mel bands, got " + std::to_string(batch.dim(1)));
  }

  // Valid-position mask at the raw frame rate. Convolutions use zero
  // boundary semantics: pad regions are zeroed so a sample's valid outputs
  // do not depend on what else is in the batch.
  Tensor raw_mask({B, 1, 1, T});
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < T; ++t) {
      raw_mask.data()[static_cast<std::int64_t>(b) * T + t] =
          t < lengths[static_cast<std::size_t>(b)] ? 1.0 : 0.0;
    }
  }

  a::Var x = a::Constant(batch.Reshaped({B, cfg.n_mels, 1, T}));
  x = a::Mul(x, a::Constant(raw_mask));
  x = a::Conv2d(x, get("sub.w"), 1, cfg.subsampling, 0, 1);
  int Tp = x.value().dim(3);
  x = a::Add(x, a::Reshape(get("sub.b"), {1, d, 1, 1}));
  x = a::Swish(x);
  x = a::Permute(a::Reshape(x, {B, d, Tp}), {0, 2, 1});  // [B, T', d]

  std::vector<int> sub_lengths(lengths.size());
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    sub_lengths[i] = SubsampledLength(cfg, lengths[i]);
  }

  // Attention mask: keys beyond a sample's valid length are excluded.
  Tensor mask({B, Tp, Tp});
  for (int b = 0; b < B; ++b) {
    int len = sub_lengths[static_cast<std::size_t>(b)];
    for (int q = 0; q < Tp; ++q) {
      for (int k = 0; k < Tp; ++k) {
        mask.data()[(static_cast<std::int64_t>(b) * Tp + q) * Tp + k] =
            k < len ? 0.0 : kMaskValue;
      }
    }
  }
  a::Var mask_var = a::Constant(mask);

  // Valid-position mask for batch statistics.
  Tensor vmask({B, 1, Tp});
  double valid_count = 0;
  for (int b = 0; b < B; ++b) {
    int len = sub_lengths[static_cast<std::size_t>(b)];
    valid_count += len;
    for (int t = 0; t < Tp; ++t) {
      vmask.data()[static_cast<std::int64_t>(b) * Tp + t] = t < len ? 1.0 : 0.0;
    }
  }
  a::Var vmask_var = a::Constant(vmask);

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  for (int i = 0; i < cfg.n_blocks; ++i) {
    std::string b = "b" + std::to_string(i) + ".";
    // Self-attention over time.
    {
      a::Var h = LayerNorm(x, get(b + "ln1.g"), get(b + "ln1.b"));
      a::Var q = LinearBTD(h, get(b + "attn.wq"));
      a::Var k = LinearBTD(h, get(b + "attn.wk"));
      a::Var v = LinearBTD(h, get(b + "attn.wv"));
      a::Var scores = a::ScalarMul(a::Bmm(q, a::Permute(k, {0, 2, 1})), inv_sqrt_d);
      scores = a::Add(scores, mask_var);
      a::Var att = a::SoftmaxLastAxis(scores);
      a::Var ctx = a::Bmm(att, v);
      a::Var out = a::Add(LinearBTD(ctx, get(b + "attn.wo")), get(b + "attn.bo"));
      x = a::Add(x, out);
    }
    // Depthwise convolution module; this is where the switchable norm lives.
    {
      a::Var h = LayerNorm(x, get(b + "ln2.g"), get(b + "ln2.b"));
      h = a::Add(LinearBTD(h, get(b + "conv.p1.w")), get(b + "conv.p1.b"));
      h = a::Permute(h, {0, 2, 1});  // [B, d, T']
      h = a::Mul(h, vmask_var);
      h = a::ZeroPad(h, 2, (cfg.conv_kernel - 1) / 2, (cfg.conv_kernel - 1) / 2);
      h = a::DepthwiseConv1d(h, get(b + "conv.dw.w"));
      switch (cfg.norm_mode) {
        case NormMode::kLayerNorm: {
          a::Var ht = a::Permute(h, {0, 2, 1});
          ht = LayerNorm(ht, get(b + "conv.lnc.g"), get(b + "conv.lnc.b"));
          h = a::Permute(ht, {0, 2, 1});
          break;
        }
        case NormMode::kBatchNorm: {
          a::Var gamma = a::Reshape(get(b + "conv.bn.g"), {1, d, 1});
          a::Var beta = a::Reshape(get(b + "conv.bn.b"), {1, d, 1});
          if (mode == AsrMode::kTrain) {
            a::Var masked = a::Mul(h, vmask_var);
            a::Var mean = a::ScalarMul(a::SumAxes(masked, {0, 2}, true), 1.0 / valid_count);
            a::Var centered = a::Sub(h, mean);
            a::Var var = a::ScalarMul(
                a::SumAxes(a::Mul(a::Mul(centered, centered), vmask_var), {0, 2}, true),
                1.0 / valid_count);
            a::Var inv = a::PowScalar(a::ScalarAdd(var, kBnEps), -0.5);
            h = a::Add(a::Mul(a::Mul(centered, inv), gamma), beta);
            if (running) {
              Tensor& rm = running->Get(b + "conv.bn.mean");
              Tensor& rv = running->Get(b + "conv.bn.var");
              const Tensor& bm = mean.value();
              const Tensor& bv = var.value();
              for (int c = 0; c < d; ++c) {
                rm[c] = (1.0 - kBnMomentum) * rm[c] + kBnMomentum * bm[c];
                rv[c] = (1.0 - kBnMomentum) * rv[c] + kBnMomentum * bv[c];
              }
            }
          } else {
            if (!running) throw std::logic_error("BN eval needs running stats");
            Tensor rm = running->Get(b + "conv.bn.mean").Clone();
            Tensor rv = running->Get(b + "conv.bn.var").Clone();
            a::Var mean = a::Constant(rm.Reshaped({1, d, 1}));
            a::Var inv = a::PowScalar(
                a::ScalarAdd(a::Constant(rv.Reshaped({1, d, 1})), kBnEps), -0.5);
            h = a::Add(a::Mul(a::Mul(a::Sub(h, mean), inv), gamma), beta);
          }
          break;
        }
        case NormMode::kFusedBatchNorm: {
          a::Var w = a::Reshape(get(b + "conv.fold.w"), {1, d, 1});
          a::Var bb = a::Reshape(get(b + "conv.fold.b"), {1, d, 1});
          h = a::Add(a::Mul(h, w), bb);
          break;
        }
      }
      h = a::Swish(h);
      h = a::Permute(h, {0, 2, 1});
      h = a::Add(LinearBTD(h, get(b + "conv.p2.w")), get(b + "conv.p2.b"));
      x = a::Add(x, h);
    }
    // Feedforward.
    {
      a::Var h = LayerNorm(x, get(b + "ln3.g"), get(b + "ln3.b"));
      h = a::Swish(a::Add(LinearBTD(h, get(b + "ffn.w1")), get(b + "ffn.b1")));
      h = a::Add(LinearBTD(h, get(b + "ffn.w2")), get(b + "ffn.b2"));
      x = a::Add(x, h);
    }
  }
  x = LayerNorm(x, get("final_ln.g"), get("final_ln.b"));
  a::Var logits = a::Add(LinearBTD(x, get("head.w")), get("head.b"));
  return logits;  // [B, T', vocab]
}

std::pair<double, Tensor> CtcLossWithGrad(const Tensor& logits,
                                          const std::vector<int>& target) {
  const int T = logits.dim(0);
  const int V = logits.dim(1);
  const int U = static_cast<int>(target.size());
  for (int u : target) {
    if (u < 0 || u + 1 >= V) throw std::invalid_argument("ctc target id out of vocab");
  }
  int required = U;
  for (int i = 1; i < U; ++i) {
    if (target[static_cast<std::size_t>(i)] == target[static_cast<std::size_t>(i - 1)]) ++required;
  }
  if (required > T) {
    throw std::invalid_argument("ctc target needs " + std::to_string(required) +
                                " frames but logits have " + std::to_string(T));
  }

  // Log-softmax.
  Tensor lp({T, V});
  for (int t = 0; t < T; ++t) {
    double mx = logits.At(t, 0);
    for (int k = 1; k < V; ++k) mx = std::max(mx, logits.At(t, k));
    double z = 0;
    for (int k = 0; k < V; ++k) z += std::exp(logits.At(t, k) - mx);
    double lz = mx + std::log(z);
    for (int k = 0; k < V; ++k) lp.At(t, k) = logits.At(t, k) - lz;
  }

  // Extended label sequence with interleaved blanks (class 0).
  const int S = 2 * U + 1;
  std::vector<int> lab(static_cast<std::size_t>(S), 0);
  for (int u = 0; u < U; ++u) lab[static_cast<std::size_t>(2 * u + 1)] = target[static_cast<std::size_t>(u)] + 1;

  Tensor alpha({T, S});
  Tensor beta({T, S});
  for (std::int64_t i = 0; i < alpha.numel(); ++i) alpha[i] = kNegInf;
  for (std::int64_t i = 0; i < beta.numel(); ++i) beta[i] = kNegInf;

  alpha.At(0, 0) = lp.At(0, lab[0]);
  if (S > 1) alpha.At(0, 1) = lp.At(0, lab[1]);
  for (int t = 1; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double best = alpha.At(t - 1, s);
      if (s >= 1) best = LogSumExp2(best, alpha.At(t - 1, s - 1));
      if (s >= 2 && lab[static_cast<std::size_t>(s)] != 0 &&
          lab[static_cast<std::size_t>(s)] != lab[static_cast<std::size_t>(s - 2)]) {
        best = LogSumExp2(best, alpha.At(t - 1, s - 2));
      }
      alpha.At(t, s) = best + lp.At(t, lab[static_cast<std::size_t>(s)]);
    }
  }
  double log_p = S > 1 ? LogSumExp2(alpha.At(T - 1, S - 1), alpha.At(T - 1, S - 2))
                       : alpha.At(T - 1, S - 1);

  beta.At(T - 1, S - 1) = lp.At(T - 1, lab[static_cast<std::size_t>(S - 1)]);
  if (S > 1) beta.At(T - 1, S - 2) = lp.At(T - 1, lab[static_cast<std::size_t>(S - 2)]);
  for (int t = T - 2; t >= 0; --t) {
    for (int s = S - 1; s >= 0; --s) {
      double best = beta.At(t + 1, s);
      if (s + 1 < S) best = LogSumExp2(best, beta.At(t + 1, s + 1));
      if (s + 2 < S && lab[static_cast<std::size_t>(s + 2)] != 0 &&
          lab[static_cast<std::size_t>(s + 2)] != lab[static_cast<std::size_t>(s)]) {
        best = LogSumExp2(best, beta.At(t + 1, s + 2));
      }
      beta.At(t, s) = best + lp.At(t, lab[static_cast<std::size_t>(s)]);
    }
  }

  // d loss / d logit = softmax - posterior.
  Tensor grad({T, V});
  for (int t = 0; t < T; ++t) {
    std::vector<double> occ(static_cast<std::size_t>(V), kNegInf);
    for (int s = 0; s < S; ++s) {
      int k = lab[static_cast<std::size_t>(s)];
      double g = alpha.At(t, s) + beta.At(t, s) - lp.At(t, k);
      occ[static_cast<std::size_t>(k)] = LogSumExp2(occ[static_cast<std::size_t>(k)], g);
    }
    for (int k = 0; k < V; ++k) {
      double posterior = occ[static_cast<std::size_t>(k)] == kNegInf
                             ? 0.0
                             : std::exp(occ[static_cast<std::size_t>(k)] - log_p);
      grad.At(t, k) = std::exp(lp.At(t, k)) - posterior;
    }
  }
  return {-log_p, grad};
}

ad::Var CtcLossVar(const a::Var& logits, const std::vector<int>& target) {
  auto [loss, grad] = CtcLossWithGrad(logits.value(), target);
  auto node = std::make_shared<a::Node>();
  node->value = Tensor::Scalar(loss);
  node->op = "ctc";
  node->inputs.push_back(logits.node_ptr());
  node->requires_grad = logits.requires_grad();
  Tensor grad_copy = grad;
  if (node->requires_grad) {
    node->grad_fn = [grad_copy](const a::Var& g) {
      return std::vector<a::Var>{a::Mul(g, a::Constant(grad_copy))};
    };
  }
  return a::Var(node);
}

}  // namespace detail

Tensor Encode(const MelSpectrogram& mel, AsrParams& params, AsrMode mode) {
  auto out = EncodeBatch({mel}, params, mode);
  return out[0];
}

std::vector<Tensor> EncodeBatch(const std::vector<MelSpectrogram>& mels,
                                AsrParams& params, AsrMode mode) {
  if (mels.empty()) throw std::invalid_argument("encode: empty batch");
  const AsrConfig& cfg = params.config;
  int max_t = 0;
  std::vector<int> lengths;
  lengths.reserve(mels.size());
  for (const auto& m : mels) {
    if (m.bands() != cfg.n_mels) {
      throw std::invalid_argument("encode: mel band count mismatch");
    }
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
            v.At(m, std::min(t, L - 1));  // edge-frame padding
      }
    }
  }
  auto get = [&params](const std::string& n) {
    return a::Constant(params.params.Get(n));
  };
  a::Var logits = detail::AsrForward(cfg, get, batch, lengths, mode, &params.running);
  const Tensor& lv = logits.value();
  std::vector<Tensor> out;
  out.reserve(mels.size());
  int tp = lv.dim(1);
  for (int b = 0; b < B; ++b) {
    int keep = detail::SubsampledLength(cfg, lengths[static_cast<std::size_t>(b)]);
    Tensor t({keep, cfg.vocab_size});
    for (int i = 0; i < keep; ++i) {
      for (int k = 0; k < cfg.vocab_size; ++k) {
        t.At(i, k) = lv[(static_cast<std::int64_t>(b) * tp + i) * cfg.vocab_size + k];
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

double CtcLoss(const Tensor& logits, const std::vector<int>& target) {
  return detail::CtcLossWithGrad(logits, target).first;
}

std::vector<int> GreedyCtcDecode(const Tensor& logits) {
  const int T = logits.dim(0);
  const int V = logits.dim(1);
  std::vector<int> out;
  int prev = -1;
  for (int t = 0; t < T; ++t) {
    int arg = 0;
    for (int k = 1; k < V; ++k) {
      if (logits.At(t, k) > logits.At(t, arg)) arg = k;
    }
    if (arg != prev && arg != 0) out.push_back(arg - 1);
    prev = arg;
  }
  return out;
}

std::pair<Tensor, Tensor> FoldBnAffine(const Tensor& gamma, const Tensor& beta,
                                       const Tensor& mean, const Tensor& var,
                                       double eps) {
  if (eps < 0) throw std::invalid_argument("fold_bn_affine: eps must be >= 0");
  const std::int64_t n = gamma.numel();
  Tensor w(gamma.shape());
  Tensor b(gamma.shape());
  for (std::int64_t i = 0; i < n; ++i) {
    if (var[i] < 0) throw std::invalid_argument("fold_bn_affine: negative variance");
    w[i] = gamma[i] / std::sqrt(var[i] + eps);
    b[i] = beta[i] - mean[i] * w[i];
  }
  return {std::move(w), std::move(b)};
}

AsrParams FuseBatchNorm(const AsrParams& params) {
  if (params.config.norm_mode != NormMode::kBatchNorm) {
    throw std::invalid_argument(
        "fuse_batchnorm: model norm_mode is " + NormModeName(params.config.norm_mode) +
        ", expected BN");
  }
  AsrParams fused;
  fused.config = params.config;
  fused.config.norm_mode = NormMode::kFusedBatchNorm;
  for (const auto& [name, t] : params.params.items()) {
    auto pos = name.find("conv.bn.g");
    if (pos != std::string::npos) {
      std::string b = name.substr(0, pos);
      auto [w, bias] = FoldBnAffine(
          params.params.Get(b + "conv.bn.g"), params.params.Get(b + "conv.bn.b"),
          params.running.Get(b + "conv.bn.mean"), params.running.Get(b + "conv.bn.var"),
          kBnEps);
      fused.params.Add(b + "conv.fold.w", std::move(w));
      fused.params.Add(b + "conv.fold.b", std::move(bias));
      continue;
    }
    if (name.find("conv.bn.b") != std::string::npos) continue;
    fused.params.Add(name, t.Clone());
  }
  return fused;
}

void SaveAsrCheckpoint(const std::string& path, const AsrParams& params,
                       const std::string& extra_json) {
  Checkpoint ckpt;
  ckpt.component = "asr";
  ckpt.config_json = params.config.ToJson();
  ckpt.extra_json = extra_json;
  ckpt.groups.emplace_back("params", params.params);
  ckpt.groups.emplace_back("running", params.running);
  SaveCheckpoint(path, ckpt);
}

AsrParams LoadAsrCheckpoint(const std::string& path, std::string* extra_json) {
  Checkpoint ckpt = LoadCheckpoint(path);
  if (ckpt.component != "asr") {
    throw std::runtime_error("checkpoint is not an asr model: " + path);
  }
  AsrParams params;
  params.config = AsrConfig::FromJson(ckpt.config_json);
  for (auto& [name, pm] : ckpt.groups) {
    if (name == "params") params.params = std::move(pm);
    if (name == "running") params.running = std::move(pm);
  }
  if (extra_json) *extra_json = ckpt.extra_json;
  return params;
}

}  // namespace specadapt
