// Copyright 2026 The specadapt Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Desk-scale end-to-end recognizer: strided subsampling, blocks of
// (self-attention + depthwise-conv + feedforward) over time, a CTC head with
// greedy decoding, and folding of BatchNorm into a trainable projection so
// pretrained BN models can be finetuned without train/eval statistics
// mismatch.

#ifndef SPECADAPT_ASR_H_
#define SPECADAPT_ASR_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "specadapt/autodiff.h"
#include "specadapt/mel-frontend.h"
#include "specadapt/nn.h"

namespace specadapt {

enum class NormMode { kLayerNorm, kBatchNorm, kFusedBatchNorm };

std::string NormModeName(NormMode mode);
NormMode NormModeFromName(const std::string& name);

struct AsrConfig {
  int n_mels = 80;
  int d_model = 64;
  int n_blocks = 2;
  int subsampling = 2;      // time-axis stride of the input conv
  int conv_kernel = 7;      // depthwise kernel width
  int vocab_size = 25;      // tokens + 1; class 0 is the CTC blank
  NormMode norm_mode = NormMode::kLayerNorm;

  void Validate() const;
  std::string ToJson() const;
  static AsrConfig FromJson(const std::string& text);
};

struct AsrParams {
  AsrConfig config;
  ParamMap params;   // trainable
  ParamMap running;  // BatchNorm running statistics (empty unless BN mode)

  std::uint64_t Hash() const;
};

AsrParams InitAsr(const AsrConfig& config, std::uint64_t seed);

enum class AsrMode { kTrain, kEval };

// Logits [T', vocab_size] with T' = ceil(L / subsampling). Train mode uses
// batch statistics in BN layers and updates the running ones.
Tensor Encode(const MelSpectrogram& mel, AsrParams& params, AsrMode mode);

// Batched variant; samples are padded with their edge frame internally and
// results are cropped back, so eval-mode outputs match single-sample calls.
std::vector<Tensor> EncodeBatch(const std::vector<MelSpectrogram>& mels,
                                AsrParams& params, AsrMode mode);

// CTC negative log-likelihood of the token sequence (unshifted token ids;
// the blank class is managed internally). Throws if the target cannot be
// aligned within T' frames.
double CtcLoss(const Tensor& logits, const std::vector<int>& target);

// Per-frame argmax, collapse adjacent repeats, drop blanks.
std::vector<int> GreedyCtcDecode(const Tensor& logits);

// BatchNorm folding: w = gamma / sqrt(var + eps), b = beta - mean * w.
std::pair<Tensor, Tensor> FoldBnAffine(const Tensor& gamma, const Tensor& beta,
                                       const Tensor& mean, const Tensor& var,
                                       double eps);

// Replaces every BN layer by a trainable per-channel affine initialized from
// the running statistics. Eval-mode behaviour is preserved; the result has
// no train/eval distinction left in normalization.
AsrParams FuseBatchNorm(const AsrParams& params);

void SaveAsrCheckpoint(const std::string& path, const AsrParams& params,
                       const std::string& extra_json = "{}");
AsrParams LoadAsrCheckpoint(const std::string& path, std::string* extra_json = nullptr);

constexpr double kBnEps = 1e-5;

namespace detail {

// Training-path forward: builds the logits graph for a padded batch.
// lengths are per-sample frame counts before subsampling. When mode==kTrain
// and BN is active, running statistics in `running` are updated in place.
ad::Var AsrForward(const AsrConfig& cfg,
                   const std::function<ad::Var(const std::string&)>& get,
                   const Tensor& batch, const std::vector<int>& lengths,
                   AsrMode mode, ParamMap* running);

// CTC loss value and its gradient w.r.t. the logits.
std::pair<double, Tensor> CtcLossWithGrad(const Tensor& logits,
                                          const std::vector<int>& target);

// Loss node wrapping CtcLossWithGrad (first-order).
ad::Var CtcLossVar(const ad::Var& logits, const std::vector<int>& target);

int SubsampledLength(const AsrConfig& cfg, int frames);

}  // namespace detail

}  // namespace specadapt

#endif  // SPECADAPT_ASR_H_
