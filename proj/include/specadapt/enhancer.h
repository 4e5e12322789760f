// Copyright 2026 The specadapt Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Spectrogram enhancer: a style-conditioned residual generator that turns
// over-smoothed synthetic mels into detailed ones, a time-pooling
// discriminator, and the adversarial training loop (hinge losses, R1
// gradient penalty every gp_every discriminator steps, frequency-pooled L1
// consistency).

#ifndef SPECADAPT_ENHANCER_H_
#define SPECADAPT_ENHANCER_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "specadapt/autodiff.h"
#include "specadapt/mel-frontend.h"
#include "specadapt/nn.h"

namespace specadapt {

struct EnhancerConfig {
  int n_mels = 80;
  int base_freq = 5;        // starting frequency resolution of the generator
  int latent_dim = 192;
  int style_depth = 4;
  int capacity = 16;
  int max_feature_maps = 192;
  int n_blocks = 4;         // each block upsamples 2x; 5 -> 80 bands
  int gp_every = 4;
  double gp_weight = 10.0;
  double consistency_weight = 0.1;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.9;
  double lr = 2e-4;
  double lr_d = 0;  // discriminator LR; 0 means use lr
  int batch_size = 8;
  int train_window = 64;    // frames per training crop, multiple of 16

  void Validate() const;
  std::string ToJson() const;
  static EnhancerConfig FromJson(const std::string& json_text);
};

struct EnhancerParams {
  EnhancerConfig config;
  ParamMap generator;
  ParamMap discriminator;
  std::uint64_t noise_seed = 0;
  // Affine range of the training corpus, used to map spectrograms to [-1, 1].
  double norm_lo = -12.0;
  double norm_hi = 2.0;
  std::int64_t step = 0;

  std::uint64_t Hash() const;
};

EnhancerParams InitEnhancer(const EnhancerConfig& config, std::uint64_t seed);

// The 5 x ceil(width) fixed random image the generator starts from; columns
// are seeded independently so any crop is consistent with any longer one.
Tensor NoiseBase(const EnhancerParams& params, int width);

// Adds generated fine detail to a blurry spectrogram. Output shape equals
// input shape; zeroing the generator's residual projections makes this the
// identity. Input must have n_mels bands and L >= 16.
MelSpectrogram Enhance(const MelSpectrogram& blurry, std::uint64_t latent_seed,
                       const EnhancerParams& params);

// Scalar realism score; length-independent by time pooling.
double Discriminate(const MelSpectrogram& mel, const EnhancerParams& params);

// Hinge losses.
double HingeDLoss(std::span<const double> real_scores,
                  std::span<const double> fake_scores);
double HingeGLoss(std::span<const double> fake_scores);

// (gp_weight / 2) * mean_b ||d score / d input||^2 at the real batch. All
// spectrograms must share one shape.
double GradientPenalty(const std::vector<MelSpectrogram>& real_batch,
                       const EnhancerParams& params);

// Mean |a - b| after 4x average pooling along the frequency axis.
double ConsistencyLoss(const MelSpectrogram& fake, const MelSpectrogram& real);

struct GanStepReport {
  double d_loss = 0;    // hinge part
  double g_loss = 0;    // adversarial + weighted consistency
  double g_adv = 0;
  double consistency = 0;
  double mean_real_score = 0;
  double mean_fake_score = 0;
  std::optional<double> gp;
  std::int64_t step = 0;
};

using MelPair = std::pair<MelSpectrogram, MelSpectrogram>;  // (blurry, real)

// Alternates one discriminator and one generator update per step on random
// fixed-width crops of the pairs. Updates params in place (including the
// normalization range, computed from the pairs on the first call) and
// returns one report per step. Throws on non-finite losses.
std::vector<GanStepReport> TrainEnhancer(EnhancerParams& params,
                                         const std::vector<MelPair>& pairs,
                                         int steps, std::uint64_t seed);

void SaveEnhancerCheckpoint(const std::string& path, const EnhancerParams& params);
EnhancerParams LoadEnhancerCheckpoint(const std::string& path);

namespace detail {

// R1 penalty for an arbitrary scalar-per-sample discriminator, used both by
// GradientPenalty and by tests with stub discriminators.
double R1Penalty(const std::function<ad::Var(const ad::Var&)>& disc,
                 const Tensor& batch, double gp_weight);

// Graph-space loss pieces shared by training and the public wrappers.
ad::Var HingeDLossVar(const ad::Var& real_scores, const ad::Var& fake_scores);
ad::Var HingeGLossVar(const ad::Var& fake_scores);
ad::Var ConsistencyLossVar(const ad::Var& fake, const ad::Var& real);

}  // namespace detail

}  // namespace specadapt

#endif  // SPECADAPT_ENHANCER_H_
