// Copyright 2026 The specadapt Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "specadapt/enhancer.h"
#include "specadapt/synthlang.h"

using namespace specadapt;
namespace a = specadapt::ad;

namespace {

MelSpectrogram RandomMel(int L, std::uint64_t seed, int n_mels = 80) {
  MelConfig cfg;
  cfg.n_mels = n_mels;
  Tensor t({n_mels, L});
  Rng rng(seed);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = -4.0 + 2.0 * rng.Normal();
  return MakeMelSpectrogram(std::move(t), cfg);
}

EnhancerConfig SmallConfig() {
  EnhancerConfig cfg;
  cfg.latent_dim = 16;
  cfg.style_depth = 2;
  cfg.capacity = 4;
  cfg.max_feature_maps = 32;
  cfg.batch_size = 4;
  cfg.train_window = 32;
  return cfg;
}

void ZeroResidualProjections(EnhancerParams& params) {
  for (int i = 0; i < params.config.n_blocks; ++i) {
    std::string p = "blocks." + std::to_string(i) + ".to_res.";
    for (const char* leaf : {"w", "b"}) {
      Tensor& t = params.generator.Get(p + leaf);
      for (std::int64_t k = 0; k < t.numel(); ++k) t[k] = 0.0;
    }
  }
}

}  // namespace

TEST_CASE("hinge discriminator loss hand values") {
  std::vector<double> real1{2.0}, fake1{-2.0};
  CHECK(HingeDLoss(real1, fake1) == 0.0);
  std::vector<double> real2{0.0}, fake2{0.0};
  CHECK(HingeDLoss(real2, fake2) == 2.0);
  std::vector<double> real3{1.0}, fake3{-1.0};
  CHECK(HingeDLoss(real3, fake3) == 0.0);
  std::vector<double> empty;
  CHECK_THROWS(HingeDLoss(empty, fake1));
}

TEST_CASE("hinge generator loss hand values") {
  std::vector<double> f1{3.0};
  CHECK(HingeGLoss(f1) == -3.0);
  std::vector<double> f2{0.0, 0.0};
  CHECK(HingeGLoss(f2) == 0.0);
  std::vector<double> f3{1.0, -1.0};
  CHECK(HingeGLoss(f3) == 0.0);
}

TEST_CASE("hinge d loss is nonnegative") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> r(4), f(4);
    for (auto& v : r) v = 3.0 * rng.Normal();
    for (auto& v : f) v = 3.0 * rng.Normal();
    CHECK(HingeDLoss(r, f) >= 0.0);
  }
}

TEST_CASE("R1 penalty on stub discriminators") {
  // D(x) = sum(x): gradient is all ones, so the squared norm counts cells.
  Tensor batch({1, 1, 80, 32});
  Rng rng(5);
  for (std::int64_t i = 0; i < batch.numel(); ++i) batch[i] = rng.Normal();
  double pen = detail::R1Penalty([](const a::Var& x) { return a::Sum(x); }, batch, 2.0);
  CHECK(pen == doctest::Approx(2560.0).epsilon(1e-12));

  double zero = detail::R1Penalty(
      [](const a::Var& x) { return a::ScalarMul(a::Sum(a::ScalarMul(x, 0.0)), 1.0); },
      batch, 2.0);
  CHECK(zero == 0.0);
}

TEST_CASE("R1 penalty matches a finite-difference oracle on a miniature net") {
  Rng rng(6);
  Tensor x({1, 1, 4, 16});
  for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = rng.Normal();
  Tensor w1({2, 1, 3, 3});
  for (std::int64_t i = 0; i < w1.numel(); ++i) w1[i] = 0.5 * rng.Normal();
  Tensor w2({1, 2, 1, 1});
  for (std::int64_t i = 0; i < w2.numel(); ++i) w2[i] = 0.5 * rng.Normal();

  auto disc = [&](const a::Var& v) {
    auto h = a::LeakyRelu(a::Conv2d(v, a::Constant(w1), 1, 1, 1, 1), 0.2);
    return a::Mean(a::Conv2d(h, a::Constant(w2), 1, 1, 0, 0));
  };
  double gp_weight = 10.0;
  double pen = detail::R1Penalty(disc, x, gp_weight);

  auto eval = [&](const Tensor& xt) {
    return disc(a::Constant(xt)).value().ScalarValue();
  };
  double h = 1e-5;
  double norm2 = 0;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    Tensor xp = x.Clone();
    xp[i] += h;
    Tensor xm = x.Clone();
    xm[i] -= h;
    double g = (eval(xp) - eval(xm)) / (2 * h);
    norm2 += g * g;
  }
  double expected = gp_weight / 2.0 * norm2;
  CHECK(std::fabs(pen - expected) / std::max(1e-12, std::fabs(expected)) < 1e-3);
}

TEST_CASE("consistency loss closed-form cases") {
  auto real = RandomMel(40, 11);
  CHECK(ConsistencyLoss(real, real) == 0.0);

  // Constant offset survives pooling.
  auto shifted = real;
  shifted.values = real.values.Clone();
  for (std::int64_t i = 0; i < shifted.values.numel(); ++i) shifted.values[i] += 0.7;
  CHECK(ConsistencyLoss(shifted, real) == doctest::Approx(0.7).epsilon(1e-12));

  // Zero-mean alternation inside each 4-bin group pools away.
  auto wiggly = real;
  wiggly.values = real.values.Clone();
  for (int m = 0; m < 80; ++m) {
    double delta = (m % 4 < 2) ? 0.5 : -0.5;
    for (int t = 0; t < 40; ++t) wiggly.values.At(m, t) += delta;
  }
  CHECK(ConsistencyLoss(wiggly, real) == doctest::Approx(0.0).epsilon(1e-12));

  auto other = RandomMel(41, 12);
  CHECK_THROWS(ConsistencyLoss(real, other));

  // Symmetry.
  auto b = RandomMel(40, 13);
  CHECK(ConsistencyLoss(real, b) == doctest::Approx(ConsistencyLoss(b, real)).epsilon(1e-12));
}

TEST_CASE("hinge and consistency gradients match finite differences") {
  Rng rng(21);
  Tensor scores_r({3});
  Tensor scores_f({3});
  for (int i = 0; i < 3; ++i) {
    scores_r[i] = 0.4 * rng.Normal() + 0.5;  // keep away from the hinge kink
    scores_f[i] = 0.4 * rng.Normal() - 0.5;
  }
  auto dloss = [&](const Tensor& r, const Tensor& f) {
    return detail::HingeDLossVar(a::Constant(r), a::Constant(f)).value().ScalarValue();
  };
  {
    a::Var r = a::Leaf(scores_r.Clone());
    a::Var f = a::Leaf(scores_f.Clone());
    auto g = a::Grad(detail::HingeDLossVar(r, f), {r, f});
    double h = 1e-6;
    for (int i = 0; i < 3; ++i) {
      Tensor rp = scores_r.Clone();
      rp[i] += h;
      Tensor rm = scores_r.Clone();
      rm[i] -= h;
      double fd = (dloss(rp, scores_f) - dloss(rm, scores_f)) / (2 * h);
      CHECK(std::fabs(g[0].value()[i] - fd) / std::max(1.0, std::fabs(fd)) < 1e-4);
    }
  }
  {
    auto fake = RandomMel(16, 22, 8);
    auto real = RandomMel(16, 23, 8);
    a::Var f = a::Leaf(fake.values.Reshaped({1, 1, 8, 16}).Clone());
    a::Var r = a::Constant(real.values.Reshaped({1, 1, 8, 16}));
    auto g = a::Grad(detail::ConsistencyLossVar(f, r), {f})[0];
    double h = 1e-6;
    for (std::int64_t i = 0; i < 10; ++i) {
      Tensor fp = fake.values.Clone();
      fp[i] += h;
      Tensor fm = fake.values.Clone();
      fm[i] -= h;
      double lp = detail::ConsistencyLossVar(a::Constant(fp.Reshaped({1, 1, 8, 16})), r)
                      .value().ScalarValue();
      double lm = detail::ConsistencyLossVar(a::Constant(fm.Reshaped({1, 1, 8, 16})), r)
                      .value().ScalarValue();
      double fd = (lp - lm) / (2 * h);
      CHECK(std::fabs(g.value()[i] - fd) / std::max(1.0, std::fabs(fd)) < 1e-4);
    }
  }
}

TEST_CASE("enhance preserves shape for assorted lengths") {
  EnhancerParams params = InitEnhancer(SmallConfig(), 3);
  for (int L : {16, 64, 70, 257}) {
    auto mel = RandomMel(L, static_cast<std::uint64_t>(L));
    auto out = Enhance(mel, 9, params);
    CHECK(out.bands() == 80);
    CHECK(out.frames() == L);
  }
  CHECK(NoiseBase(params, 4).shape() == std::vector<int>{5, 4});
}

TEST_CASE("noise base is fixed for a model and consistent across widths") {
  EnhancerParams params = InitEnhancer(SmallConfig(), 3);
  Tensor n4 = NoiseBase(params, 4);
  Tensor n4b = NoiseBase(params, 4);
  Tensor n16 = NoiseBase(params, 16);
  for (std::int64_t i = 0; i < n4.numel(); ++i) CHECK(n4[i] == n4b[i]);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 4; ++c) CHECK(n4.At(r, c) == n16.At(r, c));
  }
}

TEST_CASE("zero residual projections make enhance the identity") {
  EnhancerParams params = InitEnhancer(SmallConfig(), 4);
  ZeroResidualProjections(params);
  for (int L : {16, 70, 96}) {
    auto mel = RandomMel(L, static_cast<std::uint64_t>(100 + L));
    auto out = Enhance(mel, 5, params);
    REQUIRE(out.values.shape() == mel.values.shape());
    for (std::int64_t i = 0; i < mel.values.numel(); ++i) {
      CHECK(out.values[i] == mel.values[i]);
    }
  }
}

TEST_CASE("enhance is deterministic and latent-sensitive") {
  EnhancerParams params = InitEnhancer(SmallConfig(), 5);
  auto mel = RandomMel(48, 31);
  auto o1 = Enhance(mel, 7, params);
  auto o2 = Enhance(mel, 7, params);
  for (std::int64_t i = 0; i < o1.values.numel(); ++i) CHECK(o1.values[i] == o2.values[i]);
  auto o3 = Enhance(mel, 8, params);
  double diff = 0;
  for (std::int64_t i = 0; i < o1.values.numel(); ++i) {
    diff += std::fabs(o1.values[i] - o3.values[i]);
  }
  CHECK(diff > 0);
}

TEST_CASE("enhance rejects wrong band counts and short inputs") {
  EnhancerParams params = InitEnhancer(SmallConfig(), 6);
  auto bad = RandomMel(32, 1, 40);
  CHECK_THROWS(Enhance(bad, 0, params));
  auto tiny = RandomMel(8, 2);
  CHECK_THROWS(Enhance(tiny, 0, params));
}

TEST_CASE("discriminator yields one finite scalar regardless of length") {
  EnhancerParams params = InitEnhancer(SmallConfig(), 7);
  auto m32 = RandomMel(32, 41);
  auto m256 = RandomMel(256, 42);
  double s32 = Discriminate(m32, params);
  double s256 = Discriminate(m256, params);
  CHECK(std::isfinite(s32));
  CHECK(std::isfinite(s256));
  CHECK(Discriminate(m32, params) == s32);

  auto loud = m32;
  loud.values = m32.values.Clone();
  for (std::int64_t i = 0; i < loud.values.numel(); ++i) loud.values[i] *= 100.0;
  CHECK(std::isfinite(Discriminate(loud, params)));
}

TEST_CASE("training reports carry gp exactly on every 4th discriminator step") {
  SynthLangConfig scfg;
  SynthLang synth(scfg);
  auto grammar = MakeDomainGrammar(scfg, 'A', 5);
  std::vector<MelPair> pairs;
  for (std::uint64_t s = 0; s < 6; ++s) {
    auto tokens = SampleText(grammar, s);
    auto spk = synth.SampleSpeaker(s);
    pairs.emplace_back(synth.RenderBlurry(tokens, spk, s),
                       synth.RenderReal(tokens, spk, s));
  }
  EnhancerParams params = InitEnhancer(SmallConfig(), 8);
  auto reports = TrainEnhancer(params, pairs, 8, 99);
  REQUIRE(reports.size() == 8);
  for (const auto& r : reports) {
    CHECK(r.d_loss >= 0.0);
    CHECK(r.consistency >= 0.0);
    bool expect_gp = r.step % 4 == 0;
    CHECK(r.gp.has_value() == expect_gp);
    if (r.gp) CHECK(*r.gp >= 0.0);
    // G-loss decomposition: total = adversarial + weight * consistency.
    CHECK(r.g_loss == doctest::Approx(r.g_adv + 0.1 * r.consistency).epsilon(1e-9));
  }
  CHECK(params.step == 8);

  // Resuming continues the step numbering.
  auto more = TrainEnhancer(params, pairs, 3, 100);
  CHECK(more.front().step == 9);
  CHECK(more.back().step == 11);
}

TEST_CASE("checkpoint round trip preserves parameters bit-exactly") {
  EnhancerParams params = InitEnhancer(SmallConfig(), 9);
  params.norm_lo = -11.0;
  params.norm_hi = 1.5;
  params.step = 17;
  auto dir = std::filesystem::temp_directory_path() / "specadapt-enh-ckpt";
  std::filesystem::create_directories(dir);
  auto path = (dir / "e.ckpt").string();
  SaveEnhancerCheckpoint(path, params);
  auto back = LoadEnhancerCheckpoint(path);
  CHECK(back.Hash() == params.Hash());
  CHECK(back.step == 17);
  CHECK(back.norm_lo == params.norm_lo);
  CHECK(back.config.capacity == params.config.capacity);

  // save -> load -> save produces identical bytes
  auto path2 = (dir / "e2.ckpt").string();
  SaveEnhancerCheckpoint(path2, back);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  std::filesystem::remove_all(dir);
}

TEST_CASE("training is deterministic given seeds") {
  SynthLangConfig scfg;
  SynthLang synth(scfg);
  auto grammar = MakeDomainGrammar(scfg, 'A', 5);
  std::vector<MelPair> pairs;
  for (std::uint64_t s = 0; s < 4; ++s) {
    auto tokens = SampleText(grammar, s);
    auto spk = synth.SampleSpeaker(s);
    pairs.emplace_back(synth.RenderBlurry(tokens, spk, s),
                       synth.RenderReal(tokens, spk, s));
  }
  EnhancerParams p1 = InitEnhancer(SmallConfig(), 10);
  EnhancerParams p2 = InitEnhancer(SmallConfig(), 10);
  auto r1 = TrainEnhancer(p1, pairs, 5, 77);
  auto r2 = TrainEnhancer(p2, pairs, 5, 77);
  CHECK(p1.Hash() == p2.Hash());
  for (std::size_t i = 0; i < r1.size(); ++i) {
    CHECK(r1[i].d_loss == r2[i].d_loss);
    CHECK(r1[i].g_loss == r2[i].g_loss);
  }
}
