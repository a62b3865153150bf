#include <gtest/gtest.h>

#include "gifguard/data_pipeline.hpp"
#include "gifguard/error.hpp"
#include "gifguard/rds.hpp"
#include "gifguard/rng.hpp"
#include "oracles.hpp"

using namespace gifguard;
using namespace gifguard::rds;

namespace {

torch::Tensor random_clip(std::int64_t b, std::int64_t t, std::int64_t h, std::int64_t w,
                          torch::ScalarType dtype = torch::kFloat32) {
  return torch::rand({b, 3, t, h, w}, torch::TensorOptions().dtype(dtype)) * 2 - 1;
}

torch::Tensor synthetic_clips(int n, std::uint64_t base, std::int64_t t = 4, std::int64_t s = 32) {
  std::vector<torch::Tensor> items;
  for (int i = 0; i < n; ++i) items.push_back(data::normalize(data::synth_face_gif(base + i, t, s, s).frames));
  return torch::stack(items);
}

double hard_fraction(std::int64_t epoch, std::int64_t total, int draws) {
  CurriculumSchedule s;
  s.total_epochs = total;
  std::mt19937_64 rng(99);
  int hard = 0;
  for (int i = 0; i < draws; ++i) {
    const auto k = sample_spec(s, epoch, rng).kind;
    hard += (k == DistortionKind::random_crop || k == DistortionKind::semantic_surrogate);
  }
  return static_cast<double>(hard) / draws;
}

}  // namespace

TEST(Spec, SerializeRoundTrip) {
  auto s = default_spec(DistortionKind::g_noise, 7);
  EXPECT_EQ(s.serialize(), "kind=g_noise;sigma=0.05;seed=7");
  EXPECT_EQ(DistortionSpec::parse(s.serialize()), s);
  for (auto k : kAllKinds) {
    const auto d = default_spec(k, 12345678901234ull);
    EXPECT_EQ(DistortionSpec::parse(d.serialize()), d) << kind_name(k);
    EXPECT_EQ(parse_kind(kind_label(k)), k);
    EXPECT_EQ(parse_kind(kind_name(k)), k);
  }
  EXPECT_THROW(parse_kind("sharpen"), Error);
  EXPECT_THROW(DistortionSpec::parse("sigma=0.1"), Error);
}

TEST(Spec, DefaultStrengths) {
  EXPECT_DOUBLE_EQ(default_spec(DistortionKind::g_noise).param("sigma"), 0.05);
  EXPECT_DOUBLE_EQ(default_spec(DistortionKind::diff_jpeg).param("quality"), 75);
  EXPECT_DOUBLE_EQ(default_spec(DistortionKind::salt_pepper).param("ratio"), 0.005);
  EXPECT_DOUBLE_EQ(default_spec(DistortionKind::g_blur).param("kernel"), 5);
  EXPECT_DOUBLE_EQ(default_spec(DistortionKind::random_crop).param("scale_min"), 0.8);
  EXPECT_THROW(default_spec(DistortionKind::g_noise).param("quality"), Error);
}

TEST(Attacks, IdentityIsBitExact) {
  const auto g = random_clip(2, 4, 8, 8);
  EXPECT_TRUE(torch::equal(apply_distortion(g, default_spec(DistortionKind::identity)).tensor, g));
}

TEST(Attacks, ShuffleOfIdenticalFramesIsNoOp) {
  const auto frame = random_clip(2, 1, 8, 8);
  const auto g = frame.expand({2, 3, 6, 8, 8}).contiguous();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EXPECT_TRUE(torch::equal(apply_distortion(g, default_spec(DistortionKind::frame_shuffle, seed)).tensor, g));
  }
}

TEST(Attacks, ShuffleIsAPermutation) {
  auto g = torch::arange(6, torch::kFloat32).view({1, 1, 6, 1, 1}).expand({1, 3, 6, 2, 2}).contiguous();
  const auto out = apply_distortion(g, default_spec(DistortionKind::frame_shuffle, 3)).tensor;
  auto v = oracle::to_vec(out[0][0].select(1, 0).select(1, 0));
  std::sort(v.begin(), v.end());
  EXPECT_EQ(v, (std::vector<double>{0, 1, 2, 3, 4, 5}));
}

TEST(Attacks, NoiseStd) {
  const auto z = torch::zeros({1, 1, 1, 1, 100000});
  const auto out = apply_distortion(z, default_spec(DistortionKind::g_noise, 11)).tensor;
  const double sd = out.std().item<double>();
  EXPECT_GE(sd, 0.049);
  EXPECT_LE(sd, 0.051);
}

TEST(Attacks, MedianRemovesOutlier) {
  auto g = torch::full({1, 3, 5, 7, 7}, 0.2);
  g[0][1][2][3][3] = 1.0;
  const auto out = apply_distortion(g, default_spec(DistortionKind::median3d)).tensor;
  EXPECT_TRUE(torch::allclose(out, torch::full_like(g, 0.2)));
}

TEST(Attacks, FullScaleCropIsIdentity) {
  auto spec = default_spec(DistortionKind::random_crop, 4);
  spec.params["scale_min"] = 1.0;
  spec.params["scale_max"] = 1.0;
  const auto g = random_clip(2, 3, 8, 8);
  EXPECT_LE((apply_distortion(g, spec).tensor - g).abs().max().item<double>(), 1e-6);
}

TEST(Attacks, CropChangesGenericInput) {
  const auto g = random_clip(1, 3, 16, 16);
  const auto out = apply_distortion(g, default_spec(DistortionKind::random_crop, 5)).tensor;
  EXPECT_EQ(out.sizes(), g.sizes());
}

TEST(Attacks, SaltPepperRatio) {
  const auto g = torch::zeros({1, 3, 10, 64, 64});
  const auto out = apply_distortion(g, default_spec(DistortionKind::salt_pepper, 2)).tensor;
  const auto hit = (out[0][0] != 0).to(torch::kFloat64);
  EXPECT_NEAR(hit.mean().item<double>(), 0.005, 1e-4);
  // The same positions are hit in every channel.
  EXPECT_TRUE(torch::equal(out[0][0], out[0][1]));
}

TEST(Attacks, BlurPreservesConstants) {
  const auto g = torch::full({1, 3, 2, 9, 9}, -0.3);
  EXPECT_TRUE(torch::allclose(apply_distortion(g, default_spec(DistortionKind::g_blur)).tensor, g));
}

TEST(Attacks, FrameDropKeepsEarlierFrames) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto src = frame_drop_sources(10, 0.7, rng);
    ASSERT_EQ(src.size(), 10u);
    for (std::size_t t = 0; t < src.size(); ++t) {
      ASSERT_GE(src[t], 0);
      if (t > 0) ASSERT_GE(src[t], src[t - 1]);
      ASSERT_TRUE(src[static_cast<std::size_t>(src[t])] == src[t]);
    }
  }
  std::mt19937_64 all(2);
  const auto none_kept = frame_drop_sources(6, 1.0, all);
  EXPECT_EQ(std::set<std::int64_t>(none_kept.begin(), none_kept.end()).size(), 1u);
}

TEST(Attacks, FrameReplaceChangesOneFrame) {
  auto g = torch::arange(8, torch::kFloat32).view({1, 1, 8, 1, 1}).expand({1, 3, 8, 2, 2}).contiguous();
  const auto out = apply_distortion(g, default_spec(DistortionKind::frame_replace, 9)).tensor;
  EXPECT_EQ((out != g).any(4).any(3).any(1).sum().item<int>(), 1);
}

TEST(Attacks, TemporalAttackOnSingleFrameWarns) {
  const auto g = random_clip(1, 1, 8, 8);
  const auto out = apply_distortion(g, default_spec(DistortionKind::frame_drop, 1));
  EXPECT_TRUE(torch::equal(out.tensor, g));
  ASSERT_EQ(out.warnings.size(), 1u);
}

TEST(Attacks, SameSpecReplaysExactly) {
  const auto g = random_clip(2, 4, 16, 16);
  for (auto k : kAllKinds) {
    if (k == DistortionKind::semantic_surrogate) continue;
    const auto spec = default_spec(k, 77);
    EXPECT_TRUE(torch::equal(apply_distortion(g, spec).tensor, apply_distortion(g, spec).tensor)) << kind_name(k);
  }
}

TEST(Jpeg, DctOfConstantBlock) {
  const auto D = dct_matrix();
  const auto block = torch::full({8, 8}, 3.0, torch::kFloat64);
  const auto c = torch::matmul(torch::matmul(D, block), D.t());
  EXPECT_NEAR(c[0][0].item<double>(), 24.0, 1e-12);
  auto ac = c.clone();
  ac[0][0] = 0;
  EXPECT_LT(ac.abs().max().item<double>(), 1e-12);
  EXPECT_TRUE(torch::allclose(torch::matmul(D, D.t()), torch::eye(8, torch::kFloat64)));
}

TEST(Jpeg, QualityHundredNearLossless) {
  const auto g = torch::full({1, 3, 1, 16, 16}, 0.25, torch::kFloat64);
  EXPECT_LT((diff_jpeg(g, 100) - g).abs().max().item<double>(), 1e-2);
  EXPECT_TRUE(torch::equal(jpeg_quant_table(100, false), torch::ones({8, 8}, torch::kFloat64)));
}

TEST(Jpeg, QuantTables) {
  EXPECT_EQ(jpeg_quant_table(50, false)[0][0].item<double>(), 16);
  EXPECT_EQ(jpeg_quant_table(75, false)[0][0].item<double>(), 8);
  EXPECT_EQ(jpeg_quant_table(75, true)[7][7].item<double>(), 50);
  EXPECT_THROW(jpeg_quant_table(0, false), Error);
}

TEST(Jpeg, MatchesScalarPipeline) {
  torch::manual_seed(8);
  for (int trial = 0; trial < 3; ++trial) {
    const auto g = random_clip(1, 1, 16, 16, torch::kFloat64);
    const auto out = diff_jpeg(g, 75);
    const auto ref = oracle::jpeg_frame(oracle::to_vec(g[0].select(1, 0)), 16, 16, 75);
    const auto got = oracle::to_vec(out[0].select(1, 0));
    ASSERT_EQ(got.size(), ref.size());
    for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], ref[i], 1e-5) << i;
  }
}

TEST(Jpeg, UnalignedSizesPadded) {
  const auto g = random_clip(1, 2, 10, 13);
  EXPECT_EQ(diff_jpeg(g, 75).sizes(), g.sizes());
}

TEST(Jpeg, LowerQualityLosesMore) {
  const auto g = data::normalize(data::synth_face_gif(3, 2, 32, 32).frames).unsqueeze(0).to(torch::kFloat64);
  double prev = 0;
  for (int q : {95, 75, 50, 20}) {
    const double err = (diff_jpeg(g, q) - g).pow(2).mean().item<double>();
    EXPECT_GT(err, prev) << q;
    prev = err;
  }
}

TEST(Gradients, DiffJpeg) {
  torch::manual_seed(9);
  const auto x = random_clip(1, 1, 8, 8, torch::kFloat64);
  const auto w = torch::randn_like(x);
  EXPECT_LT(oracle::gradient_error([&](const torch::Tensor& v) { return (diff_jpeg(v, 75) * w).sum(); }, x), 1e-3);
}

TEST(Gradients, Blur) {
  const auto x = random_clip(1, 2, 8, 8, torch::kFloat64);
  const auto w = torch::randn_like(x);
  const auto spec = default_spec(DistortionKind::g_blur);
  EXPECT_LT(oracle::gradient_error([&](const torch::Tensor& v) { return (apply_distortion(v, spec).tensor * w).sum(); }, x),
            1e-3);
}

TEST(Gradients, Crop) {
  const auto x = random_clip(1, 2, 8, 8, torch::kFloat64);
  const auto w = torch::randn_like(x);
  const auto spec = default_spec(DistortionKind::random_crop, 3);
  EXPECT_LT(oracle::gradient_error([&](const torch::Tensor& v) { return (apply_distortion(v, spec).tensor * w).sum(); }, x),
            1e-3);
}

TEST(Surrogate, UnfittedUnavailable) {
  SemanticSurrogate s;
  const auto g = random_clip(1, 2, 16, 16);
  try {
    semantic_surrogate(g, default_face_mask(2, 16, 16), &s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "surrogate unavailable");
  }
  EXPECT_THROW(apply_distortion(g, default_spec(DistortionKind::semantic_surrogate)), Error);
}

TEST(Surrogate, MaskBehaviour) {
  torch::manual_seed(10);
  SemanticSurrogate s;
  s.fit(synthetic_clips(4, 100, 2, 16), {.steps = 5, .batch_frames = 4, .learning_rate = 1e-3, .seed = 1});
  ASSERT_TRUE(s.fitted());
  const auto g = random_clip(1, 2, 16, 16);
  EXPECT_TRUE(torch::equal(semantic_surrogate(g, torch::zeros({2, 16, 16}), &s), g));
  const auto full = semantic_surrogate(g, torch::ones({2, 16, 16}), &s);
  EXPECT_TRUE(torch::allclose(full, s.reconstruct(g), 1e-6, 1e-6));
  EXPECT_GT((full - g).norm().item<double>(), 0.0);
  for (const auto& p : s.net()->parameters()) EXPECT_FALSE(p.requires_grad());
}

TEST(Surrogate, FaceMaskIsCentredEllipse) {
  const auto m = default_face_mask(3, 64, 64);
  EXPECT_EQ(m.sizes().vec(), (std::vector<std::int64_t>{3, 64, 64}));
  EXPECT_EQ(m[0][33][32].item<float>(), 1.0f);
  EXPECT_EQ(m[0][0][0].item<float>(), 0.0f);
  const double frac = m.mean().item<double>();
  EXPECT_GT(frac, 0.2);
  EXPECT_LT(frac, 0.6);
}

TEST(Surrogate, FittingLowersReconstructionError) {
  torch::manual_seed(11);
  const auto train = synthetic_clips(8, 0, 2, 32);
  SemanticSurrogate early, late;
  early.fit(train, {.steps = 1, .batch_frames = 8, .learning_rate = 2e-3, .seed = 2});
  late.fit(train, {.steps = 150, .batch_frames = 8, .learning_rate = 2e-3, .seed = 2});
  const double e0 = (early.reconstruct(train) - train).pow(2).mean().item<double>();
  const double e1 = (late.reconstruct(train) - train).pow(2).mean().item<double>();
  EXPECT_LT(e1, 0.5 * e0);
}

TEST(Curriculum, FiftyEpochBoundaries) {
  CurriculumSchedule s;
  s.total_epochs = 50;
  EXPECT_EQ(s.stage_end_epochs(), (std::array<std::int64_t, 3>{3, 10, 20}));
  for (std::int64_t e : {1, 2, 3}) EXPECT_EQ(stage_for_epoch(s, e).index, 1);
  EXPECT_EQ(stage_for_epoch(s, 4).index, 2);
  EXPECT_EQ(stage_for_epoch(s, 10).index, 2);
  EXPECT_EQ(stage_for_epoch(s, 11).index, 3);
  EXPECT_DOUBLE_EQ(stage_for_epoch(s, 11).hard_probability, 0.3);
  EXPECT_EQ(stage_for_epoch(s, 21).index, 4);
  EXPECT_DOUBLE_EQ(stage_for_epoch(s, 21).hard_probability, 0.6);
  EXPECT_EQ(stage_for_epoch(s, 50).index, 4);
  EXPECT_THROW(stage_for_epoch(s, 51), Error);
}

TEST(Curriculum, DeskBoundaries) {
  CurriculumSchedule s;
  s.total_epochs = 20;
  EXPECT_EQ(s.stage_end_epochs(), (std::array<std::int64_t, 3>{1, 4, 8}));
}

TEST(Curriculum, DistributionsSumToOne) {
  CurriculumSchedule s;
  s.total_epochs = 50;
  for (std::int64_t e = 1; e <= 50; ++e) {
    double sum = 0;
    for (auto& [k, p] : stage_for_epoch(s, e).distribution) sum += p;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Curriculum, EarlyEpochsAreIdentity) {
  CurriculumSchedule s;
  s.total_epochs = 50;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample_spec(s, 2, rng).kind, DistortionKind::identity);
}

TEST(Curriculum, HardFractions) {
  EXPECT_EQ(hard_fraction(5, 50, 10000), 0.0);
  const double p3 = hard_fraction(15, 50, 100000);
  EXPECT_GE(p3, 0.29);
  EXPECT_LE(p3, 0.31);
  const double p4 = hard_fraction(30, 50, 100000);
  EXPECT_GE(p4, 0.59);
  EXPECT_LE(p4, 0.61);
}
