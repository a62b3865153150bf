#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gifguard/error.hpp"
#include "gifguard/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gifguard;
using namespace gifguard::metrics;

namespace {

// A smooth random image pair in 8-bit units: b is a perturbed copy of a.
std::pair<torch::Tensor, torch::Tensor> random_pair(std::int64_t planes, std::int64_t h, std::int64_t w,
                                                    double noise) {
  auto a = torch::rand({planes, h, w}, torch::kFloat64) * 255.0;
  a = torch::avg_pool2d(a.unsqueeze(1), 3, 1, 1, false, false).squeeze(1);
  auto b = (a + noise * torch::randn_like(a)).clamp(0, 255);
  return {a, b};
}

std::vector<double> plane(const torch::Tensor& t, std::int64_t i) { return oracle::to_vec(t[i]); }

MetricRow row(std::string method, std::string kind, std::string metric, double v) {
  return {std::move(method), std::move(kind), "", 4, std::move(metric), v};
}

}  // namespace

TEST(Psnr, IdenticalIsCapped) {
  const auto a = torch::rand({3, 8, 8});
  EXPECT_EQ(psnr(a, a, 1.0), kPsnrCap);
}

TEST(Psnr, BlackVersusWhiteIsZero) {
  EXPECT_NEAR(psnr(Frames(2, 4, 4, 0), Frames(2, 4, 4, 255)), 0.0, 1e-12);
}

TEST(Psnr, MatchesLoopReference) {
  torch::manual_seed(1);
  for (int i = 0; i < 50; ++i) {
    auto [a, b] = random_pair(3, 12, 12, 5.0);
    EXPECT_NEAR(psnr(a, b, 255.0), oracle::psnr(oracle::to_vec(a), oracle::to_vec(b), 255.0), 1e-6);
  }
}

TEST(Ssim, IdenticalIsOne) {
  const auto a = torch::rand({2, 16, 16}) * 255;
  EXPECT_NEAR(ssim(a, a, 255.0), 1.0, 1e-12);
}

TEST(Ssim, ConstantImagesClosedForm) {
  const double L = 255.0, c1 = (0.01 * L) * (0.01 * L);
  // Zero variances leave only the luminance term: C1 / (L^2 + C1).
  const double expect = c1 / (L * L + c1);
  EXPECT_NEAR(ssim(torch::zeros({1, 16, 16}), torch::full({1, 16, 16}, L), L), expect, 1e-12);
}

TEST(Ssim, MatchesWindowedReference) {
  torch::manual_seed(2);
  for (int i = 0; i < 50; ++i) {
    auto [a, b] = random_pair(2, 16, 20, 20.0);
    double ref = 0;
    for (std::int64_t p = 0; p < 2; ++p) ref += oracle::ssim_plane(plane(a, p), plane(b, p), 16, 20, 255.0);
    EXPECT_NEAR(ssim(a, b, 255.0), ref / 2, 1e-5);
  }
}

TEST(Ssim, SmallPlanesShrinkWindow) {
  const auto a = torch::rand({1, 5, 5}) * 255;
  EXPECT_NEAR(ssim(a, a, 255.0), 1.0, 1e-12);
  const auto b = a.flip(2);
  const double v = ssim(a, b, 255.0);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_LT(v, 1.0);
}

TEST(Vif, IdenticalIsOne) {
  auto [a, b] = random_pair(2, 32, 32, 0.0);
  EXPECT_NEAR(vif_p(a, a), 1.0, 1e-9);
}

TEST(Vif, IndependentNoiseCollapses) {
  torch::manual_seed(3);
  auto [a, unused] = random_pair(3, 64, 64, 0.0);
  const auto noise = torch::rand({3, 64, 64}, torch::kFloat64) * 255.0;
  EXPECT_LT(vif_p(a, noise), 0.05);
}

TEST(Vif, MatchesLoopReference) {
  torch::manual_seed(4);
  for (int i = 0; i < 50; ++i) {
    auto [a, b] = random_pair(2, 40, 40, 10.0);
    double num = 0, den = 0;
    for (std::int64_t p = 0; p < 2; ++p) {
      const auto [n, d] = oracle::vif_plane(plane(a, p), plane(b, p), 40, 40);
      num += n;
      den += d;
    }
    EXPECT_NEAR(vif_p(a, b), num / den, 1e-4);
  }
}

TEST(Vif, DegradesWithNoise) {
  torch::manual_seed(5);
  auto [a, b1] = random_pair(2, 48, 48, 5.0);
  const auto b2 = (a + 40.0 * torch::randn_like(a)).clamp(0, 255);
  EXPECT_GT(vif_p(a, b1), vif_p(a, b2));
}

TEST(Units, PixelMapping) {
  const auto t = torch::tensor({-1.0, 0.0, 1.0});
  EXPECT_TRUE(torch::allclose(to_pixel_units(t), torch::tensor({0.0, 127.5, 255.0}, torch::kFloat64)));
}

TEST(Ber, Basics) {
  const auto m = torch::tensor({1.0, 0.0, 1.0, 1.0});
  EXPECT_EQ(ber(m, m), 0.0);
  EXPECT_EQ(ber(m, 1.0 - m), 1.0);
  EXPECT_THROW(ber(m, torch::zeros({3})), Error);
  MessageVector a{{1, 0, 1, 1}}, b{{1, 1, 1, 0}};
  EXPECT_DOUBLE_EQ(ber(a, b), 0.5);
}

TEST(Ber, RandomMessagesAtChance) {
  std::mt19937_64 rng(6);
  double total = 0;
  for (int i = 0; i < 10000; ++i) total += ber(MessageVector::random(32, rng), MessageVector::random(32, rng));
  const double mean = total / 10000;
  EXPECT_GE(mean, 0.49);
  EXPECT_LE(mean, 0.51);
}

TEST(Ber, SymmetryAndTriangleInequality) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    const auto a = MessageVector::random(32, rng), b = MessageVector::random(32, rng),
               c = MessageVector::random(32, rng);
    ASSERT_DOUBLE_EQ(ber(a, b), ber(b, a));
    ASSERT_LE(ber(a, c), ber(a, b) + ber(b, c) + 1e-12);
  }
}

TEST(Perceptual, ZeroForIdentical) {
  obj::RandomConvPerceptual phi;
  const auto g = torch::rand({1, 3, 2, 16, 16}) * 2 - 1;
  EXPECT_EQ(perceptual_distance(g, g, phi), 0.0);
  EXPECT_GT(perceptual_distance(g, -g, phi), 0.0);
}

TEST(Report, CsvRoundTrip) {
  testutil::TempDir dir;
  EvalReport r;
  r.rows = {row("GIFGuard", "none", "psnr", 41.25), row("GIFGuard", "g-noise", "ber", 0.1 + 0.2),
            {"A, \"quoted\"", "jpeg", "kind=diff_jpeg;quality=75;seed=3", 2, "ber", 1.0 / 3.0}};
  make_report(r, dir.path);
  const auto back = read_report_csv(dir.path / kReportCsv);
  EXPECT_EQ(back.rows, r.rows);
  EXPECT_TRUE(std::filesystem::exists(dir.path / kReportMarkdown));
  EXPECT_EQ(testutil::read_text(dir.path / kReportCsv).substr(0, 52),
            "method,attack_kind,attack_params,n_samples,metric,va");
}

TEST(Report, LookupMissingIsNan) {
  EvalReport r;
  r.rows = {row("M", "jpeg", "ber", 0.25)};
  EXPECT_EQ(r.value("M", "jpeg", "ber"), 0.25);
  EXPECT_TRUE(std::isnan(r.value("M", "crop", "ber")));
}

TEST(Report, TableGroupingMatchesBenchmarkLayout) {
  const auto& blocks = report_blocks();
  ASSERT_GE(blocks.size(), 2u);
  EXPECT_EQ(blocks[0].title, "Signal Degradation & Geometric Distortion");
  EXPECT_EQ(blocks[0].columns,
            (std::vector<std::string>{"identity", "g-blur", "g-noise", "salt-pep", "median", "jpeg", "drop", "crop"}));
  EXPECT_TRUE(blocks[0].average);
  EXPECT_EQ(blocks[1].columns, (std::vector<std::string>{"surrogate"}));
  EXPECT_TRUE(blocks[1].average);
}

TEST(Report, MarkdownHasBlocksAndAverages) {
  EvalReport r;
  const std::vector<std::string> signal{"identity", "g-blur", "g-noise", "salt-pep", "median", "jpeg", "drop", "crop"};
  for (std::size_t i = 0; i < signal.size(); ++i) r.rows.push_back(row("GIFGuard", signal[i], "ber", 0.01 * i));
  r.rows.push_back(row("GIFGuard", "surrogate", "ber", 0.5));
  r.rows.push_back(row("GIFGuard", "none", "psnr", 40.0));
  const auto md = report_markdown(r);
  EXPECT_NE(md.find("Signal Degradation & Geometric Distortion"), std::string::npos);
  EXPECT_NE(md.find("Deepfake"), std::string::npos);
  EXPECT_NE(md.find("Avg"), std::string::npos);
  // Signal block average: mean of 0..7 percent = 3.5%.
  EXPECT_NE(md.find("3.5000"), std::string::npos);
  EXPECT_NE(md.find("50.0000"), std::string::npos);
  EXPECT_NE(md.find("40.00"), std::string::npos);
  const auto sig = md.find("Signal Degradation"), deep = md.find("Deepfake");
  EXPECT_LT(sig, deep);
}

TEST(Report, EmptyReportStillRenders) {
  EXPECT_FALSE(report_markdown(EvalReport{}).empty());
  EXPECT_EQ(report_csv(EvalReport{}), "method,attack_kind,attack_params,n_samples,metric,value\n");
}

TEST(Report, BerChartWritten) {
  testutil::TempDir dir;
  EvalReport r;
  r.rows = {row("GIFGuard", "jpeg", "ber", 0.1), row("GIFGuard", "crop", "ber", 0.2)};
  write_ber_svg(r, dir.path / "ber.svg");
  const auto svg = testutil::read_text(dir.path / "ber.svg");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("jpeg"), std::string::npos);
}
