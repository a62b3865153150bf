#pragma once

// Quality and robustness metrics plus report emission. Image metrics take
// tensors shaped (..., H, W): every leading index is one plane (frame x
// channel); Frames overloads use max_val 255.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/types.h>

#include "gifguard/frames.hpp"
#include "gifguard/message.hpp"
#include "gifguard/objectives.hpp"

namespace gifguard::metrics {

inline constexpr double kPsnrCap = 100.0;

/// One MSE pooled over every element; identical inputs give `cap`.
double psnr(const torch::Tensor& a, const torch::Tensor& b, double max_val, double cap = kPsnrCap);
double psnr(const Frames& a, const Frames& b, double cap = kPsnrCap);

/// Gaussian-window SSIM (11x11, sigma 1.5, valid positions only), averaged
/// over planes. Planes smaller than the window use the largest odd window
/// that fits.
double ssim(const torch::Tensor& a, const torch::Tensor& b, double max_val);
double ssim(const Frames& a, const Frames& b);

/// Pixel-domain VIF over 4 Gaussian-pyramid scales, sigma_n^2 = 2,
/// information sums pooled over all planes of the clip. Inputs are in 8-bit
/// units, so tensors in [-1,1] should be mapped first (see to_pixel_units).
double vif_p(const torch::Tensor& reference, const torch::Tensor& distorted);
double vif_p(const Frames& reference, const Frames& distorted);

/// [-1,1] -> [0,255] without rounding.
torch::Tensor to_pixel_units(const torch::Tensor& g);

/// Mean |m - m_hat| over all bits (tensors of 0/1, any equal shape).
double ber(const torch::Tensor& m, const torch::Tensor& m_hat);
double ber(const MessageVector& m, const MessageVector& m_hat);

/// Mean squared feature distance under phi.
double perceptual_distance(const torch::Tensor& a, const torch::Tensor& b, const obj::PerceptualExtractor& phi);

struct MetricRow {
  std::string method;
  std::string attack_kind;    // CLI label, or "none" for cover-vs-watermarked quality rows
  std::string attack_params;  // serialised spec for replay
  std::int64_t n_samples = 0;
  std::string metric;         // "ber", "psnr", "ssim", "vif", "perceptual"
  double value = 0.0;

  bool operator==(const MetricRow&) const = default;
};

struct EvalReport {
  std::vector<MetricRow> rows;

  /// Value of the first row matching (method, attack_kind, metric); NaN if absent.
  double value(const std::string& method, const std::string& attack_kind, const std::string& metric) const;
};

/// Attack columns of the robustness table, grouped as printed.
struct ReportBlock {
  std::string title;
  std::vector<std::string> columns;
  bool average = true;
};
const std::vector<ReportBlock>& report_blocks();

inline constexpr const char* kReportCsv = "report.csv";
inline constexpr const char* kReportMarkdown = "report.md";

std::string report_csv(const EvalReport& report);
std::string report_markdown(const EvalReport& report);
/// Writes report.csv and report.md into `out_dir`.
void make_report(const EvalReport& report, const std::filesystem::path& out_dir);
EvalReport read_report_csv(const std::filesystem::path& path);

/// Grouped bar chart of BER per attack and method.
void write_ber_svg(const EvalReport& report, const std::filesystem::path& path);

}  // namespace gifguard::metrics
