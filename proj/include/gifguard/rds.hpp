#pragma once

// Distortion pool placed between encoder and decoder during training. Every
// attack is a pure function of (input, spec): all randomness is drawn from
// generators seeded by spec.seed, so a serialised spec replays exactly.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace gifguard::rds {

enum class DistortionKind {
  identity,
  g_blur,
  g_noise,
  salt_pepper,
  median3d,
  diff_jpeg,
  frame_drop,
  frame_shuffle,
  frame_replace,
  random_crop,
  semantic_surrogate,
};

inline constexpr std::array<DistortionKind, 11> kAllKinds = {
    DistortionKind::identity,      DistortionKind::g_blur,        DistortionKind::g_noise,
    DistortionKind::salt_pepper,   DistortionKind::median3d,      DistortionKind::diff_jpeg,
    DistortionKind::frame_drop,    DistortionKind::frame_shuffle, DistortionKind::frame_replace,
    DistortionKind::random_crop,   DistortionKind::semantic_surrogate};

/// Canonical identifier, e.g. "g_blur".
std::string kind_name(DistortionKind kind);
/// Short CLI / report label, e.g. "g-blur", "salt-pep", "f-repl".
std::string kind_label(DistortionKind kind);
/// Accepts either the canonical name or the CLI label.
DistortionKind parse_kind(const std::string& name);

bool is_temporal(DistortionKind kind);

struct DistortionSpec {
  DistortionKind kind = DistortionKind::identity;
  std::map<std::string, double> params;
  std::uint64_t seed = 0;

  /// "kind=g_noise;sigma=0.05;seed=7" (params in key order).
  std::string serialize() const;
  static DistortionSpec parse(const std::string& text);
  /// Parameter list without kind and seed, "sigma=0.05".
  std::string params_string() const;

  double param(const std::string& key) const;
  bool operator==(const DistortionSpec&) const = default;
};

/// Spec with the default attack strengths: sigma 0.05 noise, 5x5 sigma 1
/// blur, 0.5% salt & pepper, 3x3x3 median, JPEG quality 75, crop scale in
/// [0.8, 1.0], drop probability 0.7.
DistortionSpec default_spec(DistortionKind kind, std::uint64_t seed = 0);

/// Frozen per-frame convolutional autoencoder standing in for face-swap
/// generators: 4 conv layers down to a 4x spatial bottleneck and 4 back up.
class SurrogateNetImpl : public torch::nn::Module {
 public:
  explicit SurrogateNetImpl(std::int64_t latent_channels = 8);
  /// (N, 3, H, W) -> (N, 3, H, W)
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential encoder{nullptr};
  torch::nn::Sequential decoder{nullptr};
};
TORCH_MODULE(SurrogateNet);

struct SurrogateFitOptions {
  int steps = 300;
  int batch_frames = 16;
  double learning_rate = 2e-3;
  std::uint64_t seed = 0;
};

class SemanticSurrogate {
 public:
  SemanticSurrogate();

  /// Fit the autoencoder to reconstruct clean clips (N,3,T,H,W), then freeze.
  /// Returns the final reconstruction MSE.
  double fit(const torch::Tensor& clips, const SurrogateFitOptions& options);

  bool fitted() const noexcept { return fitted_; }
  void mark_fitted();

  /// Per-frame reconstruction of a (B,3,T,H,W) volume. Differentiable with
  /// respect to the input; weights never receive gradient.
  torch::Tensor reconstruct(const torch::Tensor& g) const;

  SurrogateNet& net() noexcept { return net_; }
  const SurrogateNet& net() const noexcept { return net_; }

 private:
  mutable SurrogateNet net_;
  bool fitted_ = false;
};

/// Centred elliptical face region for face-centric crops, (T, H, W) of 0/1.
torch::Tensor default_face_mask(std::int64_t frames, std::int64_t height, std::int64_t width);

/// Replace the masked region of g by the surrogate reconstruction, blending
/// across a 2-pixel feather at the mask boundary. Throws "surrogate
/// unavailable" unless the surrogate is fitted.
torch::Tensor semantic_surrogate(const torch::Tensor& g, const torch::Tensor& face_mask,
                                 const SemanticSurrogate* surrogate);

/// Differentiable JPEG proxy at the given quality (1..100).
torch::Tensor diff_jpeg(const torch::Tensor& g, int quality);

/// Standard luminance / chrominance tables scaled for `quality`, entries >= 1.
torch::Tensor jpeg_quant_table(int quality, bool chroma);

/// Orthonormal 8x8 DCT-II basis matrix D (rows are frequencies).
torch::Tensor dct_matrix(torch::ScalarType dtype = torch::kFloat64);

/// round(x) + (x - round(x))^3 with round treated as constant in backward.
torch::Tensor soft_round(const torch::Tensor& x);

/// 1-D normalised Gaussian taps.
torch::Tensor gaussian_kernel1d(std::int64_t size, double sigma, torch::ScalarType dtype);

struct DistortionContext {
  const SemanticSurrogate* surrogate = nullptr;
  torch::Tensor face_mask;  // (T,H,W); default_face_mask when undefined
};

struct DistortionOutput {
  torch::Tensor tensor;
  std::vector<std::string> warnings;
};

/// Apply one attack to a (B,3,T,H,W) or (3,T,H,W) tensor.
DistortionOutput apply_distortion(const torch::Tensor& g, const DistortionSpec& spec,
                                  const DistortionContext& context = {});

/// Frame index map used by frame_drop: each entry names the source frame.
std::vector<std::int64_t> frame_drop_sources(std::int64_t frames, double p_drop, std::mt19937_64& rng);

/// Four-stage probability-climbing curriculum.
struct CurriculumSchedule {
  std::int64_t total_epochs = 20;
  std::array<double, 3> stage_ends{0.06, 0.20, 0.40};  // fractions of total_epochs
  std::array<double, 4> hard_probability{0.0, 0.0, 0.3, 0.6};
  std::vector<DistortionKind> base_pool{
      DistortionKind::g_blur,     DistortionKind::g_noise,       DistortionKind::salt_pepper,
      DistortionKind::median3d,   DistortionKind::diff_jpeg,     DistortionKind::frame_drop,
      DistortionKind::frame_shuffle, DistortionKind::frame_replace};
  std::vector<DistortionKind> hard_pool{DistortionKind::random_crop, DistortionKind::semantic_surrogate};

  /// Last (1-based) epoch of each of stages 1..3.
  std::array<std::int64_t, 3> stage_end_epochs() const;
  void validate() const;
};

struct StageDescriptor {
  int index = 1;  // 1..4
  double hard_probability = 0.0;
  std::map<DistortionKind, double> distribution;  // sums to 1
};

/// Stage of a 1-based epoch. Stage 1 is identity only, stage 2 the uniform
/// base pool, stages 3/4 mix in the hard pool with probability p.
StageDescriptor stage_for_epoch(const CurriculumSchedule& schedule, std::int64_t epoch);

DistortionSpec sample_spec(const CurriculumSchedule& schedule, std::int64_t epoch, std::mt19937_64& rng);

}  // namespace gifguard::rds
