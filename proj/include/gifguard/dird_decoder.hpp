#pragma once

// Restoration decoder: strided 3D conv blocks gated by squeeze-and-excitation
// ("attentive denoising"), transposed-conv blocks with SE restoring
// resolution, and a projection head whose input width is discovered by
// running a zero volume through the backbone once at construction.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "gifguard/stare_encoder.hpp"

namespace gifguard::dird {

enum class HeadMode { adaptive_flat, global_pool, grid_interp };

std::string head_mode_name(HeadMode mode);
HeadMode parse_head_mode(const std::string& name);

struct DecoderConfig {
  std::int64_t payload_len = 32;
  std::int64_t frames = 10;
  std::int64_t height = 64;
  std::int64_t width = 64;
  std::vector<std::int64_t> contracting{16, 32, 64};
  std::vector<std::int64_t> expanding{32, 16};
  HeadMode head_mode = HeadMode::adaptive_flat;
  std::array<std::int64_t, 3> interp_grid{4, 8, 8};  // grid_interp target (T,H,W)
  std::int64_t se_reduction = 4;
  bool use_se = true;
  /// Flattened backbone output size; filled in by profiling, or restored
  /// from a checkpoint to skip profiling.
  std::int64_t inferred_flat_dim = 0;

  void validate() const;
};

/// Run a zero (1, channels, T, H, W) volume through `backbone` twice and
/// return the flattened per-sample feature count. Throws if the two passes
/// disagree on shape.
std::int64_t infer_projection_dim(const std::function<torch::Tensor(const torch::Tensor&)>& backbone,
                                  std::int64_t channels, std::int64_t frames, std::int64_t height,
                                  std::int64_t width);

/// Conv (or transposed conv) -> GroupNorm -> ReLU -> optional SE.
class GatedBlockImpl : public torch::nn::Module {
 public:
  GatedBlockImpl(std::int64_t in, std::int64_t out, bool transposed, bool use_se, std::int64_t reduction);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv3d conv{nullptr};
  torch::nn::ConvTranspose3d deconv{nullptr};
  torch::nn::GroupNorm norm{nullptr};
  stare::SEBlock3d se{nullptr};
};
TORCH_MODULE(GatedBlock);

struct DecodeResult {
  torch::Tensor logits;  // (B, L)
  torch::Tensor bits;    // (B, L), 1 where sigmoid(logit) > 0.5
};

/// Bits from logits; sigmoid(0) = 0.5 decodes to 0.
torch::Tensor logits_to_bits(const torch::Tensor& logits);

class DirdDecoderImpl : public torch::nn::Module {
 public:
  explicit DirdDecoderImpl(DecoderConfig cfg);

  torch::Tensor backbone(const torch::Tensor& x);
  /// Head input width for the configured mode.
  std::int64_t head_input_dim() const;
  /// Backbone features per head input value (1 for adaptive_flat).
  double compression_ratio() const;

  torch::Tensor forward(const torch::Tensor& x);  // logits
  DecodeResult decode(const torch::Tensor& x);

  const DecoderConfig& config() const noexcept { return cfg_; }

 private:
  DecoderConfig cfg_;
  std::vector<GatedBlock> contract_;
  std::vector<GatedBlock> expand_;
  torch::nn::Linear head{nullptr};
  std::int64_t out_channels_ = 0;
};
TORCH_MODULE(DirdDecoder);

}  // namespace gifguard::dird
