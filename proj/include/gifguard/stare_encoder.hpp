#pragma once

// Spatiotemporal residual encoder: the message is lifted by a fully
// connected layer, reshaped to a coarse (T', H', W') grid and trilinearly
// upsampled to the clip size; the concatenation [cover ; message features]
// is recalibrated by a 3D squeeze-and-excitation block and fed to a 3D U-Net
// whose output becomes a tanh-bounded residual of strength alpha.

#include <cstdint>
#include <vector>

#include <torch/torch.h>

namespace gifguard::stare {

struct GridShape {
  std::int64_t frames = 1;
  std::int64_t height = 1;
  std::int64_t width = 1;

  std::int64_t numel() const noexcept { return frames * height * width; }
  bool operator==(const GridShape&) const = default;
};

struct EncoderConfig {
  std::int64_t payload_len = 32;
  std::int64_t frames = 10;
  std::int64_t height = 64;
  std::int64_t width = 64;
  std::vector<std::int64_t> channels{16, 32};  // width per U-Net level, last one repeats
  std::int64_t depth = 2;
  double alpha = 0.05;
  std::int64_t message_channels = 8;
  std::int64_t se_reduction = 2;
  bool use_se = true;

  /// Coarse message grid: T/2 (min 1), H/8, W/8.
  GridShape message_grid() const;
  /// Width of the fully connected lift: message_channels * |grid|.
  std::int64_t message_latent_dim() const;
  std::int64_t level_channels(std::int64_t level) const;
  void validate() const;
};

/// Trilinear resize with corner alignment: the first and last samples of the
/// coarse grid land exactly on the first and last samples of the target.
/// `coarse` is (B, C, t, h, w). Throws if the target is smaller than the grid.
torch::Tensor upsample_message_grid(const torch::Tensor& coarse, const GridShape& target);

/// Squeeze-and-excitation over a (B, C, T, H, W) volume:
/// z = mean over (T,H,W); s = sigmoid(W2 relu(W1 z)); out[c] = s[c] * x[c].
/// `w1` is (C/r, C), `w2` is (C, C/r).
torch::Tensor se_recalibrate3d(const torch::Tensor& x, const torch::Tensor& w1, const torch::Tensor& w2);

class SEBlock3dImpl : public torch::nn::Module {
 public:
  SEBlock3dImpl(std::int64_t channels, std::int64_t reduction);
  torch::Tensor forward(const torch::Tensor& x);

  torch::Tensor squeeze_weight;  // W1
  torch::Tensor excite_weight;   // W2
};
TORCH_MODULE(SEBlock3d);

/// M -> F_fc -> reshape -> trilinear upsample. Bits enter the lift as +-1.
class MessageExpanderImpl : public torch::nn::Module {
 public:
  explicit MessageExpanderImpl(const EncoderConfig& cfg);
  /// bits: (B, L) -> (B, message_channels, T, H, W)
  torch::Tensor forward(const torch::Tensor& bits);
  /// Reshape + upsample stage alone, applied to a (B, latent_dim) lift.
  torch::Tensor expand_latent(const torch::Tensor& latent) const;

  torch::nn::Linear lift{nullptr};

 private:
  std::int64_t channels_;
  GridShape grid_;
  GridShape target_;
};
TORCH_MODULE(MessageExpander);

/// Conv3d(3x3x3) -> GroupNorm -> ReLU.
class ConvUnitImpl : public torch::nn::Module {
 public:
  ConvUnitImpl(std::int64_t in, std::int64_t out, torch::ExpandingArray<3> stride = {1, 1, 1});
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv3d conv{nullptr};
  torch::nn::GroupNorm norm{nullptr};
};
TORCH_MODULE(ConvUnit);

class StareEncoderImpl : public torch::nn::Module {
 public:
  explicit StareEncoderImpl(EncoderConfig cfg);

  /// cover (B,3,T,H,W) in [-1,1], bits (B,L) -> watermarked (B,3,T,H,W).
  torch::Tensor forward(const torch::Tensor& cover, const torch::Tensor& bits);
  /// U-Net output before the tanh bound, i.e. F_out(X_dec).
  torch::Tensor residual_logits(const torch::Tensor& cover, const torch::Tensor& bits);

  const EncoderConfig& config() const noexcept { return cfg_; }

  MessageExpander expander{nullptr};
  SEBlock3d fusion_se{nullptr};

 private:
  EncoderConfig cfg_;
  ConvUnit stem{nullptr};
  torch::nn::ModuleList down;       // per level: two ConvUnits, first strided
  torch::nn::ModuleList up;         // per level: ConvTranspose3d
  torch::nn::ModuleList merge;      // per level: ConvUnit after skip concat
  torch::nn::Conv3d out_head{nullptr};
};
TORCH_MODULE(StareEncoder);

/// Number of GroupNorm groups used for a layer of `channels` width.
std::int64_t norm_groups(std::int64_t channels);

}  // namespace gifguard::stare
