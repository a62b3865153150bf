#pragma once

// Training objectives: pixel + feature imperceptibility loss, non-saturating
// adversarial terms against a small 3D patch discriminator, message BCE on
// logits and the linearly increasing message weight.

#include <cstdint>
#include <memory>
#include <vector>

#include <torch/torch.h>

namespace gifguard::obj {

struct LossWeights {
  double lambda_adv = 0.01;
  double lambda_msg_start = 1.0;
  double lambda_msg_end = 10.0;
  double beta = 1.0;

  void validate() const;
};

/// Frozen per-frame feature map. Implementations must not expose trainable
/// parameters to the optimiser.
class PerceptualExtractor {
 public:
  virtual ~PerceptualExtractor() = default;
  /// (B,3,T,H,W) -> one feature tensor per layer, each (B*T, C_l, H_l, W_l).
  virtual std::vector<torch::Tensor> features(const torch::Tensor& g) const = 0;
};

/// Random-weight conv stack (3 layers, ReLU, stride 2 after the first) with
/// weights drawn from a generator seeded by `seed`. Parameters have
/// requires_grad = false.
class RandomConvPerceptual final : public PerceptualExtractor {
 public:
  explicit RandomConvPerceptual(std::uint64_t seed = 0x5eed'f00d, std::vector<std::int64_t> widths = {8, 16, 32});
  std::vector<torch::Tensor> features(const torch::Tensor& g) const override;

  const std::vector<torch::Tensor>& weights() const noexcept { return weights_; }
  const std::vector<torch::Tensor>& biases() const noexcept { return biases_; }

 private:
  std::vector<torch::Tensor> weights_;
  std::vector<torch::Tensor> biases_;
};

/// Mean squared feature difference, averaged over layers' elements:
/// sum_l ||phi_l(a) - phi_l(b)||^2 / sum_l |phi_l|.
torch::Tensor feature_distance(const PerceptualExtractor& phi, const torch::Tensor& a, const torch::Tensor& b);

torch::Tensor imperceptibility_loss(const torch::Tensor& cover, const torch::Tensor& watermarked,
                                    const PerceptualExtractor& phi, double beta);

/// 3 strided 3D convs (16, 32, 64) with LeakyReLU(0.2), a 1x1x1 conv to one
/// channel, global average and sigmoid. Output (B,) in (0,1).
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(std::vector<std::int64_t> widths = {16, 32, 64});
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::ModuleList convs{nullptr};
  torch::nn::Conv3d score{nullptr};
};
TORCH_MODULE(Discriminator);

inline constexpr double kProbEps = 1e-7;

struct AdversarialTerms {
  torch::Tensor encoder_term;        // -mean log A(G_w)
  torch::Tensor discriminator_term;  // -mean[log A(G_co) + log(1 - A(G_w))]
};

/// From precomputed discriminator probabilities.
AdversarialTerms adversarial_losses(const torch::Tensor& p_cover, const torch::Tensor& p_watermarked);

/// Runs `disc` on both inputs.
AdversarialTerms adversarial_losses(Discriminator& disc, const torch::Tensor& cover, const torch::Tensor& watermarked);

/// Mean binary cross-entropy of bits against sigmoid(logits), computed as
/// max(y,0) - y*m + log1p(exp(-|y|)).
torch::Tensor message_loss(const torch::Tensor& bits, const torch::Tensor& logits);

/// lambda_msg at `epoch` in [0, total_epochs].
double lambda_msg(const LossWeights& w, std::int64_t epoch, std::int64_t total_epochs);

struct LossParts {
  torch::Tensor imperceptibility;
  torch::Tensor adversarial;
  torch::Tensor message;
};

torch::Tensor total_loss(const LossParts& parts, const LossWeights& w, std::int64_t epoch, std::int64_t total_epochs);

}  // namespace gifguard::obj
