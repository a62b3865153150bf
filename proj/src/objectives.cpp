#include "gifguard/objectives.hpp"

#include <cmath>

#include "gifguard/error.hpp"
#include "gifguard/rng.hpp"

namespace gifguard::obj {

namespace F = torch::nn::functional;

void LossWeights::validate() const {
  if (lambda_adv < 0 || lambda_msg_start < 0 || lambda_msg_end < 0 || beta < 0) {
    throw Error("loss weights must be non-negative");
  }
  if (lambda_msg_end < lambda_msg_start) throw Error("lambda_msg_end must be >= lambda_msg_start");
}

RandomConvPerceptual::RandomConvPerceptual(std::uint64_t seed, std::vector<std::int64_t> widths) {
  auto gen = make_generator(seed);
  std::int64_t in = 3;
  for (auto out : widths) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * 9));
    weights_.push_back(torch::rand({out, in, 3, 3}, gen, torch::kFloat64).mul_(2 * bound).sub_(bound));
    biases_.push_back(torch::rand({out}, gen, torch::kFloat64).mul_(2 * bound).sub_(bound));
    in = out;
  }
}

std::vector<torch::Tensor> RandomConvPerceptual::features(const torch::Tensor& g) const {
  if (g.dim() != 5) throw Error("perceptual features expect (B,3,T,H,W)");
  auto x = g.permute({0, 2, 1, 3, 4}).reshape({g.size(0) * g.size(2), g.size(1), g.size(3), g.size(4)});
  std::vector<torch::Tensor> out;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    const auto w = weights_[i].to(x.scalar_type());
    const auto b = biases_[i].to(x.scalar_type());
    x = torch::relu(F::conv2d(x, w, F::Conv2dFuncOptions().bias(b).padding(1).stride(i == 0 ? 1 : 2)));
    out.push_back(x);
  }
  return out;
}

torch::Tensor feature_distance(const PerceptualExtractor& phi, const torch::Tensor& a, const torch::Tensor& b) {
  const auto fa = phi.features(a);
  const auto fb = phi.features(b);
  auto total = torch::zeros({}, a.options());
  std::int64_t count = 0;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    total = total + (fa[i] - fb[i]).pow(2).sum();
    count += fa[i].numel();
  }
  return total / static_cast<double>(count);
}

torch::Tensor imperceptibility_loss(const torch::Tensor& cover, const torch::Tensor& watermarked,
                                    const PerceptualExtractor& phi, double beta) {
  if (cover.sizes() != watermarked.sizes()) throw Error("imperceptibility loss needs equal shapes");
  auto loss = (watermarked - cover).pow(2).mean();
  if (beta != 0.0) loss = loss + beta * feature_distance(phi, cover, watermarked);
  return loss;
}

DiscriminatorImpl::DiscriminatorImpl(std::vector<std::int64_t> widths) {
  convs = register_module("convs", torch::nn::ModuleList());
  std::int64_t in = 3;
  for (auto out : widths) {
    convs->push_back(torch::nn::Conv3d(torch::nn::Conv3dOptions(in, out, 3).stride({1, 2, 2}).padding(1)));
    in = out;
  }
  score = register_module("score", torch::nn::Conv3d(torch::nn::Conv3dOptions(in, 1, 1)));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x) {
  auto h = x;
  for (const auto& m : *convs) h = F::leaky_relu(m->as<torch::nn::Conv3d>()->forward(h), F::LeakyReLUFuncOptions().negative_slope(0.2));
  return torch::sigmoid(score(h).mean({1, 2, 3, 4}));
}

AdversarialTerms adversarial_losses(const torch::Tensor& p_cover, const torch::Tensor& p_watermarked) {
  const auto pc = p_cover.clamp(kProbEps, 1.0 - kProbEps);
  const auto pw = p_watermarked.clamp(kProbEps, 1.0 - kProbEps);
  return {-pw.log().mean(), -(pc.log() + (1.0 - pw).log()).mean()};
}

AdversarialTerms adversarial_losses(Discriminator& disc, const torch::Tensor& cover, const torch::Tensor& watermarked) {
  return adversarial_losses(disc(cover), disc(watermarked));
}

torch::Tensor message_loss(const torch::Tensor& bits, const torch::Tensor& logits) {
  if (bits.sizes() != logits.sizes()) throw Error("message loss needs equal shapes");
  const auto m = bits.to(logits.scalar_type());
  return (logits.clamp_min(0) - logits * m + torch::log1p(torch::exp(-logits.abs()))).mean();
}

double lambda_msg(const LossWeights& w, std::int64_t epoch, std::int64_t total_epochs) {
  if (total_epochs <= 0) return w.lambda_msg_start;
  const double t = std::clamp(static_cast<double>(epoch) / static_cast<double>(total_epochs), 0.0, 1.0);
  if (t == 1.0) return w.lambda_msg_end;
  return w.lambda_msg_start + (w.lambda_msg_end - w.lambda_msg_start) * t;
}

torch::Tensor total_loss(const LossParts& parts, const LossWeights& w, std::int64_t epoch, std::int64_t total_epochs) {
  return parts.imperceptibility + w.lambda_adv * parts.adversarial +
         lambda_msg(w, epoch, total_epochs) * parts.message;
}

}  // namespace gifguard::obj
