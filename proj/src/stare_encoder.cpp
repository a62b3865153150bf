#include "gifguard/stare_encoder.hpp"

#include <numeric>
#include <string>

#include "gifguard/error.hpp"

namespace gifguard::stare {

namespace F = torch::nn::functional;

std::int64_t norm_groups(std::int64_t channels) { return std::gcd<std::int64_t>(channels, 4); }

GridShape EncoderConfig::message_grid() const {
  return {std::max<std::int64_t>(1, frames / 2), std::max<std::int64_t>(1, height / 8),
          std::max<std::int64_t>(1, width / 8)};
}

std::int64_t EncoderConfig::message_latent_dim() const { return message_channels * message_grid().numel(); }

std::int64_t EncoderConfig::level_channels(std::int64_t level) const {
  const auto n = static_cast<std::int64_t>(channels.size());
  return channels[static_cast<std::size_t>(std::min(level, n - 1))];
}

void EncoderConfig::validate() const {
  if (payload_len < 1) throw Error("payload_len must be positive");
  if (depth < 1) throw Error("encoder depth must be at least 1");
  if (channels.empty()) throw Error("encoder channels must not be empty");
  if (!(alpha >= 0.0)) throw Error("alpha must be non-negative");
  if (frames < 1 || height < 1 || width < 1) throw Error("clip dimensions must be positive");
  const std::int64_t f = std::int64_t{1} << depth;
  if (height % f != 0 || width % f != 0) {
    throw Error("spatial dims must be divisible by 2^depth");
  }
  if (message_channels < 1 || se_reduction < 1) throw Error("invalid channel settings");
}

torch::Tensor upsample_message_grid(const torch::Tensor& coarse, const GridShape& target) {
  if (coarse.dim() != 5) throw Error("message grid must be (B,C,t,h,w)");
  if (target.frames < coarse.size(2) || target.height < coarse.size(3) || target.width < coarse.size(4)) {
    throw Error("target dims smaller than the coarse message grid");
  }
  return F::interpolate(coarse, F::InterpolateFuncOptions()
                                    .size(std::vector<std::int64_t>{target.frames, target.height, target.width})
                                    .mode(torch::kTrilinear)
                                    .align_corners(true));
}

torch::Tensor se_recalibrate3d(const torch::Tensor& x, const torch::Tensor& w1, const torch::Tensor& w2) {
  const auto z = x.mean({2, 3, 4});                                  // (B, C)
  const auto s = torch::sigmoid(torch::relu(z.matmul(w1.t())).matmul(w2.t()));
  return x * s.unsqueeze(-1).unsqueeze(-1).unsqueeze(-1);
}

SEBlock3dImpl::SEBlock3dImpl(std::int64_t channels, std::int64_t reduction) {
  const std::int64_t hidden = std::max<std::int64_t>(1, channels / reduction);
  squeeze_weight = register_parameter("squeeze_weight", torch::empty({hidden, channels}));
  excite_weight = register_parameter("excite_weight", torch::empty({channels, hidden}));
  torch::NoGradGuard guard;
  torch::nn::init::kaiming_uniform_(squeeze_weight, std::sqrt(5.0));
  torch::nn::init::kaiming_uniform_(excite_weight, std::sqrt(5.0));
}

torch::Tensor SEBlock3dImpl::forward(const torch::Tensor& x) {
  return se_recalibrate3d(x, squeeze_weight, excite_weight);
}

MessageExpanderImpl::MessageExpanderImpl(const EncoderConfig& cfg)
    : channels_(cfg.message_channels),
      grid_(cfg.message_grid()),
      target_{cfg.frames, cfg.height, cfg.width} {
  if (target_.frames < grid_.frames || target_.height < grid_.height || target_.width < grid_.width) {
    throw Error("target dims smaller than the coarse message grid");
  }
  lift = register_module("lift", torch::nn::Linear(cfg.payload_len, cfg.message_latent_dim()));
}

torch::Tensor MessageExpanderImpl::expand_latent(const torch::Tensor& latent) const {
  const auto coarse = latent.view({latent.size(0), channels_, grid_.frames, grid_.height, grid_.width});
  return upsample_message_grid(coarse, target_);
}

torch::Tensor MessageExpanderImpl::forward(const torch::Tensor& bits) {
  return expand_latent(lift->forward(2.0 * bits - 1.0));
}

ConvUnitImpl::ConvUnitImpl(std::int64_t in, std::int64_t out, torch::ExpandingArray<3> stride) {
  conv = register_module("conv", torch::nn::Conv3d(torch::nn::Conv3dOptions(in, out, 3).stride(stride).padding(1)));
  norm = register_module("norm", torch::nn::GroupNorm(norm_groups(out), out));
}

torch::Tensor ConvUnitImpl::forward(const torch::Tensor& x) { return torch::relu(norm(conv(x))); }

StareEncoderImpl::StareEncoderImpl(EncoderConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  expander = register_module("expander", MessageExpander(cfg_));
  const std::int64_t in_ch = 3 + cfg_.message_channels;
  if (cfg_.use_se) fusion_se = register_module("fusion_se", SEBlock3d(in_ch, cfg_.se_reduction));

  stem = register_module("stem", ConvUnit(in_ch, cfg_.level_channels(0)));
  down = register_module("down", torch::nn::ModuleList());
  up = register_module("up", torch::nn::ModuleList());
  merge = register_module("merge", torch::nn::ModuleList());
  for (std::int64_t level = 1; level <= cfg_.depth; ++level) {
    const auto prev = cfg_.level_channels(level - 1);
    const auto cur = cfg_.level_channels(level);
    torch::nn::Sequential block(ConvUnit(prev, cur, torch::ExpandingArray<3>({1, 2, 2})), ConvUnit(cur, cur));
    down->push_back(block);
    up->push_back(torch::nn::ConvTranspose3d(
        torch::nn::ConvTranspose3dOptions(cur, prev, {1, 2, 2}).stride({1, 2, 2})));
    merge->push_back(ConvUnit(2 * prev, prev));
  }
  out_head = register_module("out_head", torch::nn::Conv3d(torch::nn::Conv3dOptions(cfg_.level_channels(0), 3, 1)));
}

torch::Tensor StareEncoderImpl::residual_logits(const torch::Tensor& cover, const torch::Tensor& bits) {
  if (cover.dim() != 5 || cover.size(1) != 3 || cover.size(2) != cfg_.frames ||
      cover.size(3) != cfg_.height || cover.size(4) != cfg_.width) {
    throw Error("cover shape does not match the encoder configuration");
  }
  if (bits.dim() != 2 || bits.size(0) != cover.size(0) || bits.size(1) != cfg_.payload_len) {
    throw Error("message shape does not match the encoder configuration");
  }
  auto x = torch::cat({cover, expander(bits.to(cover.scalar_type()))}, 1);
  if (cfg_.use_se) x = fusion_se(x);

  std::vector<torch::Tensor> skips;
  auto h = stem(x);
  for (std::size_t i = 0; i < down->size(); ++i) {
    skips.push_back(h);
    h = down[i]->as<torch::nn::Sequential>()->forward(h);
  }
  for (std::size_t i = up->size(); i-- > 0;) {
    h = up[i]->as<torch::nn::ConvTranspose3d>()->forward(h);
    h = merge[i]->as<ConvUnit>()->forward(torch::cat({h, skips[i]}, 1));
  }
  return out_head(h);
}

torch::Tensor StareEncoderImpl::forward(const torch::Tensor& cover, const torch::Tensor& bits) {
  return cover + cfg_.alpha * torch::tanh(residual_logits(cover, bits));
}

}  // namespace gifguard::stare
