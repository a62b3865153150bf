#include "gifguard/dird_decoder.hpp"

#include <string>

#include "gifguard/error.hpp"

namespace gifguard::dird {

namespace F = torch::nn::functional;

std::string head_mode_name(HeadMode mode) {
  switch (mode) {
    case HeadMode::adaptive_flat: return "adaptive_flat";
    case HeadMode::global_pool: return "global_pool";
    case HeadMode::grid_interp: return "grid_interp";
  }
  return "adaptive_flat";
}

HeadMode parse_head_mode(const std::string& name) {
  if (name == "adaptive_flat") return HeadMode::adaptive_flat;
  if (name == "global_pool") return HeadMode::global_pool;
  if (name == "grid_interp") return HeadMode::grid_interp;
  throw Error("unknown head mode '" + name + "'");
}

void DecoderConfig::validate() const {
  if (payload_len < 1) throw Error("payload_len must be positive");
  if (contracting.empty()) throw Error("decoder needs at least one contracting block");
  if (expanding.size() > contracting.size()) throw Error("more expanding than contracting blocks");
  const std::int64_t f = std::int64_t{1} << contracting.size();
  if (height % f != 0 || width % f != 0) throw Error("spatial dims must be divisible by 2^contracting blocks");
}

std::int64_t infer_projection_dim(const std::function<torch::Tensor(const torch::Tensor&)>& backbone,
                                  std::int64_t channels, std::int64_t frames, std::int64_t height,
                                  std::int64_t width) {
  torch::NoGradGuard no_grad;
  const auto dummy = torch::zeros({1, channels, frames, height, width});
  const auto first = backbone(dummy).sizes().vec();
  const auto second = backbone(dummy).sizes().vec();
  if (first != second) throw Error("backbone output shape is not stable across profiling passes");
  std::int64_t n = 1;
  for (std::size_t i = 1; i < first.size(); ++i) n *= first[i];
  return n;
}

GatedBlockImpl::GatedBlockImpl(std::int64_t in, std::int64_t out, bool transposed, bool use_se,
                               std::int64_t reduction) {
  if (transposed) {
    deconv = register_module(
        "deconv", torch::nn::ConvTranspose3d(torch::nn::ConvTranspose3dOptions(in, out, {1, 2, 2}).stride({1, 2, 2})));
  } else {
    conv = register_module("conv",
                           torch::nn::Conv3d(torch::nn::Conv3dOptions(in, out, 3).stride({1, 2, 2}).padding(1)));
  }
  norm = register_module("norm", torch::nn::GroupNorm(stare::norm_groups(out), out));
  if (use_se) se = register_module("se", stare::SEBlock3d(out, reduction));
}

torch::Tensor GatedBlockImpl::forward(const torch::Tensor& x) {
  auto h = torch::relu(norm(conv ? conv(x) : deconv(x)));
  return se ? se(h) : h;
}

torch::Tensor logits_to_bits(const torch::Tensor& logits) {
  return (torch::sigmoid(logits) > 0.5).to(logits.scalar_type());
}

DirdDecoderImpl::DirdDecoderImpl(DecoderConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::int64_t ch = 3;
  for (std::size_t i = 0; i < cfg_.contracting.size(); ++i) {
    contract_.push_back(register_module("contract" + std::to_string(i),
                                        GatedBlock(ch, cfg_.contracting[i], false, cfg_.use_se, cfg_.se_reduction)));
    ch = cfg_.contracting[i];
  }
  for (std::size_t i = 0; i < cfg_.expanding.size(); ++i) {
    expand_.push_back(register_module("expand" + std::to_string(i),
                                      GatedBlock(ch, cfg_.expanding[i], true, cfg_.use_se, cfg_.se_reduction)));
    ch = cfg_.expanding[i];
  }
  out_channels_ = ch;

  if (cfg_.inferred_flat_dim <= 0) {
    cfg_.inferred_flat_dim = infer_projection_dim([this](const torch::Tensor& x) { return backbone(x); }, 3,
                                                  cfg_.frames, cfg_.height, cfg_.width);
  }
  if (cfg_.head_mode == HeadMode::adaptive_flat && cfg_.inferred_flat_dim <= 0) {
    throw Error("profiling produced an empty feature volume");
  }
  head = register_module("head", torch::nn::Linear(head_input_dim(), cfg_.payload_len));
}

torch::Tensor DirdDecoderImpl::backbone(const torch::Tensor& x) {
  auto h = x;
  for (auto& b : contract_) h = b(h);
  for (auto& b : expand_) h = b(h);
  return h;
}

std::int64_t DirdDecoderImpl::head_input_dim() const {
  switch (cfg_.head_mode) {
    case HeadMode::adaptive_flat: return cfg_.inferred_flat_dim;
    case HeadMode::global_pool: return out_channels_;
    case HeadMode::grid_interp:
      return out_channels_ * cfg_.interp_grid[0] * cfg_.interp_grid[1] * cfg_.interp_grid[2];
  }
  return cfg_.inferred_flat_dim;
}

double DirdDecoderImpl::compression_ratio() const {
  return static_cast<double>(cfg_.inferred_flat_dim) / static_cast<double>(head_input_dim());
}

torch::Tensor DirdDecoderImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 5 || x.size(1) != 3 || x.size(2) != cfg_.frames || x.size(3) != cfg_.height ||
      x.size(4) != cfg_.width) {
    throw Error("reprofile required: decoder was profiled for (T,H,W)=(" + std::to_string(cfg_.frames) + "," +
                std::to_string(cfg_.height) + "," + std::to_string(cfg_.width) + ")");
  }
  auto h = backbone(x);
  switch (cfg_.head_mode) {
    case HeadMode::adaptive_flat:
      h = h.flatten(1);
      break;
    case HeadMode::global_pool:
      h = h.mean({2, 3, 4});
      break;
    case HeadMode::grid_interp:
      h = F::interpolate(h, F::InterpolateFuncOptions()
                                .size(std::vector<std::int64_t>(cfg_.interp_grid.begin(), cfg_.interp_grid.end()))
                                .mode(torch::kTrilinear)
                                .align_corners(false))
              .flatten(1);
      break;
  }
  return head(h);
}

DecodeResult DirdDecoderImpl::decode(const torch::Tensor& x) {
  auto logits = forward(x);
  return {logits, logits_to_bits(logits)};
}

}  // namespace gifguard::dird
