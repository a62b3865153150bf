#include "gifguard/rds.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "gifguard/error.hpp"
#include "gifguard/rng.hpp"

namespace gifguard::rds {
namespace {

namespace F = torch::nn::functional;

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::int64_t uniform_index(std::mt19937_64& rng, std::int64_t n) {
  return static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(n));
}

// Standard JPEG (Annex K) quantisation tables.
constexpr int kLuma[64] = {16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
                           14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
                           18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
                           49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
constexpr int kChroma[64] = {17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
                             24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
                             99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
                             99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

// Gather frames per sample: out[b, :, t] = g[b, :, sources[b][t]].
torch::Tensor remap_frames(const torch::Tensor& g, const std::vector<std::vector<std::int64_t>>& sources) {
  std::vector<torch::Tensor> items;
  items.reserve(sources.size());
  for (std::size_t b = 0; b < sources.size(); ++b) {
    auto idx = torch::tensor(sources[b], torch::kLong);
    items.push_back(g[static_cast<std::int64_t>(b)].index_select(1, idx));
  }
  return torch::stack(items);
}

torch::Tensor gaussian_blur(const torch::Tensor& g, std::int64_t size, double sigma) {
  const auto B = g.size(0), C = g.size(1), T = g.size(2), H = g.size(3), W = g.size(4);
  const auto k1 = gaussian_kernel1d(size, sigma, g.scalar_type());
  const auto k2 = torch::outer(k1, k1).expand({C, 1, size, size}).contiguous();
  auto frames = g.permute({0, 2, 1, 3, 4}).reshape({B * T, C, H, W});
  const std::int64_t pad = size / 2;
  frames = F::pad(frames, F::PadFuncOptions({pad, pad, pad, pad}).mode(torch::kReflect));
  auto out = F::conv2d(frames, k2, F::Conv2dFuncOptions().groups(C));
  return out.reshape({B, T, C, H, W}).permute({0, 2, 1, 3, 4});
}

torch::Tensor salt_and_pepper(const torch::Tensor& g, double ratio, std::uint64_t seed) {
  const auto B = g.size(0), T = g.size(2), H = g.size(3), W = g.size(4);
  const std::int64_t n = B * T * H * W;
  const auto k = static_cast<std::int64_t>(std::llround(ratio * static_cast<double>(n)));
  auto gen = make_generator(seed);
  const auto order = torch::randperm(n, gen, torch::kLong);
  auto hit = torch::zeros({n}, g.options());
  auto value = torch::zeros({n}, g.options());
  if (k > 0) {
    const auto chosen = order.slice(0, 0, k);
    hit.index_fill_(0, chosen, 1.0);
    // First half pepper (-1), second half salt (+1).
    value.index_fill_(0, chosen.slice(0, 0, k / 2), -1.0);
    value.index_fill_(0, chosen.slice(0, k / 2, k), 1.0);
  }
  hit = hit.view({B, 1, T, H, W});
  value = value.view({B, 1, T, H, W});
  return g * (1.0 - hit) + value * hit;
}

torch::Tensor median_filter3d(const torch::Tensor& g) {
  const auto padded = F::pad(g, F::PadFuncOptions({1, 1, 1, 1, 1, 1}).mode(torch::kReplicate));
  auto patches = padded.unfold(2, 3, 1).unfold(3, 3, 1).unfold(4, 3, 1);
  patches = patches.reshape({g.size(0), g.size(1), g.size(2), g.size(3), g.size(4), 27});
  return std::get<0>(patches.median(-1));
}

torch::Tensor random_crop(const torch::Tensor& g, double scale_min, double scale_max, std::mt19937_64& rng) {
  const auto T = g.size(2), H = g.size(3), W = g.size(4);
  std::vector<torch::Tensor> items;
  for (std::int64_t b = 0; b < g.size(0); ++b) {
    const double s = scale_min + (scale_max - scale_min) * uniform01(rng);
    const auto h = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(s * H)), 1, H);
    const auto w = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(s * W)), 1, W);
    const auto y0 = uniform_index(rng, H - h + 1);
    const auto x0 = uniform_index(rng, W - w + 1);
    auto crop = g.slice(0, b, b + 1).slice(3, y0, y0 + h).slice(4, x0, x0 + w);
    items.push_back(F::interpolate(crop, F::InterpolateFuncOptions()
                                             .size(std::vector<std::int64_t>{T, H, W})
                                             .mode(torch::kTrilinear)
                                             .align_corners(false)));
  }
  return torch::cat(items, 0);
}

torch::Tensor blocks_forward(const torch::Tensor& x, std::int64_t hb, std::int64_t wb) {
  // (..., H, W) -> (..., hb, wb, 8, 8)
  auto sizes = x.sizes().vec();
  sizes.pop_back();
  sizes.pop_back();
  auto shape = sizes;
  shape.insert(shape.end(), {hb, 8, wb, 8});
  const auto n = static_cast<std::int64_t>(sizes.size());
  std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  perm.insert(perm.end(), {n, n + 2, n + 1, n + 3});
  return x.reshape(shape).permute(perm);
}

torch::Tensor blocks_backward(const torch::Tensor& x, std::int64_t hb, std::int64_t wb) {
  // (..., hb, wb, 8, 8) -> (..., H, W)
  auto sizes = x.sizes().vec();
  sizes.resize(sizes.size() - 4);
  const auto n = static_cast<std::int64_t>(sizes.size());
  std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  perm.insert(perm.end(), {n, n + 2, n + 1, n + 3});
  auto shape = sizes;
  shape.insert(shape.end(), {hb * 8, wb * 8});
  return x.permute(perm).reshape(shape);
}

}  // namespace

std::string kind_name(DistortionKind kind) {
  switch (kind) {
    case DistortionKind::identity: return "identity";
    case DistortionKind::g_blur: return "g_blur";
    case DistortionKind::g_noise: return "g_noise";
    case DistortionKind::salt_pepper: return "salt_pepper";
    case DistortionKind::median3d: return "median3d";
    case DistortionKind::diff_jpeg: return "diff_jpeg";
    case DistortionKind::frame_drop: return "frame_drop";
    case DistortionKind::frame_shuffle: return "frame_shuffle";
    case DistortionKind::frame_replace: return "frame_replace";
    case DistortionKind::random_crop: return "random_crop";
    case DistortionKind::semantic_surrogate: return "semantic_surrogate";
  }
  return "identity";
}

std::string kind_label(DistortionKind kind) {
  switch (kind) {
    case DistortionKind::identity: return "identity";
    case DistortionKind::g_blur: return "g-blur";
    case DistortionKind::g_noise: return "g-noise";
    case DistortionKind::salt_pepper: return "salt-pep";
    case DistortionKind::median3d: return "median";
    case DistortionKind::diff_jpeg: return "jpeg";
    case DistortionKind::frame_drop: return "drop";
    case DistortionKind::frame_shuffle: return "shuffle";
    case DistortionKind::frame_replace: return "f-repl";
    case DistortionKind::random_crop: return "crop";
    case DistortionKind::semantic_surrogate: return "surrogate";
  }
  return "identity";
}

DistortionKind parse_kind(const std::string& name) {
  for (auto k : kAllKinds) {
    if (name == kind_name(k) || name == kind_label(k)) return k;
  }
  throw Error("unknown distortion kind '" + name + "'");
}

bool is_temporal(DistortionKind kind) {
  return kind == DistortionKind::frame_drop || kind == DistortionKind::frame_shuffle ||
         kind == DistortionKind::frame_replace;
}

std::string DistortionSpec::params_string() const {
  std::string out;
  for (const auto& [k, v] : params) {
    if (!out.empty()) out += ';';
    char buf[32];
    const auto end = std::to_chars(buf, buf + sizeof buf, v).ptr;
    out += k + "=" + std::string(buf, end);
  }
  return out;
}

std::string DistortionSpec::serialize() const {
  std::string out = "kind=" + kind_name(kind);
  const auto p = params_string();
  if (!p.empty()) out += ";" + p;
  out += ";seed=" + std::to_string(seed);
  return out;
}

DistortionSpec DistortionSpec::parse(const std::string& text) {
  DistortionSpec spec;
  bool have_kind = false;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ';')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error("malformed distortion field '" + item + "'");
    const auto key = item.substr(0, eq);
    const auto value = item.substr(eq + 1);
    try {
      if (key == "kind") {
        spec.kind = parse_kind(value);
        have_kind = true;
      } else if (key == "seed") {
        spec.seed = std::stoull(value);
      } else {
        spec.params[key] = std::stod(value);
      }
    } catch (const std::logic_error&) {
      throw Error("malformed distortion value '" + item + "'");
    }
  }
  if (!have_kind) throw Error("distortion spec without kind");
  return spec;
}

double DistortionSpec::param(const std::string& key) const {
  auto it = params.find(key);
  if (it != params.end()) return it->second;
  const auto defaults = default_spec(kind).params;
  auto d = defaults.find(key);
  if (d == defaults.end()) throw Error("distortion " + kind_name(kind) + " has no parameter '" + key + "'");
  return d->second;
}

DistortionSpec default_spec(DistortionKind kind, std::uint64_t seed) {
  DistortionSpec s;
  s.kind = kind;
  s.seed = seed;
  switch (kind) {
    case DistortionKind::g_blur: s.params = {{"kernel", 5}, {"sigma", 1.0}}; break;
    case DistortionKind::g_noise: s.params = {{"sigma", 0.05}}; break;
    case DistortionKind::salt_pepper: s.params = {{"ratio", 0.005}}; break;
    case DistortionKind::median3d: s.params = {{"kernel", 3}}; break;
    case DistortionKind::diff_jpeg: s.params = {{"quality", 75}}; break;
    case DistortionKind::frame_drop: s.params = {{"p_drop", 0.7}}; break;
    case DistortionKind::random_crop: s.params = {{"scale_min", 0.8}, {"scale_max", 1.0}}; break;
    case DistortionKind::semantic_surrogate: s.params = {{"feather", 2}}; break;
    default: break;
  }
  return s;
}

torch::Tensor gaussian_kernel1d(std::int64_t size, double sigma, torch::ScalarType dtype) {
  auto x = torch::arange(size, torch::TensorOptions().dtype(torch::kFloat64)) - static_cast<double>(size - 1) / 2.0;
  auto k = torch::exp(-(x * x) / (2.0 * sigma * sigma));
  return (k / k.sum()).to(dtype);
}

torch::Tensor dct_matrix(torch::ScalarType dtype) {
  auto d = torch::empty({8, 8}, torch::kFloat64);
  auto a = d.accessor<double, 2>();
  for (int k = 0; k < 8; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
    for (int n = 0; n < 8; ++n) a[k][n] = scale * std::cos(std::numbers::pi * (2 * n + 1) * k / 16.0);
  }
  return d.to(dtype);
}

torch::Tensor jpeg_quant_table(int quality, bool chroma) {
  if (quality < 1 || quality > 100) throw Error("JPEG quality must be in [1, 100]");
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  auto q = torch::empty({8, 8}, torch::kFloat64);
  auto a = q.accessor<double, 2>();
  const int* base = chroma ? kChroma : kLuma;
  for (int i = 0; i < 64; ++i) a[i / 8][i % 8] = std::max(1, (base[i] * scale + 50) / 100);
  return q;
}

torch::Tensor soft_round(const torch::Tensor& x) {
  const auto r = torch::round(x).detach();
  return r + torch::pow(x - r, 3);
}

torch::Tensor diff_jpeg(const torch::Tensor& g, int quality) {
  if (quality < 1 || quality > 100) throw Error("JPEG quality must be in [1, 100]");
  const bool unbatched = g.dim() == 4;
  const auto x = unbatched ? g.unsqueeze(0) : g;
  const auto dtype = x.scalar_type();
  const auto H = x.size(3), W = x.size(4);
  const auto Hp = (H + 7) / 8 * 8, Wp = (W + 7) / 8 * 8;

  auto rgb = (x + 1.0) * 127.5;
  const auto r = rgb.select(1, 0), gr = rgb.select(1, 1), b = rgb.select(1, 2);
  auto ycc = torch::stack({0.299 * r + 0.587 * gr + 0.114 * b,
                           -0.168736 * r - 0.331264 * gr + 0.5 * b,
                           0.5 * r - 0.418688 * gr - 0.081312 * b},
                          1);
  // Level shift: Y - 128; chroma is already centred (the +128 offsets cancel).
  ycc = ycc - torch::tensor({128.0, 0.0, 0.0}, x.options()).view({1, 3, 1, 1, 1});
  if (Hp != H || Wp != W) {
    const auto sz = ycc.sizes().vec();
    ycc = F::pad(ycc.reshape({-1, 1, H, W}), F::PadFuncOptions({0, Wp - W, 0, Hp - H}).mode(torch::kReplicate))
              .reshape({sz[0], sz[1], sz[2], Hp, Wp});
  }

  const auto D = dct_matrix(dtype);
  const auto q = torch::stack({jpeg_quant_table(quality, false), jpeg_quant_table(quality, true),
                               jpeg_quant_table(quality, true)})
                     .to(dtype)
                     .view({1, 3, 1, 1, 1, 8, 8});
  auto blocks = blocks_forward(ycc, Hp / 8, Wp / 8);  // (B,3,T,hb,wb,8,8)
  auto coeff = torch::matmul(torch::matmul(D, blocks), D.t());
  coeff = soft_round(coeff / q) * q;
  auto restored = blocks_backward(torch::matmul(torch::matmul(D.t(), coeff), D), Hp / 8, Wp / 8);
  restored = restored.slice(3, 0, H).slice(4, 0, W);

  const auto y = restored.select(1, 0) + 128.0;
  const auto cb = restored.select(1, 1);
  const auto cr = restored.select(1, 2);
  auto out = torch::stack({y + 1.402 * cr, y - 0.344136 * cb - 0.714136 * cr, y + 1.772 * cb}, 1);
  out = out / 127.5 - 1.0;
  return unbatched ? out.squeeze(0) : out;
}

SurrogateNetImpl::SurrogateNetImpl(std::int64_t latent_channels) {
  using namespace torch::nn;
  encoder = register_module(
      "encoder", Sequential(Conv2d(Conv2dOptions(3, 32, 3).padding(1)), ReLU(),
                            Conv2d(Conv2dOptions(32, 32, 4).stride(2).padding(1)), ReLU(),
                            Conv2d(Conv2dOptions(32, 64, 4).stride(2).padding(1)), ReLU(),
                            Conv2d(Conv2dOptions(64, latent_channels, 3).padding(1))));
  decoder = register_module(
      "decoder", Sequential(Conv2d(Conv2dOptions(latent_channels, 64, 3).padding(1)), ReLU(),
                            ConvTranspose2d(ConvTranspose2dOptions(64, 32, 4).stride(2).padding(1)), ReLU(),
                            ConvTranspose2d(ConvTranspose2dOptions(32, 32, 4).stride(2).padding(1)), ReLU(),
                            Conv2d(Conv2dOptions(32, 3, 3).padding(1))));
}

torch::Tensor SurrogateNetImpl::forward(const torch::Tensor& x) { return decoder->forward(encoder->forward(x)); }

SemanticSurrogate::SemanticSurrogate() : net_(SurrogateNet()) {}

void SemanticSurrogate::mark_fitted() {
  for (auto& p : net_->parameters()) p.set_requires_grad(false);
  net_->eval();
  fitted_ = true;
}

double SemanticSurrogate::fit(const torch::Tensor& clips, const SurrogateFitOptions& options) {
  if (clips.dim() != 5) throw Error("surrogate fitting expects (N,3,T,H,W) clips");
  for (auto& p : net_->parameters()) p.set_requires_grad(true);
  net_->train();
  const auto N = clips.size(0), T = clips.size(2);
  const auto frames = clips.permute({0, 2, 1, 3, 4}).reshape({N * T, 3, clips.size(3), clips.size(4)});
  torch::optim::Adam opt(net_->parameters(), torch::optim::AdamOptions(options.learning_rate));
  std::mt19937_64 rng(derive_seed(options.seed, {0x5A11}));
  double last = 0.0;
  for (int step = 0; step < options.steps; ++step) {
    std::vector<std::int64_t> pick(static_cast<std::size_t>(options.batch_frames));
    for (auto& i : pick) i = uniform_index(rng, N * T);
    const auto batch = frames.index_select(0, torch::tensor(pick, torch::kLong)).to(torch::kFloat32);
    const auto loss = torch::mse_loss(net_->forward(batch), batch);
    opt.zero_grad();
    loss.backward();
    opt.step();
    last = loss.item<double>();
  }
  mark_fitted();
  return last;
}

torch::Tensor SemanticSurrogate::reconstruct(const torch::Tensor& g) const {
  if (!fitted_) throw Error("surrogate unavailable");
  const auto B = g.size(0), C = g.size(1), T = g.size(2), H = g.size(3), W = g.size(4);
  auto frames = g.permute({0, 2, 1, 3, 4}).reshape({B * T, C, H, W});
  auto out = net_->forward(frames.to(torch::kFloat32)).to(g.scalar_type());
  return out.reshape({B, T, C, H, W}).permute({0, 2, 1, 3, 4});
}

torch::Tensor default_face_mask(std::int64_t frames, std::int64_t height, std::int64_t width) {
  const auto ys = (torch::arange(height, torch::kFloat64) + 0.5 - 0.52 * height) / (0.42 * height);
  const auto xs = (torch::arange(width, torch::kFloat64) + 0.5 - 0.5 * width) / (0.32 * width);
  const auto r2 = ys.view({height, 1}).pow(2) + xs.view({1, width}).pow(2);
  return (r2 <= 1.0).to(torch::kFloat32).unsqueeze(0).expand({frames, height, width}).contiguous();
}

torch::Tensor semantic_surrogate(const torch::Tensor& g, const torch::Tensor& face_mask,
                                 const SemanticSurrogate* surrogate) {
  if (surrogate == nullptr || !surrogate->fitted()) throw Error("surrogate unavailable");
  const bool unbatched = g.dim() == 4;
  const auto x = unbatched ? g.unsqueeze(0) : g;
  const auto T = x.size(2), H = x.size(3), W = x.size(4);
  if (face_mask.dim() != 3 || face_mask.size(0) != T || face_mask.size(1) != H || face_mask.size(2) != W) {
    throw Error("face mask must be (T,H,W) matching the clip");
  }
  const auto mask = face_mask.to(x.scalar_type()).view({T, 1, H, W});
  // Inward feather: 1 deep inside the region, ramping down over 2 pixels, 0 outside.
  const auto box = F::avg_pool2d(mask, F::AvgPool2dFuncOptions(5).stride(1).padding(2).count_include_pad(false));
  const auto soft = (mask * box).view({1, 1, T, H, W});
  const auto rec = surrogate->reconstruct(x);
  auto out = soft * rec + (1.0 - soft) * x;
  return unbatched ? out.squeeze(0) : out;
}

std::vector<std::int64_t> frame_drop_sources(std::int64_t frames, double p_drop, std::mt19937_64& rng) {
  std::vector<bool> keep(static_cast<std::size_t>(frames));
  bool any = false;
  for (std::int64_t t = 0; t < frames; ++t) {
    keep[static_cast<std::size_t>(t)] = uniform01(rng) >= p_drop;
    any = any || keep[static_cast<std::size_t>(t)];
  }
  if (!any) keep[static_cast<std::size_t>(uniform_index(rng, frames))] = true;

  std::vector<std::int64_t> src(static_cast<std::size_t>(frames), -1);
  std::int64_t last = -1;
  for (std::int64_t t = 0; t < frames; ++t) {
    if (keep[static_cast<std::size_t>(t)]) last = t;
    src[static_cast<std::size_t>(t)] = last;
  }
  // Leading dropped frames fall back to the first retained frame.
  std::int64_t first = 0;
  while (!keep[static_cast<std::size_t>(first)]) ++first;
  for (std::int64_t t = 0; t < first; ++t) src[static_cast<std::size_t>(t)] = first;
  return src;
}

DistortionOutput apply_distortion(const torch::Tensor& g, const DistortionSpec& spec,
                                  const DistortionContext& context) {
  const bool unbatched = g.dim() == 4;
  if (!unbatched && g.dim() != 5) throw Error("distortions expect (C,T,H,W) or (B,C,T,H,W)");
  const auto x = unbatched ? g.unsqueeze(0) : g;
  const auto B = x.size(0), T = x.size(2);
  std::mt19937_64 rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(spec.kind)}));

  DistortionOutput out;
  if (is_temporal(spec.kind) && T < 2) {
    out.tensor = g;
    out.warnings.push_back(kind_name(spec.kind) + " needs at least 2 frames; applied identity");
    return out;
  }

  torch::Tensor y;
  switch (spec.kind) {
    case DistortionKind::identity:
      y = x;
      break;
    case DistortionKind::g_blur:
      y = gaussian_blur(x, static_cast<std::int64_t>(spec.param("kernel")), spec.param("sigma"));
      break;
    case DistortionKind::g_noise: {
      auto gen = make_generator(derive_seed(spec.seed, {0x401}));
      y = x + spec.param("sigma") * torch::randn(x.sizes(), gen, x.options());
      break;
    }
    case DistortionKind::salt_pepper:
      y = salt_and_pepper(x, spec.param("ratio"), derive_seed(spec.seed, {0x5A1}));
      break;
    case DistortionKind::median3d:
      if (spec.param("kernel") != 3) throw Error("median3d supports a 3x3x3 kernel only");
      y = median_filter3d(x);
      break;
    case DistortionKind::diff_jpeg:
      y = diff_jpeg(x, static_cast<int>(spec.param("quality")));
      break;
    case DistortionKind::frame_drop: {
      std::vector<std::vector<std::int64_t>> src;
      for (std::int64_t b = 0; b < B; ++b) src.push_back(frame_drop_sources(T, spec.param("p_drop"), rng));
      y = remap_frames(x, src);
      break;
    }
    case DistortionKind::frame_shuffle: {
      std::vector<std::vector<std::int64_t>> src;
      for (std::int64_t b = 0; b < B; ++b) {
        std::vector<std::int64_t> perm(static_cast<std::size_t>(T));
        std::iota(perm.begin(), perm.end(), 0);
        for (std::int64_t i = T - 1; i > 0; --i) std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(uniform_index(rng, i + 1))]);
        src.push_back(std::move(perm));
      }
      y = remap_frames(x, src);
      break;
    }
    case DistortionKind::frame_replace: {
      std::vector<std::vector<std::int64_t>> src;
      for (std::int64_t b = 0; b < B; ++b) {
        std::vector<std::int64_t> map(static_cast<std::size_t>(T));
        std::iota(map.begin(), map.end(), 0);
        const auto target = uniform_index(rng, T);
        auto donor = uniform_index(rng, T - 1);
        if (donor >= target) ++donor;
        map[static_cast<std::size_t>(target)] = donor;
        src.push_back(std::move(map));
      }
      y = remap_frames(x, src);
      break;
    }
    case DistortionKind::random_crop:
      y = random_crop(x, spec.param("scale_min"), spec.param("scale_max"), rng);
      break;
    case DistortionKind::semantic_surrogate: {
      const auto mask = context.face_mask.defined() ? context.face_mask
                                                    : default_face_mask(T, x.size(3), x.size(4));
      y = semantic_surrogate(x, mask, context.surrogate);
      break;
    }
  }
  out.tensor = unbatched ? y.squeeze(0) : y;
  return out;
}

std::array<std::int64_t, 3> CurriculumSchedule::stage_end_epochs() const {
  std::array<std::int64_t, 3> ends{};
  for (std::size_t i = 0; i < 3; ++i) {
    ends[i] = static_cast<std::int64_t>(std::floor(stage_ends[i] * static_cast<double>(total_epochs) + 1e-9));
  }
  return ends;
}

void CurriculumSchedule::validate() const {
  if (total_epochs < 1) throw Error("curriculum needs at least one epoch");
  double prev = 0.0;
  for (double e : stage_ends) {
    if (e < prev || e > 1.0) throw Error("curriculum stage boundaries must be increasing fractions");
    prev = e;
  }
  for (double p : hard_probability) {
    if (p < 0.0 || p > 1.0) throw Error("curriculum probabilities must lie in [0, 1]");
  }
  if (base_pool.empty() || hard_pool.empty()) throw Error("curriculum pools must not be empty");
}

StageDescriptor stage_for_epoch(const CurriculumSchedule& schedule, std::int64_t epoch) {
  if (epoch < 1 || epoch > schedule.total_epochs) {
    throw Error("epoch " + std::to_string(epoch) + " outside the schedule");
  }
  const auto ends = schedule.stage_end_epochs();
  StageDescriptor d;
  d.index = epoch <= ends[0] ? 1 : epoch <= ends[1] ? 2 : epoch <= ends[2] ? 3 : 4;
  if (d.index == 1) {
    d.distribution[DistortionKind::identity] = 1.0;
    return d;
  }
  d.hard_probability = schedule.hard_probability[static_cast<std::size_t>(d.index - 1)];
  const double base_share = (1.0 - d.hard_probability) / static_cast<double>(schedule.base_pool.size());
  const double hard_share = d.hard_probability / static_cast<double>(schedule.hard_pool.size());
  for (auto k : schedule.base_pool) d.distribution[k] += base_share;
  if (d.hard_probability > 0.0) {
    for (auto k : schedule.hard_pool) d.distribution[k] += hard_share;
  }
  return d;
}

DistortionSpec sample_spec(const CurriculumSchedule& schedule, std::int64_t epoch, std::mt19937_64& rng) {
  const auto stage = stage_for_epoch(schedule, epoch);
  if (stage.index == 1) return default_spec(DistortionKind::identity, rng());
  const bool hard = uniform01(rng) < stage.hard_probability;
  const auto& pool = hard ? schedule.hard_pool : schedule.base_pool;
  const auto kind = pool[static_cast<std::size_t>(uniform_index(rng, static_cast<std::int64_t>(pool.size())))];
  return default_spec(kind, rng());
}

}  // namespace gifguard::rds
