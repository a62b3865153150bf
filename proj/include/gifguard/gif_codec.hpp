#pragma once

// GIF89a pipeline: median-cut palette selection, Floyd-Steinberg dithering,
// GIF-variant LZW coding and the container format around them.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <torch/types.h>

#include "gifguard/frames.hpp"

namespace gifguard::codec {

using Rgb = std::array<std::uint8_t, 3>;

/// Global colour table. Holds between 1 and 256 entries.
struct Palette {
  std::vector<Rgb> colors;

  std::size_t size() const noexcept { return colors.size(); }
  bool operator==(const Palette&) const = default;
};

/// A palettised animation: T frames of H x W indices into one global palette.
struct IndexedGif {
  std::int64_t frames = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::uint8_t> indices;  // (t, y, x)
  Palette palette;
  int frame_delay_ms = 100;  // stored in 10 ms units on disk
  bool loop = true;

  bool operator==(const IndexedGif&) const = default;
};

/// Median-cut colour quantisation over every pixel of every frame.
///
/// Boxes are split along their widest channel at the pixel-weighted median
/// until `n_colors` boxes exist or no box holds more than one distinct colour.
/// Each palette entry is the pixel-weighted box mean, rounded. The result is
/// deterministic and its entries are pairwise distinct.
Palette median_cut_palette(const Frames& clip, int n_colors = 256);

/// Index of the palette entry nearest to `c` in squared RGB distance; ties go
/// to the lower index.
std::uint8_t nearest_index(const Palette& palette, const std::array<double, 3>& c);

/// Floyd-Steinberg error diffusion (7/16, 3/16, 5/16, 1/16) over one frame in
/// plain raster order. `rgb` is H x W x 3. Diffused values are clamped to
/// [0, 255] before the nearest-colour lookup.
std::vector<std::uint8_t> floyd_steinberg_dither(std::span<const std::uint8_t> rgb,
                                                 std::int64_t height, std::int64_t width,
                                                 const Palette& palette);

/// Largest gap between consecutive values of any channel of the palette,
/// including the gaps to 0 and 255. Bounds the local mean error of dithering.
int max_quantization_step(const Palette& palette);

/// Smallest legal LZW minimum code size (2..8) able to address `palette_size`.
int min_code_size_for(std::size_t palette_size);

/// GIF-flavoured LZW: clear code first, variable width up to 12 bits, a
/// clear code whenever the table fills, EOI last. Bits are packed LSB-first.
std::vector<std::uint8_t> lzw_encode(std::span<const std::uint8_t> indices, int min_code_size);

/// Inverse of lzw_encode. Throws Error on truncated or inconsistent streams.
std::vector<std::uint8_t> lzw_decode(std::span<const std::uint8_t> bytes, int min_code_size);

/// Encode/decode a full GIF89a file in memory.
std::vector<std::uint8_t> encode_gif(const IndexedGif& gif);
IndexedGif decode_gif(std::span<const std::uint8_t> bytes);

void gif_write(const IndexedGif& gif, const std::filesystem::path& path);
IndexedGif gif_read(const std::filesystem::path& path);

/// Quantise a clip to a global palette of at most `n_colors` and dither
/// every frame against it.
IndexedGif quantize_clip(const Frames& clip, int n_colors = 256, int frame_delay_ms = 100);

/// Expand palette indices back to RGB frames.
Frames to_frames(const IndexedGif& gif);

/// Genuine GIF degradation of a normalised tensor: denormalise, quantise to
/// 256 colours, dither, re-index and normalise again. Accepts (C,T,H,W) or a
/// batch (B,C,T,H,W). Not differentiable.
torch::Tensor gif_quantize_roundtrip(const torch::Tensor& g);

}  // namespace gifguard::codec
