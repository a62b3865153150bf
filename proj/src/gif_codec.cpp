#include "gifguard/gif_codec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>

#include "gifguard/data_pipeline.hpp"
#include "gifguard/error.hpp"

namespace gifguard::codec {
namespace {

struct ColorCount {
  Rgb color;
  std::uint64_t count;
};

struct Box {
  std::size_t begin;
  std::size_t end;  // [begin, end) into the histogram
  std::uint64_t pixels;
  int widest_channel;
  int range;
};

void measure(Box& box, const std::vector<ColorCount>& hist) {
  std::array<int, 3> lo{255, 255, 255};
  std::array<int, 3> hi{0, 0, 0};
  box.pixels = 0;
  for (std::size_t i = box.begin; i < box.end; ++i) {
    for (int c = 0; c < 3; ++c) {
      lo[c] = std::min<int>(lo[c], hist[i].color[c]);
      hi[c] = std::max<int>(hi[c], hist[i].color[c]);
    }
    box.pixels += hist[i].count;
  }
  box.widest_channel = 0;
  box.range = hi[0] - lo[0];
  for (int c = 1; c < 3; ++c) {
    if (hi[c] - lo[c] > box.range) {
      box.range = hi[c] - lo[c];
      box.widest_channel = c;
    }
  }
}

Rgb box_mean(const Box& box, const std::vector<ColorCount>& hist) {
  std::array<double, 3> sum{0.0, 0.0, 0.0};
  for (std::size_t i = box.begin; i < box.end; ++i) {
    for (int c = 0; c < 3; ++c) sum[c] += static_cast<double>(hist[i].color[c]) * hist[i].count;
  }
  Rgb out{};
  for (int c = 0; c < 3; ++c) {
    out[c] = static_cast<std::uint8_t>(std::lround(sum[c] / static_cast<double>(box.pixels)));
  }
  return out;
}

// Bit writer/reader used by LZW; GIF packs codes least-significant bit first.
class BitWriter {
 public:
  void put(std::uint32_t code, int width) {
    acc_ |= static_cast<std::uint64_t>(code) << nbits_;
    nbits_ += width;
    while (nbits_ >= 8) {
      out_.push_back(static_cast<std::uint8_t>(acc_ & 0xFF));
      acc_ >>= 8;
      nbits_ -= 8;
    }
  }
  std::vector<std::uint8_t> finish() {
    if (nbits_ > 0) out_.push_back(static_cast<std::uint8_t>(acc_ & 0xFF));
    acc_ = 0;
    nbits_ = 0;
    return std::move(out_);
  }

 private:
  std::vector<std::uint8_t> out_;
  std::uint64_t acc_ = 0;
  int nbits_ = 0;
};

constexpr int kMaxCodeBits = 12;
constexpr std::uint32_t kMaxCodes = 1u << kMaxCodeBits;

// Cursor over an in-memory GIF with block-aware error reporting.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8(const char* block) {
    if (pos_ >= bytes_.size()) throw ParseError(block, "unexpected end of file");
    return bytes_[pos_++];
  }
  std::uint16_t u16(const char* block) {
    const std::uint16_t lo = u8(block);
    const std::uint16_t hi = u8(block);
    return static_cast<std::uint16_t>(lo | (hi << 8));
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* block) {
    if (bytes_.size() - pos_ < n) throw ParseError(block, "unexpected end of file");
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<std::uint8_t> sub_blocks(const char* block) {
    std::vector<std::uint8_t> data;
    for (;;) {
      const std::uint8_t len = u8(block);
      if (len == 0) break;
      auto chunk = take(len, block);
      data.insert(data.end(), chunk.begin(), chunk.end());
    }
    return data;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void put16(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
}

}  // namespace

Palette median_cut_palette(const Frames& clip, int n_colors) {
  if (clip.empty()) throw Error("empty clip");
  if (n_colors < 1 || n_colors > 256) throw Error("n_colors must be in [1, 256]");

  std::map<Rgb, std::uint64_t> counts;
  for (std::size_t i = 0; i < clip.rgb.size(); i += 3) {
    ++counts[Rgb{clip.rgb[i], clip.rgb[i + 1], clip.rgb[i + 2]}];
  }
  std::vector<ColorCount> hist;
  hist.reserve(counts.size());
  for (const auto& [color, count] : counts) hist.push_back({color, count});

  std::vector<Box> boxes;
  boxes.push_back({0, hist.size(), 0, 0, 0});
  measure(boxes.front(), hist);

  while (static_cast<int>(boxes.size()) < n_colors) {
    // Split the box with the widest channel range; larger population breaks ties.
    std::size_t pick = boxes.size();
    for (std::size_t b = 0; b < boxes.size(); ++b) {
      if (boxes[b].range == 0) continue;
      if (pick == boxes.size() || boxes[b].range > boxes[pick].range ||
          (boxes[b].range == boxes[pick].range && boxes[b].pixels > boxes[pick].pixels)) {
        pick = b;
      }
    }
    if (pick == boxes.size()) break;

    Box box = boxes[pick];
    const int ch = box.widest_channel;
    auto first = hist.begin() + static_cast<std::ptrdiff_t>(box.begin);
    auto last = hist.begin() + static_cast<std::ptrdiff_t>(box.end);
    std::stable_sort(first, last, [ch](const ColorCount& a, const ColorCount& b) {
      return a.color[ch] < b.color[ch];
    });

    // Weighted median value; the lower part keeps every colour <= threshold.
    const std::uint64_t half = (box.pixels + 1) / 2;
    std::uint64_t running = 0;
    int threshold = hist[box.end - 1].color[ch];
    for (std::size_t i = box.begin; i < box.end; ++i) {
      running += hist[i].count;
      if (running >= half) {
        threshold = hist[i].color[ch];
        break;
      }
    }
    const int top = hist[box.end - 1].color[ch];
    if (threshold == top) {
      // Median sits on the maximum; step down to the previous distinct value.
      for (std::size_t i = box.end; i-- > box.begin;) {
        if (hist[i].color[ch] < top) {
          threshold = hist[i].color[ch];
          break;
        }
      }
    }
    std::size_t split = box.begin;
    while (split < box.end && hist[split].color[ch] <= threshold) ++split;

    Box lower{box.begin, split, 0, 0, 0};
    Box upper{split, box.end, 0, 0, 0};
    measure(lower, hist);
    measure(upper, hist);
    boxes[pick] = lower;
    boxes.push_back(upper);
  }

  Palette palette;
  palette.colors.reserve(boxes.size());
  for (const auto& box : boxes) palette.colors.push_back(box_mean(box, hist));
  return palette;
}

std::uint8_t nearest_index(const Palette& palette, const std::array<double, 3>& c) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < palette.colors.size(); ++i) {
    const auto& p = palette.colors[i];
    const double dr = c[0] - p[0];
    const double dg = c[1] - p[1];
    const double db = c[2] - p[2];
    const double d = dr * dr + dg * dg + db * db;
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return static_cast<std::uint8_t>(best);
}

std::vector<std::uint8_t> floyd_steinberg_dither(std::span<const std::uint8_t> rgb,
                                                 std::int64_t height, std::int64_t width,
                                                 const Palette& palette) {
  if (palette.colors.empty()) throw Error("empty palette");
  if (static_cast<std::int64_t>(rgb.size()) != height * width * 3) {
    throw Error("frame size does not match its dimensions");
  }
  const auto w = static_cast<std::size_t>(width);
  // Error carried into the current and next rows, padded by one column on each side.
  std::vector<std::array<double, 3>> cur(w + 2, {0.0, 0.0, 0.0});
  std::vector<std::array<double, 3>> next(w + 2, {0.0, 0.0, 0.0});
  std::vector<std::uint8_t> out(static_cast<std::size_t>(height) * w);

  for (std::int64_t y = 0; y < height; ++y) {
    std::fill(next.begin(), next.end(), std::array<double, 3>{0.0, 0.0, 0.0});
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t px = static_cast<std::size_t>(y) * w + x;
      std::array<double, 3> value{};
      for (int c = 0; c < 3; ++c) {
        value[c] = std::clamp(rgb[px * 3 + c] + cur[x + 1][c], 0.0, 255.0);
      }
      const std::uint8_t idx = nearest_index(palette, value);
      out[px] = idx;
      const auto& q = palette.colors[idx];
      for (int c = 0; c < 3; ++c) {
        const double err = value[c] - q[c];
        cur[x + 2][c] += err * 7.0 / 16.0;
        next[x][c] += err * 3.0 / 16.0;
        next[x + 1][c] += err * 5.0 / 16.0;
        next[x + 2][c] += err * 1.0 / 16.0;
      }
    }
    std::swap(cur, next);
  }
  return out;
}

int max_quantization_step(const Palette& palette) {
  int step = 0;
  for (int c = 0; c < 3; ++c) {
    std::vector<int> values{0, 255};
    for (const auto& p : palette.colors) values.push_back(p[c]);
    std::sort(values.begin(), values.end());
    for (std::size_t i = 1; i < values.size(); ++i) step = std::max(step, values[i] - values[i - 1]);
  }
  return step;
}

int min_code_size_for(std::size_t palette_size) {
  int bits = 2;
  while ((std::size_t{1} << bits) < palette_size) ++bits;
  return bits;
}

std::vector<std::uint8_t> lzw_encode(std::span<const std::uint8_t> indices, int min_code_size) {
  if (min_code_size < 2 || min_code_size > 8) throw Error("min_code_size must be in [2, 8]");
  const std::uint32_t clear = 1u << min_code_size;
  const std::uint32_t eoi = clear + 1;
  for (auto v : indices) {
    if (v >= clear) throw Error("index " + std::to_string(v) + " exceeds min_code_size");
  }

  BitWriter bits;
  int width = min_code_size + 1;
  std::uint32_t next = eoi + 1;
  // Dictionary keyed by (prefix code << 8 | symbol).
  std::unordered_map<std::uint32_t, std::uint32_t> table;
  table.reserve(kMaxCodes);

  bits.put(clear, width);
  if (!indices.empty()) {
    std::uint32_t prefix = indices[0];
    for (std::size_t i = 1; i < indices.size(); ++i) {
      const std::uint32_t sym = indices[i];
      const std::uint32_t key = (prefix << 8) | sym;
      if (auto it = table.find(key); it != table.end()) {
        prefix = it->second;
        continue;
      }
      bits.put(prefix, width);
      if (next < kMaxCodes) {
        table.emplace(key, next++);
        if (next > (1u << width) && width < kMaxCodeBits) ++width;
      } else {
        bits.put(clear, width);
        table.clear();
        width = min_code_size + 1;
        next = eoi + 1;
      }
      prefix = sym;
    }
    bits.put(prefix, width);
    // The decoder adds one more entry after the final code and may widen first.
    if (next == (1u << width) && width < kMaxCodeBits) ++width;
  }
  bits.put(eoi, width);
  return bits.finish();
}

std::vector<std::uint8_t> lzw_decode(std::span<const std::uint8_t> bytes, int min_code_size) {
  if (min_code_size < 2 || min_code_size > 8) throw Error("min_code_size must be in [2, 8]");
  const std::uint32_t clear = 1u << min_code_size;
  const std::uint32_t eoi = clear + 1;

  // Each entry is (prefix code, last symbol, first symbol, length).
  std::vector<std::uint32_t> prefix(kMaxCodes, 0);
  std::vector<std::uint8_t> suffix(kMaxCodes, 0);
  std::vector<std::uint8_t> first(kMaxCodes, 0);
  std::vector<std::uint32_t> length(kMaxCodes, 0);
  for (std::uint32_t i = 0; i < clear; ++i) {
    suffix[i] = first[i] = static_cast<std::uint8_t>(i);
    length[i] = 1;
  }

  std::vector<std::uint8_t> out;
  int width = min_code_size + 1;
  std::uint32_t next = eoi + 1;
  bool have_prev = false;
  std::uint32_t prev = 0;

  std::size_t bitpos = 0;
  const std::size_t total_bits = bytes.size() * 8;
  auto emit = [&](std::uint32_t code) {
    const std::size_t start = out.size();
    out.resize(start + length[code]);
    std::uint32_t c = code;
    for (std::size_t k = length[code]; k-- > 0;) {
      out[start + k] = suffix[c];
      c = prefix[c];
    }
  };

  for (;;) {
    if (bitpos + static_cast<std::size_t>(width) > total_bits) throw Error("truncated LZW stream");
    std::uint32_t code = 0;
    for (int b = 0; b < width; ++b, ++bitpos) {
      code |= static_cast<std::uint32_t>((bytes[bitpos >> 3] >> (bitpos & 7)) & 1u) << b;
    }
    if (code == clear) {
      width = min_code_size + 1;
      next = eoi + 1;
      have_prev = false;
      continue;
    }
    if (code == eoi) break;
    if (!have_prev) {
      if (code >= clear) throw Error("invalid LZW code " + std::to_string(code));
      emit(code);
      prev = code;
      have_prev = true;
      continue;
    }
    if (code > next || (code == next && next >= kMaxCodes)) {
      throw Error("invalid LZW code " + std::to_string(code));
    }
    if (next >= kMaxCodes) throw Error("LZW code overflow without clear");
    const std::uint8_t head = code == next ? first[prev] : first[code];
    prefix[next] = prev;
    suffix[next] = head;
    first[next] = first[prev];
    length[next] = length[prev] + 1;
    ++next;
    emit(code);
    if (next == (1u << width) && width < kMaxCodeBits) ++width;
    prev = code;
  }
  return out;
}

std::vector<std::uint8_t> encode_gif(const IndexedGif& gif) {
  if (gif.frames < 1 || gif.height < 1 || gif.width < 1) throw Error("GIF dimensions must be positive");
  if (gif.width > 0xFFFF || gif.height > 0xFFFF) throw Error("GIF dimensions exceed 65535");
  if (gif.palette.size() < 1 || gif.palette.size() > 256) throw Error("palette must hold 1..256 colours");
  if (gif.indices.size() != static_cast<std::size_t>(gif.frames * gif.height * gif.width)) {
    throw Error("index array does not match GIF dimensions");
  }
  if (gif.frame_delay_ms <= 0 || gif.frame_delay_ms % 10 != 0 || gif.frame_delay_ms > 655350) {
    throw Error("frame delay must be a positive multiple of 10 ms");
  }
  for (auto v : gif.indices) {
    if (v >= gif.palette.size()) throw Error("palette index out of range");
  }

  const int code_size = min_code_size_for(gif.palette.size());
  // Colour table size field n encodes 2^(n+1) entries.
  int table_bits = 1;
  while ((std::size_t{1} << table_bits) < gif.palette.size()) ++table_bits;
  const std::size_t table_entries = std::size_t{1} << table_bits;

  std::vector<std::uint8_t> out;
  const std::string magic = "GIF89a";
  out.insert(out.end(), magic.begin(), magic.end());

  put16(out, static_cast<std::uint32_t>(gif.width));
  put16(out, static_cast<std::uint32_t>(gif.height));
  out.push_back(static_cast<std::uint8_t>(0x80 | (0x7 << 4) | (table_bits - 1)));
  out.push_back(0);  // background colour index
  out.push_back(0);  // pixel aspect ratio

  // Padding repeats the last colour so a reader can strip it again.
  for (std::size_t i = 0; i < table_entries; ++i) {
    const auto& c = gif.palette.colors[std::min(i, gif.palette.size() - 1)];
    out.insert(out.end(), c.begin(), c.end());
  }

  if (gif.loop) {
    const std::string app = "NETSCAPE2.0";
    out.insert(out.end(), {0x21, 0xFF, 0x0B});
    out.insert(out.end(), app.begin(), app.end());
    out.insert(out.end(), {0x03, 0x01, 0x00, 0x00, 0x00});
  }

  const std::size_t frame_px = static_cast<std::size_t>(gif.height * gif.width);
  for (std::int64_t t = 0; t < gif.frames; ++t) {
    // Graphic control extension: disposal 1 (do not dispose), no transparency.
    out.insert(out.end(), {0x21, 0xF9, 0x04, 0x04});
    put16(out, static_cast<std::uint32_t>(gif.frame_delay_ms / 10));
    out.insert(out.end(), {0x00, 0x00});

    out.push_back(0x2C);
    put16(out, 0);
    put16(out, 0);
    put16(out, static_cast<std::uint32_t>(gif.width));
    put16(out, static_cast<std::uint32_t>(gif.height));
    out.push_back(0x00);

    out.push_back(static_cast<std::uint8_t>(code_size));
    std::span<const std::uint8_t> frame(gif.indices.data() + t * frame_px, frame_px);
    const auto data = lzw_encode(frame, code_size);
    for (std::size_t pos = 0; pos < data.size(); pos += 255) {
      const std::size_t n = std::min<std::size_t>(255, data.size() - pos);
      out.push_back(static_cast<std::uint8_t>(n));
      out.insert(out.end(), data.begin() + static_cast<std::ptrdiff_t>(pos),
                 data.begin() + static_cast<std::ptrdiff_t>(pos + n));
    }
    out.push_back(0x00);
  }
  out.push_back(0x3B);
  return out;
}

IndexedGif decode_gif(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  const auto sig = in.take(6, "header");
  const std::string magic(sig.begin(), sig.end());
  if (magic != "GIF89a" && magic != "GIF87a") throw ParseError("header", "bad signature");

  IndexedGif gif;
  gif.loop = false;
  gif.width = in.u16("logical screen descriptor");
  gif.height = in.u16("logical screen descriptor");
  const std::uint8_t packed = in.u8("logical screen descriptor");
  in.u8("logical screen descriptor");
  in.u8("logical screen descriptor");
  if (gif.width == 0 || gif.height == 0) {
    throw ParseError("logical screen descriptor", "zero-sized screen");
  }
  if (!(packed & 0x80)) throw ParseError("logical screen descriptor", "global colour table required");

  const std::size_t table_entries = std::size_t{2} << (packed & 0x07);
  const auto table = in.take(table_entries * 3, "global colour table");
  for (std::size_t i = 0; i < table_entries; ++i) {
    gif.palette.colors.push_back({table[3 * i], table[3 * i + 1], table[3 * i + 2]});
  }

  bool delay_seen = false;
  const std::size_t frame_px = static_cast<std::size_t>(gif.width * gif.height);
  for (;;) {
    const std::uint8_t intro = in.u8("block introducer");
    if (intro == 0x3B) break;
    if (intro == 0x21) {
      const std::uint8_t label = in.u8("extension");
      if (label == 0xF9) {
        const auto body = in.sub_blocks("graphic control extension");
        if (body.size() < 4) throw ParseError("graphic control extension", "short block");
        if (!delay_seen) {
          gif.frame_delay_ms = (body[1] | (body[2] << 8)) * 10;
          delay_seen = true;
        }
      } else if (label == 0xFF) {
        const auto body = in.sub_blocks("application extension");
        const std::string id(body.begin(), body.begin() + std::min<std::size_t>(body.size(), 11));
        if (id == "NETSCAPE2.0" || id == "ANIMEXTS1.0") gif.loop = true;
      } else {
        in.sub_blocks("extension");
      }
      continue;
    }
    if (intro != 0x2C) throw ParseError("block introducer", "unknown block type");

    const auto left = in.u16("image descriptor");
    const auto top = in.u16("image descriptor");
    const auto w = in.u16("image descriptor");
    const auto h = in.u16("image descriptor");
    const std::uint8_t flags = in.u8("image descriptor");
    if (left != 0 || top != 0 || w != gif.width || h != gif.height) {
      throw ParseError("image descriptor", "partial frames are not supported");
    }
    if (flags & 0x80) throw ParseError("image descriptor", "local colour tables are not supported");
    if (flags & 0x40) throw ParseError("image descriptor", "interlaced images are not supported");

    const int code_size = in.u8("image data");
    if (code_size < 2 || code_size > 8) throw ParseError("image data", "invalid LZW minimum code size");
    const auto data = in.sub_blocks("image data");
    std::vector<std::uint8_t> pixels;
    try {
      pixels = lzw_decode(data, code_size);
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError("image data", e.what());
    }
    if (pixels.size() < frame_px) throw ParseError("image data", "too few pixels");
    gif.indices.insert(gif.indices.end(), pixels.begin(),
                       pixels.begin() + static_cast<std::ptrdiff_t>(frame_px));
    ++gif.frames;
  }
  if (gif.frames == 0) throw ParseError("trailer", "no image data");
  if (gif.frame_delay_ms <= 0) gif.frame_delay_ms = 100;

  // Strip padding entries (repeats of the final colour) unless they are referenced.
  const std::uint8_t max_index = *std::max_element(gif.indices.begin(), gif.indices.end());
  auto& colors = gif.palette.colors;
  while (colors.size() > 1 && colors.size() - 1 > max_index &&
         colors[colors.size() - 1] == colors[colors.size() - 2]) {
    colors.pop_back();
  }
  return gif;
}

void gif_write(const IndexedGif& gif, const std::filesystem::path& path) {
  const auto bytes = encode_gif(gif);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

IndexedGif gif_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return decode_gif(bytes);
}

IndexedGif quantize_clip(const Frames& clip, int n_colors, int frame_delay_ms) {
  IndexedGif gif;
  gif.frames = clip.frames;
  gif.height = clip.height;
  gif.width = clip.width;
  gif.frame_delay_ms = frame_delay_ms;
  gif.palette = median_cut_palette(clip, n_colors);
  gif.indices.reserve(static_cast<std::size_t>(clip.frames) * clip.pixels_per_frame());
  for (std::int64_t t = 0; t < clip.frames; ++t) {
    const auto idx = floyd_steinberg_dither(clip.frame(t), clip.height, clip.width, gif.palette);
    gif.indices.insert(gif.indices.end(), idx.begin(), idx.end());
  }
  return gif;
}

Frames to_frames(const IndexedGif& gif) {
  Frames out(gif.frames, gif.height, gif.width);
  for (std::size_t i = 0; i < gif.indices.size(); ++i) {
    const auto& c = gif.palette.colors.at(gif.indices[i]);
    std::copy(c.begin(), c.end(), out.rgb.begin() + static_cast<std::ptrdiff_t>(3 * i));
  }
  return out;
}

torch::Tensor gif_quantize_roundtrip(const torch::Tensor& g) {
  if (g.dim() == 5) {
    std::vector<torch::Tensor> items;
    for (std::int64_t b = 0; b < g.size(0); ++b) items.push_back(gif_quantize_roundtrip(g[b]));
    return torch::stack(items);
  }
  const auto clip = data::denormalize(g);
  const auto restored = to_frames(quantize_clip(clip));
  return data::normalize(restored).to(g.scalar_type());
}

}  // namespace gifguard::codec
