#pragma once

// Straightforward scalar reference implementations used as test oracles.
// They are written independently of the library code paths (no shared
// helpers) and favour obviousness over speed.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace oracle {

// ---------------------------------------------------------------- palette

using Color = std::array<int, 3>;

struct Weighted {
  Color c;
  std::uint64_t n;
};

/// Median cut on a colour histogram, following the documented rules: split
/// the box with the largest single-channel range (ties: more pixels, then the
/// earlier box), at the pixel-weighted median along that channel; colours
/// equal to the median go low unless that empties the upper part, in which
/// case the next lower distinct value is used. Entries are rounded box means.
inline std::vector<Color> median_cut(std::vector<Weighted> hist, int n) {
  std::sort(hist.begin(), hist.end(), [](const Weighted& a, const Weighted& b) { return a.c < b.c; });
  std::vector<std::vector<Weighted>> boxes{hist};
  auto range_of = [](const std::vector<Weighted>& b, int ch) {
    int lo = 255, hi = 0;
    for (const auto& w : b) {
      lo = std::min(lo, w.c[ch]);
      hi = std::max(hi, w.c[ch]);
    }
    return hi - lo;
  };
  auto widest = [&](const std::vector<Weighted>& b) {
    int best = 0;
    for (int ch = 1; ch < 3; ++ch)
      if (range_of(b, ch) > range_of(b, best)) best = ch;
    return best;
  };
  auto pixels = [](const std::vector<Weighted>& b) {
    std::uint64_t s = 0;
    for (const auto& w : b) s += w.n;
    return s;
  };
  while (static_cast<int>(boxes.size()) < n) {
    int pick = -1;
    for (int i = 0; i < static_cast<int>(boxes.size()); ++i) {
      const int r = range_of(boxes[i], widest(boxes[i]));
      if (r == 0) continue;
      if (pick < 0) {
        pick = i;
        continue;
      }
      const int rp = range_of(boxes[pick], widest(boxes[pick]));
      if (r > rp || (r == rp && pixels(boxes[i]) > pixels(boxes[pick]))) pick = i;
    }
    if (pick < 0) break;
    auto box = boxes[pick];
    const int ch = widest(box);
    std::stable_sort(box.begin(), box.end(), [ch](const Weighted& a, const Weighted& b) { return a.c[ch] < b.c[ch]; });
    const std::uint64_t half = (pixels(box) + 1) / 2;
    std::uint64_t run = 0;
    int thr = box.back().c[ch];
    for (const auto& w : box) {
      run += w.n;
      if (run >= half) {
        thr = w.c[ch];
        break;
      }
    }
    if (thr == box.back().c[ch]) {
      int below = -1;
      for (const auto& w : box)
        if (w.c[ch] < thr) below = std::max(below, w.c[ch]);
      thr = below;
    }
    std::vector<Weighted> lo, hi;
    for (const auto& w : box) (w.c[ch] <= thr ? lo : hi).push_back(w);
    boxes[pick] = lo;
    boxes.push_back(hi);
  }
  std::vector<Color> out;
  for (const auto& b : boxes) {
    double s[3] = {0, 0, 0};
    double cnt = 0;
    for (const auto& w : b) {
      for (int k = 0; k < 3; ++k) s[k] += static_cast<double>(w.c[k]) * static_cast<double>(w.n);
      cnt += static_cast<double>(w.n);
    }
    out.push_back({static_cast<int>(std::lround(s[0] / cnt)), static_cast<int>(std::lround(s[1] / cnt)),
                   static_cast<int>(std::lround(s[2] / cnt))});
  }
  return out;
}

/// Floyd-Steinberg over an H x W x 3 frame, raster order, clamped values,
/// nearest colour with ties to the lower index.
inline std::vector<int> fs_dither(const std::vector<std::uint8_t>& rgb, int h, int w, const std::vector<Color>& pal) {
  std::vector<double> buf(rgb.begin(), rgb.end());
  std::vector<int> out(static_cast<std::size_t>(h * w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v[3];
      for (int k = 0; k < 3; ++k) v[k] = std::clamp(buf[(y * w + x) * 3 + k], 0.0, 255.0);
      int best = 0;
      double bd = 1e300;
      for (int i = 0; i < static_cast<int>(pal.size()); ++i) {
        double d = 0;
        for (int k = 0; k < 3; ++k) d += (v[k] - pal[i][k]) * (v[k] - pal[i][k]);
        if (d < bd) {
          bd = d;
          best = i;
        }
      }
      out[y * w + x] = best;
      for (int k = 0; k < 3; ++k) {
        const double e = v[k] - pal[best][k];
        auto add = [&](int yy, int xx, double f) {
          if (yy < h && xx >= 0 && xx < w) buf[(yy * w + xx) * 3 + k] += e * f;
        };
        add(y, x + 1, 7.0 / 16);
        add(y + 1, x - 1, 3.0 / 16);
        add(y + 1, x, 5.0 / 16);
        add(y + 1, x + 1, 1.0 / 16);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------- GIF decoder

struct DecodedGif {
  int width = 0, height = 0;
  std::vector<std::vector<std::uint8_t>> frames_rgb;  // each H*W*3
  std::vector<int> delays_cs;
};

/// Minimal GIF87a/89a decoder: global or local palette, non-interlaced
/// frames, dictionary-of-strings LZW. Composites frames onto a canvas.
inline DecodedGif decode_gif(const std::vector<std::uint8_t>& f) {
  std::size_t p = 0;
  auto need = [&](std::size_t n) {
    if (p + n > f.size()) throw std::runtime_error("oracle: truncated gif");
  };
  auto u8 = [&]() {
    need(1);
    return f[p++];
  };
  auto u16 = [&]() {
    const int lo = u8();
    return lo | (u8() << 8);
  };
  need(6);
  const std::string sig(f.begin(), f.begin() + 6);
  if (sig != "GIF89a" && sig != "GIF87a") throw std::runtime_error("oracle: not a gif");
  p = 6;
  DecodedGif g;
  g.width = u16();
  g.height = u16();
  const int packed = u8();
  u8();  // background
  u8();  // aspect
  std::vector<std::array<std::uint8_t, 3>> global;
  if (packed & 0x80) {
    const int n = 1 << ((packed & 7) + 1);
    for (int i = 0; i < n; ++i) global.push_back({u8(), u8(), u8()});
  }
  std::vector<std::uint8_t> canvas(static_cast<std::size_t>(g.width * g.height * 3), 0);
  int delay = 0;
  for (;;) {
    const int b = u8();
    if (b == 0x3B) break;
    if (b == 0x21) {
      const int label = u8();
      bool first = true;
      for (;;) {
        const int len = u8();
        if (len == 0) break;
        need(static_cast<std::size_t>(len));
        if (label == 0xF9 && first && len >= 4) delay = f[p + 1] | (f[p + 2] << 8);
        p += static_cast<std::size_t>(len);
        first = false;
      }
      continue;
    }
    if (b != 0x2C) throw std::runtime_error("oracle: unexpected block");
    const int left = u16(), top = u16(), w = u16(), h = u16();
    const int ip = u8();
    if (ip & 0x40) throw std::runtime_error("oracle: interlace unsupported");
    auto pal = global;
    if (ip & 0x80) {
      pal.clear();
      const int n = 1 << ((ip & 7) + 1);
      for (int i = 0; i < n; ++i) pal.push_back({u8(), u8(), u8()});
    }
    const int mcs = u8();
    std::vector<std::uint8_t> data;
    for (;;) {
      const int len = u8();
      if (len == 0) break;
      need(static_cast<std::size_t>(len));
      data.insert(data.end(), f.begin() + static_cast<std::ptrdiff_t>(p), f.begin() + static_cast<std::ptrdiff_t>(p + len));
      p += static_cast<std::size_t>(len);
    }
    // LZW with explicit string table.
    const int clear = 1 << mcs, eoi = clear + 1;
    std::vector<std::vector<int>> table;
    auto reset = [&]() {
      table.clear();
      for (int i = 0; i < clear; ++i) table.push_back({i});
      table.push_back({});
      table.push_back({});
    };
    reset();
    int width_bits = mcs + 1;
    std::size_t bitpos = 0;
    auto read_code = [&]() -> int {
      int code = 0;
      for (int i = 0; i < width_bits; ++i, ++bitpos) {
        if (bitpos / 8 >= data.size()) throw std::runtime_error("oracle: lzw truncated");
        code |= ((data[bitpos / 8] >> (bitpos % 8)) & 1) << i;
      }
      return code;
    };
    std::vector<int> out;
    std::vector<int> prev;
    for (;;) {
      const int code = read_code();
      if (code == clear) {
        reset();
        width_bits = mcs + 1;
        prev.clear();
        continue;
      }
      if (code == eoi) break;
      std::vector<int> entry;
      if (code < static_cast<int>(table.size())) {
        entry = table[static_cast<std::size_t>(code)];
        if (!prev.empty()) {
          auto n = prev;
          n.push_back(entry[0]);
          table.push_back(n);
        }
      } else if (code == static_cast<int>(table.size()) && !prev.empty()) {
        entry = prev;
        entry.push_back(prev[0]);
        table.push_back(entry);
      } else {
        throw std::runtime_error("oracle: bad lzw code");
      }
      out.insert(out.end(), entry.begin(), entry.end());
      prev = entry;
      if (static_cast<int>(table.size()) == (1 << width_bits) && width_bits < 12) ++width_bits;
    }
    if (static_cast<int>(out.size()) < w * h) throw std::runtime_error("oracle: short frame");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const auto& c = pal.at(static_cast<std::size_t>(out[static_cast<std::size_t>(y * w + x)]));
        const std::size_t o = static_cast<std::size_t>(((top + y) * g.width + left + x) * 3);
        canvas[o] = c[0];
        canvas[o + 1] = c[1];
        canvas[o + 2] = c[2];
      }
    g.frames_rgb.push_back(canvas);
    g.delays_cs.push_back(delay);
  }
  return g;
}

// ---------------------------------------------------------------- gradients

/// Norm-wise relative error between autograd and central differences of a
/// scalar function of one float64 tensor.
inline double gradient_error(const std::function<torch::Tensor(const torch::Tensor&)>& f, const torch::Tensor& x0,
                             double eps = 1e-6) {
  auto x = x0.detach().clone().to(torch::kFloat64).set_requires_grad(true);
  auto y = f(x);
  auto analytic = torch::autograd::grad({y}, {x})[0].detach().flatten();
  auto base = x0.detach().clone().to(torch::kFloat64).flatten();
  std::vector<double> numeric(static_cast<std::size_t>(base.numel()));
  torch::NoGradGuard guard;
  for (std::int64_t i = 0; i < base.numel(); ++i) {
    auto plus = base.clone();
    auto minus = base.clone();
    plus[i] += eps;
    minus[i] -= eps;
    const double fp = f(plus.view(x0.sizes())).item<double>();
    const double fm = f(minus.view(x0.sizes())).item<double>();
    numeric[static_cast<std::size_t>(i)] = (fp - fm) / (2 * eps);
  }
  double diff = 0, na = 0, nn = 0;
  for (std::int64_t i = 0; i < base.numel(); ++i) {
    const double a = analytic[i].item<double>(), n = numeric[static_cast<std::size_t>(i)];
    diff += (a - n) * (a - n);
    na += a * a;
    nn += n * n;
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
  return std::sqrt(diff) / scale;
}

// ---------------------------------------------------------------- metrics

inline double psnr(const std::vector<double>& a, const std::vector<double>& b, double max_val) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  const double mse = s / static_cast<double>(a.size());
  return mse == 0 ? 100.0 : 10 * std::log10(max_val * max_val / mse);
}

inline std::vector<std::vector<double>> gauss2d(int n, double sigma) {
  std::vector<std::vector<double>> w(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n)));
  double s = 0;
  const double c = (n - 1) / 2.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) s += w[i][j] = std::exp(-((i - c) * (i - c) + (j - c) * (j - c)) / (2 * sigma * sigma));
  for (auto& r : w)
    for (auto& v : r) v /= s;
  return w;
}

/// Direct windowed SSIM of one h x w plane (valid positions).
inline double ssim_plane(const std::vector<double>& a, const std::vector<double>& b, int h, int w, double max_val) {
  const int n = 11;
  const auto win = gauss2d(n, 1.5);
  const double c1 = std::pow(0.01 * max_val, 2), c2 = std::pow(0.03 * max_val, 2);
  double total = 0;
  int count = 0;
  for (int y = 0; y + n <= h; ++y)
    for (int x = 0; x + n <= w; ++x) {
      double ma = 0, mb = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          ma += win[i][j] * a[(y + i) * w + x + j];
          mb += win[i][j] * b[(y + i) * w + x + j];
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double da = a[(y + i) * w + x + j] - ma, db = b[(y + i) * w + x + j] - mb;
          va += win[i][j] * da * da;
          vb += win[i][j] * db * db;
          cov += win[i][j] * da * db;
        }
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / count;
}

/// Direct-filter VIFp of one plane: returns {numerator, denominator}.
inline std::pair<double, double> vif_plane(std::vector<double> ref, std::vector<double> dist, int h, int w) {
  const double sigma_nsq = 2.0, eps = 1e-10;
  double num = 0, den = 0;
  auto filt = [](const std::vector<double>& img, int hh, int ww, const std::vector<std::vector<double>>& k, int& oh,
                 int& ow) {
    const int n = static_cast<int>(k.size());
    oh = hh - n + 1;
    ow = ww - n + 1;
    std::vector<double> out(static_cast<std::size_t>(std::max(0, oh * ow)));
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double s = 0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) s += k[i][j] * img[(y + i) * ww + x + j];
        out[y * ow + x] = s;
      }
    return out;
  };
  for (int scale = 1; scale <= 4; ++scale) {
    const int n = (1 << (5 - scale)) + 1;
    const auto k = gauss2d(n, n / 5.0);
    int oh = 0, ow = 0;
    if (h < n || w < n) break;
    if (scale > 1) {
      auto fr = filt(ref, h, w, k, oh, ow);
      auto fd = filt(dist, h, w, k, oh, ow);
      std::vector<double> r2, d2;
      int nh = 0, nw = 0;
      for (int y = 0; y < oh; y += 2, ++nh) {
        nw = 0;
        for (int x = 0; x < ow; x += 2, ++nw) {
          r2.push_back(fr[y * ow + x]);
          d2.push_back(fd[y * ow + x]);
        }
      }
      ref = r2;
      dist = d2;
      h = nh;
      w = nw;
      if (h < n || w < n) break;
    }
    std::vector<double> rr(ref.size()), dd(ref.size()), rd(ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      rr[i] = ref[i] * ref[i];
      dd[i] = dist[i] * dist[i];
      rd[i] = ref[i] * dist[i];
    }
    const auto mu1 = filt(ref, h, w, k, oh, ow), mu2 = filt(dist, h, w, k, oh, ow);
    const auto s11 = filt(rr, h, w, k, oh, ow), s22 = filt(dd, h, w, k, oh, ow), s12 = filt(rd, h, w, k, oh, ow);
    for (std::size_t i = 0; i < mu1.size(); ++i) {
      double v1 = s11[i] - mu1[i] * mu1[i], v2 = s22[i] - mu2[i] * mu2[i];
      const double c12 = s12[i] - mu1[i] * mu2[i];
      if (v1 < 0) v1 = 0;
      if (v2 < 0) v2 = 0;
      double g = c12 / (v1 + eps);
      double sv = v2 - g * c12;
      if (v1 < eps) {
        g = 0;
        sv = v2;
        v1 = 0;
      }
      if (v2 < eps) {
        g = 0;
        sv = 0;
      }
      if (g < 0) {
        sv = v2;
        g = 0;
      }
      if (sv <= eps) sv = eps;
      num += std::log10(1 + g * g * v1 / (sv + sigma_nsq));
      den += std::log10(1 + v1 / sigma_nsq);
    }
  }
  return {num, den};
}

// ---------------------------------------------------------------- model pieces

/// Scalar loop squeeze-and-excitation over a (C, N) volume flattened per channel.
inline std::vector<double> se_loop(const std::vector<double>& x, int c, int n, const std::vector<double>& w1, int hidden,
                                   const std::vector<double>& w2) {
  std::vector<double> z(static_cast<std::size_t>(c), 0.0);
  for (int ch = 0; ch < c; ++ch) {
    for (int i = 0; i < n; ++i) z[ch] += x[ch * n + i];
    z[ch] /= n;
  }
  std::vector<double> hdn(static_cast<std::size_t>(hidden), 0.0);
  for (int j = 0; j < hidden; ++j) {
    for (int ch = 0; ch < c; ++ch) hdn[j] += w1[j * c + ch] * z[ch];
    hdn[j] = std::max(0.0, hdn[j]);
  }
  std::vector<double> out(x.size());
  for (int ch = 0; ch < c; ++ch) {
    double a = 0;
    for (int j = 0; j < hidden; ++j) a += w2[ch * hidden + j] * hdn[j];
    const double s = 1.0 / (1.0 + std::exp(-a));
    for (int i = 0; i < n; ++i) out[ch * n + i] = s * x[ch * n + i];
  }
  return out;
}

/// JPEG pipeline on one (3, H, W) frame in [-1, 1], scalar loops.
inline std::vector<double> jpeg_frame(const std::vector<double>& rgb, int h, int w, int quality) {
  static const int luma[64] = {16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
                               14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
                               18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
                               49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
  static const int chroma[64] = {17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
                                 24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
                                 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
                                 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  auto qtab = [&](const int* base, int i) { return static_cast<double>(std::max(1, (base[i] * scale + 50) / 100)); };
  const int hw = h * w;
  std::vector<double> ycc(static_cast<std::size_t>(3 * hw));
  for (int i = 0; i < hw; ++i) {
    const double r = (rgb[i] + 1) * 127.5, g = (rgb[hw + i] + 1) * 127.5, b = (rgb[2 * hw + i] + 1) * 127.5;
    ycc[i] = 0.299 * r + 0.587 * g + 0.114 * b - 128;
    ycc[hw + i] = -0.168736 * r - 0.331264 * g + 0.5 * b;
    ycc[2 * hw + i] = 0.5 * r - 0.418688 * g - 0.081312 * b;
  }
  auto alpha = [](int u) { return u == 0 ? std::sqrt(1.0 / 8) : std::sqrt(2.0 / 8); };
  std::vector<double> rec(ycc.size());
  for (int ch = 0; ch < 3; ++ch)
    for (int by = 0; by < h; by += 8)
      for (int bx = 0; bx < w; bx += 8) {
        double coef[8][8];
        for (int u = 0; u < 8; ++u)
          for (int v = 0; v < 8; ++v) {
            double s = 0;
            for (int y = 0; y < 8; ++y)
              for (int x = 0; x < 8; ++x)
                s += ycc[ch * hw + (by + y) * w + bx + x] * std::cos((2 * y + 1) * u * M_PI / 16) *
                     std::cos((2 * x + 1) * v * M_PI / 16);
            const double q = qtab(ch == 0 ? luma : chroma, u * 8 + v);
            const double z = alpha(u) * alpha(v) * s / q;
            const double r = std::nearbyint(z);
            coef[u][v] = (r + std::pow(z - r, 3)) * q;
          }
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) {
            double s = 0;
            for (int u = 0; u < 8; ++u)
              for (int v = 0; v < 8; ++v)
                s += alpha(u) * alpha(v) * coef[u][v] * std::cos((2 * y + 1) * u * M_PI / 16) *
                     std::cos((2 * x + 1) * v * M_PI / 16);
            rec[ch * hw + (by + y) * w + bx + x] = s;
          }
      }
  std::vector<double> out(rgb.size());
  for (int i = 0; i < hw; ++i) {
    const double y = rec[i] + 128, cb = rec[hw + i], cr = rec[2 * hw + i];
    out[i] = (y + 1.402 * cr) / 127.5 - 1;
    out[hw + i] = (y - 0.344136 * cb - 0.714136 * cr) / 127.5 - 1;
    out[2 * hw + i] = (y + 1.772 * cb) / 127.5 - 1;
  }
  return out;
}

inline std::vector<double> to_vec(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat64).contiguous();
  return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

}  // namespace oracle
