#include "gifguard/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "gifguard/error.hpp"

namespace gifguard::metrics {

namespace {

struct Planes {
  std::int64_t count = 0, height = 0, width = 0;
  std::vector<double> data;

  const double* plane(std::int64_t i) const { return data.data() + i * height * width; }
};

Planes to_planes(const torch::Tensor& t) {
  if (t.dim() < 2) throw Error("metric input needs at least 2 dims");
  Planes p;
  p.height = t.size(-2);
  p.width = t.size(-1);
  p.count = t.numel() / std::max<std::int64_t>(1, p.height * p.width);
  auto c = t.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  p.data.assign(c.data_ptr<double>(), c.data_ptr<double>() + c.numel());
  return p;
}

torch::Tensor frames_tensor(const Frames& f) {
  auto t = torch::from_blob(const_cast<std::uint8_t*>(f.rgb.data()), {f.frames, f.height, f.width, 3}, torch::kUInt8);
  return t.permute({3, 0, 1, 2}).to(torch::kFloat64);
}

void check_same(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) throw Error("metric inputs differ in shape");
}

std::vector<double> gaussian_taps(int n, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(n));
  const double c = (n - 1) / 2.0;
  double s = 0;
  for (int i = 0; i < n; ++i) s += w[i] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
  for (auto& v : w) v /= s;
  return w;
}

// Separable 'valid' filter of an h x w image.
std::vector<double> filter_valid(const std::vector<double>& img, std::int64_t h, std::int64_t w,
                                 const std::vector<double>& taps, std::int64_t& oh, std::int64_t& ow) {
  const auto n = static_cast<std::int64_t>(taps.size());
  oh = h - n + 1;
  ow = w - n + 1;
  std::vector<double> rows(static_cast<std::size_t>(h * ow));
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < ow; ++x) {
      double s = 0;
      for (std::int64_t k = 0; k < n; ++k) s += taps[k] * img[y * w + x + k];
      rows[y * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh * ow));
  for (std::int64_t y = 0; y < oh; ++y)
    for (std::int64_t x = 0; x < ow; ++x) {
      double s = 0;
      for (std::int64_t k = 0; k < n; ++k) s += taps[k] * rows[(y + k) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

std::vector<double> product(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] * b[i];
  return r;
}

std::string fixed(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

double psnr(const torch::Tensor& a, const torch::Tensor& b, double max_val, double cap) {
  check_same(a, b);
  const auto pa = to_planes(a), pb = to_planes(b);
  double se = 0;
  for (std::size_t i = 0; i < pa.data.size(); ++i) se += (pa.data[i] - pb.data[i]) * (pa.data[i] - pb.data[i]);
  if (pa.data.empty()) throw Error("psnr of empty input");
  const double mse = se / static_cast<double>(pa.data.size());
  if (mse == 0.0) return cap;
  return std::min(cap, 10.0 * std::log10(max_val * max_val / mse));
}

double psnr(const Frames& a, const Frames& b, double cap) { return psnr(frames_tensor(a), frames_tensor(b), 255.0, cap); }

double ssim(const torch::Tensor& a, const torch::Tensor& b, double max_val) {
  check_same(a, b);
  const auto pa = to_planes(a), pb = to_planes(b);
  int n = static_cast<int>(std::min<std::int64_t>({11, pa.height, pa.width}));
  if (n % 2 == 0) --n;
  if (n < 1) throw Error("ssim of empty plane");
  const auto taps = gaussian_taps(n, 1.5);
  const double c1 = (0.01 * max_val) * (0.01 * max_val), c2 = (0.03 * max_val) * (0.03 * max_val);
  const auto hw = pa.height * pa.width;
  double total = 0;
  for (std::int64_t p = 0; p < pa.count; ++p) {
    std::vector<double> x(pa.plane(p), pa.plane(p) + hw), y(pb.plane(p), pb.plane(p) + hw);
    std::int64_t oh = 0, ow = 0;
    const auto mx = filter_valid(x, pa.height, pa.width, taps, oh, ow);
    const auto my = filter_valid(y, pa.height, pa.width, taps, oh, ow);
    const auto sxx = filter_valid(product(x, x), pa.height, pa.width, taps, oh, ow);
    const auto syy = filter_valid(product(y, y), pa.height, pa.width, taps, oh, ow);
    const auto sxy = filter_valid(product(x, y), pa.height, pa.width, taps, oh, ow);
    double acc = 0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
      acc += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / static_cast<double>(pa.count);
}

double ssim(const Frames& a, const Frames& b) { return ssim(frames_tensor(a), frames_tensor(b), 255.0); }

double vif_p(const torch::Tensor& reference, const torch::Tensor& distorted) {
  check_same(reference, distorted);
  const auto pr = to_planes(reference), pd = to_planes(distorted);
  constexpr double sigma_nsq = 2.0, eps = 1e-10;
  double num = 0, den = 0;
  for (std::int64_t p = 0; p < pr.count; ++p) {
    std::int64_t h = pr.height, w = pr.width;
    std::vector<double> ref(pr.plane(p), pr.plane(p) + h * w), dist(pd.plane(p), pd.plane(p) + h * w);
    for (int scale = 1; scale <= 4; ++scale) {
      const int n = (1 << (4 - scale + 1)) + 1;
      if (h < n || w < n) break;
      const auto taps = gaussian_taps(n, n / 5.0);
      std::int64_t oh = 0, ow = 0;
      if (scale > 1) {
        auto fr = filter_valid(ref, h, w, taps, oh, ow);
        auto fd = filter_valid(dist, h, w, taps, oh, ow);
        const std::int64_t sh = (oh + 1) / 2, sw = (ow + 1) / 2;
        ref.assign(static_cast<std::size_t>(sh * sw), 0.0);
        dist.assign(static_cast<std::size_t>(sh * sw), 0.0);
        for (std::int64_t y = 0; y < sh; ++y)
          for (std::int64_t x = 0; x < sw; ++x) {
            ref[y * sw + x] = fr[2 * y * ow + 2 * x];
            dist[y * sw + x] = fd[2 * y * ow + 2 * x];
          }
        h = sh;
        w = sw;
        if (h < n || w < n) break;
      }
      const auto mu1 = filter_valid(ref, h, w, taps, oh, ow);
      const auto mu2 = filter_valid(dist, h, w, taps, oh, ow);
      const auto s11 = filter_valid(product(ref, ref), h, w, taps, oh, ow);
      const auto s22 = filter_valid(product(dist, dist), h, w, taps, oh, ow);
      const auto s12 = filter_valid(product(ref, dist), h, w, taps, oh, ow);
      for (std::size_t i = 0; i < mu1.size(); ++i) {
        double sigma1_sq = std::max(0.0, s11[i] - mu1[i] * mu1[i]);
        double sigma2_sq = std::max(0.0, s22[i] - mu2[i] * mu2[i]);
        const double sigma12 = s12[i] - mu1[i] * mu2[i];
        double g = sigma12 / (sigma1_sq + eps);
        double sv_sq = sigma2_sq - g * sigma12;
        if (sigma1_sq < eps) {
          g = 0;
          sv_sq = sigma2_sq;
          sigma1_sq = 0;
        }
        if (sigma2_sq < eps) {
          g = 0;
          sv_sq = 0;
        }
        if (g < 0) {
          sv_sq = sigma2_sq;
          g = 0;
        }
        sv_sq = std::max(sv_sq, eps);
        num += std::log10(1 + g * g * sigma1_sq / (sv_sq + sigma_nsq));
        den += std::log10(1 + sigma1_sq / sigma_nsq);
      }
    }
  }
  if (den == 0.0) return num == 0.0 ? 1.0 : 0.0;
  return num / den;
}

double vif_p(const Frames& reference, const Frames& distorted) {
  return vif_p(frames_tensor(reference), frames_tensor(distorted));
}

torch::Tensor to_pixel_units(const torch::Tensor& g) { return (g.to(torch::kFloat64) + 1.0) * 127.5; }

double ber(const torch::Tensor& m, const torch::Tensor& m_hat) {
  if (m.sizes() != m_hat.sizes()) throw Error("ber inputs differ in shape");
  if (m.numel() == 0) throw Error("ber of empty message");
  return (m.to(torch::kFloat64) - m_hat.to(torch::kFloat64)).abs().mean().item<double>();
}

double ber(const MessageVector& m, const MessageVector& m_hat) {
  if (m.size() != m_hat.size()) throw Error("ber inputs differ in length");
  if (m.size() == 0) throw Error("ber of empty message");
  std::size_t diff = 0;
  for (std::size_t i = 0; i < m.size(); ++i) diff += m.bits[i] != m_hat.bits[i];
  return static_cast<double>(diff) / static_cast<double>(m.size());
}

double perceptual_distance(const torch::Tensor& a, const torch::Tensor& b, const obj::PerceptualExtractor& phi) {
  torch::NoGradGuard guard;
  auto fa = a.dim() == 4 ? a.unsqueeze(0) : a;
  auto fb = b.dim() == 4 ? b.unsqueeze(0) : b;
  return obj::feature_distance(phi, fa.to(torch::kFloat64), fb.to(torch::kFloat64)).item<double>();
}

double EvalReport::value(const std::string& method, const std::string& attack_kind, const std::string& metric) const {
  for (const auto& r : rows)
    if (r.method == method && r.attack_kind == attack_kind && r.metric == metric) return r.value;
  return std::numeric_limits<double>::quiet_NaN();
}

const std::vector<ReportBlock>& report_blocks() {
  static const std::vector<ReportBlock> blocks{
      {"Signal Degradation & Geometric Distortion",
       {"identity", "g-blur", "g-noise", "salt-pep", "median", "jpeg", "drop", "crop"},
       true},
      {"Deepfake (surrogate)", {"surrogate"}, true},
      {"Temporal extras", {"shuffle", "f-repl"}, false},
  };
  return blocks;
}

std::string report_csv(const EvalReport& report) {
  std::string out = "method,attack_kind,attack_params,n_samples,metric,value\n";
  for (const auto& r : report.rows) {
    char buf[32];
    const std::string value(buf, std::to_chars(buf, buf + sizeof buf, r.value).ptr);
    out += csv_field(r.method) + "," + csv_field(r.attack_kind) + "," + csv_field(r.attack_params) + "," +
           std::to_string(r.n_samples) + "," + csv_field(r.metric) + "," + value + "\n";
  }
  return out;
}

EvalReport read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  EvalReport report;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) throw ParseError("report", "expected 6 fields");
    report.rows.push_back({f[0], f[1], f[2], std::stoll(f[3]), f[4], std::stod(f[5])});
  }
  return report;
}

std::string report_markdown(const EvalReport& report) {
  std::vector<std::string> methods;
  for (const auto& r : report.rows)
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);

  std::ostringstream md;
  md << "# Evaluation report\n";
  if (methods.empty()) {
    md << "\n| Method | PSNR | SSIM | VIF | Perceptual |\n|---|---|---|---|---|\n";
    return md.str();
  }

  md << "\n## Quality (watermarked vs cover)\n\n| Method | PSNR | SSIM | VIF | Perceptual |\n|---|---|---|---|---|\n";
  for (const auto& m : methods) {
    auto cell = [&](const char* metric, int prec) {
      const double v = report.value(m, "none", metric);
      return std::isnan(v) ? std::string("-") : fixed(v, prec);
    };
    md << "| " << m << " | " << cell("psnr", 2) << " | " << cell("ssim", 4) << " | " << cell("vif", 4) << " | "
       << cell("perceptual", 6) << " |\n";
  }

  md << "\n## Robustness (BER %)\n\n";
  std::vector<std::string> header{"Method"};
  for (const auto& block : report_blocks()) {
    for (const auto& c : block.columns) header.push_back(c);
    if (block.average) header.push_back("Avg. (" + block.title + ")");
  }
  md << "|";
  for (const auto& h : header) md << " " << h << " |";
  md << "\n|";
  for (std::size_t i = 0; i < header.size(); ++i) md << "---|";
  md << "\n";
  for (const auto& m : methods) {
    md << "| " << m << " |";
    for (const auto& block : report_blocks()) {
      double sum = 0;
      int n = 0;
      for (const auto& c : block.columns) {
        const double v = report.value(m, c, "ber");
        if (std::isnan(v)) {
          md << " - |";
        } else {
          md << " " + fixed(100.0 * v, 4) + " |";
          sum += v;
          ++n;
        }
      }
      if (block.average) md << (n ? " " + fixed(100.0 * sum / n, 4) + " |" : std::string(" - |"));
    }
    md << "\n";
  }

  md << "\n## Attack specs\n\n";
  std::vector<std::string> seen;
  for (const auto& r : report.rows) {
    if (r.attack_params.empty() || std::find(seen.begin(), seen.end(), r.attack_params) != seen.end()) continue;
    seen.push_back(r.attack_params);
    md << "- `" << r.attack_params << "`\n";
  }
  return md.str();
}

void make_report(const EvalReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream(out_dir / kReportCsv, std::ios::binary) << report_csv(report);
  std::ofstream(out_dir / kReportMarkdown, std::ios::binary) << report_markdown(report);
}

void write_ber_svg(const EvalReport& report, const std::filesystem::path& path) {
  std::vector<std::string> methods, attacks;
  for (const auto& r : report.rows) {
    if (r.metric != "ber") continue;
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    if (std::find(attacks.begin(), attacks.end(), r.attack_kind) == attacks.end()) attacks.push_back(r.attack_kind);
  }
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
  const double pad = 50, group = 56, plot_h = 220;
  const double width = 2 * pad + group * static_cast<double>(std::max<std::size_t>(1, attacks.size()));
  std::ofstream out(path, std::ios::binary);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << plot_h + 110 << "\">\n"
      << "<text x=\"" << pad << "\" y=\"16\" font-size=\"13\" font-family=\"sans-serif\">BER (%) per attack</text>\n"
      << "<line x1=\"" << pad << "\" y1=\"" << 30 + plot_h << "\" x2=\"" << width - pad << "\" y2=\"" << 30 + plot_h
      << "\" stroke=\"#444\"/>\n";
  for (int tick = 0; tick <= 5; ++tick) {
    const double y = 30 + plot_h * (1.0 - tick / 5.0);
    out << "<text x=\"4\" y=\"" << y + 4 << "\" font-size=\"10\" font-family=\"sans-serif\">" << tick * 10
        << "</text>\n";
  }
  const double bar = (group - 8) / static_cast<double>(std::max<std::size_t>(1, methods.size()));
  for (std::size_t a = 0; a < attacks.size(); ++a) {
    const double x0 = pad + group * static_cast<double>(a) + 4;
    for (std::size_t m = 0; m < methods.size(); ++m) {
      const double v = report.value(methods[m], attacks[a], "ber");
      if (std::isnan(v)) continue;
      const double h = plot_h * std::clamp(v / 0.5, 0.0, 1.0);
      out << "<rect x=\"" << x0 + bar * static_cast<double>(m) << "\" y=\"" << 30 + plot_h - h << "\" width=\"" << bar
          << "\" height=\"" << h << "\" fill=\"" << colors[m % 6] << "\"/>\n";
    }
    out << "<text x=\"" << x0 << "\" y=\"" << 46 + plot_h << "\" font-size=\"10\" font-family=\"sans-serif\">"
        << attacks[a] << "</text>\n";
  }
  for (std::size_t m = 0; m < methods.size(); ++m) {
    const double y = 66 + plot_h + 14 * static_cast<double>(m);
    out << "<rect x=\"" << pad << "\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\"" << colors[m % 6]
        << "\"/><text x=\"" << pad + 14 << "\" y=\"" << y << "\" font-size=\"10\" font-family=\"sans-serif\">"
        << methods[m] << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace gifguard::metrics
