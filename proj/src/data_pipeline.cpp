#include "gifguard/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "gifguard/error.hpp"
#include "gifguard/gif_codec.hpp"
#include "gifguard/rng.hpp"

namespace gifguard::data {
namespace {

using Json = nlohmann::ordered_json;

struct Color {
  double r, g, b;
};

Color lerp(const Color& a, const Color& b, double t) {
  return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

Color scale(const Color& c, double s) { return {c.r * s, c.g * s, c.b * s}; }

// Identity-dependent appearance; per-frame pose is derived from it.
struct FaceModel {
  Color bg_a, bg_b, skin, hair, iris, lips;
  double stripe_angle, stripe_freq, stripe_phase;
  double axis_x, axis_y;  // face semi-axes as fractions of W, H
  double hair_fringe;     // fraction of the face height covered by hair
  double eye_dx, eye_dy, eye_rx, eye_ry;
  double brow_tilt;
  double mouth_dy, mouth_w, mouth_h;
  double move_x, move_y, move_phase, turn, turn_phase, talk_phase;
  int blink_frame;
};

FaceModel make_model(std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, {0xFACE}));
  auto u = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  FaceModel m{};
  m.bg_a = {u(30, 220), u(30, 220), u(30, 220)};
  m.bg_b = {u(30, 220), u(30, 220), u(30, 220)};
  const double tone = u(0.0, 1.0);
  m.skin = lerp({236, 200, 170}, {150, 100, 72}, tone);
  m.hair = {u(10, 120), u(8, 80), u(5, 60)};
  const Color irises[] = {{60, 100, 170}, {95, 60, 30}, {60, 120, 70}, {110, 110, 120}};
  m.iris = irises[rng() % 4];
  m.lips = {u(150, 200), u(50, 90), u(60, 100)};
  m.stripe_angle = u(0.0, std::numbers::pi);
  m.stripe_freq = u(1.5, 4.0);
  m.stripe_phase = u(0.0, 2 * std::numbers::pi);
  m.axis_x = u(0.20, 0.27);
  m.axis_y = u(0.28, 0.36);
  m.hair_fringe = u(0.45, 0.72);
  m.eye_dx = u(0.35, 0.5);
  m.eye_dy = u(0.1, 0.25);
  m.eye_rx = u(0.14, 0.2);
  m.eye_ry = u(0.07, 0.1);
  m.brow_tilt = u(-0.25, 0.25);
  m.mouth_dy = u(0.45, 0.6);
  m.mouth_w = u(0.3, 0.5);
  m.mouth_h = u(0.06, 0.12);
  m.move_x = u(0.03, 0.06);
  m.move_y = u(0.01, 0.03);
  m.move_phase = u(0.0, 2 * std::numbers::pi);
  m.turn = u(0.05, 0.15);
  m.turn_phase = u(0.0, 2 * std::numbers::pi);
  m.talk_phase = u(0.0, 2 * std::numbers::pi);
  m.blink_frame = static_cast<int>(rng() % 16);
  return m;
}

struct Pose {
  double cx, cy, angle, mouth_open, eye_open;
};

Pose pose_at(const FaceModel& m, std::int64_t t, std::int64_t frames, std::int64_t height,
             std::int64_t width) {
  const double phase = 2 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(frames);
  Pose p{};
  p.cx = width * (0.5 + m.move_x * std::sin(phase + m.move_phase));
  p.cy = height * (0.52 + m.move_y * std::cos(phase + m.move_phase));
  p.angle = m.turn * std::sin(phase + m.turn_phase);
  p.mouth_open = 0.35 + 0.65 * std::abs(std::sin(2 * phase + m.talk_phase));
  p.eye_open = (t % 16 == m.blink_frame) ? 0.2 : 1.0;
  return p;
}

bool in_ellipse(double x, double y, double cx, double cy, double rx, double ry) {
  const double dx = (x - cx) / rx;
  const double dy = (y - cy) / ry;
  return dx * dx + dy * dy <= 1.0;
}

Color shade(const FaceModel& m, const Pose& p, double x, double y, std::int64_t height,
            std::int64_t width) {
  // Background: two-colour stripes with a soft vignette.
  const double nx = x / width;
  const double ny = y / height;
  const double along = nx * std::cos(m.stripe_angle) + ny * std::sin(m.stripe_angle);
  const double stripe = 0.5 + 0.5 * std::sin(2 * std::numbers::pi * m.stripe_freq * along + m.stripe_phase);
  const double vignette = 1.0 - 0.3 * ((nx - 0.5) * (nx - 0.5) + (ny - 0.5) * (ny - 0.5));
  Color c = scale(lerp(m.bg_a, m.bg_b, stripe), vignette);

  // Face-local coordinates (u right, v down), normalised by the semi-axes.
  const double ax = m.axis_x * width;
  const double ay = m.axis_y * height;
  const double dx = x - p.cx;
  const double dy = y - p.cy;
  const double cs = std::cos(p.angle);
  const double sn = std::sin(p.angle);
  const double u = (cs * dx + sn * dy) / ax;
  const double v = (-sn * dx + cs * dy) / ay;

  if (in_ellipse(u, v, 0.0, -0.1, 1.12, 1.1)) c = m.hair;
  if (!in_ellipse(u, v, 0.0, 0.0, 1.0, 1.0)) return c;

  if (v < -m.hair_fringe) return m.hair;
  const double r2 = u * u + v * v;
  c = scale(m.skin, 1.05 - 0.25 * r2);

  if (in_ellipse(u, v, 0.0, 0.12, 0.12, 0.2)) c = scale(m.skin, 0.82);  // nose shadow
  for (double side : {-1.0, 1.0}) {
    const double ex = side * m.eye_dx;
    const double ey = -m.eye_dy;
    const double brow_v = ey - m.eye_ry - 0.12 + side * m.brow_tilt * (u - ex);
    if (std::abs(u - ex) < m.eye_rx * 1.1 && std::abs(v - brow_v) < 0.035) c = m.hair;
    if (in_ellipse(u, v, ex, ey, m.eye_rx, m.eye_ry * p.eye_open)) {
      c = {235, 235, 230};
      if (in_ellipse(u, v, ex, ey, m.eye_ry * 0.9, m.eye_ry * 0.9 * p.eye_open)) c = m.iris;
      if (in_ellipse(u, v, ex, ey, m.eye_ry * 0.4, m.eye_ry * 0.4 * p.eye_open)) c = {15, 15, 20};
    }
  }
  if (in_ellipse(u, v, 0.0, m.mouth_dy, m.mouth_w, m.mouth_h * p.mouth_open)) {
    c = in_ellipse(u, v, 0.0, m.mouth_dy, m.mouth_w * 0.8, m.mouth_h * p.mouth_open * 0.55)
            ? Color{70, 20, 25}
            : m.lips;
  }
  return c;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t split_index(Split s) {
  switch (s) {
    case Split::train: return 0;
    case Split::val: return 1;
    case Split::test: return 2;
  }
  return 0;
}

}  // namespace

torch::Tensor normalize(const Frames& clip) {
  auto out = torch::empty({3, clip.frames, clip.height, clip.width}, torch::kFloat32);
  auto a = out.accessor<float, 4>();
  for (std::int64_t t = 0; t < clip.frames; ++t) {
    for (std::int64_t y = 0; y < clip.height; ++y) {
      for (std::int64_t x = 0; x < clip.width; ++x) {
        const auto* px = clip.at(t, y, x);
        for (int c = 0; c < 3; ++c) a[c][t][y][x] = static_cast<float>(px[c] / 127.5 - 1.0);
      }
    }
  }
  return out;
}

Frames denormalize(const torch::Tensor& g) {
  if (g.dim() != 4 || g.size(0) != 3) throw Error("denormalize expects a (3, T, H, W) tensor");
  auto src = g.detach().to(torch::kFloat64).contiguous();
  auto a = src.accessor<double, 4>();
  Frames out(g.size(1), g.size(2), g.size(3));
  for (std::int64_t t = 0; t < out.frames; ++t) {
    for (std::int64_t y = 0; y < out.height; ++y) {
      for (std::int64_t x = 0; x < out.width; ++x) {
        auto* px = out.at(t, y, x);
        for (int c = 0; c < 3; ++c) px[c] = to_byte((a[c][t][y][x] + 1.0) * 127.5);
      }
    }
  }
  return out;
}

void check_gif_tensor(const torch::Tensor& g, const ClipShape& shape) {
  const bool batched = g.dim() == 5;
  if (g.dim() != 4 && !batched) throw Error("GIF tensor must be (C,T,H,W) or (B,C,T,H,W)");
  const std::int64_t o = batched ? 1 : 0;
  if (g.size(o) != 3 || g.size(o + 1) != shape.frames || g.size(o + 2) != shape.height ||
      g.size(o + 3) != shape.width) {
    throw Error("GIF tensor shape does not match the configured (T,H,W)");
  }
  if (!torch::isfinite(g).all().item<bool>()) throw Error("GIF tensor contains non-finite values");
}

std::string identity_for_seed(std::uint64_t seed) { return "id-" + hex16(seed); }

SyntheticFace synth_face_gif(std::uint64_t seed, std::int64_t frames, std::int64_t height,
                             std::int64_t width) {
  if (frames < 2) throw Error("synthetic clips need at least 2 frames");
  if (height < 8 || width < 8) throw Error("synthetic clips need at least 8x8 pixels");
  const FaceModel model = make_model(seed);
  SyntheticFace out{Frames(frames, height, width), identity_for_seed(seed)};
  // 2x2 supersampling for soft edges.
  constexpr double kOffsets[2] = {0.25, 0.75};
  for (std::int64_t t = 0; t < frames; ++t) {
    const Pose pose = pose_at(model, t, frames, height, width);
    for (std::int64_t y = 0; y < height; ++y) {
      for (std::int64_t x = 0; x < width; ++x) {
        Color acc{0, 0, 0};
        for (double oy : kOffsets) {
          for (double ox : kOffsets) {
            const Color c = shade(model, pose, x + ox, y + oy, height, width);
            acc = {acc.r + c.r, acc.g + c.g, acc.b + c.b};
          }
        }
        auto* px = out.frames.at(t, y, x);
        px[0] = to_byte(acc.r / 4);
        px[1] = to_byte(acc.g / 4);
        px[2] = to_byte(acc.b / 4);
      }
    }
  }
  return out;
}

Frames center_crop_resize(const Frames& clip, std::int64_t height, std::int64_t width) {
  const std::int64_t side = std::min(clip.height, clip.width);
  const std::int64_t oy = (clip.height - side) / 2;
  const std::int64_t ox = (clip.width - side) / 2;
  Frames out(clip.frames, height, width);
  const double sy = static_cast<double>(side) / height;
  const double sx = static_cast<double>(side) / width;
  for (std::int64_t t = 0; t < clip.frames; ++t) {
    for (std::int64_t y = 0; y < height; ++y) {
      const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(side - 1));
      const auto y0 = static_cast<std::int64_t>(std::floor(fy));
      const auto y1 = std::min(y0 + 1, side - 1);
      const double wy = fy - y0;
      for (std::int64_t x = 0; x < width; ++x) {
        const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(side - 1));
        const auto x0 = static_cast<std::int64_t>(std::floor(fx));
        const auto x1 = std::min(x0 + 1, side - 1);
        const double wx = fx - x0;
        auto* px = out.at(t, y, x);
        for (int c = 0; c < 3; ++c) {
          const double v00 = clip.at(t, oy + y0, ox + x0)[c];
          const double v01 = clip.at(t, oy + y0, ox + x1)[c];
          const double v10 = clip.at(t, oy + y1, ox + x0)[c];
          const double v11 = clip.at(t, oy + y1, ox + x1)[c];
          px[c] = to_byte((1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11));
        }
      }
    }
  }
  return out;
}

Frames extract_clip(const Frames& video, const FacePredicate& face_present, const ClipShape& shape) {
  if (!face_present) throw Error("face predicate required");
  std::int64_t start = -1;
  for (std::int64_t t = 0; t < video.frames; ++t) {
    if (face_present(video, t)) {
      start = t;
      break;
    }
  }
  if (start < 0) throw Error("no face found");
  if (video.frames - start < shape.frames) throw Error("clip too short");

  Frames window(shape.frames, video.height, video.width);
  const auto frame_bytes = static_cast<std::ptrdiff_t>(video.pixels_per_frame() * 3);
  std::copy(video.rgb.begin() + start * frame_bytes,
            video.rgb.begin() + (start + shape.frames) * frame_bytes, window.rgb.begin());
  return center_crop_resize(window, shape.height, shape.width);
}

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw Error("unknown split '" + name + "'");
}

std::vector<SampleRecord> Manifest::split(Split which) const {
  std::vector<SampleRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [which](const SampleRecord& r) { return r.split == which; });
  return out;
}

std::uint64_t sample_seed(std::uint64_t dataset_seed, Split split, std::uint64_t index) {
  // Disjoint ranges: 22 bits of dataset seed | 2 bits of split | 40 bits of index.
  if (dataset_seed >= (1ull << 22)) throw Error("dataset seed must be below 2^22");
  if (index >= (1ull << 40)) throw Error("sample index out of range");
  return (dataset_seed << 42) | (split_index(split) << 40) | index;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write manifest " + path.string());
  Json header;
  header["format"] = "gifguard-manifest";
  header["version"] = 1;
  header["frames"] = manifest.shape.frames;
  header["height"] = manifest.shape.height;
  header["width"] = manifest.shape.width;
  header["seed"] = manifest.seed;
  header["crop_resize"] = manifest.crop_resize;
  out << header.dump() << '\n';
  for (const auto& r : manifest.records) {
    Json rec;
    rec["clip_id"] = r.clip_id;
    rec["identity_id"] = r.identity_id;
    rec["frames_path"] = r.frames_path;
    rec["split"] = to_string(r.split);
    out << rec.dump() << '\n';
  }
  if (!out) throw Error("failed writing manifest " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path.string());
  Manifest m;
  m.root = path.parent_path();
  std::string line;
  bool header_seen = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!header_seen && j.contains("format")) {
      if (j.at("format") != "gifguard-manifest") throw Error("not a gifguard manifest");
      m.shape = {j.at("frames").get<std::int64_t>(), j.at("height").get<std::int64_t>(),
                 j.at("width").get<std::int64_t>()};
      m.seed = j.value("seed", std::uint64_t{0});
      m.crop_resize = j.value("crop_resize", m.crop_resize);
      header_seen = true;
      continue;
    }
    try {
      m.records.push_back({j.at("clip_id").get<std::string>(), j.at("identity_id").get<std::string>(),
                           j.at("frames_path").get<std::string>(),
                           parse_split(j.at("split").get<std::string>())});
    } catch (const nlohmann::json::exception& e) {
      throw Error("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!header_seen) throw Error("manifest header missing");
  return m;
}

Manifest build_dataset(std::int64_t n_train, std::int64_t n_val, std::int64_t n_test,
                       const std::filesystem::path& out_dir, const DatasetOptions& options) {
  if (n_train < 1 || n_val < 1 || n_test < 1) throw Error("split sizes must be at least 1");
  namespace fs = std::filesystem;
  const auto manifest_path = out_dir / kManifestName;
  if (fs::exists(manifest_path) && !options.overwrite) {
    throw Error("output directory " + out_dir.string() + " already holds a dataset");
  }
  fs::create_directories(out_dir);

  Manifest manifest;
  manifest.shape = options.shape;
  manifest.seed = options.seed;
  manifest.root = out_dir;
  const std::pair<Split, std::int64_t> plan[] = {
      {Split::train, n_train}, {Split::val, n_val}, {Split::test, n_test}};
  for (const auto& [split, count] : plan) {
    const auto dir = out_dir / to_string(split);
    if (options.overwrite) fs::remove_all(dir);
    fs::create_directories(dir);
    for (std::int64_t i = 0; i < count; ++i) {
      const std::uint64_t seed = sample_seed(options.seed, split, static_cast<std::uint64_t>(i));
      auto face = synth_face_gif(seed, options.shape.frames, options.shape.height, options.shape.width);
      char name[32];
      std::snprintf(name, sizeof name, "%s_%06lld", to_string(split).c_str(), static_cast<long long>(i));
      const std::string rel = to_string(split) + "/" + name + ".gif";
      codec::gif_write(codec::quantize_clip(face.frames, 256, options.frame_delay_ms), out_dir / rel);
      manifest.records.push_back({name, face.identity_id, rel, split});
    }
  }
  write_manifest(manifest, manifest_path);
  return manifest;
}

Frames load_sample(const Manifest& manifest, const SampleRecord& record) {
  auto frames = codec::to_frames(codec::gif_read(manifest.root / record.frames_path));
  if (frames.frames != manifest.shape.frames || frames.height != manifest.shape.height ||
      frames.width != manifest.shape.width) {
    throw Error("sample " + record.clip_id + " does not match the manifest dimensions");
  }
  return frames;
}

torch::Tensor load_split_tensor(const Manifest& manifest, Split split) {
  std::vector<torch::Tensor> items;
  for (const auto& r : manifest.split(split)) items.push_back(normalize(load_sample(manifest, r)));
  if (items.empty()) throw Error("split " + to_string(split) + " is empty");
  return torch::stack(items);
}

}  // namespace gifguard::data
