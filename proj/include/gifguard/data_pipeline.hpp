#pragma once

// Synthetic face-GIF generation, clip extraction from longer videos,
// identity-disjoint dataset construction and the tensor normalisation that
// maps 8-bit frames onto [-1, 1].

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <torch/types.h>

#include "gifguard/frames.hpp"

namespace gifguard::data {

/// (T, H, W) of a clip.
struct ClipShape {
  std::int64_t frames = 10;
  std::int64_t height = 64;
  std::int64_t width = 64;

  bool operator==(const ClipShape&) const = default;
};

/// uint8 clip -> float tensor (3, T, H, W), value = pixel / 127.5 - 1.
torch::Tensor normalize(const Frames& clip);

/// Inverse of normalize for a (3, T, H, W) tensor; rounds to nearest and
/// clamps to [0, 255].
Frames denormalize(const torch::Tensor& g);

/// Throws unless `g` is a finite (3,T,H,W) or (B,3,T,H,W) tensor of `shape`.
void check_gif_tensor(const torch::Tensor& g, const ClipShape& shape);

struct SyntheticFace {
  Frames frames;
  std::string identity_id;
};

/// Deterministic procedural face clip. Geometry, palette and motion are
/// functions of `seed`; distinct seeds give distinct identities.
SyntheticFace synth_face_gif(std::uint64_t seed, std::int64_t frames, std::int64_t height,
                             std::int64_t width);

std::string identity_for_seed(std::uint64_t seed);

/// Face detector hook: does frame `t` of `video` show a face?
using FacePredicate = std::function<bool(const Frames& video, std::int64_t t)>;

/// From the first frame where `face_present` holds, take `shape.frames`
/// consecutive frames, centre-crop them square and bilinearly resize to
/// (height, width).
Frames extract_clip(const Frames& video, const FacePredicate& face_present, const ClipShape& shape);

/// Centre square crop followed by bilinear resize (half-pixel centres).
Frames center_crop_resize(const Frames& clip, std::int64_t height, std::int64_t width);

enum class Split { train, val, test };

std::string to_string(Split split);
Split parse_split(const std::string& name);

struct SampleRecord {
  std::string clip_id;
  std::string identity_id;
  std::string frames_path;  // relative to the manifest directory
  Split split = Split::train;

  bool operator==(const SampleRecord&) const = default;
};

struct Manifest {
  ClipShape shape;
  std::uint64_t seed = 0;
  std::string crop_resize = "center-crop+bilinear";
  std::vector<SampleRecord> records;
  std::filesystem::path root;  // directory holding the manifest file; not serialised

  std::vector<SampleRecord> split(Split which) const;
};

struct DatasetOptions {
  ClipShape shape;
  std::uint64_t seed = 0;
  bool overwrite = false;
  int frame_delay_ms = 100;
};

inline constexpr const char* kManifestName = "manifest.jsonl";

/// Generate n_train/n_val/n_test synthetic clips from non-overlapping seed
/// ranges, store them as GIF files under out_dir/<split>/ and write
/// out_dir/manifest.jsonl (header line plus one JSON object per sample).
Manifest build_dataset(std::int64_t n_train, std::int64_t n_val, std::int64_t n_test,
                       const std::filesystem::path& out_dir, const DatasetOptions& options);

/// Seed used for sample `index` of `split` under a dataset seed.
std::uint64_t sample_seed(std::uint64_t dataset_seed, Split split, std::uint64_t index);

void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

/// Decode one sample's GIF back to RGB frames.
Frames load_sample(const Manifest& manifest, const SampleRecord& record);

/// Load every record of a split into one (N, 3, T, H, W) tensor.
torch::Tensor load_split_tensor(const Manifest& manifest, Split split);

}  // namespace gifguard::data
